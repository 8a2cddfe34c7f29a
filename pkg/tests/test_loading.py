import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ybtrap.loading import (
    YB_IONIZATION_POTENTIAL_EV,
    IsotopeTable,
    Line,
    LoadingModel,
    RateRatioError,
    RateSettings,
    doppler_fwhm,
    excited_fraction,
    field_lowering_ev,
    field_threshold_1color,
    load_isotope_table,
    loading_runs,
    loading_timeline,
    parse_isotope_table,
    peak_positions,
    photon_energy_ev,
    rate_comparison,
    spectrum,
)

# --- two-level excitation ---------------------------------------------------


def test_excited_fraction_limits():
    assert excited_fraction(math.inf, 0.0, 1.0) == 0.5
    assert excited_fraction(0.0, 3.0, 1.0) == 0.0
    assert excited_fraction(1.0, 0.5, 1.0) == pytest.approx(1 / 6, rel=1e-15)
    with pytest.raises(ValueError):
        excited_fraction(-1.0, 0.0, 1.0)


@given(st.floats(0, 1e9), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_excited_fraction_bounded(s, d, g):
    assert 0.0 <= excited_fraction(s, d, g) <= 0.5


# --- spectrum ---------------------------------------------------------------


def synthetic(abundances, shifts, linewidth=10e6, doppler=0.0):
    return IsotopeTable(abundance=dict(zip(ISOS, abundances)),
                        lines={i: [Line(s)] for i, s in zip(ISOS, shifts)},
                        linewidth_hz=linewidth, doppler_fwhm_hz=doppler)


ISOS = (170, 172, 174)


def test_lorentzian_limit_fwhm():
    table = IsotopeTable({172: 1.0}, {172: [Line(0.0)]}, linewidth_hz=20e6, doppler_fwhm_hz=0.0)
    x = np.linspace(-100e6, 100e6, 200001)
    y = spectrum(table, x)
    above = x[y >= y.max() / 2]
    assert above[-1] - above[0] == pytest.approx(20e6, rel=0.01)


def test_unit_area_per_isotope():
    table = synthetic((0.3, 0.2, 0.1), (0.0, 500e6, 1000e6), doppler=5e6)
    x = np.linspace(-5e9, 6e9, 400001)
    area = np.sum(spectrum(table, x)) * (x[1] - x[0])
    assert area == pytest.approx(0.6, rel=2e-3)


def test_peaks_at_configured_shifts_and_ordered_by_abundance():
    shifts = (-300e6, 200e6, 900e6)
    table = synthetic((0.1, 0.5, 0.3), shifts)
    x = np.linspace(-1e9, 1.5e9, 25001)
    y = spectrum(table, x)
    peaks = peak_positions(x, y)
    step = x[1] - x[0]
    assert len(peaks) == 3
    assert np.all(np.abs(peaks - np.array(shifts)) <= step)
    heights = [y[np.argmin(np.abs(x - p))] for p in peaks]
    assert np.argsort(heights).tolist() == [0, 2, 1]


def test_spectrum_linear_in_abundance():
    x = np.linspace(-1e9, 1e9, 501)
    a = spectrum(synthetic((0.1, 0.2, 0.3), (0, 1e8, 2e8)), x)
    b = spectrum(synthetic((0.05, 0.1, 0.15), (0, 1e8, 2e8)), x)
    assert np.allclose(b, 0.5 * a, rtol=1e-12)
    assert np.all(a >= 0)


def test_bundled_table():
    table = load_isotope_table()
    assert set(table.abundance) == {170, 171, 172, 173, 174, 176}
    assert sum(table.abundance.values()) <= 1.0
    assert len(table.lines[171]) > 1


def test_parse_table_errors():
    with pytest.raises(ValueError, match="unknown keys"):
        parse_isotope_table("abundance_172 = 0.2\nshift_hz_172 = 0\ncolour = red\n")
    with pytest.raises(ValueError):
        parse_isotope_table("abundance_172 = 0.9\nabundance_174 = 0.9\nshift_hz_172 = 0\nshift_hz_174 = 1\n")
    with pytest.raises(ValueError, match="no line position"):
        parse_isotope_table("abundance_172 = 0.2\n")


def test_hyperfine_components():
    t = parse_isotope_table("abundance_171 = 0.14\nshift_hz_171_a = 100e6\nweight_171_a = 1\n"
                            "shift_hz_171_b = 300e6\nweight_171_b = 3\n")
    assert t.centers()[171] == pytest.approx(250e6)


def test_doppler_width_from_divergence():
    assert doppler_fwhm(0.0) == 0.0
    assert doppler_fwhm(0.02) == pytest.approx(2 * doppler_fwhm(0.01), rel=1e-3)


# --- loading ----------------------------------------------------------------


def test_zero_latency_hits_target_exactly():
    model = LoadingModel(rate=10.0, target=5, latency=0.0, seed=1)
    runs = loading_runs(model, 10_000)
    assert all(r.final_count == 5 for r in runs)


def test_overshoot_probability():
    rate, latency, n = 10.0, 0.05, 10_000
    runs = loading_runs(LoadingModel(rate, 3, latency, seed=2), n)
    p_hat = np.mean([r.overshoot >= 1 for r in runs])
    p = 1 - math.exp(-rate * latency)
    assert abs(p_hat - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_mean_count_before_shutter():
    rate, t, n = 10.0, 0.3, 10_000
    counts = np.array([r.count_at(t) for r in loading_runs(LoadingModel(rate, 50, 0.0, seed=3), n)])
    assert abs(counts.mean() - rate * t) < 3 * math.sqrt(rate * t / n)


def test_seed_reproducibility_and_monotone():
    a = loading_timeline(LoadingModel(seed=42, target=4, latency=0.3))
    b = loading_timeline(LoadingModel(seed=42, target=4, latency=0.3))
    assert a.arrival_times.tobytes() == b.arrival_times.tobytes()
    assert np.all(np.diff(a.arrival_times) >= 0)


def test_model_validation():
    for kw in ({"rate": 0}, {"target": 0}, {"latency": -1}):
        with pytest.raises(ValueError):
            LoadingModel(**kw)


# --- rates and thresholds ---------------------------------------------------


def test_default_rate_comparison():
    r = dict(rate_comparison(RateSettings()))
    assert r["electron_impact"] == pytest.approx(0.0067, abs=1e-4)
    assert r["two_color"] == 10.0
    assert 1e2 <= r["ratio_two_color"] <= 1e4
    assert 1e1 <= r["ratio_one_color"] <= 1e3


def test_equal_rates_fail_loudly():
    with pytest.raises(RateRatioError):
        rate_comparison(RateSettings(1.0, 1.0, 1.0))


def test_flux_scaling():
    a = dict(rate_comparison(RateSettings(flux=1.0)))
    b = dict(rate_comparison(RateSettings(flux=0.5)))
    assert b["two_color"] == a["two_color"] / 2
    assert b["ratio_two_color"] == pytest.approx(a["ratio_two_color"], rel=1e-15)


def test_one_color_threshold():
    photon = 3.108
    allowed, required = field_threshold_1color(YB_IONIZATION_POTENTIAL_EV, photon, 0.0)
    assert not allowed
    assert required == pytest.approx(2.5e5, rel=0.05)
    assert field_lowering_ev(required) == pytest.approx(YB_IONIZATION_POTENTIAL_EV - 2 * photon, rel=1e-12)
    assert field_threshold_1color(YB_IONIZATION_POTENTIAL_EV, photon, 1.01 * required)[0]


def test_required_field_scales_as_deficit_squared():
    _, r1 = field_threshold_1color(6.0, 2.99, 0.0)
    _, r2 = field_threshold_1color(6.0, 2.98, 0.0)
    assert r2 / r1 == pytest.approx(4.0, rel=1e-9)


def test_photon_energy():
    assert photon_energy_ev(398.9e-9) == pytest.approx(3.108, abs=2e-3)
