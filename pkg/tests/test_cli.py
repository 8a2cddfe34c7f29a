import csv
import io
import json
import subprocess
import sys

import pytest

from ybtrap.cli import run
from ybtrap.config import KEYS, ConfigError, validate_config


def invoke(args, capsys):
    code = run(args)
    out, err = capsys.readouterr()
    return code, out, err


def csv_body(text):
    return list(csv.reader(io.StringIO("".join(l + "\n" for l in text.splitlines() if not l.startswith("#")))))


def test_unknown_command_exit_2(capsys):
    code, _, err = invoke(["bogus"], capsys)
    assert code == 2
    assert "usage" in err.lower()


def test_no_command_prints_usage(capsys):
    code, _, err = invoke([], capsys)
    assert code == 2 and "usage" in err.lower()


def test_crystal_two_ions(capsys):
    code, out, _ = invoke(["crystal", "--n", "2", "--omega-z-khz", "52", "--mass-amu", "172"], capsys)
    assert code == 0
    doc = json.loads(out)
    pos = doc["result"]["positions_um"]
    # ell = 19.6 +- 0.1 um times 0.63 bounds the position to about +-0.063 um.
    assert pos[0] == pytest.approx(-12.35, abs=0.063)
    assert pos[1] == pytest.approx(12.35, abs=0.063)
    assert doc["header"]["n_ions"] == "2"


def test_resonant_sweep_all_high(capsys):
    code, out, _ = invoke(["prep-sweep", "--scheme", "resonant"], capsys)
    assert code == 0
    rows = csv_body(out)
    assert rows[0] == ["alpha_deg", "omega_over_gamma", "efficiency"]
    assert all(float(r[2]) >= 0.995 for r in rows[1:])


def test_header_records_full_config_and_seed(tmp_path, capsys):
    out_file = tmp_path / "trap.csv"
    code, _, _ = invoke(["trap", "--format", "csv", "--seed", "11", "--out", str(out_file)], capsys)
    assert code == 0
    header = [l[2:] for l in out_file.read_text().splitlines() if l.startswith("# ")]
    keys = {l.split(" = ")[0] for l in header}
    assert {"command", "seed", "config_files"} | set(KEYS) <= keys
    assert "seed = 11" in header


@pytest.mark.parametrize("args", [
    ["load", "--runs", "20", "--seed", "5"],
    ["detect-opt", "--t-points", "8", "--k-max", "10"],
    ["spectrum", "--f-points", "101"],
])
def test_byte_identical_output(tmp_path, capsys, args):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_load_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["load", "--seed", "1", "--out", str(a)])
    run(["load", "--seed", "2", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_missing_config_leaves_no_output(tmp_path, capsys):
    out_file = tmp_path / "out.csv"
    code, _, err = invoke(["trap", "--config", str(tmp_path / "nope.cfg"), "--out", str(out_file)], capsys)
    assert code == 2
    assert "nope.cfg" in err
    assert list(tmp_path.iterdir()) == []


def test_bad_value_names_key_and_bound(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("b_field_tesla = -1\n")
    code, _, err = invoke(["prep-sweep", "--config", str(cfg)], capsys)
    assert code == 2
    assert "b_field_tesla" in err and ">= 0" in err


def test_errors_are_aggregated(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("b_field_tesla = -1\nwavelength = 369\neta = 2\n")
    with pytest.raises(ConfigError) as exc:
        validate_config([cfg], "detect-opt")
    text = " | ".join(exc.value.errors)
    assert len(exc.value.errors) == 3
    assert "b_field_tesla" in text and "wavelength: unknown key" in text and "eta" in text


def test_empty_file_gives_defaults(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("")
    rc = validate_config([cfg], "trap")
    assert rc.values["rf_frequency_hz"] == KEYS["rf_frequency_hz"].default
    assert rc.values["alpha_min_deg"] == 0.0
    assert len(rc.header_items()) == 3 + len(KEYS)


def test_flag_overrides_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_ions = 5\n")
    code, out, _ = invoke(["crystal", "--config", str(cfg), "--n", "3"], capsys)
    assert code == 0
    assert json.loads(out)["result"]["n"] == 3


def test_later_config_wins(tmp_path):
    a, b = tmp_path / "a.cfg", tmp_path / "b.cfg"
    a.write_text("n_ions = 5\n")
    b.write_text("n_ions = 7\n")
    assert validate_config([a, b]).values["n_ions"] == 7


def test_usage_error_on_bad_flag_type(capsys):
    code, _, _ = invoke(["crystal", "--n", "two"], capsys)
    assert code == 2


def test_trap_json(capsys):
    code, out, _ = invoke(["trap"], capsys)
    result = json.loads(out)["result"]
    assert result["stable"] is True
    assert 300e3 <= result["secular_frequency_hz"][0] <= 470e3


def test_prep_transient_csv(capsys):
    code, out, _ = invoke(["prep-transient", "--samples", "20", "--duration-s", "0.01"], capsys)
    rows = csv_body(out)
    rates = [float(r[1]) for r in rows[1:]]
    assert code == 0 and len(rates) == 20
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ybtrap", "crystal", "--n", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["n"] == 3
