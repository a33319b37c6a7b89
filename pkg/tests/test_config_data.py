import json
import math

import numpy as np
import pytest

from xy8sim import data
from xy8sim.config import ConfigError, grid_values, parse_config
from xy8sim.spectroscopy import SpectrumPoint

MINIMAL = {"system": {"f_larmor_mhz": 1.4158,
                      "spins": [{"label": "target", "a_par_mhz": 0.11, "a_perp_mhz": 0.33}]}}


def with_(doc, **sections):
    out = json.loads(json.dumps(doc))
    for k, v in sections.items():
        out[k] = v
    return out


def test_minimal_config():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.system.f_larmor == 1.4158
    assert cfg.system.spins[0].hyperfine.a_perp == 0.33
    assert cfg.section("spectrum")["n_pulses"] == 16
    assert cfg.notes == ()


def test_field_defaults_larmor_with_note():
    doc = {"system": {"b_field_t": 0.13, "spins": MINIMAL["system"]["spins"]}}
    cfg = parse_config(doc)
    assert round(cfg.system.f_larmor, 4) == 1.3921
    assert cfg.notes and "b_field_t" in cfg.notes[0]
    assert cfg.resolved["system"]["f_larmor_mhz"] == cfg.system.f_larmor


@pytest.mark.parametrize("patch,path", [
    ({"rabi": {"tau_prime_us": -1.0}}, "rabi/tau_prime_us"),
    ({"trace": {"tau_us": 0}}, "trace/tau_us"),
    ({"rabi": {"bogus": 1}}, "rabi"),
    ({"extra": 1}, "<root>"),
    ({"rabi": {"n_prime_list": [0, 4]}}, "rabi/n_prime_list/1"),
    ({"design": {"window_us": [1.6, 1.5]}}, "design/window_us"),
    ({"clock": {"drift_factor": 0.01}}, "clock/drift_factor"),
    ({"fit": {"fixed_spins": ["ghost"]}}, "fit/fixed_spins"),
    ({"ramsey": {"t_grid_us": {"values_us": [2.0, 1.0]}}}, "ramsey/t_grid_us"),
])
def test_rejections_carry_key_path(patch, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(with_(MINIMAL, **patch))
    assert exc.value.path == path


def test_missing_unit_suffix_is_explained():
    with pytest.raises(ConfigError, match="unit suffix"):
        parse_config(with_(MINIMAL, trace={"tau": 0.169}))


def test_missing_larmor_and_field():
    with pytest.raises(ConfigError, match="f_larmor_mhz or b_field_t"):
        parse_config({"system": {"spins": MINIMAL["system"]["spins"]}})


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{not json")


def test_duplicate_labels_rejected():
    spins = MINIMAL["system"]["spins"] * 2
    with pytest.raises(ConfigError):
        parse_config({"system": {"f_larmor_mhz": 1.4, "spins": spins}})


def test_grids_and_overrides():
    cfg = parse_config(with_(MINIMAL, echo={"t_grid_us": {"values_us": [0, 5, 10]}}))
    assert list(grid_values(cfg, "echo", "t_grid_us")) == [0, 5, 10]
    assert len(grid_values(cfg, "spectrum", "tau_grid_us")) == 301
    cfg2 = cfg.with_overrides(seed=7, threads=3, output_dir="x")
    assert (cfg2.seed, cfg2.threads, str(cfg2.output_dir)) == (7, 3, "x")
    assert cfg.seed == 0
    with pytest.raises(ConfigError):
        cfg.with_overrides(threads=0)


def test_drift_correction():
    assert data.correct_clock_drift([1.0], 1.25e-5)[0].corrected_time == pytest.approx(0.9999875, abs=1e-15)
    recs = data.correct_clock_drift([0.5, 1.0, 2.0], 0.0)
    assert [r.corrected_time for r in recs] == [0.5, 1.0, 2.0]
    sorted_raw = np.cumsum(np.random.default_rng(0).exponential(1e-3, 1000))
    corr = [r.corrected_time for r in data.correct_clock_drift(sorted_raw)]
    assert np.all(np.diff(corr) > 0)
    again = data.correct_clock_drift(data.correct_clock_drift([3.0], 1e-5), 2e-5)
    assert again[0].raw_time == 3.0
    for bad in (1e-3, -0.5, float("nan")):
        with pytest.raises(ValueError):
            data.correct_clock_drift([1.0], bad)


def test_csv_roundtrip_is_lossless(tmp_path):
    rng = np.random.default_rng(1)
    rows = [(float(a), float(b), int(c)) for a, b, c in zip(rng.uniform(0, 2000, 50), rng.normal(size=50),
                                                             rng.integers(0, 100, 50))]
    rows.append((1 / 3, math.pi * 1e-17, 0))
    hdr = {"command": "unit", "seed": 4, "config": {"a": [1, 2.5]}}
    path = data.write_csv(tmp_path / "t.csv", ("t_us", "value", "count"), rows, hdr)
    table = data.read_csv(path)
    assert table.columns == ("t_us", "value", "count")
    assert table.rows == tuple(rows)
    assert table.header["seed"] == 4 and table.header["config"] == {"a": [1, 2.5]}
    assert table.header["artifact_version"]


def test_csv_format_is_deterministic():
    rows = [(0.1, 0.2), (0.3, 0.4)]
    assert data.format_csv(("a", "b"), rows, {"k": 1}) == data.format_csv(("a", "b"), rows, {"k": 1})
    with pytest.raises(ValueError):
        data.format_csv(("a", "b"), [(1,)])


def test_spectrum_roundtrip(tmp_path):
    pts = [SpectrumPoint(1.5, 0.9, None), SpectrumPoint(1.6, 0.1, 0.02)]
    path = data.write_csv(tmp_path / "s.csv", data.SPECTRUM_COLUMNS, data.spectrum_rows(pts))
    assert data.read_spectrum(path) == pts


def test_spectrum_requires_columns(tmp_path):
    path = data.write_csv(tmp_path / "bad.csv", ("x", "y"), [(1, 2)])
    with pytest.raises(ValueError, match="missing spectrum columns"):
        data.read_spectrum(path)


def test_timestamps_and_windows(tmp_path):
    path = data.write_csv(tmp_path / "ts.csv", ("raw_time_s",), [(0.1,), (0.5,), (1.0,), (1.5,)])
    recs = data.read_timestamps(path, 1e-4)
    assert recs[2].corrected_time == pytest.approx(0.9999)
    assert data.counts_in_windows([r.corrected_time for r in recs], [0, 0.5, 1.0, 2.0]) == [2, 1, 1]
