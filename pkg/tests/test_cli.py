import json
import os

import numpy as np
import pytest

from etpa_zscan.cli import main, read_profile_csv
from etpa_zscan.config import ConfigError, load_config, parse_config
from etpa_zscan.models import AxialProfile, profile_fwhm
from etpa_zscan.optics import FormulaMode
from etpa_zscan.simkit import read_series_csv


def test_default_config():
    cfg = load_config()
    assert cfg.sample.concentration_cm3 == pytest.approx(3.011e18, rel=1e-3)
    assert cfg.noise.dark_rate == 200 and cfg.noise.background_rate == 10
    assert cfg.formula_mode is FormulaMode.CORRECTED
    assert cfg.beam_for("tpa").waist_w0_um == 1.5
    assert cfg.source.max_pair_rate == pytest.approx(8.7e11)


def test_config_rejects_bad_na(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"beams": {"spdc_1064": {"wavelength_nm": 1064, "waist_w0_um": 4.5, "numerical_aperture": 1.5}}}, indent=1))
    with pytest.raises(ConfigError) as ei:
        load_config(p)
    assert ei.value.pointer == "/beams/spdc_1064/numerical_aperture"
    assert ei.value.line == 6


def test_config_missing_noise_uses_defaults():
    cfg = parse_config({"sample": {"concentration_mM": 1.0, "half_thickness_d_um": 50.0}})
    assert (cfg.noise.dark_rate, cfg.noise.background_rate) == (200.0, 10.0)


@pytest.mark.parametrize(
    "user, pointer",
    [
        ({"sample": {"concentration_M": 5, "half_thickness_d_um": 63}}, "/sample/concentration_M"),
        ({"sample": {"half_thickness_d_um": 63}}, "/sample/concentration_mM"),
        ({"beams": {"spdc_1064": {"wavelength_nm": 1064, "waist_w0_um": 4.5}}}, "/beams/spdc_1064/numerical_aperture"),
        ({"formula_mode": "exact"}, "/formula_mode"),
        ({"noise": {"dark_rate_per_s": -1}}, "/noise"),
        ({"detector": {"radius_wd_um": "250"}}, "/detector/radius_wd_um"),
    ],
)
def test_config_errors_have_pointers(user, pointer):
    with pytest.raises(ConfigError) as ei:
        parse_config(user)
    assert ei.value.pointer == pointer


def test_malformed_json_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigError) as ei:
        load_config(p)
    assert ei.value.line == 3


def test_env_fallback(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 123}))
    monkeypatch.setenv("ETPA_ZSCAN_CONFIG", str(p))
    assert load_config().seed == 123


def run(*argv):
    return main([str(a) for a in argv])


def test_profile_tpa_fwhm(tmp_path):
    out = tmp_path / "p.csv"
    assert run("profile", "--model", "tpa", "--out", out) == 0
    z, y = read_profile_csv(out)
    assert profile_fwhm(AxialProfile(z, y, 1.0)) == pytest.approx(120.0, rel=0.2)


def test_simulate_zscan_row_count(tmp_path):
    out = tmp_path / "z.csv"
    assert run("simulate", "zscan", "--model", "tpa", "--repeats", 1, "--step", 10, "--out", out) == 0
    assert len(read_series_csv(out).records) == 600 / 10 + 1


def test_outputs_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run("simulate", "attenuation", "--mode", "pump", "--seed", 5, "--out", p) == 0
    assert a.read_bytes() == b.read_bytes()
    ja, jb = tmp_path / "a.json", tmp_path / "b.json"
    for p in (ja, jb):
        assert run("fit", "attenuation", a, "--out", p) == 0
    da, db = (json.loads(p.read_text()) for p in (ja, jb))
    for d in (da, db):
        assert d["provenance"].pop("timestamp")
        assert {"config_hash", "seed", "version"} <= set(d["provenance"])
    assert da == db


def test_classify_pipeline(tmp_path):
    pump, pair, out = tmp_path / "pump.csv", tmp_path / "pair.csv", tmp_path / "v.json"
    assert run("simulate", "attenuation", "--mode", "pump", "--seed", 1, "--out", pump) == 0
    assert run("simulate", "attenuation", "--mode", "pair", "--seed", 2, "--out", pair) == 0
    assert run("classify", pump, pair, "--out", out) == 0
    v = json.loads(out.read_text())
    assert (v["pump"]["verdict"], v["pair"]["verdict"]) == ("linear", "quadratic")
    assert v["etpa_confirmed"] is True


def test_cross_section_report(tmp_path):
    series, fit, rep = tmp_path / "s.csv", tmp_path / "f.json", tmp_path / "r.json"
    assert run("simulate", "attenuation", "--mode", "pump", "--seed", 3, "--out", series) == 0
    assert run("fit", "attenuation", series, "--out", fit) == 0
    assert run("report", "cross-section", fit, "--out", rep) == 0
    r = json.loads(rep.read_text())
    assert 2.5e-22 < r["sigma_e_cm2"] < 1e-21
    assert r["reference_reproduced"] is False
    assert "not reproducible" in r["discrepancy"]


@pytest.mark.parametrize("model", ["spa", "tpa", "etpa"])
def test_zscan_round_trip_default_settings(tmp_path, model):
    data, fit = tmp_path / "z.csv", tmp_path / "f.json"
    assert run("simulate", "zscan", "--model", model, "--seed", 11, "--out", data) == 0
    assert run("fit", "zscan", data, "--model", model, "--out", fit) == 0
    f = json.loads(fit.read_text())
    cfg = load_config()
    truth = {"d": cfg.sample.half_thickness_d_um, "w0": cfg.beam_for(model).waist_w0_um, "wd": cfg.detector.radius_wd_um}
    assert f["converged"]
    for k in f["provenance"]["free"]:
        assert f["params"][k]["value"] == pytest.approx(truth[k], rel=0.2)


def test_select_command(tmp_path):
    data, out = tmp_path / "e.csv", tmp_path / "s.json"
    assert run("simulate", "zscan", "--model", "etpa", "--seed", 1, "--out", data) == 0
    assert run("select", data, "--out", out) == 0
    assert json.loads(out.read_text())["ranking"] == ["tpa", "spa"]


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as ei:
        run("profile", "--model", "tpa", "--bogus")
    assert ei.value.code == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"beams": {"spdc_1064": {"wavelength_nm": 1064, "waist_w0_um": 4.5, "numerical_aperture": 1.5}}}))
    assert run("profile", "--model", "etpa", "--config", bad) == 2
    assert "/beams/spdc_1064/numerical_aperture" in capsys.readouterr().err

    data = tmp_path / "s.csv"
    assert run("simulate", "zscan", "--model", "spa", "--out", data) == 0
    assert run("fit", "zscan", data, "--model", "spa", "--free", "d,w0,wd", "--out", tmp_path / "f.json") == 3
    assert run("fit", "zscan", data, "--model", "spa", "--free", "q") == 2
