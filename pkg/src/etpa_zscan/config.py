"""JSON experiment configuration with unit-suffixed keys.

Every section is optional and falls back to the shipped default file
(``data/default_config.json``). Unknown keys are rejected rather than
guessed, so a wrong unit suffix such as ``waist_w0_mm`` fails loudly.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .models import Sample
from .optics import Detector, FormulaMode, GaussianBeam
from .simkit import NoiseModel
from .spdc import SpdcSource, TransverseCorrelation

ENV_VAR = "ETPA_ZSCAN_CONFIG"
BEAM_NAMES = ("pump_532", "laser_1064", "spdc_1064")
MODEL_BEAMS = {"spa": "pump_532", "tpa": "laser_1064", "etpa": "spdc_1064"}

_NUM = (int, float)

SOURCE_KEYS = {
    "pairs_per_mW": _NUM,
    "max_pump_power_mW": _NUM,
    "pump_wavelength_nm": _NUM,
    "crystal_length_cm": _NUM,
    "pump_waist_um": _NUM,
    "center_wavelength_nm": _NUM,
    "bandwidth_nm": _NUM,
    "sigma_corr_um": _NUM,
}
BEAM_KEYS = {"wavelength_nm": _NUM, "waist_w0_um": _NUM, "numerical_aperture": _NUM}
DETECTOR_KEYS = {"radius_wd_um": _NUM}
SAMPLE_KEYS = {
    "concentration_mM": _NUM,
    "half_thickness_d_um": _NUM,
    "tpa_cross_section_GM": _NUM,
    "etpa_cross_section_cm2": _NUM,
}
NOISE_KEYS = {"dark_rate_per_s": _NUM, "background_rate_per_s": _NUM}
SIMULATION_KEYS = {
    "attenuation_exposure_s": _NUM,
    "zscan_exposure_s": _NUM,
    "zscan_peak_rate_per_s": dict,
}
TOP_KEYS = {
    "source": dict,
    "beams": dict,
    "detector": dict,
    "sample": dict,
    "noise": dict,
    "collection_efficiency": _NUM,
    "formula_mode": str,
    "seed": int,
    "simulation": dict,
}


class ConfigError(ValueError):
    def __init__(self, message: str, pointer: str = "", line: int | None = None, path=None):
        self.pointer = pointer
        self.line = line
        self.path = path
        where = str(path) if path else "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {pointer or '/'}: {message}")


@dataclass(frozen=True)
class SimulationSettings:
    attenuation_exposure_s: float
    zscan_exposure_s: float
    zscan_peak_rate_per_s: dict


@dataclass(frozen=True)
class ExperimentConfig:
    source: SpdcSource
    correlation: TransverseCorrelation
    beams: dict
    detector: Detector
    sample: Sample
    noise: NoiseModel
    formula_mode: FormulaMode
    seed: int
    collection_efficiency: float
    simulation: SimulationSettings
    raw: dict = field(default_factory=dict, repr=False)

    def beam_for(self, model: str) -> GaussianBeam:
        try:
            return self.beams[MODEL_BEAMS[model]]
        except KeyError:
            raise ValueError(f"unknown model {model!r}") from None

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_config_text() -> str:
    return resources.files("etpa_zscan").joinpath("data/default_config.json").read_text()


def _line_of(text: str, pointer: str) -> int | None:
    """Best-effort line number of the key addressed by a JSON pointer."""
    if not text:
        return None
    pos = 0
    for token in [t for t in pointer.split("/") if t]:
        hit = text.find(f'"{token}"', pos)
        if hit < 0:
            return None
        pos = hit
    return text.count("\n", 0, pos) + 1 if pointer.strip("/") else None


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class _Validator:
    def __init__(self, text: str, path):
        self.text = text
        self.path = path

    def fail(self, msg: str, pointer: str):
        raise ConfigError(msg, pointer, _line_of(self.text, pointer), self.path)

    def keys(self, obj, schema: dict, pointer: str):
        if not isinstance(obj, dict):
            self.fail("expected an object", pointer)
        for k, v in obj.items():
            if k not in schema:
                self.fail(f"unknown field {k!r} (check the unit suffix)", f"{pointer}/{k}")
            expected = schema[k]
            ok = isinstance(v, expected) and not (expected in (_NUM, int) and isinstance(v, bool))
            if not ok:
                self.fail(f"wrong type {type(v).__name__}", f"{pointer}/{k}")

    def require(self, obj: dict, names, pointer: str):
        for n in names:
            if n not in obj:
                self.fail(f"missing field {n!r}", f"{pointer}/{n}")

    def build(self, pointer: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except ValueError as exc:
            self.fail(str(exc), pointer)


def parse_config(user: dict, text: str = "", path=None) -> ExperimentConfig:
    v = _Validator(text, path)
    v.keys(user, TOP_KEYS, "")
    for name, schema in (
        ("source", SOURCE_KEYS),
        ("detector", DETECTOR_KEYS),
        ("sample", SAMPLE_KEYS),
        ("noise", NOISE_KEYS),
        ("simulation", SIMULATION_KEYS),
    ):
        if name in user:
            v.keys(user[name], schema, f"/{name}")
    if "sample" in user:
        v.require(user["sample"], ("concentration_mM", "half_thickness_d_um"), "/sample")
    for bname, beam in user.get("beams", {}).items():
        if bname not in BEAM_NAMES:
            v.fail(f"unknown beam name {bname!r}; expected one of {list(BEAM_NAMES)}", f"/beams/{bname}")
        v.keys(beam, BEAM_KEYS, f"/beams/{bname}")
        v.require(beam, BEAM_KEYS, f"/beams/{bname}")

    cfg = _merge(json.loads(default_config_text()), user)

    src = cfg["source"]
    source = v.build(
        "/source",
        SpdcSource,
        pairs_per_mW=float(src["pairs_per_mW"]),
        max_pump_power_mW=float(src["max_pump_power_mW"]),
        pump_wavelength_nm=float(src["pump_wavelength_nm"]),
        crystal_length_cm=float(src["crystal_length_cm"]),
        pump_waist_um=float(src["pump_waist_um"]),
        center_wavelength_nm=float(src["center_wavelength_nm"]),
        bandwidth_nm=float(src["bandwidth_nm"]),
    )
    corr = v.build("/source/sigma_corr_um", TransverseCorrelation, float(src["sigma_corr_um"]))

    beams = {}
    for bname in BEAM_NAMES:
        b = cfg["beams"][bname]
        if not b["wavelength_nm"] > 0:
            v.fail("wavelength must be positive", f"/beams/{bname}/wavelength_nm")
        if not b["waist_w0_um"] > 0:
            v.fail("waist must be positive", f"/beams/{bname}/waist_w0_um")
        if not 0 < b["numerical_aperture"] < 1:
            v.fail("numerical aperture must lie in (0, 1)", f"/beams/{bname}/numerical_aperture")
        beams[bname] = GaussianBeam.from_nm(b["wavelength_nm"], b["waist_w0_um"], b["numerical_aperture"])

    detector = v.build("/detector/radius_wd_um", Detector, float(cfg["detector"]["radius_wd_um"]))

    s = cfg["sample"]
    for key in ("concentration_mM", "half_thickness_d_um"):
        if not s[key] > 0:
            v.fail("must be positive", f"/sample/{key}")
    sample = v.build(
        "/sample",
        Sample.from_mM,
        float(s["concentration_mM"]),
        float(s["half_thickness_d_um"]),
        tpa_cross_section_gm=float(s.get("tpa_cross_section_GM", 0.0)),
        etpa_cross_section_cm2=(
            float(s["etpa_cross_section_cm2"]) if s.get("etpa_cross_section_cm2") is not None else None
        ),
    )
    n = cfg["noise"]
    noise = v.build("/noise", NoiseModel, float(n["dark_rate_per_s"]), float(n["background_rate_per_s"]))

    try:
        mode = FormulaMode.coerce(cfg["formula_mode"])
    except ValueError as exc:
        v.fail(str(exc), "/formula_mode")
    eff = float(cfg["collection_efficiency"])
    if not 0 < eff <= 1:
        v.fail("collection efficiency must lie in (0, 1]", "/collection_efficiency")

    sim = cfg["simulation"]
    for key in ("attenuation_exposure_s", "zscan_exposure_s"):
        if not sim[key] > 0:
            v.fail("exposure must be positive", f"/simulation/{key}")
    rates = sim["zscan_peak_rate_per_s"]
    for model, rate in rates.items():
        if model not in MODEL_BEAMS:
            v.fail(f"unknown model {model!r}", f"/simulation/zscan_peak_rate_per_s/{model}")
        if not isinstance(rate, _NUM) or rate < 0:
            v.fail("peak rate must be a nonnegative number", f"/simulation/zscan_peak_rate_per_s/{model}")

    return ExperimentConfig(
        source=source,
        correlation=corr,
        beams=beams,
        detector=detector,
        sample=sample,
        noise=noise,
        formula_mode=mode,
        seed=int(cfg["seed"]),
        collection_efficiency=eff,
        simulation=SimulationSettings(
            float(sim["attenuation_exposure_s"]),
            float(sim["zscan_exposure_s"]),
            {k: float(r) for k, r in rates.items()},
        ),
        raw=cfg,
    )


def load_config(path=None) -> ExperimentConfig:
    """Load and validate a config file.

    With no ``path`` the ``ETPA_ZSCAN_CONFIG`` environment variable is
    consulted, then the shipped defaults are used.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        text = default_config_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", "", None, path) from None
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})", "", exc.lineno, path) from None
    return parse_config(user, text, path)
