"""Scenario configuration: state, meters, detector layout, theta grid, mode, and inequalities.

Scenarios are JSON objects.  Every key is optional; missing keys fall back to
the built-in preset named by ``"preset"`` (if any) and then to the defaults::

    {
      "preset": "fig4",
      "state": "psi_double_prime",          # "psi", "maximally_mixed", or {"file": "rho.json"}
      "meter": {"r_h": 0.039, "r_v": 0.175},
      "meter2": {"r_h": 0.039, "r_v": 0.175},   # second meter, only for m=4 scans
      "theta_grid": {"start": 0, "stop": 180, "step": 1},   # stop is exclusive
      "detectors": {"layout": "standard", "a_sign": -1},   # or an explicit list, see below
      "mode": "analytic",                   # or "sampled" with "pairs" and "seed"
      "pairs": 1000000, "seed": 42,
      "specs": [{"A1": 1, "A1B1B2": 1, "B1B2": -1}]
    }

An explicit detector list holds objects such as
``{"label": "A1", "party": 1, "kind": "semi_weak", "sign": -1}`` or
``{"label": "B1", "party": 1, "kind": "projective", "observable": "sigma_theta"}``.
Observables are ``sigma_z``, ``sigma_x``, ``sigma_y``, ``sigma_theta`` (the
swept angle), or a number giving a fixed polarizer angle in degrees; a
leading ``-`` negates a named observable.
"""

import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ScenarioError
from .lgi import BASIC_TERMS, FIG5_TERMS, DetectorChain, projective, semi_weak, spec_from_terms
from .meter import CALIBRATED_R_H, CALIBRATED_R_V, SemiWeakMeter
from .qstate import SIGMA_X, SIGMA_Y, SIGMA_Z, ideal_state, load_density_matrix, stokes_theta

DEFAULTS = {
    "state": "psi_double_prime",
    "meter": {"r_h": CALIBRATED_R_H, "r_v": CALIBRATED_R_V},
    "meter2": None,
    "theta_grid": {"start": 0.0, "stop": 180.0, "step": 1.0},
    "detectors": {"layout": "standard", "a_sign": 1},
    "mode": "analytic",
    "pairs": 1_000_000,
    "seed": 0,
    "specs": [],
}

PRESETS = {
    # Single and double conditioned averages of sigma_z on party 1.
    "fig3": {"specs": []},
    # Basic inequality with A1 = -sigma_z, and the matching convex sum of CAs.
    "fig4": {"detectors": {"layout": "standard", "a_sign": -1}, "specs": [BASIC_TERMS]},
    "fig5": {"specs": list(FIG5_TERMS)},
}

_NAMED_OBS = {"sigma_z": SIGMA_Z, "sigma_x": SIGMA_X, "sigma_y": SIGMA_Y}


@dataclass(frozen=True)
class Scenario:
    state: object
    meter: SemiWeakMeter
    meter2: SemiWeakMeter
    thetas: np.ndarray
    detectors: object
    mode: str
    pairs: float
    seed: int
    specs: list = field(default_factory=list)
    base_dir: str = "."

    def rho(self):
        """Resolve the initial two-photon state."""
        if isinstance(self.state, str):
            if self.state == "maximally_mixed":
                return np.eye(4, dtype=complex) / 4
            return ideal_state(self.state)
        path = self.state["file"]
        if not os.path.isabs(path):
            path = os.path.join(self.base_dir, path)
        return load_density_matrix(path)

    def chain(self, theta):
        """Detector chain with the polarizer angle set to ``theta``."""
        d = self.detectors
        if isinstance(d, dict):
            return DetectorChain(
                (
                    semi_weak(self.meter, 1, "A1", d.get("a_sign", 1)),
                    projective(stokes_theta(theta), 1, "B1"),
                    projective(SIGMA_Z, 2, "B2"),
                )
            )
        dets = []
        for item in d:
            if item["kind"] == "semi_weak":
                meter = self.meter2 if item.get("meter") == "meter2" and self.meter2 else self.meter
                dets.append(semi_weak(meter, item["party"], item["label"], item.get("sign", 1)))
            else:
                dets.append(projective(_observable(item["observable"], theta), item["party"], item["label"]))
        return DetectorChain(tuple(dets))

    def lgi_specs(self, chain):
        return [spec_from_terms(chain, terms) for terms in self.specs]


def _observable(spec, theta):
    if isinstance(spec, (int, float)):
        return stokes_theta(float(spec))
    sign = -1 if spec.startswith("-") else 1
    name = spec.lstrip("+-")
    if name == "sigma_theta":
        return sign * stokes_theta(theta)
    return sign * _NAMED_OBS[name]


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _meter(cfg, path):
    if cfg is None:
        return None
    if not isinstance(cfg, dict) or set(cfg) - {"r_h", "r_v", "sigma_r_h", "sigma_r_v"}:
        _fail(path, "expected an object with r_h and r_v")
    try:
        return SemiWeakMeter(float(cfg["r_h"]), float(cfg["r_v"]))
    except KeyError as exc:
        _fail(path, f"missing {exc.args[0]}")
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))


def _validate_detectors(d):
    if isinstance(d, dict):
        if d.get("layout", "standard") != "standard":
            _fail("detectors.layout", f"unknown layout {d.get('layout')!r}")
        if d.get("a_sign", 1) not in (1, -1):
            _fail("detectors.a_sign", "must be 1 or -1")
        return
    if not isinstance(d, list) or not d:
        _fail("detectors", "expected a layout object or a nonempty list")
    for i, item in enumerate(d):
        where = f"detectors[{i}]"
        if not isinstance(item, dict):
            _fail(where, "expected an object")
        for key in ("label", "party", "kind"):
            if key not in item:
                _fail(where, f"missing {key!r}")
        if item["kind"] not in ("semi_weak", "projective"):
            _fail(f"{where}.kind", f"unknown kind {item['kind']!r}")
        if item["party"] not in (1, 2):
            _fail(f"{where}.party", "must be 1 or 2")
        if item["kind"] == "projective":
            obs = item.get("observable")
            ok = isinstance(obs, (int, float)) or (
                isinstance(obs, str) and obs.lstrip("+-") in (*_NAMED_OBS, "sigma_theta")
            )
            if not ok:
                _fail(f"{where}.observable", f"unknown observable {obs!r}")


def build_scenario(cfg, base_dir="."):
    """Validate a scenario mapping (after preset merge) and resolve references."""
    cfg = copy.deepcopy(cfg)
    preset = cfg.pop("preset", None)
    merged = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            _fail("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged.update(copy.deepcopy(PRESETS[preset]))
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        _fail(sorted(unknown)[0], "unknown key")
    merged.update(cfg)

    state = merged["state"]
    if isinstance(state, str):
        if state not in ("psi", "psi_double_prime", "maximally_mixed"):
            _fail("state", f"unknown state {state!r}")
    elif isinstance(state, dict) and isinstance(state.get("file"), str):
        path = state["file"] if os.path.isabs(state["file"]) else os.path.join(base_dir, state["file"])
        if not os.path.exists(path):
            _fail("state.file", f"no such file {path!r}")
    else:
        _fail("state", "expected a state name or {\"file\": path}")

    grid = merged["theta_grid"]
    if not isinstance(grid, dict):
        _fail("theta_grid", "expected an object with start, stop, step")
    try:
        start, stop, step = (float(grid.get(k, DEFAULTS["theta_grid"][k])) for k in ("start", "stop", "step"))
    except (TypeError, ValueError):
        _fail("theta_grid", "start, stop and step must be numbers")
    if not step > 0:
        _fail("theta_grid.step", "must be > 0")
    n = int(np.ceil((stop - start) / step - 1e-9))
    if n <= 0:
        _fail("theta_grid", "grid is empty")
    thetas = start + step * np.arange(n)

    _validate_detectors(merged["detectors"])
    mode = merged["mode"]
    if mode not in ("analytic", "sampled"):
        _fail("mode", f"must be 'analytic' or 'sampled', got {mode!r}")
    try:
        pairs, seed = float(merged["pairs"]), int(merged["seed"])
    except (TypeError, ValueError):
        _fail("pairs", "pairs and seed must be numbers")
    if mode == "sampled" and not pairs > 0:
        _fail("pairs", "must be > 0 in sampled mode")

    scen = Scenario(
        state=state,
        meter=_meter(merged["meter"], "meter"),
        meter2=_meter(merged["meter2"], "meter2"),
        thetas=thetas,
        detectors=merged["detectors"],
        mode=mode,
        pairs=pairs,
        seed=seed,
        specs=list(merged["specs"]),
        base_dir=base_dir,
    )
    try:
        chain = scen.chain(thetas[0])
    except (ValueError, KeyError) as exc:
        _fail("detectors", str(exc))
    for i, terms in enumerate(scen.specs):
        if not isinstance(terms, dict):
            _fail(f"specs[{i}]", "expected an object mapping terms to coefficients")
        try:
            spec_from_terms(chain, terms)
        except ValueError as exc:
            _fail(f"specs[{i}]", str(exc))
    return scen


def load_scenario(path=None, preset=None, overrides=None):
    """Read a scenario file (or none), apply a preset and CLI overrides, then validate."""
    cfg = {}
    base_dir = "."
    if path is not None:
        base_dir = os.path.dirname(os.path.abspath(path))
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ScenarioError(f"{path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(cfg, dict):
            raise ScenarioError(f"{path}: top level must be a JSON object")
    if preset is not None:
        cfg["preset"] = preset
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_scenario(cfg, base_dir)
