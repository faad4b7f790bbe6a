"""Run configuration: a flat key-value file with dotted sections.

Example::

    # model
    model.kind = CLUSTER_ISING
    model.J = 0.0
    model.u = 2
    sweep.start = 0.5
    sweep.stop = 1.5
    sweep.step = 0.01
    chi = 16
    optimizer.mode = FREE
    optimizer.locked_sites = 2
    outputs = ./out
    cache = ./cache

Every key can also be overridden on the command line with --set key=value.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .geometry import SymmetryMode
from .models import ModelSpec
from .optimizer import OptimizerConfig

_MODEL_KEYS = {"model.kind": str, "model.J": float, "model.h": float,
               "model.delta": float, "model.u": int}
_SWEEP_KEYS = {"sweep.start": float, "sweep.stop": float, "sweep.step": float}
_OPT_KEYS = {"optimizer.grid_resolution": int, "optimizer.eta": float,
             "optimizer.fd_step": float, "optimizer.tol": float,
             "optimizer.max_iters": int, "optimizer.n_starts": int,
             "optimizer.mode": str, "optimizer.locked_sites": str,
             "optimizer.spectrum_method": str}
_TOP_KEYS = {"chi": int, "gs_tol": float, "gs_max_sweeps": int,
             "outputs": str, "cache": str,
             "seed": int, "tau_lock": float, "tau_jump": float,
             "prominence": float, "gap_depth": float}

DEFAULTS = {
    "model.kind": "CLUSTER_ISING", "model.J": 0.0, "model.h": 0.0,
    "model.delta": 0.0, "model.u": 2,
    "sweep.start": 0.5, "sweep.stop": 1.5, "sweep.step": 0.01,
    "chi": 16, "gs_tol": 1e-8, "gs_max_sweeps": 4000,
    "optimizer.grid_resolution": 13, "optimizer.eta": 0.15,
    "optimizer.fd_step": 1e-4, "optimizer.tol": 1e-9,
    "optimizer.max_iters": 80, "optimizer.n_starts": 1,
    "optimizer.mode": "AXIS_LOCKED", "optimizer.locked_sites": "2",
    "optimizer.spectrum_method": "auto",
    "outputs": "./out", "cache": "./cache", "seed": 0,
    "tau_lock": 0.05, "tau_jump": 0.2, "prominence": 0.25, "gap_depth": 0.10,
}

_ALL_KEYS = {**_MODEL_KEYS, **_SWEEP_KEYS, **_OPT_KEYS, **_TOP_KEYS}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        merged.update(self.values)
        self.values = merged
        if self.values["sweep.step"] <= 0:
            raise ConfigurationError("sweep.step must be positive")
        if self.values["sweep.start"] >= self.values["sweep.stop"]:
            raise ConfigurationError("sweep.start must be below sweep.stop")

    def model(self):
        v = self.values
        return ModelSpec(kind=v["model.kind"], J=v["model.J"], h=v["model.h"],
                         delta=v["model.delta"], u=v["model.u"])

    def mode(self):
        locked = frozenset(int(s) for s in str(self.values["optimizer.locked_sites"]).split(",")
                           if str(s).strip()) if self.values["optimizer.locked_sites"] else frozenset()
        return SymmetryMode(self.values["optimizer.mode"], locked)

    def optimizer(self):
        v = self.values
        return OptimizerConfig(
            grid_resolution=v["optimizer.grid_resolution"], eta=v["optimizer.eta"],
            fd_step=v["optimizer.fd_step"], tol=v["optimizer.tol"],
            max_iters=v["optimizer.max_iters"], n_starts=v["optimizer.n_starts"],
            mode=self.mode(), spectrum_method=v["optimizer.spectrum_method"])

    def h_values(self):
        v = self.values
        out = []
        h = v["sweep.start"]
        k = 0
        while h <= v["sweep.stop"] + 1e-12:
            out.append(round(h, 10))
            k += 1
            h = v["sweep.start"] + k * v["sweep.step"]
        return out

    def thresholds(self):
        v = self.values
        return {"tau_lock": v["tau_lock"], "tau_jump": v["tau_jump"],
                "prominence": v["prominence"], "gap_depth": v["gap_depth"]}

    def config_hash(self):
        blob = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, pairs):
        vals = dict(self.values)
        for k, raw in pairs:
            vals[_check_key(k)] = _coerce(k, raw)
        return RunConfig(values=vals)


def _check_key(key):
    if key not in _ALL_KEYS:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    return key


def _coerce(key, raw):
    typ = _ALL_KEYS[_check_key(key)]
    raw = str(raw).strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, raw = (s.strip() for s in text.split("=", 1))
            values[_check_key(key)] = _coerce(key, raw)
    return RunConfig(values=values)


def default_config():
    return RunConfig()


def render_default_file():
    lines = ["# bellsweep run configuration (defaults shown)"]
    for k in sorted(DEFAULTS):
        lines.append(f"{k} = {DEFAULTS[k]}")
    return "\n".join(lines) + "\n"
