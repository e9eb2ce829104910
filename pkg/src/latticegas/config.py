"""Experiment configuration: flat sectioned key=value text.

Sections: model, field, run, numerics, output.  Parsing and serialization
round-trip exactly (canonical key order, 17-significant-digit floats), and
the config hash stamped into emitted files is the SHA-256 of the canonical
serialization.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dynamics import RateFamily
from .fields import Field, fourier_scalar
from .gibbs import Interaction


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "model": {"d": "1", "N": "64", "interaction": "zero", "J": "0",
              "rate": "heatbath", "a": "0", "witness": "trailing"},
    "field": {"mode": "zero", "E": "", "U_cos": "", "U_sin": "",
              "stream_cos": "", "stream_sin": "", "Etilde": ""},
    "run": {"T": "0.1", "trajectories": "0", "seed": "", "obs_times": ""},
    "numerics": {"M": "64", "n_out": "80", "support_radius": "1",
                 "c_safe": "0.4", "cg_tol": "1e-10", "relax_tol": "1e-4",
                 "rho_bar": "0.5", "target_cos": "", "target_sin": ""},
    "output": {"dir": "out", "formats": "csv,json"},
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@dataclass
class ExperimentConfig:
    model: dict = dc_field(default_factory=dict)
    field: dict = dc_field(default_factory=dict)
    run: dict = dc_field(default_factory=dict)
    numerics: dict = dc_field(default_factory=dict)
    output: dict = dc_field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg = cls()
        for sec in _DEFAULTS:
            merged = dict(_DEFAULTS[sec])
            if cp.has_section(sec):
                for k, v in cp.items(sec):
                    if k not in merged:
                        raise ConfigError(f"[{sec}] unknown key {k!r}")
                    merged[k] = v.strip()
            setattr(cfg, sec, merged)
        for sec in cp.sections():
            if sec not in _DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def serialize(self) -> str:
        out = io.StringIO()
        for sec in _DEFAULTS:
            out.write(f"[{sec}]\n")
            data = getattr(self, sec)
            for k in _DEFAULTS[sec]:
                out.write(f"{k} = {_fmt(data.get(k, _DEFAULTS[sec][k]))}\n")
            out.write("\n")
        return out.getvalue()

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    # -- typed accessors ----------------------------------------------------
    def _num(self, sec: str, key: str, cast, default=None):
        raw = getattr(self, sec).get(key, "")
        if raw == "":
            if default is not None:
                return default
            raise ConfigError(f"[{sec}] {key} is required")
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}={raw!r} is not a valid "
                              f"{cast.__name__}") from exc

    def validate(self) -> None:
        d = self._num("model", "d", int)
        N = self._num("model", "N", int)
        if d not in (1, 2, 3):
            raise ConfigError(f"[model] d={d} outside 1..3")
        if N < 2:
            raise ConfigError(f"[model] N={N} must be >= 2")
        if self.model["interaction"] not in ("zero", "nn"):
            raise ConfigError("[model] interaction must be zero|nn")
        if self.model["rate"] not in ("heatbath", "neighbor_weighted"):
            raise ConfigError("[model] rate must be heatbath|neighbor_weighted")
        if self.model["witness"] not in ("trailing", "symmetric"):
            raise ConfigError("[model] witness must be trailing|symmetric")
        if self.field["mode"] not in ("zero", "constant", "conservative",
                                      "decomposed"):
            raise ConfigError("[field] mode must be "
                              "zero|constant|conservative|decomposed")
        ntraj = self._num("run", "trajectories", int, 0)
        if ntraj < 0:
            raise ConfigError("[run] trajectories must be >= 0")
        if ntraj > 0 and self.run.get("seed", "") == "":
            raise ConfigError("[run] seed is required when trajectories > 0")
        T = self._num("run", "T", float)
        if T <= 0:
            raise ConfigError("[run] T must be positive")
        M = self._num("numerics", "M", int)
        if M < 2:
            raise ConfigError("[numerics] M must be >= 2")
        if ntraj > 0 and N % M != 0:
            raise ConfigError(f"[numerics] M={M} must divide N={N} for "
                              "micro/macro comparisons")

    # -- object builders ----------------------------------------------------
    def interaction(self) -> Interaction:
        if self.model["interaction"] == "zero":
            return Interaction(0.0)
        return Interaction(self._num("model", "J", float))

    def rate_family(self) -> RateFamily:
        return RateFamily(self.model["rate"], self._num("model", "a", float, 0.0),
                          self.model["witness"])

    def _coeffs(self, raw: str, d: int) -> dict:
        # "k:amp" pairs separated by ';' with k an int (d=1) or comma tuple
        out = {}
        for item in raw.split(";"):
            item = item.strip()
            if not item:
                continue
            try:
                mode, amp = item.split(":")
                key = (int(mode) if d == 1
                       else tuple(int(v) for v in mode.split(",")))
                out[key] = float(amp)
            except ValueError as exc:
                raise ConfigError(f"bad Fourier coefficient {item!r}") from exc
        return out

    def build_field(self) -> Field | None:
        d = self._num("model", "d", int)
        mode = self.field["mode"]
        if mode == "zero":
            return None
        if mode == "constant":
            vec = [float(v) for v in self.field["E"].split(",") if v.strip()]
            if len(vec) != d:
                raise ConfigError(f"[field] E needs {d} components")
            return Field.constant(vec)
        ucos = self._coeffs(self.field["U_cos"], d)
        usin = self._coeffs(self.field["U_sin"], d)
        if not (ucos or usin):
            raise ConfigError(f"[field] mode={mode} needs U coefficients")
        U, gU = fourier_scalar(d, cos=ucos, sin=usin)
        if mode == "conservative":
            return Field.conservative(d, U, gU)
        etilde = [float(v) for v in self.field["Etilde"].split(",") if v.strip()]
        scos = self._coeffs(self.field["stream_cos"], d)
        ssin = self._coeffs(self.field["stream_sin"], d)
        stream = grad_stream = None
        if scos or ssin:
            if d != 2:
                raise ConfigError("[field] stream function requires d=2")
            stream, grad_stream = fourier_scalar(d, cos=scos, sin=ssin)
        return Field.decomposed(d, U, gU,
                                etilde_const=np.array(etilde) if etilde else None,
                                stream=stream, grad_stream=grad_stream)

    def obs_times(self) -> np.ndarray:
        raw = self.run.get("obs_times", "")
        T = self._num("run", "T", float)
        if raw.strip():
            times = np.array([float(v) for v in raw.split(",") if v.strip()])
        else:
            times = np.array([T])
        if times.min() < 0 or times.max() > T:
            raise ConfigError("[run] obs_times outside [0, T]")
        return times
