"""Flat ``section.key = value`` experiment configuration.

Values are numbers, ``true``/``false``, bare strings, or bracketed lists of
numbers. ``#`` starts a comment. Keys without a section belong to ``sim``.
Unknown keys are errors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

from .integrator import PROFILE_KINDS, SimConfig

__all__ = ["ParseError", "ExperimentConfig", "parse_config", "load_config"]


class ParseError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


_SIM_KEYS = {
    "a": float,
    "b": float,
    "gamma": float,
    "epsilon": float,
    "m": int,
    "dt": float,
    "T": float,
    "picard_iters": int,
    "picard_tol": float,
    "nonlinear": bool,
}
_DOMAIN_KEYS = {
    "kind": str,
    "x_lo": float,
    "x_hi": float,
    "left0": float,
    "right0": float,
    "left_speed": float,
    "right_speed": float,
    "right_inf": float,
    "left_inf": float,
    "rate": float,
}
_PROFILE_FIELDS = ("amplitude", "period", "origin", "center", "width")
_INITIAL_KEYS = {"u0": str, "u1": str, "projection": str}
_INITIAL_KEYS.update({f"{u}_{f}": float for u in ("u0", "u1") for f in _PROFILE_FIELDS})
_SCHEMA = {
    "sim": _SIM_KEYS,
    "domain": _DOMAIN_KEYS,
    "initial": _INITIAL_KEYS,
    "sweep": {"epsilon": list, "m": list},
    "output": {"dir": str},
    "fit": {"window_fraction": float, "fit_tol": float},
    "check": {
        "seed": int,
        "corpus_size": int,
        "m": int,
        "a_params": list,
        "gammas": list,
    },
    "run": {"workers": int},
}
_REQUIRED = ("sim.gamma", "domain.kind", "initial.u0")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    sweep_epsilon: tuple[float, ...] | None = None
    sweep_m: tuple[int, ...] | None = None
    out_dir: str = "out"
    window_fraction: float = 0.5
    fit_tol: float = 0.05
    check_seed: int = 20240601
    check_corpus_size: int = 100
    check_m: int = 200
    check_a_params: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 10.0)
    check_gammas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    workers: int | None = None

    def sweep_plan(self) -> list[SimConfig]:
        """Cells in row order: epsilon outer, m inner."""
        eps = self.sweep_epsilon or (self.sim.epsilon,)
        ms = self.sweep_m or (self.sim.m,)
        return [replace(self.sim, epsilon=e, m=m) for e, m in itertools.product(eps, ms)]


def _parse_scalar(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise ValueError("unterminated list")
        body = raw[1:-1].strip()
        return [_parse_scalar(p.strip()) for p in body.split(",")] if body else []
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return _parse_scalar(raw)


def _coerce(key: str, value, kind):
    if kind is list:
        if not isinstance(value, list):
            value = [value]
        if not value:
            raise ParseError(key, "list must be non-empty")
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(key, f"expected a list of numbers, got {v!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ParseError(key, f"expected true or false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(key, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(key, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ParseError(key, "value must be finite")
        return float(value)
    if not isinstance(value, str):
        value = str(value)
    return value


def _read_pairs(text: str) -> dict[str, object]:
    pairs: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}", "expected 'section.key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            key = "sim." + key
        section, _, name = key.partition(".")
        if section not in _SCHEMA or name not in _SCHEMA[section]:
            raise ParseError(key, "unknown key")
        if key in pairs:
            raise ParseError(key, "duplicate key")
        try:
            value = _parse_value(raw)
        except ValueError as exc:
            raise ParseError(key, str(exc)) from None
        pairs[key] = _coerce(key, value, _SCHEMA[section][name])
    return pairs


def _profile(pairs: dict, which: str) -> dict:
    kind = pairs.get(f"initial.{which}", "zero")
    if kind not in PROFILE_KINDS:
        raise ParseError(f"initial.{which}", f"unknown profile {kind!r}; expected one of {PROFILE_KINDS}")
    desc = {"kind": kind}
    for f in _PROFILE_FIELDS:
        k = f"initial.{which}_{f}"
        if k in pairs:
            desc[f] = pairs[k]
    need = {"sine": ("amplitude", "period"), "constant": ("amplitude",), "gaussian": ("amplitude", "center", "width")}
    for f in need.get(kind, ()):
        if f not in desc:
            raise ParseError(f"initial.{which}_{f}", f"required for profile {kind!r}")
    return desc


def _domain(pairs: dict) -> dict:
    kind = pairs["domain.kind"]
    allowed = {
        "constant": ("x_lo", "x_hi", "left0", "right0"),
        "linear": ("x_lo", "x_hi", "left0", "right0", "left_speed", "right_speed"),
        "saturating": ("x_lo", "x_hi", "left0", "right0", "right_inf", "left_inf", "rate"),
    }
    if kind not in allowed:
        raise ParseError("domain.kind", f"expected constant|linear|saturating, got {kind!r}")
    given = {k.split(".", 1)[1]: v for k, v in pairs.items() if k.startswith("domain.") and k != "domain.kind"}
    for k in given:
        if k not in allowed[kind]:
            raise ParseError(f"domain.{k}", f"not a parameter of domain kind {kind!r}")
    d = {"kind": kind, "x_lo": given.get("x_lo", 0.0), "x_hi": given.get("x_hi", 1.0)}
    d["left0"] = given.get("left0", d["x_lo"])
    d["right0"] = given.get("right0", d["x_hi"])
    if kind == "linear":
        d["left_speed"] = given.get("left_speed", 0.0)
        d["right_speed"] = given.get("right_speed", 0.0)
    elif kind == "saturating":
        for k in ("right_inf", "rate"):
            if k not in given:
                raise ParseError(f"domain.{k}", "required for saturating domains")
        d["right_inf"] = given["right_inf"]
        d["rate"] = given["rate"]
        d["left_inf"] = given.get("left_inf", d["left0"])
    return d


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    pairs = _read_pairs(text)
    for key in _REQUIRED:
        if key not in pairs:
            raise ParseError(key, "missing required key")

    gamma = pairs["sim.gamma"]
    if not 0 < gamma < 1:
        raise ParseError("sim.gamma", f"must satisfy 0 < γ < 1, got {gamma}")
    sim_kw = {k.split(".", 1)[1]: v for k, v in pairs.items() if k.startswith("sim.")}
    domain = _domain(pairs)
    projection = pairs.get("initial.projection", "interp")
    try:
        sim = SimConfig(
            domain=domain,
            u0=_profile(pairs, "u0"),
            u1=_profile(pairs, "u1"),
            projection=projection,
            **sim_kw,
        )
        sim.family()
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError("sim", str(exc)) from None

    sweep_eps = pairs.get("sweep.epsilon")
    if sweep_eps is not None and any(e <= 0 for e in sweep_eps):
        raise ParseError("sweep.epsilon", "values must be positive")
    sweep_m = pairs.get("sweep.m")
    if sweep_m is not None and any(isinstance(v, float) or v < 1 for v in sweep_m):
        raise ParseError("sweep.m", "values must be positive integers")

    wf = pairs.get("fit.window_fraction", 0.5)
    if not 0 < wf <= 1:
        raise ParseError("fit.window_fraction", "must lie in (0, 1]")
    workers = pairs.get("run.workers")
    if workers is not None and workers < 1:
        raise ParseError("run.workers", "must be at least 1")
    gammas = pairs.get("check.gammas")
    if gammas is not None and not all(0 < g < 1 for g in gammas):
        raise ParseError("check.gammas", "values must satisfy 0 < γ < 1")
    a_params = pairs.get("check.a_params")
    if a_params is not None and not all(a > 0 for a in a_params):
        raise ParseError("check.a_params", "values must be positive")

    defaults = ExperimentConfig(sim=sim)
    return ExperimentConfig(
        sim=sim,
        sweep_epsilon=tuple(float(e) for e in sweep_eps) if sweep_eps else None,
        sweep_m=tuple(int(m) for m in sweep_m) if sweep_m else None,
        out_dir=pairs.get("output.dir", defaults.out_dir),
        window_fraction=wf,
        fit_tol=pairs.get("fit.fit_tol", defaults.fit_tol),
        check_seed=pairs.get("check.seed", defaults.check_seed),
        check_corpus_size=pairs.get("check.corpus_size", defaults.check_corpus_size),
        check_m=pairs.get("check.m", defaults.check_m),
        check_a_params=tuple(float(a) for a in a_params) if a_params else defaults.check_a_params,
        check_gammas=tuple(float(g) for g in gammas) if gammas else defaults.check_gammas,
        workers=workers,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
