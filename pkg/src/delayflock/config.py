"""JSON run configurations.

Parses config documents into SimConfig, reporting violations with the
offending field path.  Family tags: influence "cucker_smale",
"power_tail", "exponential", "constant"; kernel "constant",
"exponential", "dirac"; delay "constant_delay", "smooth_decreasing".
"""

from __future__ import annotations

import json

import numpy as np

from . import kernels
from .particle import (ExplicitInitial, ModelSpec, RandomInitial,
                       SampledHistory, SimConfig)


class ConfigError(ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require(doc, key, path):
    if key not in doc:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return doc[key]


def _number(doc, key, path, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}", "missing required field")
    val = doc[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {val!r}")
    return float(val)


def _integer(doc, key, path, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}", "missing required field")
    val = doc[key]
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {val!r}")
    return val


def _family(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object with a 'family' tag")
    return _require(doc, "family", path)


def influence_from(doc, path="model.psi"):
    family = _family(doc, path)
    try:
        if family == "cucker_smale":
            return kernels.CuckerSmale(beta=_number(doc, "beta", path))
        if family == "power_tail":
            return kernels.PowerTail(p=_number(doc, "p", path))
        if family == "exponential":
            return kernels.Exponential()
        if family == "constant":
            return kernels.ConstantInfluence()
    except kernels.DomainError as err:
        raise ConfigError(path, str(err)) from err
    raise ConfigError(f"{path}.family", f"unknown influence family {family!r}")


def kernel_from(doc, path="model.alpha"):
    family = _family(doc, path)
    try:
        if family == "constant":
            return kernels.ConstantKernel(level=_number(doc, "c", path, default=1.0))
        if family in ("exponential", "exponential_decay"):
            return kernels.ExponentialDecayKernel(rate=_number(doc, "rate", path))
        if family == "dirac":
            return kernels.DiracKernel(tau_bar=_number(doc, "tau_bar", path))
    except kernels.DomainError as err:
        raise ConfigError(path, str(err)) from err
    raise ConfigError(f"{path}.family", f"unknown kernel family {family!r}")


def delay_from(doc, path="model.tau"):
    family = _family(doc, path)
    try:
        if family == "constant_delay":
            return kernels.ConstantDelay(tau_bar=_number(doc, "tau_bar", path))
        if family == "smooth_decreasing":
            return kernels.SmoothDecreasingDelay(
                floor=_number(doc, "tau_star", path),
                start=_number(doc, "tau0", path),
                rate=_number(doc, "rate", path))
    except kernels.DomainError as err:
        raise ConfigError(path, str(err)) from err
    raise ConfigError(f"{path}.family", f"unknown delay family {family!r}")


def model_from(doc, path="model"):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    n = _integer(doc, "n", path)
    d = _integer(doc, "d", path)
    psi = influence_from(_require(doc, "psi", path), f"{path}.psi")
    alpha = kernel_from(_require(doc, "alpha", path), f"{path}.alpha")
    tau = delay_from(_require(doc, "tau", path), f"{path}.tau")
    try:
        return ModelSpec(psi=psi, alpha=alpha, tau=tau, n=n, d=d)
    except ValueError as err:
        raise ConfigError(path, str(err)) from err


def _initial_from(doc, path, n, d):
    if doc is None:
        return RandomInitial()
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    kind = doc.get("kind", "random")
    if kind == "random":
        box = _number(doc, "box_size", path, default=2.0)
        speed = _number(doc, "speed", path, default=1.0)
        if box <= 0 or speed < 0:
            raise ConfigError(path, "box_size must be positive, speed nonnegative")
        return RandomInitial(box_size=box, speed=speed)
    if kind == "explicit":
        x = np.asarray(_require(doc, "x", path), dtype=float)
        v = np.asarray(_require(doc, "v", path), dtype=float)
        if x.shape != (n, d) or v.shape != (n, d):
            raise ConfigError(path, f"x and v must both have shape ({n}, {d})")
        return ExplicitInitial(x=x, v=v)
    raise ConfigError(f"{path}.kind", f"unknown initial-data kind {kind!r}")


def _history_from(doc, path, n, d):
    if doc is None:
        return "line"
    if isinstance(doc, str):
        if doc in ("line", "frozen"):
            return doc
        raise ConfigError(path, f"unknown history kind {doc!r}")
    if isinstance(doc, dict) and doc.get("kind") == "sampled":
        times = np.asarray(_require(doc, "times", path), dtype=float)
        x = np.asarray(_require(doc, "x", path), dtype=float)
        v = np.asarray(_require(doc, "v", path), dtype=float)
        if x.shape != (len(times), n, d) or v.shape != x.shape:
            raise ConfigError(path, f"sampled curves must have shape "
                                    f"(len(times), {n}, {d})")
        return SampledHistory(times=times, x=x, v=v)
    raise ConfigError(path, "expected 'line', 'frozen', or sampled curves")


def parse_config(doc) -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("$", "top-level config must be an object")
    model = model_from(_require(doc, "model", "$"), "model")
    dt = _number(doc, "dt", "$")
    t_end = _number(doc, "t_end", "$")
    seed = _integer(doc, "seed", "$", default=0)
    record_every = _integer(doc, "record_every", "$", default=1)
    initial = _initial_from(doc.get("initial"), "initial", model.n, model.d)
    history = _history_from(doc.get("history"), "history", model.n, model.d)
    interpolation = doc.get("interpolation", "linear")
    w1_weight = _number(doc, "w1_velocity_weight", "$", default=1.0)
    try:
        return SimConfig(model=model, dt=dt, t_end=t_end, initial=initial,
                         history=history, seed=seed, record_every=record_every,
                         interpolation=interpolation,
                         w1_velocity_weight=w1_weight)
    except ValueError as err:
        raise ConfigError("$", str(err)) from err


def load_config(path) -> SimConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError("$", f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError("$", f"invalid JSON: {err}") from err
    return parse_config(doc)
