"""Experiment configuration: JSON files with a ``kind`` discriminator.

Scalar fields (a, b and battery entries) are given as

* a number, or ``{"type": "constant", "value": c}``
* ``{"type": "polynomial", "terms": {"1": c0, "x": c1, "x^2*y": c2}}``
* ``{"type": "tabulated", "file": "values.txt"}``  (one value per node,
  node order; ``.npy`` also accepted; relative to the config file)
* ``{"type": "eigenproduct", "i": 0, "j": 1}``  (product of two basis
  functions of the tracked cluster)
* ``{"type": "random", "scale": 1.0}``  (seeded Gaussian nodal values)

Domain perturbations psi are ``{"kind": "constant", "c": [1, 0]}``,
``{"kind": "linear", "c": 1.0}`` or, in 1D, ``{"kind": "tabulated",
"values": {"-1": v0, "1": v1}}`` keyed by endpoint.
"""
from __future__ import annotations

import copy
import json
import re
from pathlib import Path

import numpy as np

__all__ = ["ConfigError", "KINDS", "load_config", "parse_config", "field_values", "parse_monomial"]

KINDS = ("solve", "coeff-split", "coeff-transversality", "independence", "domain-hadamard", "domain-split")
FIELD_TYPES = ("constant", "polynomial", "tabulated", "eigenproduct", "random")
PSI_KINDS = ("constant", "linear", "tabulated")

DEFAULTS = {
    "flavor": "additive",
    "boundary_correction": True,
    "seed": 0,
    "window": None,
    "cluster_index": 0,
    "project_to_H": False,
    "tolerances": {"cluster_tol": 1e-6, "rank_tol": 1e-8, "h_tol": None, "independence": 1e-3},
}

REQUIRED = {
    "solve": (),
    "coeff-split": ("b", "epsilons"),
    "coeff-transversality": (),
    "independence": (),
    "domain-hadamard": (),
    "domain-split": ("psi",),
}

_MONO = re.compile(r"^(x|y)(\^(\d+))?$")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field or line."""


def _err(path: str, msg: str) -> ConfigError:
    return ConfigError(f"field '{path}': {msg}")


def parse_monomial(key: str) -> tuple[int, int]:
    """'x^2*y' -> (2, 1); '1' -> (0, 0)."""
    key = key.replace(" ", "")
    if key in ("1", ""):
        return 0, 0
    px = py = 0
    for part in key.split("*"):
        m = _MONO.match(part)
        if not m:
            raise ValueError(f"bad monomial factor {part!r} in {key!r}")
        e = int(m.group(3) or 1)
        if m.group(1) == "x":
            px += e
        else:
            py += e
    return px, py


def _number(cfg, key, path, positive=False, integer=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise _err(path, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise _err(path, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _check_field(spec, path: str, base: Path | None, dim: int):
    if isinstance(spec, bool):
        raise _err(path, "expected a number or a field object")
    if isinstance(spec, (int, float)):
        return {"type": "constant", "value": float(spec)}
    if not isinstance(spec, dict) or "type" not in spec:
        raise _err(path, "expected a number or an object with a 'type'")
    t = spec["type"]
    if t not in FIELD_TYPES:
        raise _err(path + ".type", f"unknown field type {t!r}; expected one of {', '.join(FIELD_TYPES)}")
    out = dict(spec)
    if t == "constant":
        if "value" not in spec:
            raise _err(path + ".value", "missing")
        out["value"] = _number(spec, "value", path + ".value")
    elif t == "polynomial":
        terms = spec.get("terms")
        if not isinstance(terms, dict) or not terms:
            raise _err(path + ".terms", "expected a non-empty map of monomial -> coefficient")
        for k in terms:
            try:
                px, py = parse_monomial(k)
            except ValueError as e:
                raise _err(f"{path}.terms.{k}", str(e)) from None
            if dim == 1 and py:
                raise _err(f"{path}.terms.{k}", "y is not available in 1D")
            _number(terms, k, f"{path}.terms.{k}")
    elif t == "tabulated":
        f = spec.get("file")
        if not isinstance(f, str):
            raise _err(path + ".file", "missing file name")
        p = Path(f) if base is None or Path(f).is_absolute() else base / f
        if not p.exists():
            raise _err(path + ".file", f"file not found: {p}")
        out["file"] = str(p)
    elif t == "eigenproduct":
        for k in ("i", "j"):
            if k not in spec:
                raise _err(f"{path}.{k}", "missing")
            if _number(spec, k, f"{path}.{k}", integer=True) < 0:
                raise _err(f"{path}.{k}", "must be >= 0")
    elif t == "random":
        if "scale" in spec:
            _number(spec, "scale", path + ".scale", positive=True)
    return out


def _check_psi(spec, path: str, dim: int):
    if not isinstance(spec, dict) or spec.get("kind") not in PSI_KINDS:
        raise _err(path + ".kind", f"expected one of {', '.join(PSI_KINDS)}")
    out = dict(spec)
    if spec["kind"] == "tabulated":
        if dim != 1:
            raise _err(path + ".kind", "tabulated psi is supported in 1D only")
        vals = spec.get("values")
        if not isinstance(vals, dict) or len(vals) != 2:
            raise _err(path + ".values", "expected a map with the two endpoints")
    else:
        c = spec.get("c", 1.0)
        arr = np.atleast_1d(np.asarray(c, dtype=float))
        if spec["kind"] == "linear" and arr.size != 1:
            raise _err(path + ".c", "dilation rate must be a scalar")
        if spec["kind"] == "constant" and arr.size not in (1, dim):
            raise _err(path + ".c", f"expected a scalar or a {dim}-vector")
        out["c"] = c
    if "magnitude" in spec:
        _number(spec, "magnitude", path + ".magnitude")
    return out


def parse_config(raw: dict, base: Path | None = None) -> dict:
    """Validate and fill defaults; raises ConfigError naming the bad field."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    cfg = copy.deepcopy(DEFAULTS)
    tol = dict(cfg["tolerances"])
    cfg.update({k: v for k, v in raw.items() if k != "tolerances"})
    if "tolerances" in raw:
        if not isinstance(raw["tolerances"], dict):
            raise _err("tolerances", "expected an object")
        unknown = set(raw["tolerances"]) - set(tol)
        if unknown:
            raise _err("tolerances", f"unknown keys {sorted(unknown)}")
        tol.update(raw["tolerances"])
    for k, v in tol.items():
        if v is not None:
            _number(tol, k, f"tolerances.{k}", positive=True)
    cfg["tolerances"] = tol

    kind = cfg.get("kind")
    if kind not in KINDS:
        raise _err("kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    for key in ("s", "geometry", "n"):
        if key not in cfg:
            raise _err(key, "missing")
    s = _number(cfg, "s", "s")
    if not 0 < s < 1:
        raise _err("s", f"must lie in (0, 1), got {s}")
    g = cfg["geometry"]
    if not isinstance(g, dict) or g.get("type") not in ("interval", "square"):
        raise _err("geometry.type", "expected 'interval' or 'square'")
    b = g.get("bounds")
    if not (isinstance(b, list) and len(b) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in b)):
        raise _err("geometry.bounds", "expected [lo, hi]")
    if not b[1] > b[0]:
        raise _err("geometry.bounds", "hi must exceed lo")
    dim = 1 if g["type"] == "interval" else 2
    n = _number(cfg, "n", "n", integer=True)
    if n < 8:
        raise _err("n", "must be >= 8")
    if dim == 2 and n > 48:
        raise _err("n", "square grids are capped at n = 48")
    if cfg["flavor"] not in ("additive", "multiplicative"):
        raise _err("flavor", "expected 'additive' or 'multiplicative'")
    for key in REQUIRED[kind]:
        if key not in raw:
            raise _err(key, f"required for kind '{kind}'")
    for key in ("a", "b"):
        if key in cfg and cfg[key] is not None:
            cfg[key] = _check_field(cfg[key], key, base, dim)
    if "fields" in cfg:
        if not isinstance(cfg["fields"], list) or not cfg["fields"]:
            raise _err("fields", "expected a non-empty list")
        cfg["fields"] = [_check_field(f, f"fields[{i}]", base, dim) for i, f in enumerate(cfg["fields"])]
    if "psi" in cfg:
        cfg["psi"] = _check_psi(cfg["psi"], "psi", dim)
    if "epsilons" in cfg:
        e = cfg["epsilons"]
        if not isinstance(e, list) or not e or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x == 0 for x in e):
            raise _err("epsilons", "expected a non-empty list of nonzero numbers")
        cfg["epsilons"] = [float(x) for x in e]
    if cfg["window"] is not None:
        w = cfg["window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, int) for x in w) and 0 <= w[0] <= w[1]):
            raise _err("window", "expected [start, stop] with 0 <= start <= stop")
    ci = _number(cfg, "cluster_index", "cluster_index", integer=True)
    if ci < 0:
        raise _err("cluster_index", "must be >= 0")
    _number(cfg, "seed", "seed", integer=True)
    if not isinstance(cfg["boundary_correction"], bool):
        raise _err("boundary_correction", "expected true or false")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(raw, path.parent)


def field_values(spec: dict, points: np.ndarray, seed: int = 0, basis: np.ndarray | None = None,
                 salt: int = 0) -> np.ndarray:
    """Nodal values of a validated field spec at ``points`` (shape (N, dim))."""
    N = points.shape[0]
    t = spec["type"]
    if t == "constant":
        return np.full(N, spec["value"])
    if t == "polynomial":
        x = points[:, 0]
        y = points[:, 1] if points.shape[1] > 1 else np.zeros(N)
        out = np.zeros(N)
        for key in sorted(spec["terms"]):
            px, py = parse_monomial(key)
            out += float(spec["terms"][key]) * x**px * y**py
        return out
    if t == "tabulated":
        f = Path(spec["file"])
        vals = np.load(f) if f.suffix == ".npy" else np.loadtxt(f, ndmin=1)
        vals = np.asarray(vals, dtype=float).ravel()
        if vals.size != N:
            raise ConfigError(f"field file {f}: {vals.size} values for {N} nodes")
        return vals
    if t == "eigenproduct":
        if basis is None:
            raise ConfigError("eigenproduct field needs a tracked cluster")
        i, j = int(spec["i"]), int(spec["j"])
        if max(i, j) >= basis.shape[1]:
            raise ConfigError(f"eigenproduct index out of range for a cluster of size {basis.shape[1]}")
        return basis[:, i] * basis[:, j]
    rng = np.random.default_rng([int(seed), int(salt)])
    return float(spec.get("scale", 1.0)) * rng.standard_normal(N)
