"""Static model definition: species, kernel matrix, derived exponents, bracket weight."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

INIT_KINDS = ("gaussian", "heavy_tail", "uniform_ball")


class ConfigError(ValueError):
    """Invalid configuration. ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        msg = "; ".join(f"{p}: {m}" if p else m for p, m in self.errors)
        super().__init__(msg)


def normalize_masses(raw_masses: Sequence[float]) -> list[float]:
    raw = [float(m) for m in raw_masses]
    if not raw:
        raise ConfigError([("species", "at least one species is required")])
    bad = [(f"species[{k}].mass", f"mass must be positive, got {m}")
           for k, m in enumerate(raw) if not (m > 0 and np.isfinite(m))]
    if bad:
        raise ConfigError(bad)
    total = sum(raw)
    out = [m / total for m in raw]
    # one Neumaier-style correction so the sum lands on 1 as closely as doubles allow
    drift = 1.0 - float(np.sum(out))
    k = int(np.argmax(out))
    out[k] += drift
    return out


def bracket(v, m_i: float):
    """<v>_i = sqrt(1 + m_i |v|^2); ``v`` may be a single vector or an (..., 3) array."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + m_i * np.sum(v * v, axis=-1))


@dataclass(frozen=True)
class InitSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SpeciesParams:
    index: int
    mass: float
    init: InitSpec


@dataclass(frozen=True)
class KernelMatrix:
    lam: np.ndarray
    s: np.ndarray
    kappa: np.ndarray
    forward_only: bool = True

    @classmethod
    def uniform(cls, n_species: int, lam: float, s: float, kappa: float = 1.0) -> "KernelMatrix":
        full = lambda x: np.full((n_species, n_species), float(x))
        return cls(full(lam), full(s), full(kappa))

    @property
    def n_species(self) -> int:
        return self.lam.shape[0]


@dataclass(frozen=True)
class DerivedExponents:
    lambda_bar_i: np.ndarray
    lambda_dbar_i: np.ndarray
    lambda_bar: float
    lambda_dbar: float
    lambda_natural: float
    s_bar_i: np.ndarray
    s_dbar_i: np.ndarray
    s_bar: float
    s_dbar: float
    s_natural: float


def derive_exponents(k: KernelMatrix) -> DerivedExponents:
    lam = np.asarray(k.lam, dtype=float)
    s = np.asarray(k.s, dtype=float)
    return DerivedExponents(
        lambda_bar_i=lam.min(axis=1),
        lambda_dbar_i=lam.max(axis=1),
        lambda_bar=float(lam.min()),
        lambda_dbar=float(lam.max()),
        lambda_natural=float(lam.max(axis=1).min()),
        s_bar_i=s.min(axis=1),
        s_dbar_i=s.max(axis=1),
        s_bar=float(s.min()),
        s_dbar=float(s.max()),
        s_natural=float(s.max(axis=1).min()),
    )


@dataclass(frozen=True)
class MixtureConfig:
    species: tuple[SpeciesParams, ...]
    kernel: KernelMatrix

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def masses(self) -> np.ndarray:
        return np.array([sp.mass for sp in self.species])

    @property
    def exponents(self) -> DerivedExponents:
        return derive_exponents(self.kernel)

    def pair(self, i: int, j: int) -> tuple[float, float, float]:
        """(lambda, s, kappa) for the species pair, 0-based."""
        k = self.kernel
        return float(k.lam[i, j]), float(k.s[i, j]), float(k.kappa[i, j])


def _kernel_errors(k: KernelMatrix) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    n = None
    for name in ("lam", "s", "kappa"):
        a = np.asarray(getattr(k, name))
        label = "lambda" if name == "lam" else name
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            errs.append((f"kernel.{label}", "must be a square matrix"))
            continue
        if n is None:
            n = a.shape[0]
        elif a.shape[0] != n:
            errs.append((f"kernel.{label}", f"expected {n}x{n}, got {a.shape[0]}x{a.shape[1]}"))
            continue
        for r in range(a.shape[0]):
            for c in range(r + 1, a.shape[1]):
                if a[r, c] != a[c, r]:
                    errs.append((f"kernel.{label}", f"symmetry violated at ({r + 1},{c + 1})"))
        if name == "lam" and not np.all((a > 0) & (a <= 2)):
            errs.append(("kernel.lambda", "lambda must lie in (0,2]"))
        if name == "s" and not np.all((a > 0) & (a < 2)):
            errs.append(("kernel.s", "s must lie in open interval (0,2)"))
        if name == "kappa" and not np.all(a > 0):
            errs.append(("kernel.kappa", "kappa must be positive"))
    if not k.forward_only:
        errs.append(("kernel", "only forward scattering is supported"))
    return errs


def _init_errors(sp: SpeciesParams, k: int) -> list[tuple[str, str]]:
    path = f"species[{k}].init"
    kind, p = sp.init.kind, sp.init.params
    if kind not in INIT_KINDS:
        return [(f"{path}.kind", f"unknown kind {kind!r}; expected one of {', '.join(INIT_KINDS)}")]
    errs = []
    if float(p.get("density", 1.0)) <= 0:
        errs.append((f"{path}.params.density", "density must be positive"))
    if kind == "gaussian":
        if float(p.get("temperature", 1.0)) <= 0:
            errs.append((f"{path}.params.temperature", "temperature must be positive"))
        if len(p.get("mean", [0.0, 0.0, 0.0])) != 3:
            errs.append((f"{path}.params.mean", "mean must be a 3-vector"))
    elif kind == "heavy_tail":
        if float(p.get("p", 7.0)) <= 5:
            errs.append((f"{path}.params.p", "heavy_tail decay exponent must exceed 5 (finite energy)"))
    elif kind == "uniform_ball":
        if float(p.get("radius", 1.0)) <= 0:
            errs.append((f"{path}.params.radius", "radius must be positive"))
    return errs


def validate_config(cfg: MixtureConfig) -> None:
    """Raise ConfigError listing every violation; return None when valid."""
    errs = _kernel_errors(cfg.kernel)
    if not errs and cfg.kernel.n_species != cfg.n_species:
        errs.append(("kernel", f"kernel is {cfg.kernel.n_species}x{cfg.kernel.n_species} "
                               f"but there are {cfg.n_species} species"))
    for k, sp in enumerate(cfg.species):
        if not sp.mass > 0:
            errs.append((f"species[{k}].mass", "mass must be positive"))
        errs.extend(_init_errors(sp, k))
    if errs:
        raise ConfigError(errs)


def mixture_from_dict(doc: dict[str, Any]) -> MixtureConfig:
    """Build (and validate) a MixtureConfig from the parsed JSON document."""
    if "species" not in doc or not isinstance(doc["species"], list):
        raise ConfigError([("species", "missing or not a list")])
    if "kernel" not in doc or not isinstance(doc["kernel"], dict):
        raise ConfigError([("kernel", "missing or not an object")])
    raw = []
    errs = []
    for k, sp in enumerate(doc["species"]):
        if not isinstance(sp, dict) or "mass" not in sp:
            errs.append((f"species[{k}].mass", "missing"))
            raw.append(1.0)
        else:
            raw.append(sp["mass"])
    if errs:
        raise ConfigError(errs)
    masses = normalize_masses(raw)
    species = []
    for k, sp in enumerate(doc["species"]):
        init = sp.get("init", {"kind": "gaussian", "params": {}})
        species.append(SpeciesParams(k + 1, masses[k],
                                     InitSpec(str(init.get("kind", "")), dict(init.get("params", {})))))
    kd = doc["kernel"]
    n = len(species)
    mats = []
    for key, default in (("lambda", None), ("s", None), ("kappa", 1.0)):
        val = kd.get(key, default)
        if val is None:
            raise ConfigError([(f"kernel.{key}", "missing")])
        a = np.asarray(val, dtype=float)
        if a.ndim == 0:
            a = np.full((n, n), float(a))
        mats.append(a)
    cfg = MixtureConfig(tuple(species), KernelMatrix(*mats))
    validate_config(cfg)
    return cfg


def load_json_document(path: str) -> dict[str, Any]:
    """Parse a JSON config, reporting line and column on syntax errors."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno}, column {exc.colno}", exc.msg)]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("", "top level must be an object")])
    return doc
