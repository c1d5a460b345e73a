"""Stochastic particle scheme for the homogeneous mixture.

Candidate pairs are drawn at a majorant rate per species pair, accepted with
probability (|u| / 2U)^lambda and collided with a truncated angular law. Both
partners are updated, so each accepted event conserves momentum and energy.
All particles carry one common weight; this is what makes both-partner updates
unbiased for every species pair.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .collision import angular_norm
from .mixture import MixtureConfig
from .moments import MomentTable, default_orders, moments_of_brackets
from .spectral import GridDensity, grid_project

log = logging.getLogger("mixkinetic.simulator")

CLAMP_WARN = 0.01
RATE_WARN = 0.1
MAX_CANDIDATES = 10 ** 9


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 0.1
    n_particles: int = 100_000          # total; split across species by density
    eps: float = 1e-2                   # angular cutoff
    u_max: float | None = None          # None: 2x the 99.9th percentile initial relative speed
    seed: int = 0
    output_every: int = 10              # steps between moment rows
    p_max: int = 10
    grid_every: int = 0                 # 0 disables grid snapshots
    grid_n: int = 32
    grid_half_width: float = 6.0
    recenter: bool = True

    def validate(self) -> None:
        from .mixture import ConfigError
        errs = []
        if not self.dt >= 0:
            errs.append(("sim.dt", "dt must be nonnegative"))
        if not self.t_end >= 0:
            errs.append(("sim.t_end", "t_end must be nonnegative"))
        if self.n_particles < 2:
            errs.append(("sim.n_particles", "need at least two particles"))
        if not 0 < self.eps < math.pi / 2:
            errs.append(("sim.eps", "eps must lie in (0, pi/2)"))
        if self.u_max is not None and not self.u_max > 0:
            errs.append(("sim.u_max", "u_max must be positive"))
        if self.output_every < 1:
            errs.append(("sim.output_every", "must be >= 1"))
        if errs:
            raise ConfigError(errs)


@dataclass
class ParticleEnsemble:
    velocities: list          # per species (N_i, 3) arrays
    weight: float             # common particle weight
    masses: np.ndarray
    u_max: float
    step_index: int = 0
    time: float = 0.0
    seed: int = 0
    clamps: int = 0
    accepted: int = 0
    candidates: int = 0

    @property
    def n_species(self) -> int:
        return len(self.velocities)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_species, self.weight)

    def species_mass(self) -> np.ndarray:
        return np.array([self.weight * len(v) for v in self.velocities])

    def momentum(self) -> np.ndarray:
        return sum(m * self.weight * v.sum(axis=0) for m, v in zip(self.masses, self.velocities))

    def species_energy(self) -> np.ndarray:
        return np.array([m * self.weight * float(np.einsum("ij,ij->", v, v))
                         for m, v in zip(self.masses, self.velocities)])

    def momentum_scale(self) -> float:
        return float(sum(m * self.weight * np.linalg.norm(v, axis=1).sum()
                         for m, v in zip(self.masses, self.velocities)))

    def temperatures(self) -> np.ndarray:
        """m_i <|v - mean_i|^2> / 3 per species."""
        out = []
        for m, v in zip(self.masses, self.velocities):
            c = v - v.mean(axis=0)
            out.append(m * float(np.einsum("ij,ij->", c, c)) / (3 * len(v)))
        return np.array(out)

    def copy(self) -> "ParticleEnsemble":
        return replace(self, velocities=[v.copy() for v in self.velocities])


# ---------------------------------------------------------------- initialization

def _init_rng(seed: int, species: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2 ** 64 - 1), counter=[0, 0, species, 2 ** 32]))


def sample_initial(kind: str, params: dict, mass: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "gaussian":
        T = float(params.get("temperature", 1.0))
        mean = np.asarray(params.get("mean", [0.0, 0.0, 0.0]), float)
        return mean + math.sqrt(T / mass) * rng.standard_normal((n, 3))
    if kind == "heavy_tail":
        p = float(params.get("p", 7.0))
        if p <= 5:
            raise ValueError("heavy_tail decay exponent must exceed 5 (infinite energy otherwise)")
        # multivariate t: density proportional to (1 + |v|^2)^(-p/2)
        scale = float(params.get("scale", 1.0))
        z = rng.standard_normal((n, 3))
        w = rng.chisquare(p - 3.0, n)
        return scale * z / np.sqrt(w)[:, None]
    if kind == "uniform_ball":
        R = float(params.get("radius", 1.0))
        d = rng.standard_normal((n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return R * rng.random(n)[:, None] ** (1 / 3) * d
    raise ValueError(f"unknown initial kind {kind!r}")


def species_counts(densities, n_total: int) -> list[int]:
    rho = np.asarray(densities, float)
    raw = n_total * rho / rho.sum()
    counts = np.floor(raw).astype(int)
    # largest remainders take the leftover particles
    for k in np.argsort(-(raw - counts), kind="stable")[: n_total - counts.sum()]:
        counts[k] += 1
    return [max(int(c), 1) for c in counts]


def _relative_speed_quantile(vels, q: float, rng: np.random.Generator, n_pairs: int = 200_000) -> float:
    allv = np.concatenate(vels)
    a = rng.integers(0, len(allv), n_pairs)
    b = rng.integers(0, len(allv), n_pairs)
    return float(np.quantile(np.linalg.norm(allv[a] - allv[b], axis=1), q))


def init_ensemble(cfg: MixtureConfig, sim: SimConfig) -> ParticleEnsemble:
    sim.validate()
    dens = [float(sp.init.params.get("density", 1.0)) for sp in cfg.species]
    counts = species_counts(dens, sim.n_particles)
    weight = sum(dens) / sum(counts)
    vels = []
    for k, (sp, n) in enumerate(zip(cfg.species, counts)):
        vels.append(sample_initial(sp.init.kind, sp.init.params, sp.mass, n, _init_rng(sim.seed, k)))
    masses = cfg.masses
    if sim.recenter:
        tot = sum(m * len(v) for m, v in zip(masses, vels))
        mean = sum(m * v.sum(axis=0) for m, v in zip(masses, vels)) / tot
        vels = [v - mean for v in vels]
    u_max = sim.u_max
    if u_max is None:
        u_max = 2.0 * _relative_speed_quantile(vels, 0.999, _init_rng(sim.seed, 10 ** 6))
    return ParticleEnsemble(vels, weight, masses.copy(), float(u_max), seed=sim.seed)


# ---------------------------------------------------------------- collision kernel

@numba.njit(cache=True)
def _collide_candidates(vi, vj, p_idx, q_idx, u_acc, u_th, u_ph, m_i, m_j, lam, two_u, s, eps, dry):
    """Process candidates in order. Returns (accepted, clamped, accept flags)."""
    M = m_i + m_j
    a = eps ** (-s)
    b = (0.5 * np.pi) ** (-s)
    n = p_idx.shape[0]
    flags = np.zeros(n, np.bool_)
    n_acc = 0
    n_clamp = 0
    for c in range(n):
        p = p_idx[c]
        q = q_idx[c]
        u0 = vi[p, 0] - vj[q, 0]
        u1 = vi[p, 1] - vj[q, 1]
        u2 = vi[p, 2] - vj[q, 2]
        un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        if un == 0.0:
            continue
        ratio = un / two_u
        if ratio > 1.0:
            ratio = 1.0
            n_clamp += 1
        if u_acc[c] >= ratio ** lam:
            continue
        flags[c] = True
        n_acc += 1
        if dry:
            continue
        th = (a - u_th[c] * (a - b)) ** (-1.0 / s)
        if th > 0.5 * np.pi:
            th = 0.5 * np.pi
        ph = 2.0 * np.pi * u_ph[c]
        x0 = u0 / un
        x1 = u1 / un
        x2 = u2 / un
        # basis vector least aligned with u (lowest index on ties)
        k = 0
        if abs(x1) < abs(x0):
            k = 1
        if abs(x2) < abs(x1) and abs(x2) < abs(x0):
            k = 2
        e0 = 1.0 if k == 0 else 0.0
        e1 = 1.0 if k == 1 else 0.0
        e2 = 1.0 if k == 2 else 0.0
        d = e0 * x0 + e1 * x1 + e2 * x2
        i0 = e0 - d * x0
        i1 = e1 - d * x1
        i2 = e2 - d * x2
        ni = math.sqrt(i0 * i0 + i1 * i1 + i2 * i2)
        i0 /= ni
        i1 /= ni
        i2 /= ni
        j0 = x1 * i2 - x2 * i1
        j1 = x2 * i0 - x0 * i2
        j2 = x0 * i1 - x1 * i0
        ct = math.cos(th)
        st = math.sin(th)
        cp = math.cos(ph)
        sp = math.sin(ph)
        s0 = ct * x0 + st * (cp * i0 + sp * j0)
        s1 = ct * x1 + st * (cp * i1 + sp * j1)
        s2 = ct * x2 + st * (cp * i2 + sp * j2)
        c0 = (m_i * vi[p, 0] + m_j * vj[q, 0]) / M
        c1 = (m_i * vi[p, 1] + m_j * vj[q, 1]) / M
        c2 = (m_i * vi[p, 2] + m_j * vj[q, 2]) / M
        fi = m_j / M * un
        fj = m_i / M * un
        vi[p, 0] = c0 + fi * s0
        vi[p, 1] = c1 + fi * s1
        vi[p, 2] = c2 + fi * s2
        vj[q, 0] = c0 - fj * s0
        vj[q, 1] = c1 - fj * s1
        vj[q, 2] = c2 - fj * s2
    return n_acc, n_clamp, flags


def pair_list(n_species: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_species) for j in range(i, n_species)]


def majorant(cfg: MixtureConfig, i: int, j: int, u_max: float, eps: float) -> float:
    """Per-pair-of-particles majorant rate (2U)^lambda |S| ||beta_eps||_1 (without the weight)."""
    lam, s, kappa = cfg.pair(i, j)
    return (2.0 * u_max) ** lam * 2.0 * np.pi * angular_norm(s, kappa, eps)


def candidate_rate(ens: ParticleEnsemble, cfg: MixtureConfig, i: int, j: int, eps: float) -> float:
    ni, nj = len(ens.velocities[i]), len(ens.velocities[j])
    pairs = ni * (ni - 1) / 2 if i == j else ni * nj
    return pairs * ens.weight * majorant(cfg, i, j, ens.u_max, eps)


def max_rate_per_particle(ens: ParticleEnsemble, cfg: MixtureConfig, eps: float,
                          n_probe: int = 20_000) -> float:
    """Largest per-particle collision rate: majorant times the acceptance probability probed on random pairs."""
    rng = np.random.default_rng(12345)
    rates = np.zeros(ens.n_species)
    for i in range(ens.n_species):
        for j in range(ens.n_species):
            lam = cfg.pair(i, j)[0]
            vi, vj = ens.velocities[i], ens.velocities[j]
            u = np.linalg.norm(vi[rng.integers(0, len(vi), n_probe)] - vj[rng.integers(0, len(vj), n_probe)], axis=1)
            acc = float(np.mean(np.minimum(u / (2 * ens.u_max), 1.0) ** lam))
            rates[i] += ens.weight * len(vj) * majorant(cfg, i, j, ens.u_max, eps) * acc
    return float(rates.max())


def _pair_rng(seed: int, step: int, pair: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2 ** 64 - 1), counter=[step, pair, 0, 0]))


def step(ens: ParticleEnsemble, cfg: MixtureConfig, sim: SimConfig) -> ParticleEnsemble:
    """Advance the ensemble in place by sim.dt and return it."""
    if sim.dt == 0:
        return ens
    for pk, (i, j) in enumerate(pair_list(ens.n_species)):
        lam, s, _ = cfg.pair(i, j)
        mean = candidate_rate(ens, cfg, i, j, sim.eps) * sim.dt
        if mean > MAX_CANDIDATES:
            raise OverflowError(f"{mean:.3g} candidates per step for pair ({i + 1},{j + 1}); reduce dt")
        rng = _pair_rng(ens.seed, ens.step_index, pk)
        nc = int(rng.poisson(mean))
        if nc == 0:
            continue
        vi, vj = ens.velocities[i], ens.velocities[j]
        p = rng.integers(0, len(vi), nc)
        if i == j:
            q = rng.integers(0, len(vi) - 1, nc)
            q += q >= p
        else:
            q = rng.integers(0, len(vj), nc)
        u = rng.random((3, nc))
        acc, clamp, _ = _collide_candidates(vi, vj, p, q, u[0], u[1], u[2], float(cfg.masses[i]),
                                            float(cfg.masses[j]), lam, 2.0 * ens.u_max, s, sim.eps, False)
        ens.accepted += acc
        ens.clamps += clamp
        ens.candidates += nc
        if acc and clamp > CLAMP_WARN * acc:
            new_u = ens.u_max * 1.5
            log.warning("clamp fraction %.3g at step %d exceeds %.0f%%; raising U_max %.4g -> %.4g",
                        clamp / acc, ens.step_index, 100 * CLAMP_WARN, ens.u_max, new_u)
            ens.u_max = new_u
    ens.step_index += 1
    ens.time = ens.step_index * sim.dt
    return ens


def acceptance_sample(u_norms: np.ndarray, lam: float, u_max: float, seed: int = 0) -> np.ndarray:
    """Accept flags for candidates of given relative speeds against a frozen background."""
    n = len(u_norms)
    vi = np.zeros((n, 3))
    vi[:, 0] = u_norms
    vj = np.zeros((1, 3))
    rng = np.random.default_rng(seed)
    u = rng.random((3, n))
    _, _, flags = _collide_candidates(vi, vj, np.arange(n), np.zeros(n, np.int64), u[0], u[1], u[2],
                                      0.5, 0.5, lam, 2.0 * u_max, 1.0, 0.1, True)
    return flags


# ---------------------------------------------------------------- diagnostics

def ensemble_samples(ens: ParticleEnsemble):
    """(brackets, weights) per species."""
    out = []
    for m, v in zip(ens.masses, ens.velocities):
        out.append((np.sqrt(1.0 + m * np.einsum("ij,ij->i", v, v)), np.full(len(v), ens.weight)))
    return out


def _snapshot(ens: ParticleEnsemble) -> dict:
    return {"time": ens.time, "species_mass": ens.species_mass(), "momentum": ens.momentum(),
            "species_energy": ens.species_energy(), "momentum_scale": ens.momentum_scale()}


def conservation_audit(history: list[dict]) -> dict:
    """Maximum drifts relative to the first snapshot."""
    if len(history) < 2:
        raise ValueError("need at least two snapshots")
    h0 = history[0]
    e0 = float(np.sum(h0["species_energy"]))
    mass_drift = np.zeros_like(h0["species_mass"])
    mom_drift = 0.0
    energy_drift = 0.0
    exchange = np.zeros_like(h0["species_energy"])
    for h in history[1:]:
        mass_drift = np.maximum(mass_drift, np.abs(h["species_mass"] - h0["species_mass"]) / h0["species_mass"])
        mom_drift = max(mom_drift, float(np.linalg.norm(h["momentum"] - h0["momentum"])) / h0["momentum_scale"])
        energy_drift = max(energy_drift, abs(float(np.sum(h["species_energy"])) - e0) / e0)
        exchange = np.maximum(exchange, np.abs(h["species_energy"] - h0["species_energy"]) / e0)
    return {"snapshots": len(history),
            "species_mass_drift": mass_drift.tolist(),
            "momentum_drift": mom_drift,
            "energy_drift": energy_drift,
            "species_energy_exchange": exchange.tolist()}


def entropy_estimate(grid: GridDensity) -> tuple[float, float]:
    """(sum f log f dv, sum f log(1+f) dv) over species; empty cells contribute 0."""
    f = grid.values
    pos = f > 0
    H = float(np.sum(f[pos] * np.log(f[pos]))) * grid.cell_volume
    L = float(np.sum(f * np.log1p(f))) * grid.cell_volume
    return H, L


def write_grid(path: str, grid: GridDensity) -> None:
    """Little-endian: int64 species count, int64 n, float64 L, then float64 values."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qqd", grid.values.shape[0], grid.values.shape[1], grid.half_width))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_grid(path: str, masses) -> GridDensity:
    with open(path, "rb") as fh:
        n_sp, n, L = struct.unpack("<qqd", fh.read(24))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(n_sp, n, n, n)
    return GridDensity(vals.copy(), float(L), np.asarray(masses, float))


@dataclass
class RunResult:
    table: MomentTable
    grids: list = field(default_factory=list)   # (time, GridDensity)
    audit: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    ensemble: ParticleEnsemble | None = None
    temperatures: list = field(default_factory=list)
    probes: list = field(default_factory=list)   # (time, probe(ens)) at grid snapshots


def run(cfg: MixtureConfig, sim: SimConfig, ens: ParticleEnsemble | None = None,
        orders=None, probe=None) -> RunResult:
    """Evolve to t_end. ``probe(ens)``, if given, is evaluated at every grid snapshot."""
    if ens is None:
        ens = init_ensemble(cfg, sim)
    if orders is None:
        orders = default_orders(cfg.kernel.lam, sim.p_max)
    rate = max_rate_per_particle(ens, cfg, sim.eps) * sim.dt
    if rate > RATE_WARN:
        log.warning("dt x collision rate per particle = %.3g exceeds %.2g", rate, RATE_WARN)
    n_steps = int(round(sim.t_end / sim.dt)) if sim.dt > 0 else 0
    times, rows, history, grids, temps, probes = [], [], [], [], [], []

    def record():
        times.append(ens.time)
        rows.append([moments_of_brackets(br, w, orders) for br, w in ensemble_samples(ens)])
        history.append(_snapshot(ens))
        temps.append(ens.temperatures())

    def snap():
        grids.append((ens.time, grid_project(ens, sim.grid_n, sim.grid_half_width)))
        if probe is not None:
            probes.append((ens.time, probe(ens)))

    record()
    if sim.grid_every:
        snap()
    for k in range(1, n_steps + 1):
        step(ens, cfg, sim)
        if k % sim.output_every == 0 or k == n_steps:
            for v in ens.velocities:
                if not np.all(np.isfinite(v)):
                    raise FloatingPointError(f"non-finite velocity at step {k}, t={ens.time:.4g}; "
                                             f"accepted={ens.accepted}, clamps={ens.clamps}")
            record()
        if sim.grid_every and (k % sim.grid_every == 0):
            snap()
    table = MomentTable(np.array(times), np.asarray(orders, float), np.array(rows), ens.masses.copy())
    audit = conservation_audit(history) if len(history) > 1 else conservation_audit(history * 2)
    audit.update({"steps": n_steps, "candidates": ens.candidates, "accepted": ens.accepted,
                  "clamps": ens.clamps, "u_max": ens.u_max,
                  "clamp_fraction": ens.clamps / ens.accepted if ens.accepted else 0.0})
    return RunResult(table, grids, audit, history, ens, temps, probes)
