"""Named experiments binding simulator output to the a priori estimates.

Each experiment returns a Report whose checks carry (value, bound, sense, tolerance)
so the pass flag can be recomputed from the stored fields. Hard checks pass or fail;
statistical trend checks may also come back inconclusive.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from . import __version__
from .collision import cancellation_angular, cancellation_sides, jacobian_beta
from .densities import GaussianMixture
from .mixture import InitSpec, MixtureConfig, SpeciesParams
from .moments import (BernoulliODE, MomentTable, convolution_floor, exp_equivalence_i, exp_series, gen1_sides, gen2_sides,
                      config_hash, integrate_bernoulli, interp_mixed, log_convexity_violations,
                      mixed_interp_sides, povzner_lhs, povzner_rhs, prop2_sides, propagation_bound,
                      super_solution)
from .simulator import SimConfig, ensemble_samples, entropy_estimate, init_ensemble, run
from .spectral import (FourierField, GridDensity, PairKernel, coercivity_bound, dirichlet_form, grid_project, lp_norm,
                       level_energy_sequence, qplus_direct, qplus_fourier, weighted_sobolev)

log = logging.getLogger("mixkinetic.harness")

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def check(quantity: str, value: float, bound: float, sense: str = "le", tolerance: float = 0.0,
          hard: bool = True, verdict: str | None = None, **extra) -> dict:
    """One record; ``passed`` is value <= bound + tol (sense 'le') or value >= bound - tol ('ge')."""
    value, bound = float(value), float(bound)
    if sense == "le":
        ok = value <= bound + tolerance
        slack = bound - value
    else:
        ok = value >= bound - tolerance
        slack = value - bound
    if verdict is None:
        verdict = PASS if ok else FAIL
    rec = {"quantity": quantity, "value": value, "bound": bound, "sense": sense, "slack": slack,
           "tolerance": tolerance, "pass": bool(ok), "hard": hard, "verdict": verdict}
    rec.update(extra)
    return rec


def recompute_pass(rec: dict) -> bool:
    if rec["sense"] == "le":
        return rec["value"] <= rec["bound"] + rec["tolerance"]
    return rec["value"] >= rec["bound"] - rec["tolerance"]


@dataclass
class Report:
    name: str
    title: str
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def verdict(self) -> str:
        states = [c["verdict"] for c in self.checks]
        if FAIL in states:
            return FAIL
        if INCONCLUSIVE in states:
            return INCONCLUSIVE
        return PASS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return d

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, f"report_{self.name}.json")
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)
        return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def three_state(ok: bool, clear_fail: bool, informative: bool = True) -> str:
    if not informative:
        return INCONCLUSIVE
    if ok:
        return PASS
    return FAIL if clear_fail else INCONCLUSIVE


# ---------------------------------------------------------------- settings

@dataclass
class Settings:
    seeds: tuple = tuple(range(8))
    eps: float = 0.05
    workers: int = 1
    # E1: conservation, entropy, relaxation
    e1_particles: int = 100_000
    e1_dt: float = 9e-5
    e1_steps: int = 10_000
    e1_grid_every: int = 1000
    grid_n: int = 32
    grid_half_width: float = 8.0
    e1_half_width: float = 10.0
    # E2-E4: moment runs
    mom_particles: int = 20_000
    mom_dt: float = 1e-4
    mom_t_end: float = 0.5
    mom_output_every: int = 10
    heavy_tail_p: float = 7.0
    # E5: norms
    e5_particles: int = 100_000
    e5_dt: float = 1e-4
    e5_t_end: float = 0.4
    e5_grid_every: int = 100
    # E6: inequality battery
    n_povzner: int = 10_000
    n_interp: int = 10_000
    n_ode: int = 100
    # E7: identities
    identity_n: int = 12
    n_probes: int = 5
    cancellation_nodes: int = 12

    @classmethod
    def from_dict(cls, doc: dict | None) -> "Settings":
        doc = dict(doc or {})
        if "seeds" in doc:
            doc["seeds"] = tuple(int(s) for s in doc["seeds"])
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            from .mixture import ConfigError
            raise ConfigError([(f"harness.{k}", "unknown setting") for k in sorted(unknown)])
        return cls(**doc)


def with_init(cfg: MixtureConfig, inits) -> MixtureConfig:
    """Replace every species' initial law; ``inits`` is one InitSpec or one per species."""
    if isinstance(inits, InitSpec):
        inits = [inits] * cfg.n_species
    sp = tuple(SpeciesParams(s.index, s.mass, InitSpec(i.kind, {**i.params, "density": s.init.params.get("density", 1.0)}))
               for s, i in zip(cfg.species, inits))
    return MixtureConfig(sp, cfg.kernel)


def _provenance(cfg_doc: dict, seeds) -> dict:
    return {"config_hash": config_hash(cfg_doc), "seeds": list(seeds), "code_version": __version__}


def _pool_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- E1

def llogl_constant(masses) -> float:
    """(3/2) (sum_i int <v>_i^-4 dv)^(1/4), the radial integral by quadrature."""
    total = 0.0
    for m in masses:
        val, _ = integrate.quad(lambda r: 4 * np.pi * r * r / (1 + m * r * r) ** 2, 0, np.inf,
                                epsabs=1e-13, epsrel=1e-12)
        total += val
    return 1.5 * total ** 0.25


@dataclass(frozen=True)
class EntropyProbe:
    """Grid entropy of the full ensemble and of its two interleaved halves."""
    n: int
    half_width: float

    def __call__(self, ens) -> dict:
        H, LL = entropy_estimate(grid_project(ens, self.n, self.half_width))
        halves = []
        for part in (0, 1):
            e = ens.copy()
            e.velocities = [v[part::2] for v in ens.velocities]
            e.weight = ens.weight * 2
            halves.append(entropy_estimate(grid_project(e, self.n, self.half_width))[0])
        return {"H": H, "LlogL": LL, "half_gap": abs(halves[0] - halves[1])}


def smoothed_rise(H, window: int = 3) -> float:
    """Largest increase of the moving average between any earlier and later snapshot."""
    H = np.asarray(H, float)
    Hs = np.convolve(H, np.ones(window) / window, mode="valid") if len(H) >= window else H
    run_min = np.minimum.accumulate(Hs)
    return float(np.max(Hs - run_min)) if len(Hs) else 0.0


def exp_conservation_entropy(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E1", "Conservation, entropy and relaxation", provenance=_provenance(cfg_doc, st.seeds[:1]))
    sim = SimConfig(dt=st.e1_dt, t_end=st.e1_dt * st.e1_steps, n_particles=st.e1_particles, eps=st.eps,
                    seed=st.seeds[0], output_every=max(1, st.e1_grid_every // 10), p_max=2,
                    grid_every=st.e1_grid_every, grid_n=st.grid_n, grid_half_width=st.e1_half_width)
    res = run(cfg, sim, probe=EntropyProbe(st.grid_n, st.e1_half_width))
    a = res.audit
    for i, d in enumerate(a["species_mass_drift"]):
        rep.checks.append(check(f"mass drift species {i + 1}", d, 1e-12))
    rep.checks.append(check("momentum drift (relative to sum m w |v|)", a["momentum_drift"], 1e-10))
    rep.checks.append(check("energy drift", a["energy_drift"], 1e-10))
    rep.data["audit"] = a
    if res.probes:
        times = np.array([t for t, _ in res.probes])
        H = np.array([p["H"] for _, p in res.probes])
        LL = np.array([p["LlogL"] for _, p in res.probes])
        gaps = np.array([p["half_gap"] for _, p in res.probes])
        # spread of the difference of two full-size estimates, from the half-sample gap
        band = 3.0 * float(np.sqrt(np.mean(gaps ** 2))) / math.sqrt(2.0)
        rise = smoothed_rise(H)
        rep.checks.append(check("entropy increase after smoothing", rise, band, hard=False,
                                verdict=three_state(rise <= band, rise > 3 * band)))
        m0 = float(res.table.cumulative(0)[0])
        m2 = float(res.table.cumulative(2)[0])
        C = llogl_constant(cfg.masses)
        bound = math.log(2) * m0 + H[0] + C * m2 ** 0.75
        rep.checks.append(check("max L log L norm vs initial-data bound", float(LL.max()), bound))
        rep.data.update({"grid_times": times, "entropy": H, "llogl": LL, "entropy_band": band,
                         "entropy_drop": float(H[0] - H[-1]), "llogl_constant": C})
    T = np.array(res.temperatures)
    if cfg.n_species > 1 and a["steps"] > 0:
        gap0 = float(T[0].max() - T[0].min())
        gap1 = float(T[-1].max() - T[-1].min())
        noise = 3.0 * float(np.mean(T[-1])) * math.sqrt(2.0 / (st.e1_particles / cfg.n_species))
        rep.checks.append(check("final temperature gap vs initial gap", gap1, 0.5 * gap0 + noise,
                                hard=False, verdict=three_state(gap1 <= 0.5 * gap0 + noise, gap1 >= gap0,
                                                                gap0 > noise)))
    rep.data["temperatures"] = T
    rep.data["table_times"] = res.table.times
    return rep


# ---------------------------------------------------------------- E2 / E3 / E4 runs

def _moment_run(args):
    cfg, sim = args
    res = run(cfg, sim)
    return res.table, res.audit, ensemble_samples(res.ensemble)


def _mom_sim(st: Settings, seed: int, eps: float | None = None, t_end: float | None = None) -> SimConfig:
    return SimConfig(dt=st.mom_dt, t_end=st.mom_t_end if t_end is None else t_end,
                     n_particles=st.mom_particles, eps=st.eps if eps is None else eps, seed=seed,
                     output_every=st.mom_output_every, p_max=10)


def fit_decay_exponent(times: np.ndarray, values: np.ndarray, t_lo: float, t_hi: float) -> tuple[float, float]:
    """(-slope of log m vs log t on [t_lo, t_hi], relative change of m across the window)."""
    sel = (times >= t_lo) & (times <= t_hi)
    x, y = np.log(times[sel]), np.log(values[sel])
    slope = float(np.polyfit(x, y, 1)[0])
    return -slope, float(abs(values[sel][0] - values[sel][-1]) / values[sel][-1])


def bootstrap_ci(x, n_boot: int = 2000, seed: int = 0, q=(0.025, 0.975)):
    rng = np.random.default_rng(seed)
    x = np.asarray(x, float)
    means = x[rng.integers(0, len(x), (n_boot, len(x)))].mean(axis=1)
    return float(np.quantile(means, q[0])), float(np.quantile(means, q[1]))


def exp_moment_generation(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E2", "Polynomial moment generation", provenance=_provenance(cfg_doc, st.seeds))
    lam_nat = cfg.exponents.lambda_natural
    bound = (4 - 2) / lam_nat * 1.3
    t_lo, t_hi = st.mom_t_end / 50, st.mom_t_end / 5
    heavy = with_init(cfg, InitSpec("heavy_tail", {"p": st.heavy_tail_p}))
    for eps in (st.eps, 2 * st.eps):
        runs = _pool_map(_moment_run, [(heavy, _mom_sim(st, s, eps)) for s in st.seeds], st.workers)
        expo, change = [], []
        for table, _, _ in runs:
            m4 = table.cumulative(4)
            e, c = fit_decay_exponent(table.times, m4, t_lo, t_hi)
            expo.append(e)
            change.append(c)
        lo, hi = bootstrap_ci(expo)
        informative = float(np.median(change)) > 0.02
        rep.checks.append(check(f"m4 decay exponent (eps={eps:g}), upper CI", hi, bound, hard=False,
                                verdict=three_state(hi <= bound, lo > bound, informative),
                                exponents=expo, ci=[lo, hi], median_window_change=float(np.median(change))))
        finite = all(np.all(np.isfinite(t.cumulative(4))) for t, _, _ in runs)
        rep.checks.append(check(f"m4 finite for t > 0 (eps={eps:g})", float(finite), 1.0, sense="ge"))
    gauss = with_init(cfg, InitSpec("gaussian", {"temperature": 1.0}))
    runs = _pool_map(_moment_run, [(gauss, _mom_sim(st, s)) for s in st.seeds], st.workers)
    m40 = np.array([t.cumulative(4)[0] for t, _, _ in runs])
    ratios = np.array([t.cumulative(4)[t.times <= t_hi].max() / t.cumulative(4)[0] for t, _, _ in runs])
    band = 3.0 * float(np.std(m40) / np.mean(m40)) + 3.0 / math.sqrt(st.mom_particles)
    rep.checks.append(check("Gaussian control: max early m4 / m4(0)", float(ratios.max()), 1.0 + band,
                            hard=False, verdict=three_state(ratios.max() <= 1 + band, ratios.max() > 1 + 3 * band)))
    rep.data.update({"bound_exponent": bound, "window": [t_lo, t_hi]})
    return rep


def exp_moment_propagation(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E3", "Polynomial moment propagation", provenance=_provenance(cfg_doc, st.seeds))
    temps = np.linspace(0.5, 2.0, cfg.n_species) if cfg.n_species > 1 else [1.0]
    two_t = with_init(cfg, [InitSpec("gaussian", {"temperature": float(T)}) for T in temps])
    runs = _pool_map(_moment_run, [(two_t, _mom_sim(st, s)) for s in st.seeds], st.workers)
    for n in (2, 3):
        m = np.array([t.cumulative(2 * n) for t, _, _ in runs])
        rel_sd = float(np.std(m[:, 0]) / np.mean(m[:, 0]))
        band = 3.0 * max(rel_sd, 1.0 / math.sqrt(st.mom_particles))
        tail = max(1, m.shape[1] // 5)
        worst = 0.0
        for row in m:
            plateau = float(np.mean(row[-tail:]))
            worst = max(worst, float(row.max() / max(row[0], plateau)))
        rep.checks.append(check(f"sup_t m_{2 * n} / max(m_{2 * n}(0), plateau)", worst, 1.0 + band, hard=False,
                                verdict=three_state(worst <= 1 + band, worst > 1 + 2 * band)))
    runs_eq = _pool_map(_moment_run, [(with_init(cfg, InitSpec("gaussian", {"temperature": 1.0})),
                                       _mom_sim(st, s)) for s in st.seeds[:2]], st.workers)
    worst_z = 0.0
    for tab, _, samples in runs_eq:
        m4 = tab.cumulative(4)
        se = math.sqrt(sum(len(br) * float(np.var(br ** 4)) * float(w[0]) ** 2 for br, w in samples))
        worst_z = max(worst_z, float(np.max(np.abs(m4 - m4[0]))) / se)
    rep.checks.append(check("equilibrium init: max |m4(t) - m4(0)| in standard errors", worst_z, 4.0 * math.sqrt(2),
                            hard=False, verdict=three_state(worst_z <= 4 * math.sqrt(2), worst_z > 8 * math.sqrt(2))))
    # data-certified floor c in int |v - z|^lam f_j(z) dz >= c <v>_i^lam
    ens = init_ensemble(two_t, _mom_sim(st, st.seeds[0]))
    probes = np.array([[r, 0.0, 0.0] for r in np.linspace(0, 10, 41)])
    floors = {}
    for i in range(cfg.n_species):
        for j in range(cfg.n_species):
            lam = float(cfg.kernel.lam[i, j])
            floors[f"{i + 1}{j + 1}"] = convolution_floor(ens.velocities[j], np.full(len(ens.velocities[j]), ens.weight),
                                                          lam, float(cfg.masses[i]), probes)
    rep.data["convolution_floor"] = floors
    return rep


def prop2_violations(table: MomentTable, lam: np.ndarray, s: np.ndarray, sigmas, alpha: float, p: int = 8,
                     rel_tol: float = 1e-12) -> tuple[int, int, float]:
    """(violations, checks, worst relative gap) of the algebraic lower bound over all times, pairs, sigmas."""
    lam_nat = float(np.max(lam, axis=1).min())
    bad, total, worst = 0, 0, -np.inf
    I = table.n_species
    for sig in sigmas:
        for t_idx in range(len(table.times)):
            ser = exp_series(table, t_idx, sig, alpha, p, "propagation", lam, s)
            for i in range(I):
                for j in range(i, I):
                    lhs, rhs = prop2_sides(ser, table, t_idx, i, j, lam_nat)
                    gap = (rhs - lhs) / max(abs(lhs), abs(rhs), 1e-300)
                    worst = max(worst, gap)
                    total += 1
                    bad += gap > rel_tol
    return int(bad), total, float(worst)


def certify_sigma(table: MomentTable, lam, s, alpha: float, p: int = 8, factor: float = 4.0,
                  max_halvings: int = 80) -> float | None:
    """Largest sigma = 2^-k with sup_{t in (0,T]} E_p(t) <= factor * m0."""
    m0 = float(table.cumulative(0)[0])
    idx = [k for k, t in enumerate(table.times) if t > 0]
    sig = 1.0
    for _ in range(max_halvings):
        sup = max(exp_series(table, k, sig, alpha, p, "generation", lam, s).E for k in idx)
        if sup <= factor * m0:
            return sig
        sig /= 2
    return None


def exponential_order(lambda_natural: float, s_natural: float) -> float:
    """Order rho of the exponential moments, min(2 lambda/(2 - s), 2)."""
    return min(2 * lambda_natural / (2 - s_natural), 2.0)


def exp_exponential_moments(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E4", "Exponential moments", provenance=_provenance(cfg_doc, st.seeds[:2]))
    ex = cfg.exponents
    rho = exponential_order(ex.lambda_natural, ex.s_natural)
    alpha = 2.0 / rho
    lam, s = cfg.kernel.lam, cfg.kernel.s
    I = cfg.n_species
    gen = _moment_run((with_init(cfg, InitSpec("heavy_tail", {"p": st.heavy_tail_p})), _mom_sim(st, st.seeds[0])))
    prop = _moment_run((with_init(cfg, InitSpec("gaussian", {"temperature": 1.0})), _mom_sim(st, st.seeds[0])))
    gtab, ptab = gen[0], prop[0]
    sig = certify_sigma(gtab, lam, s, alpha)
    rep.checks.append(check("certified sigma (E_8 <= 4 m0 on (0,T])", sig or 0.0, 0.0, sense="ge",
                            verdict=PASS if sig else FAIL))
    # propagation: sigma0 from the initial table, sigma = sigma0 / 2
    m0 = float(ptab.cumulative(0)[0])
    ns = np.arange(0, 11)
    m2n = np.array([ptab.cumulative(2 * n)[0] for n in ns])
    logfac = np.array([math.lgamma(n + 1) for n in ns])
    with np.errstate(divide="ignore"):
        s0 = float(np.min(np.where(ns > 0, np.exp((alpha * logfac - np.log(m2n)) / np.maximum(ns, 1)), np.inf)))
    s0 = min(s0, 1.0)
    sigma_p = s0 / 2
    sup_script = max(exp_series(ptab, k, sigma_p, alpha, 8, "propagation", lam, s).E for k in range(len(ptab.times)))
    pbound = 6 * I * math.e * (m0 + 1)
    rep.checks.append(check("propagation: sup_t script E_8 vs 6 I e (m0+1)", sup_script, pbound, hard=False,
                            verdict=three_state(sup_script <= pbound, True), sigma0=s0, sigma=sigma_p))
    sigmas = sorted({1.0, 0.5, 0.25, 0.1, 0.01, sigma_p} | ({sig} if sig else set()), reverse=True)
    for name, tab in (("generation", gtab), ("propagation", ptab)):
        bad, total, worst = prop2_violations(tab, lam, s, sigmas, alpha)
        rep.checks.append(check(f"algebraic lower bound violations ({name} table)", bad, 0,
                                checks=total, worst_relative_gap=worst))
        lc = log_convexity_violations(tab)
        rep.checks.append(check(f"log-convexity violations ({name} table)", len(lc), 0))
    # diagnostics only
    diag = {}
    if sig:
        lam_nat = ex.lambda_natural
        k_mid = len(gtab.times) // 2
        ser = exp_series(gtab, k_mid, sig, alpha, 8, "generation", lam, s)
        window = [k for k, t in enumerate(gtab.times) if t > 0]
        l1, r1, consts = gen1_sides(ser, gtab, k_mid, 0, min(1, I - 1), 0.5, lam, window)
        l2, r2, c2 = gen2_sides(ser, float(gtab.cumulative(2)[k_mid]), lam_nat, 0)
        diag = {"gen1": {"lhs": l1, "rhs": r1, **consts}, "gen2": {"lhs": l2, "rhs": r2, **c2}}
    sup, expint, bnd = exp_equivalence_i(prop[2], 0.5, alpha)
    diag["equivalence_i"] = {"sup": sup, "exp_integral": expint, "bound": bnd}
    rep.checks.append(check("exponential integral vs 2 m0^(1-1/a) K^(1/a) (Maxwellian, sigma0=0.5)", expint, bnd))
    rep.data.update({"rho": rho, "alpha": alpha, "diagnostics": diag})
    return rep


# ---------------------------------------------------------------- E5

def exp_lp_boundedness(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E5", "L^p boundedness and regularity diagnostics", provenance=_provenance(cfg_doc, st.seeds[:1]))
    temps = [0.3] + [2.0] * (cfg.n_species - 1)
    peaked = with_init(cfg, [InitSpec("gaussian", {"temperature": T}) for T in temps])
    sim = SimConfig(dt=st.e5_dt, t_end=st.e5_t_end, n_particles=st.e5_particles, eps=st.eps, seed=st.seeds[0],
                    output_every=st.e5_grid_every, p_max=2, grid_every=st.e5_grid_every, grid_n=st.grid_n,
                    grid_half_width=st.grid_half_width)
    res = run(peaked, sim)
    times = np.array([t for t, _ in res.grids])
    ex = cfg.exponents
    rho = np.array([float(sp.init.params.get("density", 1.0)) for sp in peaked.species])
    T_eq = float(np.dot(rho, temps) / rho.sum())
    for i in range(cfg.n_species):
        m = float(cfg.masses[i])
        eq = {2.0: rho[i] * (m / (4 * math.pi * T_eq)) ** 0.75, math.inf: rho[i] * (m / (2 * math.pi * T_eq)) ** 1.5}
        n_i = st.e5_particles * rho[i] / rho.sum()
        for p in (2.0, math.inf):
            norms = np.array([lp_norm(g, p, 0.0, i) for _, g in res.grids])
            if p == math.inf:
                band = 3.0 / math.sqrt(max(n_i * norms[1] / rho[i] * res.grids[1][1].cell_volume, 1.0))
            else:
                band = 3.0 / math.sqrt(n_i)
            env = max(norms[1], eq[p])
            ratio = float(norms[1:].max() / env)
            rep.checks.append(check(f"species {i + 1}: sup_(t>=t0) ||f||_{p:g} / max(||f(t0)||, equilibrium)",
                                    ratio, 1 + band, hard=False,
                                    verdict=three_state(ratio <= 1 + band, ratio > 1 + 3 * band)))
            rep.data[f"lp_{i + 1}_{p:g}"] = norms
            if p == math.inf and temps[i] < T_eq:
                drop = float(norms[-1] / norms[0])
                rep.checks.append(check(f"species {i + 1}: peaked start, final / initial sup norm", drop, 1.0,
                                        hard=False, verdict=three_state(drop < 1.0, drop > 1 + band)))
        sob = np.array([weighted_sobolev(g, ex.lambda_bar_i[i] / 2, ex.s_dbar_i[i], i) for _, g in res.grids])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (sob[1:] + sob[:-1]) * np.diff(times))])
        A = np.vstack([times, np.ones_like(times)]).T
        coef, resid, *_ = np.linalg.lstsq(A, cum, rcond=None)
        ss = float(np.sum((cum - cum.mean()) ** 2))
        r2 = 1.0 - float(resid[0]) / ss if len(resid) and ss > 0 else 1.0
        rep.checks.append(check(f"species {i + 1}: R^2 of linear fit to time-integrated weighted Sobolev norm",
                                r2, 0.95, sense="ge", hard=False, verdict=three_state(r2 >= 0.95, False),
                                slope=float(coef[0])))
    peak0 = float(np.max([lp_norm(g, math.inf, 0.0, 0) for _, g in res.grids[1:]]))
    t_star = float(times[-1])
    W = level_energy_sequence([(t, g) for t, g in res.grids], 0.5 * peak0, t_star, 0.1, 6,
                              ex.lambda_bar_i[0] / 2, ex.s_dbar_i[0], 0)
    mono = all(W[k + 1] <= W[k] * (1 + 1e-12) for k in range(len(W) - 1))
    rep.checks.append(check("level energies nonincreasing in k", float(mono), 1.0, sense="ge"))
    rep.data.update({"grid_times": times, "level_energies": W,
                     "level_ratios": [W[k + 1] / W[k] if W[k] > 0 else 0.0 for k in range(len(W) - 1)]})
    return rep


# ---------------------------------------------------------------- E6

def povzner_sweep(n_draws: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    viol, worst_rel, worst_err = 0, -np.inf, 0.0
    for _ in range(n_draws):
        n = int(rng.integers(2, 7))
        s = float(rng.choice([0.5, 1.0, 1.5]))
        m_i = float(rng.uniform(0.02, 0.98))
        m_j = 1.0 - m_i
        v = rng.standard_normal(3) * 10 ** rng.uniform(-1, 1.5)
        vs = rng.standard_normal(3) * 10 ** rng.uniform(-1, 1.5)
        lhs, err = povzner_lhs(v, vs, m_i, m_j, n, s)
        rhs = povzner_rhs(v, vs, m_i, m_j, n, s)
        if lhs > rhs + 3 * err:
            viol += 1
        worst_rel = max(worst_rel, (lhs - rhs) / abs(rhs))
        worst_err = max(worst_err, err / abs(rhs))
    return {"violations": viol, "draws": n_draws, "worst_relative_gap": worst_rel,
            "worst_relative_error": worst_err}


def interp_sweep(n_draws: int, seed: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    viol, worst = 0, -np.inf
    for _ in range(n_draws):
        k = int(rng.integers(1, 6))
        bf = np.sqrt(1 + rng.exponential(3.0, k) ** 2)
        bg = np.sqrt(1 + rng.exponential(3.0, k) ** 2)
        wf, wg = rng.random(k), rng.random(k)
        a = float(rng.uniform(0, 4))
        b = a + float(rng.uniform(0, 4))
        beta = float(rng.uniform(0.05, 3))
        mf = lambda q: float(np.sum(wf * bf ** q))
        mg = lambda q: float(np.sum(wg * bg ** q))
        lhs, rhs = mixed_interp_sides(mf, mg, a, b, beta)
        gap = (lhs - rhs) / rhs
        worst = max(worst, gap)
        viol += gap > 1e-12
    return {"violations": viol, "draws": n_draws, "worst_relative_gap": worst}


def ode_battery(n_inst: int, seed: int = 2, T: float = 3.0, dt: float = 1e-3) -> dict:
    rng = np.random.default_rng(seed)
    worst_super, worst_prop = np.inf, np.inf
    for _ in range(n_inst):
        ode = BernoulliODE(float(rng.uniform(0.2, 2)), float(rng.uniform(0.1, 2)), float(rng.uniform(0.25, 2)),
                           float(rng.uniform(0, 5)))
        t, x = integrate_bernoulli(ode, T, dt)
        worst_super = min(worst_super, float(np.min(super_solution(ode, t[1:]) - x[1:])))
        worst_prop = min(worst_prop, float(propagation_bound(ode) - x.max()))
    ode = BernoulliODE(1.0, 1.0, 1.0, 10.0)
    t, x = integrate_bernoulli(ode, 5.0, 1e-4)
    t0 = math.atanh(0.1)
    coth_err = float(np.max(np.abs(x - 1 / np.tanh(t + t0))))
    coth_slack = float(np.min(1 + 1 / t[1:] - x[1:]))
    return {"instances": n_inst, "min_super_slack": worst_super, "min_propagation_slack": worst_prop,
            "coth_max_error": coth_err, "coth_min_slack": coth_slack}


def exp_inequality_suite(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E6", "Povzner, interpolation and comparison battery", provenance=_provenance(cfg_doc, st.seeds[:1]))
    pz = povzner_sweep(st.n_povzner, st.seeds[0])
    rep.checks.append(check("Povzner violations beyond 3x quadrature error", pz["violations"], 0, **pz))
    it = interp_sweep(st.n_interp, st.seeds[0] + 1)
    rep.checks.append(check("mixed interpolation violations", it["violations"], 0, **it))
    od = ode_battery(st.n_ode, st.seeds[0] + 2)
    rep.checks.append(check("min slack below super-solution", od["min_super_slack"], -1e-9, sense="ge"))
    rep.checks.append(check("min slack below propagation bound", od["min_propagation_slack"], -1e-9, sense="ge"))
    rep.checks.append(check("x' = 1 - x^2 vs coth: max error", od["coth_max_error"], 1e-8))
    rep.checks.append(check("x' = 1 - x^2: min slack below 1 + 1/t", od["coth_min_slack"], -1e-9, sense="ge"))
    return rep


# ---------------------------------------------------------------- E7

def fourier_cases():
    f_gauss = GaussianMixture.make([1.0], [[0.3, 0.0, -0.2]], [0.7])
    f_bimodal = GaussianMixture.make([0.6, 0.4], [[0.5, 0, 0], [-1.0, 0.5, 0]], [0.8, 0.5])
    g = GaussianMixture.make([1.0], [[0.0, 0.3, 0.0]], [1.2])
    return {"gaussian": f_gauss, "bimodal": f_bimodal}, g


def exp_fourier_suite(cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    rep = Report("E7", "Fourier identities, coercivity and cancellation", provenance=_provenance(cfg_doc, st.seeds[:1]))
    fs, g = fourier_cases()
    s = float(cfg.kernel.s[0, 0])
    kappa = float(cfg.kernel.kappa[0, 0])
    rng = np.random.default_rng(st.seeds[0])
    probes = rng.standard_normal((st.n_probes, 3)) * 0.7
    L = 4.0
    for m_i in (0.5, 0.25):
        k = PairKernel(m_i, 1 - m_i, s, kappa, st.eps, 0.0)
        for name, f in fs.items():
            G = GridDensity.from_function([f.pdf], L, st.identity_n, [m_i])
            Gg = GridDensity.from_function([g.pdf], L, st.identity_n, [1 - m_i])
            F, Fg = FourierField.from_grid(G), FourierField.from_grid(Gg)
            worst = 0.0
            for xi in probes:
                a = qplus_fourier(F, Fg, k, xi)
                b = qplus_direct(G, Gg, k, xi)
                worst = max(worst, abs(a - b) / (abs(b) + 1e-12))
            rep.checks.append(check(f"Bobylev identity, {name} f, m_i={m_i:g}: max relative gap", worst, 1e-3))
    # classical equal-mass closed form for f = g Maxwellian
    k = PairKernel(0.5, 0.5, s, kappa, st.eps, 0.0)
    M = GaussianMixture.make([1.0], [[0, 0, 0]], [0.8])
    worst = max(abs(qplus_fourier(M, M, k, xi) - k.b_norm * np.exp(-0.4 * float(xi @ xi)))
                / (k.b_norm * np.exp(-0.4 * float(xi @ xi))) for xi in probes)
    rep.checks.append(check("equal-mass Maxwellian Q+ transform vs closed form", worst, 1e-6))
    for m_i in (0.5, 0.25):
        k0 = PairKernel(m_i, 1 - m_i, s, kappa, 0.0, 0.0)
        f = fs["bimodal"]
        direct, fourier = dirichlet_form(f, g, k0, n_grid=st.identity_n)
        rep.checks.append(check(f"Dirichlet identity, m_i={m_i:g}: relative gap",
                                abs(direct - fourier) / abs(fourier), 1e-3, direct=direct, fourier=fourier))
        for name, ff in fs.items():
            lhs, rhs, K, cg = coercivity_bound(g, k0, ff)
            rep.checks.append(check(f"coercivity, {name} f, m_i={m_i:g}: lhs - rhs", lhs - rhs, 0.0, sense="ge",
                                    verdict=PASS if (lhs > rhs and rhs > 0) else FAIL, lhs=lhs, rhs=rhs, K=K, C_g=cg))
    # cancellation lemma at three sample points
    f = fs["bimodal"]
    n = st.cancellation_nodes
    lam = float(cfg.kernel.lam[0, 0])
    for v_star in ([0.0, 0.0, 0.0], [1.5, 1.0, 0.0], [-0.5, 0.2, 1.0]):
        lhs, rhs = cancellation_sides(f, v_star, 0.25, lam, s, kappa, 0.0, n_r=n, n_polar=n, n_azimuth=n)
        rep.checks.append(check(f"cancellation lemma at v*={v_star}: relative gap", abs(lhs - rhs) / abs(rhs), 1e-3,
                                lhs=lhs, rhs=rhs))
    x = np.cos(np.linspace(0.01, np.pi / 2, 50))
    err = float(np.max(np.abs(jacobian_beta(x, 0.5) - np.cos(0.5 * np.arccos(x)))))
    rep.checks.append(check("equal-mass jacobian factor vs cos(theta/2)", err, 1e-10))
    near = abs(cancellation_angular(1.0 - 1e-9, lam, s, kappa, 0.0))
    rep.checks.append(check("alpha -> 1: cancellation kernel magnitude", near, 1e-6))
    return rep


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class Experiment:
    name: str
    slug: str
    runner: Callable
    hard: bool


EXPERIMENTS = {
    "E1": Experiment("E1", "conservation_entropy", exp_conservation_entropy, True),
    "E2": Experiment("E2", "moment_generation", exp_moment_generation, False),
    "E3": Experiment("E3", "moment_propagation", exp_moment_propagation, False),
    "E4": Experiment("E4", "exponential_moments", exp_exponential_moments, False),
    "E5": Experiment("E5", "lp_boundedness", exp_lp_boundedness, False),
    "E6": Experiment("E6", "inequality_suite", exp_inequality_suite, True),
    "E7": Experiment("E7", "fourier_suite", exp_fourier_suite, True),
}


def resolve(name: str) -> list[str]:
    if name == "all":
        return list(EXPERIMENTS)
    for key, ex in EXPERIMENTS.items():
        if name in (key, key.lower(), ex.slug):
            return [key]
    raise KeyError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}, all")


def run_experiment(name: str, cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> Report:
    t0 = time.perf_counter()
    rep = EXPERIMENTS[name].runner(cfg, st, cfg_doc)
    rep.runtime_s = time.perf_counter() - t0
    log.info("%s finished: %s in %.1fs", name, rep.verdict, rep.runtime_s)
    return rep


def _run_one(args):
    return run_experiment(*args)


def run_all(names, cfg: MixtureConfig, st: Settings, cfg_doc: dict) -> list[Report]:
    # experiments fan out across processes; seed runs inside stay serial to keep reports identical
    inner = replace(st, workers=1) if st.workers > 1 and len(names) > 1 else st
    return _pool_map(_run_one, [(n, cfg, inner, cfg_doc) for n in names], st.workers if len(names) > 1 else 1)


def summary_markdown(reports) -> str:
    lines = ["| experiment | title | verdict | checks | failed | inconclusive | runtime (s) |",
             "|---|---|---|---|---|---|---|"]
    for r in reports:
        d = r if isinstance(r, dict) else r.to_dict()
        states = [c["verdict"] for c in d["checks"]]
        lines.append(f"| {d['name']} | {d['title']} | {d['verdict']} | {len(states)} | {states.count(FAIL)} "
                     f"| {states.count(INCONCLUSIVE)} | {d['runtime_s']:.1f} |")
    lines.append("")
    for r in reports:
        d = r if isinstance(r, dict) else r.to_dict()
        lines.append(f"## {d['name']}: {d['title']}")
        lines.append("")
        lines.append("| quantity | value | bound | slack | verdict |")
        lines.append("|---|---|---|---|---|")
        for c in d["checks"]:
            lines.append(f"| {c['quantity']} | {c['value']:.6g} | {c['bound']:.6g} | {c['slack']:.3g} | {c['verdict']} |")
        lines.append("")
    return "\n".join(lines)
