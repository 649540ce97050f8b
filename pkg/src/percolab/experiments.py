"""Monte Carlo drivers: time constants, Lipschitz scans, good-box decay,
budget diagnostics, the shell/bypass regime and general passage times.

Every trial draws its randomness from ``trial_seed(master, index)`` so a run
is a pure function of its configuration.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .bypass import (BoundReport, DetourInvariantError, constructive_distance_bound,
                     three_rv_sampler)
from .chemdist import binomial_half_width, chemical_distance, passage_time, regularize
from .percolation import (CoupledConfig, QuantileDistribution, Window, giant_cluster, path_mask,
                          quantile_passage_times, sample_three_rv, sample_uniform_field,
                          trial_seed)
from .renorm import BoxStateCache, ScaleHierarchy, bad_counts, build_hierarchy, scale1_verdict, scale_horizon
from .shells import ShellInvariantError

# bond percolation threshold of Z^2; other dimensions need an explicit value
KNOWN_PC = {2: 0.5}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    d: int = 2
    L: int | None = None  # window half-width; derived from n and x when None
    p: float = 0.75
    q: float = 0.8
    p_grid: tuple = (0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    x: tuple = (1, 0)
    n: tuple = (100,)
    trials: int = 30
    p0: float = 0.6
    p_c: float | None = None
    l1: int = 8
    beta: float = 1.5
    schedule: object = "paper_default"
    depth: int = 3
    N_list: tuple = (8, 12, 16, 24)
    seed: int = 0
    max_discard: float = 0.5
    delta0: float = 0.1  # stands in for the non-constructive delta_0(p0)
    p1: float = 0.4
    M_class: float = 10.0
    eps0: float = 0.5

    def __post_init__(self):
        for name in ("p_grid", "x", "n", "N_list"):
            v = getattr(self, name)
            setattr(self, name, tuple(v) if isinstance(v, (list, tuple)) else (v,))
        if isinstance(self.schedule, list):
            self.schedule = tuple(self.schedule)

    @property
    def x_norm(self) -> int:
        return sum(abs(int(c)) for c in self.x)

    def margin(self) -> int:
        return max(20, 3 * self.l1)

    def window(self, n: int) -> Window:
        return Window(self.L if self.L is not None else 2 * n * self.x_norm + self.margin(), self.d)

    def hierarchy(self) -> ScaleHierarchy:
        sched = self.schedule if self.schedule == "paper_default" else list(self.schedule)
        return build_hierarchy(self.l1, sched, self.beta, self.d, self.depth)

    def validate(self) -> None:
        p_c = self.p_c if self.p_c is not None else KNOWN_PC.get(self.d)
        if p_c is None:
            raise ConfigError(f"no known p_c for d={self.d}; set p_c explicitly")
        if not self.p0 > p_c:
            raise ConfigError(f"p0 > p_c violated: p0={self.p0}, p_c={p_c}")
        if not self.p1 < p_c:
            raise ConfigError(f"p1 < p_c violated: p1={self.p1}, p_c={p_c}")
        if self.trials < 1:
            raise ConfigError("trials >= 1 violated")
        if len(self.x) != self.d or self.x_norm == 0:
            raise ConfigError(f"direction x={self.x} must be a non-zero point of Z^{self.d}")
        for p in (self.p, self.q, *self.p_grid):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability {p} outside [0, 1]")
        if self.L is not None and self.L < 2 * max(self.n) * self.x_norm + self.margin():
            raise ConfigError(f"window L={self.L} below 2*max(n)*|x|_1 + margin")
        try:
            self.hierarchy()
        except ValueError as exc:
            raise ConfigError(f"hierarchy: {exc}") from exc

    def require_coupled(self) -> None:
        """Extra check for experiments that use both levels p and q."""
        if self.p > self.q:
            raise ConfigError(f"p <= q violated: p={self.p}, q={self.q}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def content_hash(self) -> str:
        """git-style blob hash of the canonical JSON encoding."""
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def run_trials(fn: Callable, items, threads: int = 1) -> list:
    """Ordered map over independent trials, optionally in worker processes."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def mean_and_half_width(values) -> tuple[float, float]:
    """Sample mean and 1.96 * s / sqrt(m) (nan when undefined)."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if len(v) == 0:
        return float("nan"), float("nan")
    if len(v) == 1:
        return float(v[0]), float("nan")
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(len(v)))


# -- time constants ---------------------------------------------------------------

@dataclass
class EstimateRecord:
    p: object
    n: int
    distances: list  # per trial, None when discarded
    ratios: list
    mean: float
    half_width: float
    discarded: int
    seed: int

    @property
    def valid(self) -> bool:
        return self.discarded <= len(self.distances) / 2

    @classmethod
    def build(cls, p, n, norm, distances, seed) -> "EstimateRecord":
        ratios = [None if D is None else D / (n * norm) for D in distances]
        m, hw = mean_and_half_width(ratios)
        return cls(p, n, list(distances), ratios, m, hw, sum(D is None for D in distances), seed)


def _levels_trial(cfg: ExperimentConfig, levels: tuple, n: int, trial: int) -> list:
    """Distances D_p(0~, nx~) for every p in `levels` on one uniform field."""
    window = cfg.window(n)
    fld = sample_uniform_field(window, trial_seed(cfg.seed, trial))
    u = fld.per_axis
    lab, cid = giant_cluster(window.grid(tuple(a <= cfg.p0 for a in u)))
    target = tuple(n * int(c) for c in cfg.x)
    a = regularize((0,) * cfg.d, lab, cid)
    b = regularize(target, lab, cid)
    return [chemical_distance(window.grid(tuple(x <= p for x in u)), a, b).distance for p in levels]


def estimate_mu(cfg: ExperimentConfig, p: float, x=None, n: int | None = None, trials: int | None = None,
                threads: int = 1, trial_offset: int = 0) -> EstimateRecord:
    if x is not None:
        cfg = dataclasses.replace(cfg, x=tuple(x))
    n = n if n is not None else cfg.n[0]
    trials = trials if trials is not None else cfg.trials
    if p < cfg.p0:
        raise ConfigError(f"p >= p0 violated: p={p}, p0={cfg.p0}")
    fn = partial(_levels_trial, cfg, (p,), n)
    rows = run_trials(fn, range(trial_offset, trial_offset + trials), threads)
    return EstimateRecord.build(p, n, cfg.x_norm, [r[0] for r in rows], cfg.seed)


@dataclass
class LipschitzReport:
    grid: list
    records: list  # EstimateRecord per grid point
    slopes: list
    kappa: float
    monotone: bool  # mu-hat non-increasing within 2 CI half-widths
    sample_violations: int  # trials with D_q > D_p for p < q, both finite


def lipschitz_scan(cfg: ExperimentConfig, p_grid=None, x=None, n: int | None = None,
                   trials: int | None = None, threads: int = 1, trial_offset: int = 0) -> LipschitzReport:
    if x is not None:
        cfg = dataclasses.replace(cfg, x=tuple(x))
    grid = sorted(float(p) for p in (p_grid if p_grid is not None else cfg.p_grid))
    n = n if n is not None else cfg.n[0]
    trials = trials if trials is not None else cfg.trials
    if grid and grid[0] < cfg.p0:
        raise ConfigError(f"grid point {grid[0]} below p0={cfg.p0}")
    fn = partial(_levels_trial, cfg, tuple(grid), n)
    rows = run_trials(fn, range(trial_offset, trial_offset + trials), threads)
    records = [EstimateRecord.build(p, n, cfg.x_norm, [r[j] for r in rows], cfg.seed)
               for j, p in enumerate(grid)]
    violations = 0
    for r in rows:
        for i in range(len(grid)):
            for j in range(i + 1, len(grid)):
                if r[i] is not None and r[j] is not None and r[j] > r[i]:
                    violations += 1
    slopes = [abs(b.mean - a.mean) / (pb - pa)
              for (pa, a), (pb, b) in zip(zip(grid, records), zip(grid[1:], records[1:]))]
    monotone = all(b.mean - a.mean <= 2 * max(_finite(a.half_width), _finite(b.half_width))
                   for a, b in zip(records, records[1:]))
    kappa = max(slopes) if slopes else 0.0
    return LipschitzReport(grid, records, slopes, kappa, monotone, violations)


def _finite(x: float) -> float:
    return 0.0 if math.isnan(x) else x


def monotonicity_check(cfg: ExperimentConfig, p_grid, n: int, trials: int, threads: int = 1) -> dict:
    """Per-sample check of D_q <= D_p for p < q on one monotone field per trial."""
    grid = sorted(p_grid)
    rows = run_trials(partial(_levels_trial, cfg, tuple(grid), n), range(trials), threads)
    pairs = violations = 0
    for r in rows:
        for i in range(len(grid)):
            for j in range(i + 1, len(grid)):
                if r[i] is not None and r[j] is not None:
                    pairs += 1
                    violations += r[j] > r[i]
    return {"pairs": pairs, "violations": violations, "rows": rows}


# -- good boxes ----------------------------------------------------------------------

def _goodbox_trial(p: float, q: float, N: int, beta: float, d: int, seed: int) -> bool:
    h = build_hierarchy(N, "paper_default", beta, d, depth=1)
    window = Window((3 * N) // 2 + 1, d)
    u = sample_uniform_field(window, seed).per_axis
    P = window.grid(tuple(a <= p for a in u))
    Q = window.grid(tuple(a <= q for a in u))
    return not scale1_verdict(P, Q, (0,) * d, h).good


def goodbox_decay(cfg: ExperimentConfig, p: float, q: float, N_list=None, trials: int | None = None,
                  threads: int = 1) -> dict:
    """P-hat(bad at scale 1) per box size N and the log-linear slope over N with P-hat > 0."""
    N_list = list(N_list if N_list is not None else cfg.N_list)
    trials = trials if trials is not None else cfg.trials
    rows = []
    for N in N_list:
        base = trial_seed(cfg.seed, N)
        fn = partial(_goodbox_via_index, p, q, N, cfg.beta, cfg.d, base)
        bad = sum(run_trials(fn, range(trials), threads))
        freq = bad / trials
        hw = binomial_half_width(freq, trials) if bad else 3.0 / trials  # rule of three when none seen
        rows.append({"N": N, "bad": bad, "trials": trials, "p_hat": freq, "half_width": hw,
                     "one_sided": bad == 0})
    pos = [r for r in rows if r["p_hat"] > 0]
    slope = float("nan")
    if len(pos) >= 2:
        slope = float(np.polyfit([r["N"] for r in pos], np.log([r["p_hat"] for r in pos]), 1)[0])
    decreasing = all(b["p_hat"] < a["p_hat"] for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "slope": slope, "strictly_decreasing": decreasing}


def _goodbox_via_index(p, q, N, beta, d, base, t):
    return _goodbox_trial(p, q, N, beta, d, trial_seed(base, t))


# -- coupled samples: budget, shells and bypasses ------------------------------------

def budget_sample(cfg: ExperimentConfig, p: float, q: float, n: int, trial: int) -> dict:
    h = cfg.hierarchy()
    seed = trial_seed(cfg.seed, trial)
    couple = three_rv_sampler(cfg.window(n), p, q, seed)
    base = couple(None)
    view = base.masked()
    lab, cid = giant_cluster(view.p)
    a = regularize((0,) * cfg.d, lab, cid)
    b = regularize(tuple(n * int(c) for c in cfg.x), lab, cid)
    geo = chemical_distance(base.level("q"), a, b)
    row = {"trial": trial, "seed": seed, "D_q": geo.distance}
    if not geo.reachable:
        row.update(status="discarded")
        return row
    cache = BoxStateCache(view, h)
    counts = bad_counts(geo.path, cache, h)
    M = scale_horizon(geo.path, cache, h)
    weighted, complete = budget_sum(counts, M, h)
    threshold = n ** (1.0 / (3 * cfg.d))
    bad_event = M is None or (complete and weighted >= n) or (not complete) or h.N[M - 1] > threshold
    row.update(status="ok", M=M, n_k=counts, weighted_sum=weighted if complete else None,
               bad_event=bool(bad_event))
    return row


def budget_sum(counts: list, M: int | None, h: ScaleHierarchy) -> tuple[int, bool]:
    """sum_{k=3}^{M} n_k N_{k+1}^2 N_k^{3d} (3d)^{2k}; second value False when a term
    needs a scale beyond the hierarchy (or M is undefined)."""
    if M is None:
        return 0, False
    d, N = h.d, h.N
    total = 0
    for k in range(3, M + 1):
        if k >= h.depth:
            return total, False
        total += counts[k - 1] * N[k] ** 2 * N[k - 1] ** (3 * d) * (3 * d) ** (2 * k)
    return total, True


def budget_report(cfg: ExperimentConfig, p: float, q: float, n: int, trials: int, threads: int = 1) -> dict:
    h = cfg.hierarchy()
    rows = run_trials(partial(budget_sample, cfg, p, q, n), range(trials), threads)
    ok = [r for r in rows if r["status"] == "ok"]
    freq = sum(r["bad_event"] for r in ok) / len(ok) if ok else float("nan")
    deltas = {k: str(h.delta(k)) for k in range(1, h.depth)}
    return {"rows": rows, "bad_event_frequency": freq, "delta": deltas}


@dataclass
class RegimeSample:
    trial: int
    seed: int
    report: BoundReport | None
    violation: str = ""  # shell or detour invariant failure

    def to_row(self) -> dict:
        r = self.report
        row = {"trial": self.trial, "seed": self.seed, "violation": self.violation}
        if r is not None:
            row.update(status=r.status, reason=r.reason, D_q=r.D_q, D_p=r.D_p, added=r.added,
                       stitch=r.stitch, closed=r.n_closed, avoided=r.n_avoided,
                       trimmed=r.n_trimmed, dropped=len(r.dropped), horizon=r.horizon,
                       components=r.components, shell_sum=r.shell_sum,
                       ledger_bound=r.ledger_bound, holds=r.holds)
        return row


def regime_sample(couple_factory: Callable, x, h: ScaleHierarchy, seed_of: Callable, trial: int) -> RegimeSample:
    seed = seed_of(trial)
    try:
        rep = constructive_distance_bound(couple_factory(seed), x, h)
    except (ShellInvariantError, DetourInvariantError) as exc:
        return RegimeSample(trial, seed, None, f"{type(exc).__name__}: {exc}")
    return RegimeSample(trial, seed, rep)


def _three_rv_factory(window: Window, p: float, q: float, seed: int):
    return three_rv_sampler(window, p, q, seed)


def bypass_regime(cfg: ExperimentConfig, p: float, q: float, n: int, trials: int, threads: int = 1) -> dict:
    """Shells, detours and the constructive inequality on `trials` coupled samples."""
    if p > q:
        raise ConfigError("p <= q required")
    h = cfg.hierarchy()
    factory = partial(_three_rv_factory, cfg.window(n), p, q)
    x = tuple(n * int(c) for c in cfg.x)
    fn = partial(regime_sample, factory, x, h, partial(trial_seed, cfg.seed))
    samples = run_trials(fn, range(trials), threads)
    return summarize_regime(samples, n * cfg.x_norm)


def summarize_regime(samples: list, scale: int) -> dict:
    reports = [s.report for s in samples if s.report is not None]
    ok = [r for r in reports if r.status == "ok"]
    trimmed = sum(r.n_trimmed for r in reports)
    dropped = sum(len(r.dropped) for r in reports)
    shells = trimmed - dropped
    gaps = [(r.D_p - r.D_q) / scale for r in ok]
    return {
        "samples": len(samples),
        "violations": sum(bool(s.violation) for s in samples),
        "discarded_samples": len(reports) - len(ok),
        "trimmed_edges": trimmed,
        "dropped_edges": dropped,
        "shells": shells,
        "edge_discard_rate": dropped / trimmed if trimmed else 0.0,
        "avoided_edges": sum(r.n_avoided for r in ok),
        "inequality_failures": sum(not r.holds for r in ok),
        "ledger_failures": sum(not r.ledger_ok for r in ok),
        "mean_gap": float(np.mean(gaps)) if gaps else float("nan"),
        "rows": [s.to_row() for s in samples],
    }


def planted_coupler(window: Window, closures, view_closures=(), p: float = 0.5, q: float = 1.0) -> Callable:
    """Fully open q-level configuration with W closed on `closures` and Z closed on
    `view_closures` (each an edge given as (lower endpoint, axis)).

    On-path p-states follow V*W and everything else V*Z, as in the three-variable
    coupling with V identically open.
    """
    d = window.d
    shapes = [tuple(s - (a == j) for j, s in enumerate(window.shape)) for a in range(d)]
    ones = tuple(np.ones(s, dtype=bool) for s in shapes)

    def closed(edges):
        out = [a.copy() for a in ones]
        for lower, axis in edges:
            out[axis][tuple(np.asarray(lower) + window.half_width)] = False
        return tuple(out)

    w, z = closed(closures), closed(view_closures)

    def couple(path):
        on = path_mask(window, path)
        p_open = tuple(np.where(m, b, c) for m, b, c in zip(on, w, z))
        return CoupledConfig(window, p, q, "planted", p_open, ones, z, on)

    return couple


PLANTED_DEFAULT = {"L": 900, "n": 400, "schedule": [3, 19, 3], "beta": 1.0,
                   "closures": [[[150, 0], 0], [[200, 0], 0], [[260, 0], 0]], "view_closures": []}


def planted_regime(spec: dict | None = None, inject=()) -> dict:
    """Shells and detours on a planted configuration along the first axis.

    The default keeps every scale-1 box good so the shell machinery runs at
    k(e) = 2 inside a window that fits in memory.
    """
    spec = {**PLANTED_DEFAULT, **(spec or {})}
    h = build_hierarchy(spec["schedule"][0], spec["schedule"], spec["beta"], 2, len(spec["schedule"]),
                        allow_decreasing=True)
    window = Window(spec["L"], 2)
    couple = planted_coupler(window, [(tuple(a), ax) for a, ax in spec["closures"]],
                             [(tuple(a), ax) for a, ax in spec["view_closures"]])
    trace: list = []
    try:
        rep = constructive_distance_bound(couple, (spec["n"], 0), h, trace, inject)
        sample = RegimeSample(0, 0, rep)
    except (ShellInvariantError, DetourInvariantError) as exc:
        sample = RegimeSample(0, 0, None, f"{type(exc).__name__}: {exc}")
    out = summarize_regime([sample], spec["n"])
    out["trace"] = trace
    out["hierarchy"] = list(h.l)
    return out


# -- general passage times ------------------------------------------------------------

@dataclass
class ClassVerdict:
    member: bool
    clauses: dict

    @property
    def violated(self) -> list[str]:
        return [k for k, v in self.clauses.items() if not v]


def class_membership(dist: QuantileDistribution, p0: float, p1: float, M: float, eps0: float = 0.5,
                     delta: Callable[[float], float] = lambda e: e, delta0: float = 0.1) -> ClassVerdict:
    """The four membership clauses, evaluated exactly on the atom table.

    G(]0, eps]) only jumps at atoms, and delta is non-decreasing, so checking
    eps at every atom in ]0, eps0[ covers the whole range.
    """
    atoms = [v for v in dist.values if 0 < v < eps0]
    small_ok = all(dist.mass(0, a, lo_closed=False) <= delta(a) for a in atoms)
    total = dist.finite_mass
    clauses = {
        "G({0}) <= p1": dist.mass(0, 0) <= p1,
        "G([0,+inf[) > p0": total > p0,
        "G(]0,eps]) <= delta(eps)": small_ok,
        "G([0,M]) >= (1 - delta0/2) G([0,+inf[)": dist.mass(0, M) >= (1 - delta0 / 2) * total,
    }
    return ClassVerdict(all(clauses.values()), clauses)


class ClassMembershipError(ValueError):
    pass


def _require_member(dist: QuantileDistribution, cfg: ExperimentConfig, name: str) -> None:
    v = class_membership(dist, cfg.p0, cfg.p1, cfg.M_class, cfg.eps0, delta0=cfg.delta0)
    if not v.member:
        raise ClassMembershipError(f"{name} violates: {', '.join(v.violated)}")


def general_trial(cfg: ExperimentConfig, F: QuantileDistribution, G: QuantileDistribution,
                  p: float, q: float, n: int, trial: int) -> dict:
    window = cfg.window(n)
    seed = trial_seed(cfg.seed, trial)
    fld = sample_uniform_field(window, seed)
    v, w, z = (window.from_flat(a) for a in sample_three_rv(window, p, q, seed))
    open_F = tuple(a & c for a, c in zip(v, z))  # level p
    open_G = v  # level q
    lab, cid = giant_cluster(window.grid(open_F))
    a = regularize((0,) * cfg.d, lab, cid)
    b = regularize(tuple(n * int(c) for c in cfg.x), lab, cid)
    tF = passage_time(quantile_passage_times(fld, F, open_F), a, b)
    tG = passage_time(quantile_passage_times(fld, G, open_G), a, b)
    row = {"trial": trial, "seed": seed, "T_F": tF.time, "T_G": tG.time}
    if tF.path is None or tG.path is None:
        row.update(status="discarded")
        return row
    gap = F.sup_quantile_gap(G)
    lF, lG = len(tF.path) - 1, len(tG.path) - 1
    diff = abs(tF.time - tG.time)
    # the quantile coupling moves every edge by at most `gap`; on the other
    # geodesic this gives T_G <= T_F + |g_F| gap and T_F <= T_G + |g_G| gap
    # (the second needs the p-open set inside the q-open one)
    tol = 1e-9 * max(1.0, tF.time, tG.time)
    row.update(status="ok", len_F=lF, len_G=lG, gap=gap, diff=diff, bound=max(lF, lG) * gap,
               violation=bool(diff > max(lF, lG) * gap + tol))
    return row


def general_distribution_scan(cfg: ExperimentConfig, F: QuantileDistribution, G: QuantileDistribution,
                              p: float, q: float, n: int, trials: int, threads: int = 1) -> dict:
    """Per-sample |T_F - T_G| against max(|g_F|, |g_G|) * sup-quantile gap.

    F is used at level p and G at level q of one three-variable field; with
    p = q both see the same open edges.
    """
    _require_member(F, cfg, "F")
    _require_member(G, cfg, "G")
    if p != q:
        raise ConfigError("the per-sample bound needs a common open set; use p = q")
    rows = run_trials(partial(general_trial, cfg, F, G, p, q, n), range(trials), threads)
    ok = [r for r in rows if r["status"] == "ok"]
    return {"rows": rows, "violations": sum(r["violation"] for r in ok),
            "discarded": len(rows) - len(ok)}


def _growth_trial(dist: QuantileDistribution, C: float, n: int, d: int, master: int, trial: int) -> bool:
    window = Window(n + 2, d)
    seed = trial_seed(master, trial)
    fld = sample_uniform_field(window, seed)
    v = window.from_flat(sample_three_rv(window, dist.finite_mass, dist.finite_mass, seed)[0])
    times = quantile_passage_times(fld, dist, v)
    u, w = times.edge_lists(np.isfinite)
    wt = np.concatenate([a[np.isfinite(a)] for a in times.data]).astype(float)
    nv = times.n_vertices
    graph = sp.csr_matrix((wt, (u, w)), shape=(nv, nv))
    origin = int(times.index((0,) * d))
    dist_all = dijkstra(graph, directed=False, indices=origin, limit=C * n)
    coords = times.coords(np.arange(nv))
    sphere = np.abs(coords).sum(axis=1) == n
    return bool(np.min(dist_all[sphere]) < C * n)


def linear_growth_check(dist: QuantileDistribution, C: float, n: int, trials: int, d: int = 2,
                        seed: int = 0, threads: int = 1) -> dict:
    """Frequency of a path from 0 to the L1 sphere of radius n with passage time < C n.

    Every such path has at least n edges, so a hit witnesses the cheap-long-path
    event; the estimate is therefore a lower bound on its frequency.
    """
    hits = sum(run_trials(partial(_growth_trial, dist, C, n, d, seed), range(trials), threads))
    freq = hits / trials
    return {"hits": hits, "trials": trials, "frequency": freq,
            "half_width": binomial_half_width(freq, trials) if hits else 3.0 / trials}


# -- output ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path, header: list[str], rows: list[dict]) -> None:
    """Tidy CSV: one row per dict, blank cells for missing keys."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in header])


def estimate_rows(rec: EstimateRecord) -> list[dict]:
    return [{"p": rec.p, "n": rec.n, "trial": t, "distance": D, "ratio": r}
            for t, (D, r) in enumerate(zip(rec.distances, rec.ratios))]


ESTIMATE_HEADER = ["p", "n", "trial", "distance", "ratio"]


def lipschitz_rows(rep: LipschitzReport) -> list[dict]:
    rows = []
    for j, (p, rec) in enumerate(zip(rep.grid, rep.records)):
        rows.append({"row": "point", "p": p, "mu_hat": rec.mean, "half_width": rec.half_width,
                     "discarded": rec.discarded, "slope": rep.slopes[j] if j < len(rep.slopes) else None})
    rows.append({"row": "summary", "kappa_hat": rep.kappa, "monotone": rep.monotone,
                 "sample_violations": rep.sample_violations})
    return rows


LIPSCHITZ_HEADER = ["row", "p", "mu_hat", "half_width", "discarded", "slope", "kappa_hat",
                    "monotone", "sample_violations"]


def write_summary_json(path, cfg: ExperimentConfig, experiment: str, summary: dict) -> None:
    doc = {"experiment": experiment, "config": cfg.to_dict(), "config_hash": cfg.content_hash(),
           "summary": summary}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (set, tuple)):
        return list(o)
    return str(o)
