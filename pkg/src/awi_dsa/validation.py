"""Randomised property suites backed by the exact DP oracle.

Each suite draws random channels from a seeded generator, checks a family of
structural properties of the finite-horizon value function or the closed-form
index, and returns a :class:`SuiteReport` with one :class:`PropertyResult`
per property.  ``budget`` scales the number of random instances.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .belief import ChannelBank, ChannelParams, _passive, _passive_k, positive_signal_mass
from .index import (
    CROSS_TOL,
    _crossing_time,
    _index_terms,
    approx_whittle,
    beta_bound,
)
from .oracle import (
    BeliefTree,
    indexability_probe,
    lipschitz_bound,
    oracle_whittle,
    threshold_scan,
    truncation_error,
)

SUITES = ("lemmas", "oracle", "indexability", "crossing")

VALUE_TOL = 1e-10          # slack for convexity, monotonicity and Lipschitz checks
TIE_TOL = 1e-10            # |passive - active| below this counts as indifferent
CROSSING_CAP = 10_000
CONVERGENCE_T = 13
CONVERGENCE_TOL = 1e-6


@dataclass
class PropertyResult:
    name: str
    checked: int = 0
    failures: int = 0
    skipped: int = 0
    worst_residual: float = 0.0
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.failures == 0

    def record(self, residual: float, tol: float = 0.0):
        """Count one check; ``residual > tol`` is a failure."""
        self.checked += 1
        residual = float(residual)
        if residual > self.worst_residual or math.isnan(residual):
            self.worst_residual = residual
        if not residual <= tol:
            self.failures += 1

    def record_many(self, residuals, tol: float = 0.0):
        r = np.asarray(residuals, dtype=float).ravel()
        if r.size == 0:
            return
        self.checked += int(r.size)
        self.failures += int(np.count_nonzero(~(r <= tol)))
        worst = float(np.max(r))
        if worst > self.worst_residual:
            self.worst_residual = worst

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


@dataclass
class SuiteReport:
    suite: str
    seed: int
    budget: float
    properties: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "budget": self.budget,
            "passed": self.passed,
            "seconds": round(self.seconds, 3),
            "properties": [p.to_dict() for p in self.properties],
        }


# --------------------------------------------------------------------------
# Random instances
# --------------------------------------------------------------------------


def random_channel(rng: np.random.Generator, K: int = 2, sign: int | None = None,
                   throughput: float = 1.0, min_gap: float = 0.05) -> ChannelParams:
    """Random channel with informative CQI; ``sign`` fixes the sign of p11 - p01."""
    while True:
        p01, p11 = rng.uniform(0.02, 0.98, size=2)
        if abs(p11 - p01) >= min_gap:
            break
    if sign is not None and np.sign(p11 - p01) != sign:
        p01, p11 = p11, p01
    obs = np.column_stack([rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K))])
    obs[-1] = 1.0 - obs[:-1].sum(axis=0)
    return ChannelParams(float(p01), float(p11), obs, throughput)


def _count(base: int, budget: float) -> int:
    return max(1, int(round(base * budget)))


def _midpoint_excess(v):
    """Convexity residual on all equally spaced triples of a 1-D sample."""
    v = np.asarray(v, dtype=float)
    out = []
    for step in (1, 2, 5, 10):
        if v.shape[0] > 2 * step:
            out.append(v[step:-step] - 0.5 * (v[:-2 * step] + v[2 * step:]))
    return np.concatenate(out) if out else np.zeros(0)


# --------------------------------------------------------------------------
# Suites
# --------------------------------------------------------------------------


def _lemmas(rng, budget):
    conv_w = PropertyResult("value_convex_in_belief")
    conv_m = PropertyResult("value_convex_in_subsidy_short_horizon")
    mono = PropertyResult("value_monotone_in_belief", note="p11 > p01")
    lip = PropertyResult("value_lipschitz_in_belief")
    gap = PropertyResult("action_gap_nondecreasing", note="beta within the threshold condition")
    conv5 = PropertyResult("value_convex_in_subsidy")
    lip6 = PropertyResult("value_lipschitz_in_subsidy")
    deriv = PropertyResult("subsidy_derivative_is_passive_time")

    grid = np.linspace(0.0, 1.0, 1001)
    for _ in range(_count(12, budget)):
        ch = random_channel(rng, sign=int(rng.choice([-1, 1])))
        beta = float(rng.uniform(0.05, 0.95))
        T = int(rng.integers(1, 7))
        m = float(rng.uniform(-0.2, 1.2))
        tree = BeliefTree(ch, grid, T)
        V, passive, active = tree.sweep(beta, m)

        conv_w.record_many(_midpoint_excess(V), VALUE_TOL)
        if ch.p11 > ch.p01:
            mono.record_many(V[:-1] - V[1:], VALUE_TOL)
        else:
            mono.skipped += 1

        lb = lipschitz_bound(ch, beta)
        if lb is None:
            lip.skipped += 1
        else:
            CB = lb.C * ch.throughput
            pairs = rng.integers(0, grid.shape[0], size=(200, 2))
            far = np.abs(V[pairs[:, 0]] - V[pairs[:, 1]]) - CB * np.abs(grid[pairs[:, 0]] - grid[pairs[:, 1]])
            lip.record_many(np.abs(np.diff(V)) - CB * np.diff(grid), VALUE_TOL)
            lip.record_many(far, VALUE_TOL)

        if _threshold_condition(ch, beta):
            g = active - passive
            gap.record_many(g[:-1] - g[1:], VALUE_TOL)
        else:
            gap.skipped += 1

    m_grid = np.linspace(-1.0, 2.0, 201)
    for _ in range(_count(12, budget)):
        ch = random_channel(rng)
        beta = float(rng.uniform(0.05, 0.95))
        w = float(rng.uniform())
        T_short = int(rng.integers(1, 9))
        tree = BeliefTree(ch, [w], T_short)
        V, _, _ = tree.sweep(beta, m_grid)
        conv_m.record_many(_midpoint_excess(V[:, 0]), VALUE_TOL)

        tree = BeliefTree(ch, [w], 10)
        V, _, _, D = tree.sweep(beta, m_grid, with_passive_time=True, tie_tol=TIE_TOL)
        V = V[:, 0]
        conv5.record_many(_midpoint_excess(V), VALUE_TOL)
        dm = np.abs(m_grid[:, None] - m_grid[None, :])
        lip6.record_many(np.abs(V[:, None] - V[None, :]) - dm / (1.0 - beta), VALUE_TOL)

        # forward difference against passive time, away from policy switches
        delta = 1e-6
        Vd, _, _, Dd = tree.sweep(beta, m_grid + delta, with_passive_time=True, tie_tol=TIE_TOL)
        Vh, _, _, Dh = tree.sweep(beta, m_grid + 0.5 * delta, with_passive_time=True, tie_tol=TIE_TOL)
        stable = (np.abs(D[:, 0] - Dd[:, 0]) < 1e-12) & (np.abs(D[:, 0] - Dh[:, 0]) < 1e-12)
        fd = (Vd[:, 0] - V) / delta
        deriv.skipped += int(np.count_nonzero(~stable))
        deriv.record_many(np.abs(fd - D[:, 0])[stable], 1e-6)

    return [conv_w, conv_m, mono, lip, gap, conv5, lip6, deriv]


def _threshold_condition(ch: ChannelParams, beta: float) -> bool:
    """The discount condition under which the action-value gap grows with the belief."""
    sp = positive_signal_mass(ch)
    pd = abs(ch.p_d)
    if ch.p11 > ch.p01:
        return beta <= 1.0 / (2.0 * pd * (1.0 + sp))
    return beta <= 1.0 / (pd * (3.0 + 4.0 * sp))


def _oracle(rng, budget):
    maxed = PropertyResult("total_is_max_of_actions")
    uninf = PropertyResult("uninformative_index_is_belief")
    horizon = PropertyResult("horizon_truncation_bound")
    mean_err = PropertyResult("mean_index_error_nonincreasing")
    tail = PropertyResult("depth3_error_within_decay_tail")
    for _ in range(_count(10, budget)):
        ch = random_channel(rng, K=int(rng.integers(1, 4)))
        beta = float(rng.uniform(0.05, 0.95))
        tree = BeliefTree(ch, rng.uniform(size=20), int(rng.integers(0, 8)))
        V, p, a = tree.sweep(beta, rng.uniform(-1, 2, size=5))
        maxed.record_many(np.abs(V - np.maximum(p, a)), 0.0)

    for _ in range(_count(8, budget)):
        c = float(rng.uniform(0.05, 0.95))
        ch = ChannelParams(*rng.uniform(0.05, 0.95, size=2), [[1 - c, 1 - c], [c, c]], float(rng.uniform(0.3, 1.5)))
        if abs(ch.p_d) < 1e-3:
            continue
        beta = min(beta_bound(ch), float(rng.uniform(0.05, 0.5)))
        w = float(rng.uniform())
        tol = 1e-7
        uninf.record(abs(oracle_whittle(ch, beta, w, T=8, tol=tol) - w * ch.throughput), 2 * tol)

    for _ in range(_count(4, budget)):
        ch = random_channel(rng)
        beta = float(rng.uniform(0.05, beta_bound(ch)))
        w = float(rng.uniform())
        tol = 1e-6
        w12 = oracle_whittle(ch, beta, w, T=12, tol=tol)
        w11 = oracle_whittle(ch, beta, w, T=11, tol=tol)
        horizon.record(abs(w12 - w11) - truncation_error(beta, 11, ch.throughput), 2 * tol)

    T, tol = 11, 1e-7
    study = convergence_study(rng, _count(20, budget), T=T, tol=tol, max_n=5)
    floor = tol + truncation_error(study.betas, T)
    mean = study.errors.mean(axis=0)
    mean_err.record_many(mean[1:] - mean[:-1], 2.0 * tol)
    # the closed form approaches the index geometrically, so the depth-3 error
    # is bounded by the tail of the decay series plus the oracle's own error
    A = study.decay_constant()
    b = study.betas
    tail.record_many(study.errors[:, 3] - A * b ** 4 / (1.0 - b) - floor, 0.0)
    return [maxed, uninf, horizon, mean_err, tail]


def _indexability(rng, budget):
    thr = PropertyResult("threshold_structure", note="beta within the channel bound")
    idx = PropertyResult("passive_set_monotone", note="beta <= 0.5")
    beyond = PropertyResult("indexability_beyond_bound", note="informational; beta = 0.9")

    for _ in range(_count(40, budget)):
        ch = random_channel(rng, sign=int(rng.choice([-1, 1])), throughput=float(rng.uniform(0.3, 1.5)))
        beta = float(rng.uniform(0.05, beta_bound(ch)))
        m = float(rng.uniform(0.0, ch.throughput))
        scan = threshold_scan(ch, beta, m, T=8, grid_n=201, tie_tol=TIE_TOL)
        thr.record(1.0 if scan.violation else 0.0, 0.0)

    for _ in range(_count(20, budget)):
        ch = random_channel(rng, sign=int(rng.choice([-1, 1])))
        beta = float(rng.uniform(0.05, 0.5))
        m_grid = np.linspace(-0.1, 1.1, 25) * ch.throughput
        rep = indexability_probe(ch, beta, m_grid, T=8, grid_n=201, tie_tol=TIE_TOL)
        idx.record(0.0 if rep.monotone else 1.0, 0.0)

    ch = random_channel(rng)
    rep = indexability_probe(ch, 0.9, np.linspace(0.0, 1.0, 11), T=6, grid_n=101, tie_tol=TIE_TOL)
    beyond.checked = 1
    beyond.note += f"; monotone={rep.monotone}, violations={rep.violations}"
    return [thr, idx, beyond]


def brute_crossing_times(bank: ChannelBank, w, thr, cap: int = CROSSING_CAP) -> np.ndarray:
    """First passive step exceeding ``thr`` by iterating the map, ``inf`` past ``cap``.

    Vectorised over a bank: column j iterates channel j from ``w[j]``.
    """
    x = np.array(w, dtype=float)
    out = np.full(x.shape, np.inf)
    pending = np.ones(x.shape, dtype=bool)
    target = np.asarray(thr, dtype=float) + CROSS_TOL
    for k in range(cap + 1):
        hit = pending & (x > target)
        out[hit] = k
        pending &= ~hit
        if not pending.any():
            break
        x = _passive(bank, x)
    return out


def random_bank(rng: np.random.Generator, size: int, min_gap: float = 1e-3) -> ChannelBank:
    return ChannelBank.from_channels([random_channel(rng, min_gap=min_gap) for _ in range(size)])


def _crossing(rng, budget):
    cross = PropertyResult("first_crossing_time_matches_iteration")
    kstep = PropertyResult("passive_update_k_matches_iteration")
    n = _count(10_000, budget)
    bank = random_bank(rng, n)
    w, thr = rng.uniform(size=(2, n))
    got = _crossing_time(bank, w, thr)
    want = brute_crossing_times(bank, w, thr)
    cross.record_many((got != want).astype(float), 0.0)

    k = rng.integers(0, 60, size=n)
    x = w.copy()
    for step in range(int(k.max())):
        x = np.where(step < k, _passive(bank, x), x)
    kstep.record_many(np.abs(_passive_k(bank, w, k.astype(float)) - x), 1e-10)
    return [cross, kstep]


_RUNNERS = {"lemmas": _lemmas, "oracle": _oracle, "indexability": _indexability, "crossing": _crossing}


def run_suite(name: str, seed: int = 0, budget: float = 1.0) -> SuiteReport:
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if not budget > 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    props = _RUNNERS[name](rng, budget)
    return SuiteReport(name, seed, budget, props, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Convergence of the closed-form index towards the oracle
# --------------------------------------------------------------------------


@dataclass
class ConvergenceStudy:
    """Per-pair results; arrays have one row per (channel, belief) pair."""

    channels: list
    betas: np.ndarray          # (P,)
    beliefs: np.ndarray        # (P,)
    oracle: np.ndarray         # (P,)
    index: np.ndarray          # (P, max_n + 1)
    denominators: np.ndarray   # (P, max_n + 1)
    errors: np.ndarray         # (P, max_n + 1), |index - oracle|

    def decay_constant(self) -> np.ndarray:
        """Per-pair constant A with ``|W_{n+1} - W_n| <= A beta^(n+1)``.

        Truncating one more level changes the value coefficients by at most
        ``beta^(n+1)`` (offset) and ``beta^(n+1)/(1-beta)`` (subsidy slope);
        propagating that through the index formula gives
        ``2 beta (1 + |W_n|/(1-beta)) / |den_{n+1}|`` in unit throughput.
        """
        b = self.betas[:, None]
        B = np.array([c.throughput for c in self.channels])[:, None]
        W = self.index[:, :-1] / B
        den = np.abs(self.denominators[:, 1:])
        A = 2.0 * b * (1.0 + np.abs(W) / (1.0 - b)) / den
        return np.max(A, axis=1) * B[:, 0]


def convergence_study(rng: np.random.Generator, pairs: int = 50, T: int = CONVERGENCE_T,
                      tol: float = CONVERGENCE_TOL, max_n: int = 7) -> ConvergenceStudy:
    """Closed-form index at depths 0..max_n versus the DP index, on random pairs."""
    chans, betas, ws, orc, idx, dens = [], [], [], [], [], []
    for _ in range(pairs):
        ch = random_channel(rng)
        beta = float(rng.uniform(0.05, beta_bound(ch)))
        w = float(rng.uniform())
        chans.append(ch)
        betas.append(beta)
        ws.append(w)
        orc.append(oracle_whittle(ch, beta, w, T=T, tol=tol))
        row, drow = [], []
        for n in range(max_n + 1):
            row.append(approx_whittle(ch, beta, w, n).value)
            drow.append(float(_index_terms(ch, beta, np.array([w]), n)[1][0]))
        idx.append(row)
        dens.append(drow)
    index = np.array(idx)
    oracle = np.array(orc)
    return ConvergenceStudy(chans, np.array(betas), np.array(ws), oracle, index,
                            np.array(dens), np.abs(index - oracle[:, None]))
