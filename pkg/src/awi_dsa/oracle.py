"""Exact finite-horizon dynamic programming for the single-arm subsidy problem.

The reachable belief tree under the passive map and the K observation
branches does not depend on the subsidy, so it is built once per
(channel, roots, horizon) as a layered DAG (beliefs merged at a fixed
resolution) and then swept backwards for any number of subsidies.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .belief import (
    ChannelParams,
    _active,
    _obs_prob,
    _passive,
    check_belief,
    positive_signal_mass,
)
from .exceptions import BracketFailure, HorizonTooLarge
from .index import _check_beta, beta_bound

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 12
HORIZON_CAP = 14
KEY_RESOLUTION = 1e-12
BISECTION_MAX_ITER = 80
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class HorizonValue:
    total: float
    passive: float
    active: float


@dataclass(frozen=True)
class PassiveTimeValue:
    passive_t: float


@dataclass(frozen=True)
class LipschitzBound:
    C: float


@dataclass(frozen=True)
class ThresholdScan:
    """Preferred action over a uniform belief grid at fixed subsidy.

    ``threshold`` is the midpoint between the last passive and the first
    active grid point (below 0 when all-active, above 1 when all-passive) and
    is None when the pattern is not passive-then-active.
    """

    m: float
    threshold: float | None
    grid_n: int
    violation: bool
    active_mask: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class IndexabilityReport:
    beta: float
    m_grid: tuple
    thresholds: tuple
    violations: int
    monotone: bool


def lipschitz_bound(ch: ChannelParams, beta: float) -> LipschitzBound | None:
    """Lipschitz constant of the finite-horizon value in the belief, if the discount admits one."""
    g = beta * abs(ch.p_d) * (1.0 + 2.0 * positive_signal_mass(ch))
    if g >= 1.0:
        return None
    return LipschitzBound(1.0 / (1.0 - g))


def truncation_error(beta: float, horizon: int, throughput: float = 1.0) -> float:
    """Bound on how far a horizon-T value can sit from its infinite-horizon limit."""
    return beta ** horizon * throughput / (1.0 - beta)


class BeliefTree:
    """Layered reachable-belief DAG rooted at one or more beliefs.

    Level ``d`` holds the distinct beliefs reachable in exactly ``d`` slots;
    a node at level ``d`` has ``horizon - d`` slots to go.
    """

    def __init__(self, ch: ChannelParams, roots, horizon: int,
                 resolution: float = KEY_RESOLUTION, cap: int = HORIZON_CAP):
        if int(horizon) != horizon or horizon < 0:
            raise ValueError(f"horizon must be a nonnegative integer, got {horizon!r}")
        if horizon > cap:
            raise HorizonTooLarge(f"horizon {horizon} exceeds cap {cap}")
        self.ch = ch
        self.horizon = int(horizon)
        self.resolution = resolution
        roots = np.atleast_1d(np.asarray(roots, dtype=float))
        if np.any(roots < 0.0) or np.any(roots > 1.0):
            raise ValueError("root beliefs must lie in [0, 1]")
        self.n_roots = roots.shape[0]
        K = ch.K
        self.levels = []   # (beliefs, passive_child, active_children (K, n), probs (K, n))
        if self.horizon == 0:
            self.root_index = np.zeros(self.n_roots, dtype=np.int64)
            return
        beliefs, self.root_index = self._dedup(roots)
        for d in range(self.horizon):
            probs = np.stack([_obs_prob(ch, beliefs, i) for i in range(K)])
            if d == self.horizon - 1:
                self.levels.append((beliefs, None, None, probs))
                break
            children = [_passive(ch, beliefs)] + [_active(ch, beliefs, i) for i in range(K)]
            nxt, inv = self._dedup(np.concatenate(children))
            n = beliefs.shape[0]
            self.levels.append((beliefs, inv[:n], inv[n:].reshape(K, n), probs))
            beliefs = nxt

    def _dedup(self, x):
        keys = np.round(x / self.resolution).astype(np.int64)
        _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        return x[first], inv.reshape(-1)

    @property
    def size(self) -> int:
        return sum(lvl[0].shape[0] for lvl in self.levels)

    def sweep(self, beta: float, m, with_passive_time: bool = False, tie_tol: float = 0.0):
        """Backward induction for subsidy ``m`` (scalar or 1-D array).

        Returns ``(total, passive, active)`` arrays of shape ``(len(m), n_roots)``
        (or ``(n_roots,)`` for scalar m), plus the passive time when requested.
        On ties the policy with the larger passive time is taken.
        """
        m_arr = np.atleast_1d(np.asarray(m, dtype=float))[:, None]
        B = self.ch.throughput
        K = self.ch.K
        shape = (m_arr.shape[0], self.n_roots)
        if self.horizon == 0:
            z = np.zeros(shape)
            out = (z, z.copy(), z.copy())
            if with_passive_time:
                out = out + (z.copy(),)
            return self._squeeze(out, m)

        V_next = D_next = None
        for d in range(self.horizon - 1, -1, -1):
            beliefs, pidx, aidx, probs = self.levels[d]
            if V_next is None:
                cont_p = 0.0
                cont_a = 0.0
                dp = 0.0
                da = 0.0
            else:
                cont_p = V_next[:, pidx]
                cont_a = 0.0
                for i in range(K):
                    cont_a = cont_a + probs[i] * V_next[:, aidx[i]]
                if with_passive_time:
                    dp = D_next[:, pidx]
                    da = 0.0
                    for i in range(K):
                        da = da + probs[i] * D_next[:, aidx[i]]
            passive = m_arr + beta * cont_p
            active = beliefs * B + beta * cont_a
            passive = np.broadcast_to(passive, (m_arr.shape[0], beliefs.shape[0]))
            active = np.broadcast_to(active, passive.shape)
            V = np.maximum(passive, active)
            if with_passive_time:
                Dp = 1.0 + beta * np.asarray(dp)
                Da = beta * np.asarray(da)
                Dp = np.broadcast_to(Dp, passive.shape)
                Da = np.broadcast_to(Da, passive.shape)
                diff = passive - active
                D = np.where(diff > tie_tol, Dp, np.where(diff < -tie_tol, Da, np.maximum(Dp, Da)))
                D_next = D
            if d == 0:
                r = self.root_index
                out = (V[:, r], passive[:, r], active[:, r])
                if with_passive_time:
                    out = out + (D[:, r],)
                return self._squeeze(out, m)
            V_next = V

    @staticmethod
    def _squeeze(out, m):
        if np.ndim(m) == 0:
            return tuple(np.ascontiguousarray(o[0]) for o in out)
        return out


def _check_horizon(T, cap=HORIZON_CAP):
    if int(T) != T or T < 0:
        raise ValueError(f"horizon must be a nonnegative integer, got {T!r}")
    if T > cap:
        raise HorizonTooLarge(f"horizon {T} exceeds cap {cap}; cost grows as (K+1)**T")
    return int(T)


def finite_horizon_value(ch: ChannelParams, beta: float, m: float, w: float, T: int,
                         cap: int = HORIZON_CAP) -> HorizonValue:
    """Optimal T-horizon value at belief ``w`` and subsidy ``m`` with both action values."""
    beta = _check_beta(beta)
    T = _check_horizon(T, cap)
    w = check_belief(w)
    tree = BeliefTree(ch, [w], T, cap=cap)
    total, passive, active = tree.sweep(beta, float(m))
    return HorizonValue(float(total[0]), float(passive[0]), float(active[0]))


def passive_time(ch: ChannelParams, beta: float, m: float, w: float, T: int,
                 cap: int = HORIZON_CAP, tie_tol: float = 0.0) -> PassiveTimeValue:
    """Expected discounted number of passive slots under an optimal T-horizon policy."""
    beta = _check_beta(beta)
    T = _check_horizon(T, cap)
    w = check_belief(w)
    tree = BeliefTree(ch, [w], T, cap=cap)
    *_, D = tree.sweep(beta, float(m), with_passive_time=True, tie_tol=tie_tol)
    return PassiveTimeValue(float(D[0]))


def oracle_whittle(ch: ChannelParams, beta: float, w: float, T: int = DEFAULT_HORIZON,
                   tol: float = DEFAULT_TOL, max_iter: int = BISECTION_MAX_ITER,
                   cap: int = HORIZON_CAP) -> float:
    """Whittle index at ``w`` by bisection on the subsidy over the exact T-horizon DP.

    Searches the smallest m at which passive is weakly preferred.  The
    answer carries an additional horizon error of order
    ``truncation_error(beta, T, B)``.
    """
    beta = _check_beta(beta)
    T = _check_horizon(T, cap)
    w = check_belief(w)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if beta > beta_bound(ch):
        warnings.warn(
            f"beta={beta} exceeds the indexability bound {beta_bound(ch):.6g}; "
            "bisection assumes a single sign change",
            RuntimeWarning,
            stacklevel=2,
        )
    tree = BeliefTree(ch, [w], T, cap=cap)
    B = ch.throughput

    def gap(m):
        _, passive, active = tree.sweep(beta, m)
        return float(passive[0] - active[0])

    lo, hi = -B / (1.0 - beta), B / (1.0 - beta)
    if not (gap(lo) < 0.0 and gap(hi) >= 0.0):
        raise BracketFailure(f"no sign change of passive - active on [{lo}, {hi}]")
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _grid(grid_n):
    if int(grid_n) != grid_n or grid_n < 2:
        raise ValueError(f"grid needs at least 2 points, got {grid_n!r}")
    return np.linspace(0.0, 1.0, int(grid_n))


def _scan_from_mask(m, grid, gap, tie_tol=0.0):
    """Threshold from ``gap = active - passive`` over an ascending grid.

    Points with ``|gap| <= tie_tol`` are indifferent and fit either side.  The
    pattern is a violation when a strictly active point lies below a strictly
    passive one.  Indifferent points next to the switch count as passive.
    """
    n = grid.shape[0]
    active = gap > tie_tol
    passive = gap < -tie_tol
    first_active = int(np.argmax(active)) if active.any() else n
    last_passive = int(n - 1 - np.argmax(passive[::-1])) if passive.any() else -1
    mask = tuple(bool(a) for a in active)
    if last_passive > first_active:
        return ThresholdScan(float(m), None, n, True, mask)
    h = grid[1] - grid[0]
    if first_active == 0:
        thr = grid[0] - 0.5 * h
    elif first_active == n:
        thr = grid[-1] + 0.5 * h
    else:
        thr = 0.5 * (grid[first_active - 1] + grid[first_active])
    return ThresholdScan(float(m), float(thr), n, False, mask)


def threshold_scan(ch: ChannelParams, beta: float, m: float, T: int, grid_n: int,
                   cap: int = HORIZON_CAP, tie_tol: float = 0.0) -> ThresholdScan:
    """Check whether the optimal first action is passive-below / active-above on a grid."""
    return threshold_scans(ch, beta, [m], T, grid_n, cap, tie_tol)[0]


def threshold_scans(ch: ChannelParams, beta: float, m_grid, T: int, grid_n: int,
                    cap: int = HORIZON_CAP, tie_tol: float = 0.0) -> list:
    """``threshold_scan`` for several subsidies sharing one belief tree."""
    if int(grid_n) != grid_n or grid_n < 3:
        raise ValueError(f"grid_n must be at least 3, got {grid_n!r}")
    beta = _check_beta(beta)
    T = _check_horizon(T, cap)
    grid = _grid(grid_n)
    m_grid = np.asarray(m_grid, dtype=float)
    tree = BeliefTree(ch, grid, T, cap=cap)
    _, passive, active = tree.sweep(beta, m_grid)
    return [_scan_from_mask(m, grid, active[j] - passive[j], tie_tol) for j, m in enumerate(m_grid)]


def indexability_probe(ch: ChannelParams, beta: float, m_grid, T: int, grid_n: int,
                       cap: int = HORIZON_CAP, tie_tol: float = 0.0) -> IndexabilityReport:
    """Do thresholds grow with the subsidy, i.e. does the passive set expand?"""
    m_grid = [float(x) for x in m_grid]
    if not m_grid:
        raise ValueError("m_grid must be nonempty")
    if any(b < a for a, b in zip(m_grid, m_grid[1:])):
        raise ValueError("m_grid must be sorted ascending")
    scans = threshold_scans(ch, beta, m_grid, T, grid_n, cap, tie_tol)
    thresholds = tuple(s.threshold for s in scans)
    violations = sum(s.violation for s in scans)
    # passive sets as boolean masks: monotone expansion means every belief that
    # is passive at m stays passive at any larger m
    passive_sets = [np.logical_not(np.array(s.active_mask)) for s in scans]
    monotone = all(np.all(b[a]) for a, b in zip(passive_sets, passive_sets[1:]))
    return IndexabilityReport(float(beta), tuple(m_grid), thresholds, violations, bool(monotone))
