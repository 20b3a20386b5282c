"""Closed-form n-iteration approximated Whittle index.

The value of a single arm under a threshold policy is expanded around the
first time the passive belief trajectory crosses the threshold.  Truncating
that expansion after ``n`` levels of active successors leaves a value estimate
that is affine in the subsidy, ``k * m + a``, and equating the approximated
active and passive action values gives the index in closed form.

Every kernel here is vectorised over beliefs; the public functions wrap them
for a single channel and belief.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .belief import (
    ChannelParams,
    _active,
    _obs_prob,
    _passive,
    _passive_k,
    _signed_power,
    _steady,
    check_belief,
    positive_signal_mass,
)

INFINITE = math.inf
MAX_ITERATIONS = 8
EPS_DEN = 1e-9
# Crossing requires exceeding the threshold by more than this margin, so a
# belief sitting at the passive fixed point never "crosses" itself through
# rounding noise.
CROSS_TOL = 1e-12


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------


def _crossing_time(p, w, thr):
    """First k >= 0 with T^k(w) > thr + CROSS_TOL, as floats with ``inf`` for never."""
    w = np.asarray(w, dtype=float)
    thr = np.asarray(thr, dtype=float) + CROSS_TOL
    pd = np.asarray(p.p11 - p.p01, dtype=float)
    ws = _steady(p)
    immediate = w > thr
    Tw = _passive(p, w)

    # p11 < p01: beliefs oscillate around the steady state and contract, so
    # only the first step can cross.
    neg = np.where(Tw > thr, 1.0, np.inf)

    # p11 > p01: monotone approach to ws from the starting side.
    reachable = thr < ws
    pos = np.where(reachable, 1.0, np.inf)
    todo = np.broadcast_to((pd > 0.0) & reachable & ~immediate, w.shape)
    if np.any(todo):
        w_s, thr_s, ws_s, pd_s = (np.broadcast_to(x, w.shape)[todo] for x in (w, thr, ws, pd))
        ratio = (ws_s - thr_s) / (ws_s - w_s)
        k = np.floor(np.log(ratio) / np.log(pd_s)) + 1.0
        k = np.where(np.isfinite(k) & (k >= 1.0), k, 1.0)

        def traj(kk):
            return ws_s + _signed_power(pd_s, kk) * (w_s - ws_s)

        # floor(log) can land one off near exact grid points; settle on the
        # definitional minimum using the closed-form trajectory.
        for _ in range(2):
            k = np.where((k > 1.0) & (traj(k - 1.0) > thr_s), k - 1.0, k)
        for _ in range(2):
            k = np.where(traj(k) <= thr_s, k + 1.0, k)
        pos = np.array(np.broadcast_to(pos, w.shape))
        pos[todo] = k

    out = np.where(pd > 0.0, pos, neg)
    return np.where(immediate, 0.0, out)


def _expansion(p, beta, w, thr):
    """Expansion coefficients of the threshold-policy value at ``w``.

    Returns ``(L, b1, b2, omega, b3, f)`` where ``b3`` and ``f`` are lists of
    K arrays.  For L = inf the passive dwell never ends: b2 and b3 vanish and
    ``omega``/``f`` hold the (unused) steady-state limits.
    """
    K = p.obs1.shape[0]
    L = _crossing_time(p, w, thr)
    bL = np.power(beta, L)
    b1 = (1.0 - bL) / (1.0 - beta)
    omega = _passive_k(p, w, L)
    b3 = [beta * bL * _obs_prob(p, omega, i) for i in range(K)]
    f = [_active(p, omega, i) for i in range(K)]
    return L, b1, bL, omega, b3, f


def _affine_value(p, beta, w, thr, n):
    """(k_n, a_n) over a 1-D-or-more array of beliefs, one tree level at a time.

    Children of every node are concatenated along axis 0 so that channel
    parameters broadcast along the trailing axis unchanged.
    """
    K = p.obs1.shape[0]
    w = np.asarray(w, dtype=float)
    thr = np.asarray(thr, dtype=float)
    levels = []
    cur_w, cur_thr = w, thr
    for depth in range(n + 1):
        L = _crossing_time(p, cur_w, cur_thr)
        bL = np.power(beta, L)
        b1 = (1.0 - bL) / (1.0 - beta)
        omega = _passive_k(p, cur_w, L)
        a0 = bL * omega
        if depth == n:
            levels.append((b1, a0, None))
            break
        b3 = [beta * bL * _obs_prob(p, omega, i) for i in range(K)]
        f = [_active(p, omega, i) for i in range(K)]
        levels.append((b1, a0, b3))
        cur_w = np.concatenate(f, axis=0)
        cur_thr = np.concatenate([cur_thr] * K, axis=0)

    k, a = levels[-1][0], levels[-1][1]
    for b1, a0, b3 in reversed(levels[:-1]):
        S = b1.shape[0]
        k_new, a_new = b1, a0
        for i in range(K):
            k_new = k_new + b3[i] * k[i * S:(i + 1) * S]
            a_new = a_new + b3[i] * a[i * S:(i + 1) * S]
        k, a = k_new, a_new
    return k, a


def _index_terms(p, beta, w, n):
    """Numerator and denominator of the n-iteration index (unit throughput)."""
    K = p.obs1.shape[0]
    w = np.asarray(w, dtype=float)
    S = w.shape[0]
    pts = np.concatenate([_passive(p, w)] + [_active(p, w, i) for i in range(K)], axis=0)
    thr = np.concatenate([w] * (K + 1), axis=0)
    k, a = _affine_value(p, beta, pts, thr, n)
    k0, a0 = k[:S], a[:S]
    sk = np.zeros_like(k0)
    sa = np.zeros_like(a0)
    for i in range(K):
        pi = _obs_prob(p, w, i)
        sk = sk + pi * k[(i + 1) * S:(i + 2) * S]
        sa = sa + pi * a[(i + 1) * S:(i + 2) * S]
    den = 1.0 + beta * (k0 - sk)
    num = w + beta * (sa - a0)
    return num, den


def _approx_whittle(p, beta, w, n, eps_den=EPS_DEN):
    """Vectorised index in throughput units plus a mask of where it exists."""
    w = np.asarray(w, dtype=float)
    num, den = _index_terms(p, beta, w, n)
    ok = np.abs(den) > eps_den
    idx = np.where(ok, num / np.where(ok, den, 1.0), w)
    return idx * p.throughput, ok


# --------------------------------------------------------------------------
# Public API
# --------------------------------------------------------------------------


class IndexKind(enum.Enum):
    APPROX_WHITTLE = "approx_whittle"
    FALLBACK_MYOPIC = "fallback_myopic"


@dataclass(frozen=True)
class IndexResult:
    value: float
    kind: IndexKind


@dataclass(frozen=True)
class ExpansionCoeffs:
    """Coefficients of ``V(w) = b1 m + b2 Omega + sum_i b3[i] V(f[i])``.

    ``Omega`` and ``f`` are None when the crossing time is infinite.
    """

    L: float
    b1: float
    b2: float
    b3: tuple
    Omega: float | None
    f: tuple | None


@dataclass(frozen=True)
class AffineValue:
    """Value estimate ``k * m + a`` as a function of the subsidy ``m``."""

    k: float
    a: float

    def __call__(self, m: float) -> float:
        return self.k * m + self.a


def _check_beta(beta) -> float:
    beta = float(beta)
    if not (0.0 < beta < 1.0):
        raise ValueError(f"discount factor must lie in (0, 1), got {beta!r}")
    return beta


def _check_n(n) -> int:
    if int(n) != n or n < 0:
        raise ValueError(f"iteration depth must be a nonnegative integer, got {n!r}")
    if n > MAX_ITERATIONS:
        raise ValueError(
            f"iteration depth {n} exceeds the cap of {MAX_ITERATIONS} "
            f"(cost grows as K**(n+1))"
        )
    return int(n)


def first_crossing_time(ch: ChannelParams, w: float, w_thresh: float):
    """Passive steps until the belief first exceeds ``w_thresh``; ``INFINITE`` if never."""
    w = check_belief(w)
    w_thresh = check_belief(w_thresh, "threshold")
    L = float(_crossing_time(ch, np.array([w]), np.array([w_thresh]))[0])
    return INFINITE if math.isinf(L) else int(L)


def expansion_coeffs(ch: ChannelParams, beta: float, w: float, w_thresh: float) -> ExpansionCoeffs:
    beta = _check_beta(beta)
    w = check_belief(w)
    w_thresh = check_belief(w_thresh, "threshold")
    L, b1, b2, omega, b3, f = _expansion(ch, beta, np.array([w]), np.array([w_thresh]))
    L = float(L[0])
    if math.isinf(L):
        return ExpansionCoeffs(INFINITE, float(b1[0]), 0.0, (0.0,) * ch.K, None, None)
    return ExpansionCoeffs(
        int(L),
        float(b1[0]),
        float(b2[0]),
        tuple(float(x[0]) for x in b3),
        float(omega[0]),
        tuple(float(x[0]) for x in f),
    )


def affine_value(ch: ChannelParams, beta: float, w: float, w_thresh: float, n: int) -> AffineValue:
    """n-iteration estimate of the threshold-policy value, affine in the subsidy."""
    beta = _check_beta(beta)
    n = _check_n(n)
    w = check_belief(w)
    w_thresh = check_belief(w_thresh, "threshold")
    k, a = _affine_value(ch, beta, np.array([w]), np.array([w_thresh]), n)
    return AffineValue(float(k[0]), float(a[0]))


def approx_whittle(ch: ChannelParams, beta: float, w: float, n: int, eps_den: float = EPS_DEN) -> IndexResult:
    """n-iteration approximated Whittle index at belief ``w``.

    Falls back to the myopic index ``w * B`` when the linear equation for the
    subsidy is (near-)singular, i.e. ``|denominator| <= eps_den``.
    """
    beta = _check_beta(beta)
    n = _check_n(n)
    w = check_belief(w)
    val, ok = _approx_whittle(ch, beta, np.array([w]), n, eps_den)
    kind = IndexKind.APPROX_WHITTLE if bool(ok[0]) else IndexKind.FALLBACK_MYOPIC
    return IndexResult(float(val[0]), kind)


def imperfect_whittle(ch: ChannelParams, beta: float, w: float, eps_den: float = EPS_DEN) -> IndexResult:
    """The 0-iteration index."""
    return approx_whittle(ch, beta, w, 0, eps_den)


def approx_whittle_curve(ch: ChannelParams, beta: float, ws, n: int, eps_den: float = EPS_DEN):
    """Index values and existence mask over an array of beliefs."""
    beta = _check_beta(beta)
    n = _check_n(n)
    ws = np.atleast_1d(np.asarray(ws, dtype=float))
    if np.any(ws < 0.0) or np.any(ws > 1.0):
        raise ValueError("beliefs must lie in [0, 1]")
    return _approx_whittle(ch, beta, ws, n, eps_den)


def approx_action_values(ch: ChannelParams, beta: float, w: float, n: int, m: float):
    """Approximated (active, passive) action values at subsidy ``m`` (unit throughput).

    Both continuation values use the n-iteration estimates with the
    threshold set to ``w`` itself.
    """
    beta = _check_beta(beta)
    n = _check_n(n)
    w = check_belief(w)
    K = ch.K
    pts = np.array([float(_passive(ch, w))] + [float(_active(ch, w, i)) for i in range(K)])
    k, a = _affine_value(ch, beta, pts, np.full(K + 1, w), n)
    passive = m + beta * (k[0] * m + a[0])
    active = w
    cont = 0.0
    for i in range(K):
        cont += float(_obs_prob(ch, w, i)) * (k[i + 1] * m + a[i + 1])
    active = w + beta * cont
    return float(active), float(passive)


def beta_bound(ch: ChannelParams) -> float:
    """Largest discount factor for which threshold structure and indexability are guaranteed."""
    sp = positive_signal_mass(ch)
    pd = abs(ch.p_d)
    if ch.p11 > ch.p01:
        term = 1.0 / (2.0 * pd * (1.0 + sp))
    else:
        term = 1.0 / (pd * (3.0 + 4.0 * sp))
    return min(term, 0.5)


def system_beta_bound(channels: Sequence[ChannelParams]) -> float:
    channels = list(channels)
    if not channels:
        raise ValueError("need at least one channel")
    return min(beta_bound(c) for c in channels)
