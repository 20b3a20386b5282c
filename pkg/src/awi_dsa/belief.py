"""Belief-state dynamics for a single Gilbert-Elliott channel observed through CQI.

All kernels (underscore-prefixed) broadcast: beliefs may be scalars or arrays,
and channel parameters may be scalars (one channel) or arrays aligned with the
last axis of the belief array (a :class:`ChannelBank`).  The public functions
validate their inputs and work on one channel and one belief at a time.

CQI levels are 1-based in the public API and 0-based inside the kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ZeroLikelihood

OBS_SUM_TOL = 1e-12
CLAMP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """Transition probabilities, CQI likelihoods and throughput of one channel.

    ``obs[i, s]`` is the probability of CQI level ``i + 1`` when the channel is
    in state ``s`` (0 = poor, 1 = good).
    """

    p01: float
    p11: float
    obs: np.ndarray
    throughput: float = 1.0

    def __post_init__(self):
        p01 = float(self.p01)
        p11 = float(self.p11)
        if not (0.0 < p01 < 1.0):
            raise ValueError(f"p01 must lie in (0, 1), got {p01}")
        if not (0.0 < p11 < 1.0):
            raise ValueError(f"p11 must lie in (0, 1), got {p11}")
        if p01 == p11:
            raise ValueError("p01 == p11 gives a memoryless channel; the belief never moves")
        obs = np.array(self.obs, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != 2 or obs.shape[0] < 1:
            raise ValueError(f"obs must be a K x 2 matrix with K >= 1, got shape {obs.shape}")
        if np.any(obs < 0.0) or np.any(obs > 1.0) or not np.all(np.isfinite(obs)):
            raise ValueError("obs entries must be probabilities in [0, 1]")
        colsum = obs.sum(axis=0)
        if np.any(np.abs(colsum - 1.0) > OBS_SUM_TOL):
            raise ValueError(f"each obs column must sum to 1, got {colsum.tolist()}")
        B = float(self.throughput)
        if not (B > 0.0 and np.isfinite(B)):
            raise ValueError(f"throughput must be positive, got {B}")
        obs.setflags(write=False)
        object.__setattr__(self, "p01", p01)
        object.__setattr__(self, "p11", p11)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "throughput", B)

    @property
    def K(self) -> int:
        return self.obs.shape[0]

    @property
    def obs1(self) -> np.ndarray:
        return self.obs[:, 1]

    @property
    def obs0(self) -> np.ndarray:
        return self.obs[:, 0]

    @property
    def p_d(self) -> float:
        return self.p11 - self.p01

    @property
    def omega_s(self) -> float:
        return self.p01 / (1.0 + self.p01 - self.p11)

    def with_throughput(self, throughput: float) -> "ChannelParams":
        return ChannelParams(self.p01, self.p11, self.obs, throughput)

    def to_dict(self) -> dict:
        return {
            "p01": self.p01,
            "p11": self.p11,
            "obs": self.obs.tolist(),
            "throughput": self.throughput,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelParams":
        return cls(d["p01"], d["p11"], d["obs"], d.get("throughput", 1.0))

    def __eq__(self, other):
        if not isinstance(other, ChannelParams):
            return NotImplemented
        return (
            self.p01 == other.p01
            and self.p11 == other.p11
            and self.throughput == other.throughput
            and self.obs.shape == other.obs.shape
            and bool(np.all(self.obs == other.obs))
        )

    def __hash__(self):
        return hash((self.p01, self.p11, self.throughput, self.obs.tobytes()))

    def __repr__(self):
        return (
            f"ChannelParams(p01={self.p01!r}, p11={self.p11!r}, "
            f"obs={self.obs.tolist()!r}, throughput={self.throughput!r})"
        )


@dataclass(frozen=True, eq=False)
class ChannelBank:
    """N channels stacked column-wise so kernels can broadcast over the channel axis.

    Scalar parameters become shape ``(N,)`` arrays and the likelihood tables
    become ``(K, N)`` arrays.  Beliefs passed alongside a bank must have the
    channel axis last.
    """

    channels: tuple
    p01: np.ndarray
    p11: np.ndarray
    obs1: np.ndarray
    obs0: np.ndarray
    throughput: np.ndarray

    @classmethod
    def from_channels(cls, channels: Sequence[ChannelParams]) -> "ChannelBank":
        channels = tuple(channels)
        if not channels:
            raise ValueError("need at least one channel")
        K = channels[0].K
        if any(c.K != K for c in channels):
            raise ValueError("all channels in a bank must share the number of CQI levels")
        return cls(
            channels=channels,
            p01=np.array([c.p01 for c in channels]),
            p11=np.array([c.p11 for c in channels]),
            obs1=np.stack([c.obs1 for c in channels], axis=1),
            obs0=np.stack([c.obs0 for c in channels], axis=1),
            throughput=np.array([c.throughput for c in channels]),
        )

    def take(self, idx) -> "ChannelBank":
        """Bank whose column j holds channel ``idx[j]``; columns may repeat."""
        idx = np.asarray(idx, dtype=np.int64)
        return ChannelBank(
            channels=tuple(self.channels[i] for i in idx),
            p01=self.p01[idx],
            p11=self.p11[idx],
            obs1=self.obs1[:, idx],
            obs0=self.obs0[:, idx],
            throughput=self.throughput[idx],
        )

    @property
    def N(self) -> int:
        return len(self.channels)

    @property
    def K(self) -> int:
        return self.obs1.shape[0]

    @property
    def p_d(self) -> np.ndarray:
        return self.p11 - self.p01

    @property
    def omega_s(self) -> np.ndarray:
        return self.p01 / (1.0 + self.p01 - self.p11)


@dataclass(frozen=True)
class DerivedChannelQuantities:
    p_d: float
    omega_s: float
    pos_signal_set: frozenset
    neg_signal_set: frozenset
    sigma_pos: float


def derived(ch: ChannelParams) -> DerivedChannelQuantities:
    """p_d, steady state, and the 1-based positive / negative CQI signal sets."""
    diff = ch.obs1 - ch.obs0
    pos = frozenset(int(i) + 1 for i in np.flatnonzero(diff >= 0.0))
    neg = frozenset(int(i) + 1 for i in np.flatnonzero(diff < 0.0))
    return DerivedChannelQuantities(ch.p_d, ch.omega_s, pos, neg, positive_signal_mass(ch))


def positive_signal_mass(ch: ChannelParams) -> float:
    """Sum of ``p_{i,1} - p_{i,0}`` over the CQI levels where it is nonnegative."""
    diff = ch.obs1 - ch.obs0
    return float(np.sum(diff[diff >= 0.0]))


# --------------------------------------------------------------------------
# Broadcasting kernels
# --------------------------------------------------------------------------


def _passive(p, w):
    return p.p11 * w + p.p01 * (1.0 - w)


def _steady(p):
    return p.p01 / (1.0 + p.p01 - p.p11)


def _signed_power(base, k):
    """``base ** k`` for integer-valued float ``k``.

    libm's pow is several times slower on negative bases, so the magnitude
    and the sign (odd powers of a negative base) are handled separately.
    """
    mag = np.power(np.abs(base), k)
    return np.where((base < 0.0) & (np.fmod(k, 2.0) == 1.0), -mag, mag)


def _passive_k(p, w, k):
    # k may contain np.inf (permanently passive), which maps to the steady state
    w, k, ws, pd = np.broadcast_arrays(
        np.asarray(w, dtype=float), np.asarray(k, dtype=float), _steady(p), p.p11 - p.p01
    )
    out = np.where(k == 0.0, w, ws)
    sel = (k != 0.0) & np.isfinite(k)
    if np.any(sel):
        out[sel] = ws[sel] + _signed_power(pd[sel], k[sel]) * (w[sel] - ws[sel])
    return out


def _obs_prob(p, w, i):
    return p.obs1[i] * w + p.obs0[i] * (1.0 - w)


def _bayes_lik(w, lik1, lik0):
    num = lik1 * w
    den = num + lik0 * (1.0 - w)
    safe = np.where(den > 0.0, den, 1.0)
    return np.where(lik1 == lik0, w, np.where(den > 0.0, num / safe, w))


def _active_lik(p, w, lik1, lik0):
    """Post-observation belief for given likelihoods.

    Uninformative levels reduce exactly to the passive map.  Zero-probability
    levels also fall back to the passive map; such branches carry zero weight
    wherever the kernels use them.
    """
    den = lik1 * w + lik0 * (1.0 - w)
    num = p.p11 * lik1 * w + p.p01 * lik0 * (1.0 - w)
    safe = np.where(den > 0.0, den, 1.0)
    passive = _passive(p, w)
    return np.where((lik1 == lik0) | (den <= 0.0), passive, num / safe)


def _active(p, w, i):
    return _active_lik(p, w, p.obs1[i], p.obs0[i])


# --------------------------------------------------------------------------
# Public scalar API
# --------------------------------------------------------------------------


def check_belief(w, name="belief") -> float:
    """Validate a belief, absorbing rounding overshoot up to ``CLAMP_TOL``."""
    w = float(w)
    if not np.isfinite(w) or w < -CLAMP_TOL or w > 1.0 + CLAMP_TOL:
        raise ValueError(f"{name} must lie in [0, 1], got {w!r}")
    return min(max(w, 0.0), 1.0)


def _check_cqi(ch: ChannelParams, cqi) -> int:
    i = int(cqi)
    if i != cqi or not (1 <= i <= ch.K):
        raise ValueError(f"CQI level must be an integer in [1, {ch.K}], got {cqi!r}")
    return i - 1


def passive_update(ch: ChannelParams, w: float) -> float:
    """One passive step: ``p11 * w + p01 * (1 - w)``."""
    w = check_belief(w)
    return check_belief(_passive(ch, w))


def passive_update_k(ch: ChannelParams, w: float, k: int) -> float:
    """Closed-form belief after ``k`` consecutive passive steps."""
    w = check_belief(w)
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    return check_belief(float(_passive_k(ch, w, int(k))))


def steady_state(ch: ChannelParams) -> float:
    return ch.omega_s


def observation_prob(ch: ChannelParams, w: float, cqi: int) -> float:
    """Probability of observing CQI level ``cqi`` at belief ``w``."""
    w = check_belief(w)
    i = _check_cqi(ch, cqi)
    return float(_obs_prob(ch, w, i))


def bayes_filter(ch: ChannelParams, w: float, cqi: int) -> float:
    """Posterior probability of the good state after observing ``cqi``."""
    w = check_belief(w)
    i = _check_cqi(ch, cqi)
    lik1, lik0 = ch.obs1[i], ch.obs0[i]
    if lik1 * w + lik0 * (1.0 - w) <= 0.0:
        raise ZeroLikelihood(f"CQI level {cqi} has zero probability at belief {w!r}")
    return check_belief(float(_bayes_lik(w, lik1, lik0)))


def active_update(ch: ChannelParams, w: float, cqi: int) -> float:
    """Next-slot belief after activating the channel and observing ``cqi``."""
    w = check_belief(w)
    i = _check_cqi(ch, cqi)
    lik1, lik0 = ch.obs1[i], ch.obs0[i]
    if lik1 * w + lik0 * (1.0 - w) <= 0.0:
        raise ZeroLikelihood(f"CQI level {cqi} has zero probability at belief {w!r}")
    return check_belief(float(_active_lik(ch, w, lik1, lik0)))
