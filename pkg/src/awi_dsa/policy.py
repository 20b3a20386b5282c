"""Channel-selection policies over the belief vector of N channels."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .belief import (
    ChannelBank,
    ChannelParams,
    _active_lik,
    _passive,
    active_update,
    check_belief,
    passive_update,
)
from .index import MAX_ITERATIONS, _approx_whittle, _check_beta


class PolicyKind(enum.Enum):
    MYOPIC = "myopic"
    AWI = "awi"
    RANDOM = "random"


class TieBreak(enum.Enum):
    LOWEST_INDEX = "lowest-index"
    RANDOM = "random"


_POLICY_RE = re.compile(r"^(myopic|random|awi)(?::?(\d+))?$")


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    n: int = 0
    tie_break: TieBreak = TieBreak.LOWEST_INDEX

    def __post_init__(self):
        if self.kind is PolicyKind.AWI and not (0 <= self.n <= MAX_ITERATIONS):
            raise ValueError(f"AWI iteration depth must be in [0, {MAX_ITERATIONS}], got {self.n}")

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.AWI:
            return f"awi{self.n}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str, tie_break: TieBreak = TieBreak.LOWEST_INDEX) -> "PolicySpec":
        """Parse ``myopic``, ``random``, ``awi2`` or ``awi:2``."""
        mt = _POLICY_RE.match(text.strip().lower())
        if not mt:
            raise ValueError(f"unknown policy {text!r}; expected myopic, random or awi<n>")
        name, n = mt.groups()
        if name == "awi":
            if n is None:
                raise ValueError("awi policy needs an iteration depth, e.g. awi2")
            return cls(PolicyKind.AWI, int(n), tie_break)
        if n is not None:
            raise ValueError(f"policy {name!r} takes no iteration depth")
        return cls(PolicyKind(name), 0, tie_break)


MYOPIC = PolicySpec(PolicyKind.MYOPIC)
RANDOM = PolicySpec(PolicyKind.RANDOM)


def AWI(n: int, tie_break: TieBreak = TieBreak.LOWEST_INDEX) -> PolicySpec:
    return PolicySpec(PolicyKind.AWI, n, tie_break)


def myopic_index(ch: ChannelParams, w: float) -> float:
    """Expected immediate reward ``w * B``."""
    return check_belief(w) * ch.throughput


def _awi_indices(bank: ChannelBank, beliefs: np.ndarray, beta: float, n: int) -> np.ndarray:
    # Across a batch of runs many channels share the same belief (for example
    # every run in which a channel has not been sensed yet), so the index is
    # evaluated once per distinct (channel, belief) pair and scattered back.
    if beliefs.ndim != 2:
        idx, _ = _approx_whittle(bank, beta, beliefs, n)
        return idx
    uniq, inverse, chan = [], [], []
    offset = 0
    for j in range(beliefs.shape[1]):
        u, inv = np.unique(beliefs[:, j], return_inverse=True)
        uniq.append(u)
        inverse.append(inv + offset)
        chan.append(np.full(u.shape[0], j))
        offset += u.shape[0]
    flat, _ = _approx_whittle(bank.take(np.concatenate(chan)), beta,
                              np.concatenate(uniq)[None, :], n)
    return flat[0][np.stack(inverse, axis=1)]


def channel_indices(policy: PolicySpec, bank: ChannelBank, beliefs: np.ndarray,
                    beta: float, priorities: np.ndarray | None = None) -> np.ndarray:
    """Per-channel ranking values for a batch of belief vectors, shape ``(R, N)``."""
    beliefs = np.asarray(beliefs, dtype=float)
    if policy.kind is PolicyKind.MYOPIC:
        return beliefs * bank.throughput
    if policy.kind is PolicyKind.AWI:
        return _awi_indices(bank, beliefs, beta, policy.n)
    if priorities is None:
        raise ValueError("random policy needs priorities from the policy stream")
    return np.asarray(priorities, dtype=float)


def top_m(indices: np.ndarray, M: int, tie_break: TieBreak = TieBreak.LOWEST_INDEX,
          tie_keys: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the M largest entries per row."""
    indices = np.asarray(indices, dtype=float)
    if tie_break is TieBreak.RANDOM:
        if tie_keys is None:
            raise ValueError("random tie-break needs tie keys")
        order = np.lexsort((tie_keys, -indices), axis=-1)
    else:
        order = np.argsort(-indices, axis=-1, kind="stable")
    mask = np.zeros(indices.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :M], True, axis=-1)
    return mask


def select(policy: PolicySpec, channels: Sequence[ChannelParams], beliefs: Sequence[float],
           M: int, beta: float, rng: np.random.Generator | None = None) -> frozenset:
    """Indices (0-based) of the M channels to activate this slot."""
    channels = list(channels)
    N = len(channels)
    if len(beliefs) != N:
        raise ValueError(f"{len(beliefs)} beliefs for {N} channels")
    if not (1 <= M < N):
        raise ValueError(f"need 1 <= M < N, got M={M}, N={N}")
    beta = _check_beta(beta)
    w = np.array([[check_belief(b) for b in beliefs]])
    bank = ChannelBank.from_channels(channels)
    u = None
    if policy.kind is PolicyKind.RANDOM or policy.tie_break is TieBreak.RANDOM:
        if rng is None:
            raise ValueError(f"policy {policy.label} with tie-break {policy.tie_break.value} needs an rng")
        u = rng.random((1, N))
    idx = channel_indices(policy, bank, w, beta, u)
    mask = top_m(idx, M, policy.tie_break, u)[0]
    return frozenset(int(i) for i in np.flatnonzero(mask))


def _update_beliefs(bank: ChannelBank, beliefs: np.ndarray, active: np.ndarray, cqi: np.ndarray) -> np.ndarray:
    """Vectorised belief update; ``cqi`` is 1-based and ignored on passive channels."""
    cols = np.arange(bank.N)
    level = np.where(active, cqi, 1) - 1
    lik1 = bank.obs1[level, cols]
    lik0 = bank.obs0[level, cols]
    return np.where(active, _active_lik(bank, beliefs, lik1, lik0), _passive(bank, beliefs))


def update_beliefs(channels: Sequence[ChannelParams], beliefs: Sequence[float],
                   actions, observations: Mapping[int, int]) -> tuple:
    """Next belief vector given the active set and the CQI seen on each active channel."""
    actions = frozenset(actions)
    if set(observations) != set(actions):
        raise ValueError("observations must cover exactly the active channels")
    out = []
    for n, (ch, w) in enumerate(zip(channels, beliefs)):
        if n in actions:
            out.append(active_update(ch, w, observations[n]))
        else:
            out.append(passive_update(ch, w))
    return tuple(out)
