"""Monte-Carlo evaluation of channel-selection policies.

Each run owns three random substreams derived from ``(master_seed, run_id,
tag)``: channel-state evolution, CQI sampling and policy randomness.  Every
policy consumes the same streams for a given run, so policy comparisons are
paired.  Runs are simulated in fixed-size batches; the batch layout does not
depend on the number of worker threads, so results are reproducible bit for
bit across thread counts.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import ChannelBank, ChannelParams, check_belief
from .index import _check_beta
from .policy import PolicyKind, PolicySpec, TieBreak, _update_beliefs, channel_indices, top_m

STREAM_STATE = 0
STREAM_OBS = 1
STREAM_POLICY = 2

STEADY_STATE = "steady-state"
DEFAULT_HORIZON = 100
DEFAULT_RUNS = 10_000
BATCH_SIZE = 1000


@dataclass(frozen=True)
class SystemConfig:
    channels: tuple
    M: int = 1
    beta: float = 0.5
    horizon: int = DEFAULT_HORIZON
    initial_belief: object = STEADY_STATE   # STEADY_STATE or a tuple of N beliefs
    runs: int = DEFAULT_RUNS
    master_seed: int = 0
    name: str = ""

    def __post_init__(self):
        channels = tuple(self.channels)
        object.__setattr__(self, "channels", channels)
        N = len(channels)
        if N < 2:
            raise ValueError("need at least two channels")
        if not (1 <= self.M < N):
            raise ValueError(f"need 1 <= M < N, got M={self.M}, N={N}")
        _check_beta(self.beta)
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise ValueError(f"runs must be a positive integer, got {self.runs!r}")
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.initial_belief != STEADY_STATE:
            init = tuple(check_belief(x, "initial belief") for x in self.initial_belief)
            if len(init) != N:
                raise ValueError(f"{len(init)} initial beliefs for {N} channels")
            object.__setattr__(self, "initial_belief", init)

    @property
    def N(self) -> int:
        return len(self.channels)

    def initial_beliefs(self) -> np.ndarray:
        if self.initial_belief == STEADY_STATE:
            return np.array([c.omega_s for c in self.channels])
        return np.array(self.initial_belief, dtype=float)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "channels": [c.to_dict() for c in self.channels],
            "M": self.M,
            "beta": self.beta,
            "horizon": self.horizon,
            "initial_belief": self.initial_belief if self.initial_belief == STEADY_STATE
            else list(self.initial_belief),
            "runs": self.runs,
            "master_seed": int(self.master_seed),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EpisodeTrace:
    """Per-slot record of one run; ``observations`` is 0 on passive channels."""

    states: np.ndarray        # (T, N) int8, state during slot t
    actions: np.ndarray       # (T, N) bool
    observations: np.ndarray  # (T, N) int, 1-based CQI
    rewards: np.ndarray       # (T,)
    beliefs: np.ndarray       # (T, N), belief used for the decision in slot t


@dataclass
class RunStats:
    policy: PolicySpec
    mean_return: float
    std_err: float
    runs: int
    fingerprint: str
    per_run_returns: np.ndarray | None = field(default=None, repr=False)
    # mean_curve[t-1] is the mean discounted return truncated after slot t
    mean_curve: np.ndarray | None = field(default=None, repr=False)


def paired_difference(a: RunStats, b: RunStats) -> tuple[float, float]:
    """Mean and standard error of the per-run difference ``a - b``."""
    if a.per_run_returns is None or b.per_run_returns is None:
        raise ValueError("paired comparison needs per-run returns")
    d = a.per_run_returns - b.per_run_returns
    n = d.shape[0]
    se = float(np.std(d, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return math.fsum(d) / n, se


# --------------------------------------------------------------------------
# Random streams and single-step samplers
# --------------------------------------------------------------------------


def stream(master_seed: int, run_id: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(run_id), int(tag)])))


def _next_state(p01, p11, state, u):
    return u < np.where(state, p11, p01)


def _cqi_from_uniform(cum1, cum0, state, u):
    """Inverse-CDF CQI draw; ``cum*`` are (K, ...) cumulative likelihoods."""
    cum = np.where(state, cum1, cum0)
    return 1 + np.sum(u >= cum[:-1], axis=0)


def sample_initial(ch: ChannelParams, initial_belief: float, rng: np.random.Generator):
    """True initial state drawn from the prior, and the matching belief."""
    w = check_belief(initial_belief, "initial belief")
    return int(rng.random() < w), w


def step_state(ch: ChannelParams, state: int, rng: np.random.Generator) -> int:
    if state not in (0, 1):
        raise ValueError(f"state must be 0 or 1, got {state!r}")
    return int(_next_state(ch.p01, ch.p11, bool(state), rng.random()))


def sample_cqi(ch: ChannelParams, state: int, rng: np.random.Generator) -> int:
    if state not in (0, 1):
        raise ValueError(f"state must be 0 or 1, got {state!r}")
    cum1 = np.cumsum(ch.obs1)
    cum0 = np.cumsum(ch.obs0)
    return int(_cqi_from_uniform(cum1, cum0, bool(state), rng.random()))


# --------------------------------------------------------------------------
# Batched episode engine
# --------------------------------------------------------------------------


def _draw_streams(config: SystemConfig, run_ids):
    N, T = config.N, config.horizon
    u_init = np.empty((len(run_ids), N))
    u_state = np.empty((len(run_ids), T, N))
    u_obs = np.empty((len(run_ids), T, N))
    u_pol = np.empty((len(run_ids), T, N))
    for j, r in enumerate(run_ids):
        g = stream(config.master_seed, r, STREAM_STATE)
        u_init[j] = g.random(N)
        u_state[j] = g.random((T, N))
        u_obs[j] = stream(config.master_seed, r, STREAM_OBS).random((T, N))
        u_pol[j] = stream(config.master_seed, r, STREAM_POLICY).random((T, N))
    return u_init, u_state, u_obs, u_pol


def _simulate_batch(config: SystemConfig, policies: Sequence[PolicySpec], run_ids, want_trace=False):
    bank = ChannelBank.from_channels(config.channels)
    R, N, T = len(run_ids), config.N, config.horizon
    beta = config.beta
    u_init, u_state, u_obs, u_pol = _draw_streams(config, run_ids)
    w0 = config.initial_beliefs()
    s0 = u_init < w0
    disc = np.power(beta, np.arange(T, dtype=float))
    cum1 = np.cumsum(bank.obs1, axis=0)[:, None, :]
    cum0 = np.cumsum(bank.obs0, axis=0)[:, None, :]
    B = bank.throughput

    returns, slot_sums, traces = [], [], []
    for pol in policies:
        needs_u = pol.kind is PolicyKind.RANDOM or pol.tie_break is TieBreak.RANDOM
        s = s0.copy()
        w = np.tile(w0, (R, 1))
        G = np.zeros(R)
        per_slot = np.zeros(T)
        if want_trace:
            tr = EpisodeTrace(
                states=np.zeros((T, R, N), dtype=np.int8),
                actions=np.zeros((T, R, N), dtype=bool),
                observations=np.zeros((T, R, N), dtype=np.int64),
                rewards=np.zeros((T, R)),
                beliefs=np.zeros((T, R, N)),
            )
        for t in range(T):
            u = u_pol[:, t, :] if needs_u else None
            idx = channel_indices(pol, bank, w, beta, u)
            act = top_m(idx, config.M, pol.tie_break, u)
            reward = np.sum(np.where(act & s, B, 0.0), axis=1)
            G = G + disc[t] * reward
            per_slot[t] = disc[t] * np.sum(reward)
            cqi = _cqi_from_uniform(cum1, cum0, s, u_obs[:, t, :])
            if want_trace:
                tr.states[t] = s
                tr.actions[t] = act
                tr.observations[t] = np.where(act, cqi, 0)
                tr.rewards[t] = reward
                tr.beliefs[t] = w
            w = _update_beliefs(bank, w, act, cqi)
            s = _next_state(bank.p01, bank.p11, s, u_state[:, t, :])
        returns.append(G)
        slot_sums.append(per_slot)
        if want_trace:
            traces.append(tr)
    return returns, slot_sums, traces


def _trace_for_run(tr: EpisodeTrace, j: int) -> EpisodeTrace:
    return EpisodeTrace(
        states=tr.states[:, j].copy(),
        actions=tr.actions[:, j].copy(),
        observations=tr.observations[:, j].copy(),
        rewards=tr.rewards[:, j].copy(),
        beliefs=tr.beliefs[:, j].copy(),
    )


def run_episode(config: SystemConfig, policy: PolicySpec, run_id: int, want_trace: bool = False):
    """Discounted return of one run, and optionally its per-slot trace."""
    if not (0 <= run_id < config.runs):
        raise ValueError(f"run_id must be in [0, {config.runs}), got {run_id}")
    returns, _, traces = _simulate_batch(config, [policy], [run_id], want_trace)
    G = float(returns[0][0])
    return (G, _trace_for_run(traces[0], 0)) if want_trace else (G, None)


def run_experiment(config: SystemConfig, policies: Sequence[PolicySpec], threads: int = 1,
                   batch_size: int = BATCH_SIZE, keep_returns: bool = True) -> list[RunStats]:
    """Average discounted return of each policy over ``config.runs`` paired runs."""
    policies = list(policies)
    if not policies:
        raise ValueError("need at least one policy")
    batches = [list(range(s, min(s + batch_size, config.runs))) for s in range(0, config.runs, batch_size)]

    def work(ids):
        return _simulate_batch(config, policies, ids)[:2]

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, batches))
    else:
        results = [work(b) for b in batches]

    fp = config.fingerprint()
    out = []
    for p, pol in enumerate(policies):
        G = np.concatenate([res[0][p] for res in results])
        n = G.shape[0]
        mean = math.fsum(G.tolist()) / n
        se = float(np.std(G, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        # batch partial sums are added in run order, so the curve does not depend on threads
        slot_total = np.zeros(config.horizon)
        for res in results:
            slot_total = slot_total + res[1][p]
        curve = np.cumsum(slot_total) / n
        out.append(RunStats(pol, mean, se, n, fp, G if keep_returns else None, curve))
    return out
