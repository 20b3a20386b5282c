import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awi_dsa.belief import (
    ChannelParams,
    active_update,
    observation_prob,
    passive_update,
    steady_state,
)
from awi_dsa.index import (
    CROSS_TOL,
    INFINITE,
    MAX_ITERATIONS,
    IndexKind,
    affine_value,
    approx_action_values,
    approx_whittle,
    approx_whittle_curve,
    beta_bound,
    expansion_coeffs,
    first_crossing_time,
    imperfect_whittle,
    system_beta_bound,
)
from awi_dsa.presets import PRESET_NAMES, preset_channels

from conftest import INFORMATIVE, UNINFORMATIVE, beliefs, channels, make_obs, random_channel


# ---------------------------------------------------------------------------
# Independent scalar re-implementations used as oracles
# ---------------------------------------------------------------------------


def brute_crossing(ch, w, thr, cap=10_000, margin=CROSS_TOL):
    x = w
    for k in range(cap + 1):
        if x > thr + margin:
            return k
        x = passive_update(ch, x)
    return INFINITE


def brute_value_tree(ch, beta, w, thr, n):
    """Recursive (k, a) by explicit per-node expansion, no vectorisation."""
    L = brute_crossing(ch, w, thr)
    if L == INFINITE:
        return 1.0 / (1.0 - beta), 0.0
    omega = w
    for _ in range(L):
        omega = passive_update(ch, omega)
    k = (1.0 - beta ** L) / (1.0 - beta)
    a = beta ** L * omega
    if n == 0:
        return k, a
    for i in range(1, ch.K + 1):
        p = observation_prob(ch, omega, i)
        if p == 0.0:
            continue
        kc, ac = brute_value_tree(ch, beta, active_update(ch, omega, i), thr, n - 1)
        k += beta ** (L + 1) * p * kc
        a += beta ** (L + 1) * p * ac
    return k, a


def brute_index(ch, beta, w, n):
    """Solve the equal-action-value condition for m directly."""
    kp, ap = brute_value_tree(ch, beta, passive_update(ch, w), w, n)
    sk = sa = 0.0
    for i in range(1, ch.K + 1):
        p = observation_prob(ch, w, i)
        if p > 0.0:
            ki, ai = brute_value_tree(ch, beta, active_update(ch, w, i), w, n)
            sk += p * ki
            sa += p * ai
    # active:  w + beta*(sk*m + sa)   passive: m + beta*(kp*m + ap)
    return (w + beta * (sa - ap)) / (1.0 + beta * (kp - sk)) * ch.throughput


# ---------------------------------------------------------------------------


class TestFirstCrossingTime:
    ch = ChannelParams(0.1, 0.9, INFORMATIVE)

    def test_worked_example(self):
        # 0.2 -> 0.26 -> 0.308 -> 0.3464 -> 0.37712 -> 0.401696
        assert first_crossing_time(self.ch, 0.2, 0.4) == 5

    def test_immediate(self):
        assert first_crossing_time(self.ch, 0.5, 0.4) == 0

    def test_unreachable_threshold(self):
        assert first_crossing_time(self.ch, 0.2, 0.6) is INFINITE

    def test_threshold_equal_to_belief_never_immediate(self):
        assert first_crossing_time(self.ch, 0.3, 0.3) >= 1

    def test_belief_at_steady_state_does_not_cross_itself(self):
        ws = steady_state(self.ch)
        assert first_crossing_time(self.ch, ws, ws) is INFINITE

    def test_negative_correlation_is_zero_one_or_infinite(self):
        ch = ChannelParams(0.8, 0.2, INFORMATIVE)
        assert first_crossing_time(ch, 0.1, 0.6) == 1
        assert first_crossing_time(ch, 0.9, 0.6) == 0
        assert first_crossing_time(ch, 0.7, 0.7) is INFINITE

    def test_matches_brute_force(self, rng):
        for _ in range(2000):
            ch = random_channel(rng, K=2)
            w, thr = rng.uniform(size=2)
            assert first_crossing_time(ch, w, thr) == brute_crossing(ch, w, thr)

    def test_agrees_with_strict_definition_away_from_margin(self, rng):
        for _ in range(2000):
            ch = random_channel(rng, K=2)
            w, thr = rng.uniform(size=2)
            strict = brute_crossing(ch, w, thr, margin=0.0)
            # the margin only matters for trajectories ending within CROSS_TOL of thr
            if strict != INFINITE:
                x = w
                for _ in range(strict):
                    x = passive_update(ch, x)
                if x - thr <= CROSS_TOL:
                    continue
            assert first_crossing_time(ch, w, thr) == strict

    def test_near_boundary_hits(self):
        ch = ChannelParams(0.05, 0.95, INFORMATIVE)
        w = 0.1
        traj = [w]
        for _ in range(30):
            traj.append(passive_update(ch, traj[-1]))
        for k, x in enumerate(traj[1:], start=1):
            thr = x - 2e-12
            assert first_crossing_time(ch, w, thr) == brute_crossing(ch, w, thr)
            thr = x + 2e-12
            assert first_crossing_time(ch, w, thr) == brute_crossing(ch, w, thr)


class TestExpansionCoeffs:
    def test_worked_example(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        c = expansion_coeffs(ch, 0.2, 0.2, 0.4)
        assert c.L == 5
        assert c.b1 == pytest.approx(1.2496, abs=1e-12)
        assert c.b2 == pytest.approx(0.00032, abs=1e-15)
        assert c.Omega == pytest.approx(0.401696, abs=1e-12)
        p2 = 0.9 * 0.401696 + 0.1 * (1 - 0.401696)
        assert c.b3[1] == pytest.approx(0.2 ** 6 * p2, rel=1e-12)
        assert c.f[1] == pytest.approx(active_update(ch, c.Omega, 2), abs=1e-15)

    def test_infinite_crossing(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        c = expansion_coeffs(ch, 0.3, 0.2, 0.6)
        assert c.L is INFINITE
        assert c.b1 == pytest.approx(1 / 0.7)
        assert c.b2 == 0.0 and c.b3 == (0.0, 0.0)
        assert c.Omega is None and c.f is None

    def test_immediate_crossing(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        c = expansion_coeffs(ch, 0.3, 0.7, 0.5)
        assert (c.L, c.b1, c.b2, c.Omega) == (0, 0.0, 1.0, 0.7)

    @settings(max_examples=100, deadline=None)
    @given(channels(), st.floats(0.05, 0.95), beliefs, beliefs)
    def test_probability_mass(self, ch, beta, w, thr):
        c = expansion_coeffs(ch, beta, w, thr)
        if c.L is not INFINITE:
            assert sum(c.b3) == pytest.approx(beta ** (c.L + 1), rel=1e-9)
            assert c.b1 + c.b2 / beta * beta == pytest.approx(c.b1 + beta ** c.L)


class TestAffineValue:
    def test_infinite_region(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        for n in range(4):
            v = affine_value(ch, 0.4, 0.2, 0.6, n)
            assert v.k == pytest.approx(1 / 0.6) and v.a == 0.0

    def test_immediate_n0(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        v = affine_value(ch, 0.4, 0.7, 0.5, 0)
        assert (v.k, v.a) == (0.0, 0.7)
        assert v(3.0) == 0.7

    def test_matches_recursive_tree(self, rng):
        for _ in range(100):
            ch = random_channel(rng)
            beta = rng.uniform(0.05, 0.95)
            w, thr = rng.uniform(size=2)
            n = int(rng.integers(0, 4))
            v = affine_value(ch, beta, w, thr, n)
            k, a = brute_value_tree(ch, beta, w, thr, n)
            assert v.k == pytest.approx(k, rel=1e-10, abs=1e-12)
            assert v.a == pytest.approx(a, rel=1e-10, abs=1e-12)

    def test_one_step_truncation_bound(self, rng):
        for _ in range(300):
            ch = random_channel(rng)
            beta = rng.uniform(0.05, 0.95)
            w, thr = rng.uniform(size=2)
            v0 = affine_value(ch, beta, w, thr, 0)
            v1 = affine_value(ch, beta, w, thr, 1)
            assert abs(v1.k - v0.k) <= beta / (1 - beta) * beta ** 0 + 1e-12
            assert abs(v1.a - v0.a) <= beta + 1e-12

    def test_deterministic(self, rng):
        ch = random_channel(rng, K=3)
        a = affine_value(ch, 0.7, 0.31, 0.45, 5)
        b = affine_value(ch, 0.7, 0.31, 0.45, 5)
        assert a == b

    def test_depth_cap(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        with pytest.raises(ValueError, match="cap"):
            affine_value(ch, 0.5, 0.3, 0.3, MAX_ITERATIONS + 1)
        with pytest.raises(ValueError):
            affine_value(ch, 0.5, 0.3, 0.3, -1)


class TestApproxWhittle:
    @pytest.mark.parametrize("n", range(5))
    def test_uninformative_gives_belief(self, n):
        ch = ChannelParams(0.2, 0.75, UNINFORMATIVE)
        grid = np.linspace(0, 1, 1001)
        vals, ok = approx_whittle_curve(ch, 0.45, grid, n)
        assert np.all(ok)
        np.testing.assert_allclose(vals, grid, rtol=0, atol=1e-12)

    def test_uninformative_scalar(self):
        ch = ChannelParams(0.8, 0.3, UNINFORMATIVE)
        assert imperfect_whittle(ch, 0.4, 0.37).value == pytest.approx(0.37, abs=1e-12)

    def test_imperfect_is_depth_zero_bitwise(self, rng):
        for _ in range(200):
            ch = random_channel(rng)
            beta = rng.uniform(0.05, 0.95)
            w = rng.uniform()
            assert imperfect_whittle(ch, beta, w) == approx_whittle(ch, beta, w, 0)

    def test_worked_example_against_independent_solve(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        r = imperfect_whittle(ch, 0.2, 0.5)
        assert r.kind is IndexKind.APPROX_WHITTLE
        assert r.value == pytest.approx(brute_index(ch, 0.2, 0.5, 0), abs=1e-12)

    def test_matches_independent_solve(self, rng):
        for _ in range(150):
            ch = random_channel(rng)
            beta = rng.uniform(0.05, 0.95)
            w = rng.uniform()
            n = int(rng.integers(0, 4))
            r = approx_whittle(ch, beta, w, n)
            if r.kind is IndexKind.APPROX_WHITTLE:
                assert r.value == pytest.approx(brute_index(ch, beta, w, n), rel=1e-8, abs=1e-10)

    def test_solved_index_equalises_action_values(self, rng):
        for _ in range(300):
            ch = random_channel(rng)
            beta = rng.uniform(0.05, 0.95)
            w = rng.uniform()
            n = int(rng.integers(0, 4))
            r = approx_whittle(ch, beta, w, n)
            if r.kind is IndexKind.APPROX_WHITTLE:
                act, pas = approx_action_values(ch, beta, w, n, r.value / ch.throughput)
                assert act == pytest.approx(pas, abs=1e-9)

    def test_bounded_at_zero_belief(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE, 0.8)
        v = approx_whittle(ch, 0.2, 0.0, 2).value
        assert 0.0 <= v <= 0.8

    def test_fallback_when_denominator_is_singular(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        r = approx_whittle(ch, 0.3, 0.4, 1, eps_den=1e6)
        assert r.kind is IndexKind.FALLBACK_MYOPIC
        assert r.value == 0.4

    @settings(max_examples=60, deadline=None)
    @given(channels(), st.floats(0.05, 0.95), beliefs, beliefs, st.floats(0.1, 10.0), st.integers(0, 3))
    def test_scale_equivariance(self, ch, beta, w1, w2, c, n):
        scaled = ch.with_throughput(ch.throughput * c)
        r1, r2 = approx_whittle(ch, beta, w1, n), approx_whittle(ch, beta, w2, n)
        s1, s2 = approx_whittle(scaled, beta, w1, n), approx_whittle(scaled, beta, w2, n)
        assert s1.value == pytest.approx(c * r1.value, rel=1e-12, abs=1e-15)
        if abs(r1.value - r2.value) > 1e-9 * max(1.0, abs(r1.value)):
            assert (r1.value > r2.value) == (s1.value > s2.value)

    def test_curve_matches_scalar(self, rng):
        ch = random_channel(rng, K=3)
        grid = rng.uniform(size=20)
        vals, ok = approx_whittle_curve(ch, 0.6, grid, 2)
        for w, v, o in zip(grid, vals, ok):
            r = approx_whittle(ch, 0.6, w, 2)
            assert r.value == v
            assert (r.kind is IndexKind.APPROX_WHITTLE) == o

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_bad_discount(self, beta):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        with pytest.raises(ValueError):
            approx_whittle(ch, beta, 0.5, 1)


class TestBetaBound:
    def test_positive_correlation(self):
        ch = ChannelParams(0.1, 0.9, INFORMATIVE)
        assert beta_bound(ch) == pytest.approx(1 / (2 * 0.8 * 1.8), abs=1e-12)

    def test_uninformative_clamps(self):
        ch = ChannelParams(0.25, 0.75, UNINFORMATIVE)
        assert beta_bound(ch) == 0.5

    def test_system_one_channel(self):
        ch = ChannelParams(0.9, 0.2, INFORMATIVE)
        assert beta_bound(ch) == pytest.approx(0.2304, abs=1e-4)

    @pytest.mark.parametrize("name, expected", list(zip(PRESET_NAMES, (0.2304, 0.3968, 0.5, 0.5))))
    def test_presets(self, name, expected):
        assert system_beta_bound(preset_channels(name)) == pytest.approx(expected, abs=1e-4)

    def test_single_channel_system(self):
        ch = ChannelParams(0.3, 0.6, make_obs(0.7, 0.2))
        assert system_beta_bound([ch]) == beta_bound(ch)

    def test_empty_system(self):
        with pytest.raises(ValueError):
            system_beta_bound([])
