import numpy as np
import pytest

from awi_dsa.belief import ChannelBank, passive_update_k
from awi_dsa.index import first_crossing_time
from awi_dsa.validation import (
    SUITES,
    PropertyResult,
    brute_crossing_times,
    convergence_study,
    random_bank,
    random_channel,
    run_suite,
)


class TestPropertyResult:
    def test_counts(self):
        p = PropertyResult("x")
        assert not p.passed
        p.record(1e-12, tol=1e-10)
        assert p.passed
        p.record_many([0.0, 2e-10, np.nan], tol=1e-10)
        assert (p.checked, p.failures) == (4, 2)
        assert not p.to_dict()["passed"]

    def test_nan_counts_as_failure(self):
        p = PropertyResult("x")
        p.record(float("nan"))
        assert p.failures == 1


class TestHelpers:
    def test_random_channel_sign(self, rng):
        for _ in range(30):
            assert random_channel(rng, sign=1).p_d > 0
            assert random_channel(rng, sign=-1).p_d < 0

    def test_brute_crossing_agrees_with_scalar(self, rng):
        chans = [random_channel(rng, min_gap=1e-3) for _ in range(300)]
        bank = ChannelBank.from_channels(chans)
        w = rng.uniform(size=300)
        thr = rng.uniform(size=300)
        got = brute_crossing_times(bank, w, thr)
        for j, ch in enumerate(chans):
            assert got[j] == first_crossing_time(ch, w[j], thr[j])

    def test_random_bank_size(self, rng):
        assert random_bank(rng, 25).p01.shape == (25,)

    def test_brute_crossing_small_cases(self):
        from awi_dsa.belief import ChannelParams
        ch = ChannelParams(0.1, 0.9, [[0.9, 0.1], [0.1, 0.9]])
        bank = ChannelBank.from_channels([ch, ch, ch])
        got = brute_crossing_times(bank, np.array([0.6, 0.1, 0.2]), np.array([0.5, 0.7, 0.2]), cap=50)
        assert got[0] == 0 and got[2] == 1
        assert np.isinf(got[1])
        assert passive_update_k(ch, 0.1, 3) > 0.1


class TestSuites:
    @pytest.mark.parametrize("name", SUITES)
    def test_small_budget_passes(self, name):
        rep = run_suite(name, seed=3, budget=0.1)
        assert rep.suite == name
        failing = [p.name for p in rep.properties if not p.passed]
        assert not failing, failing

    def test_reports_are_seed_deterministic(self):
        a = run_suite("crossing", seed=5, budget=0.05).to_dict()
        b = run_suite("crossing", seed=5, budget=0.05).to_dict()
        a.pop("seconds"), b.pop("seconds")
        assert a == b

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            run_suite("everything")


class TestConvergenceStudy:
    def test_shapes_and_bound(self):
        st = convergence_study(np.random.default_rng(0), pairs=4, T=9, tol=1e-6, max_n=3)
        assert st.index.shape == st.errors.shape == st.denominators.shape == (4, 4)
        A = st.decay_constant()
        steps = np.abs(np.diff(st.index, axis=1))
        n = np.arange(3)
        assert np.all(steps <= A[:, None] * st.betas[:, None] ** (n + 1) + 1e-12)
