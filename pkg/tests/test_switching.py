import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import switchquant as sq
from switchquant.errors import ParameterError

from conftest import SAMPLING_PERIOD

T = SAMPLING_PERIOD


def alternating_signal(times):
    return sq.SwitchingSignal(0, tuple((t, 1 if i % 2 == 0 else 0)
                                       for i, t in enumerate(times)))


def discretized_mismatch(signal, period, horizon, dt=1e-6):
    """Brute-force sweep of the mismatch definition on a uniform grid."""
    taus = np.arange(0.0, horizon, dt)
    plant_modes = signal.modes_at(taus)
    held = signal.modes_at(np.floor(taus / period + 1e-9) * period)
    return float(np.count_nonzero(plant_modes != held)) * dt


# ------------------------------------------------------------------- profile

def test_profile_no_switches():
    prof = sq.mismatch_profile(sq.SwitchingSignal(0), T, 5.0)
    assert prof.total == 0.0
    assert prof.mu(3.3, 1.1) == 0.0
    assert prof.assumption_ok


def test_profile_single_switch_arithmetic():
    # switch at 0.01 inside [0, 0.025): mismatch lasts until the next sample
    prof = sq.mismatch_profile(alternating_signal([0.01]), T, 1.0)
    assert prof.mu(0.005) == 0.0
    assert prof.mu(0.02) == pytest.approx(0.01)      # min(t, T) - 0.01
    assert prof.mu(0.025) == pytest.approx(0.015)
    assert prof.mu(0.8) == pytest.approx(0.015)
    assert prof.mu(0.01) == 0.0
    assert prof.assumption_ok


def test_profile_intervals_stay_within_sampling_intervals():
    rng = np.random.default_rng(8)
    for _ in range(30):
        times = np.sort(rng.uniform(0.0, 1.0, size=6))
        prof = sq.mismatch_profile(alternating_signal(times), T, 1.0)
        for a, b in zip(prof.starts, prof.ends):
            k = int(np.floor(a / T + 1e-9))
            assert b <= (k + 1) * T + 1e-12


def test_profile_flags_assumption_violation():
    prof = sq.mismatch_profile(alternating_signal([0.011, 0.012]), T, 1.0)
    assert not prof.assumption_ok
    # literal measure: mode mismatches only on [0.011, 0.012): back to the
    # held mode afterwards
    assert prof.total == pytest.approx(0.001)


def test_profile_matches_discretized_oracle():
    rng = np.random.default_rng(9)
    for _ in range(25):
        count = rng.integers(1, 9)
        times = np.sort(rng.uniform(0.0, 0.9, size=count))
        times = times[np.concatenate([[True], np.diff(times) > 1e-4])]
        sig = alternating_signal(times)
        prof = sq.mismatch_profile(sig, T, 1.0)
        oracle = discretized_mismatch(sig, T, 1.0)
        assert abs(prof.total - oracle) <= 2e-6 * max(1, len(times))


def test_profile_mu_validates_order():
    prof = sq.mismatch_profile(sq.SwitchingSignal(0), T, 1.0)
    with pytest.raises(ParameterError):
        prof.mu(0.1, 0.5)


@given(st.lists(st.floats(min_value=1e-3, max_value=0.99), min_size=0,
                max_size=6),
       st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=150, deadline=None)
def test_mu_additivity(raw_times, a, b):
    times = np.unique(np.round(np.asarray(raw_times), 6))
    times = times[times > 0]
    sig = alternating_signal(times) if len(times) else sq.SwitchingSignal(0)
    prof = sq.mismatch_profile(sig, T, 1.0)
    t1, t2 = sorted((a, b))
    mid = (t1 + t2) / 2
    total = prof.mu(t2, t1)
    assert total == pytest.approx(prof.mu(mid, t1) + prof.mu(t2, mid), abs=1e-12)
    assert prof.mu(t1, t1) == 0.0


# ------------------------------------------------------------ budget checker

def test_budget_zero_mismatch_passes():
    prof = sq.mismatch_profile(sq.SwitchingSignal(0), T, 5.0)
    report = sq.check_mismatch_budget(prof, ratio=0.3, allowance=0.05)
    assert report.ok and report.first_violation is None


def test_budget_dense_mismatch_fails_small_ratio():
    # a switch in every sampling interval keeps the loop mismatched almost
    # always; ratio 0.1 must fail at the first interval end
    times = [k * T + 0.1 * T for k in range(0, 40)]
    prof = sq.mismatch_profile(alternating_signal(times), T, 1.0)
    report = sq.check_mismatch_budget(prof, ratio=0.1, allowance=0.0)
    assert not report.ok and not report.global_ok
    assert report.first_violation[0] == pytest.approx(T)


def test_budget_dwell_signals_pass_inverse_ratio(bench_plant):
    for seed in range(25):
        sig = sq.random_dwell_signal(bench_plant, 10, 0.4, 20.0, seed=seed)
        prof = sq.mismatch_profile(sig, T, 20.0)
        report = sq.check_mismatch_budget(prof, ratio=1.0 / 10, allowance=T)
        assert report.ok


def test_budget_ratio_precondition():
    prof = sq.mismatch_profile(sq.SwitchingSignal(0), T, 1.0)
    with pytest.raises(ParameterError):
        sq.check_mismatch_budget(prof, ratio=0.5, allowance=0.1, ratio_sup=0.5)


# -------------------------------------------------------------------- dwell

def test_check_dwell_cases():
    assert sq.check_dwell(sq.SwitchingSignal(0), 123.0)
    sig = alternating_signal([1.0, 1.5])
    assert not sq.check_dwell(sig, 0.6)     # gap 0.5 < 0.6
    assert sq.check_dwell(sig, 0.5)
    assert not sq.check_dwell(alternating_signal([0.4, 2.0]), 0.5)  # early switch


def test_dwell_generator_contract(bench_plant):
    for seed in range(50):
        n = int(np.random.default_rng(seed).integers(1, 20))
        sig = sq.random_dwell_signal(bench_plant, n, 0.5, 10.0, seed=seed)
        assert sq.check_dwell(sig, n * T - 1e-12)
        assert sig.at_most_one_switch_per_interval(T)


def test_dwell_generator_zero_probability(bench_plant):
    sig = sq.random_dwell_signal(bench_plant, 5, 0.0, 50.0, seed=3)
    assert sig.switches == ()


def test_dwell_generator_mean_gap(bench_plant):
    gaps = []
    for seed in range(1000):
        sig = sq.random_dwell_signal(bench_plant, 76, 0.05, 30.0, seed=seed)
        times = sig.times
        if len(times) >= 2:
            gaps.extend(np.diff(times))
    assert len(gaps) > 1000
    assert np.mean(gaps) >= 76 * T


def test_dwell_generator_deterministic(bench_plant):
    a = sq.random_dwell_signal(bench_plant, 10, 0.3, 20.0, seed=42)
    b = sq.random_dwell_signal(bench_plant, 10, 0.3, 20.0, seed=42)
    assert a.switches == b.switches


def test_dwell_generator_three_modes():
    modes = tuple(sq.Mode(i, -np.eye(2) * (i + 1), np.zeros((2, 1)),
                          np.zeros((1, 2))) for i in range(3))
    plant = sq.Plant(modes=modes, sampling_period=T)
    sig = sq.random_dwell_signal(plant, 2, 0.8, 20.0, seed=1)
    modes_seen = [m for _, m in sig.switches]
    assert len(modes_seen) > 3
    assert set(modes_seen) <= {0, 1, 2}


# -------------------------------------------------------------- adversarial

def test_adversarial_global_achieves_stated_gap():
    for n in (1, 2, 10, 76):
        sig, witness, onset = sq.adversarial_signal(n, T, slack=1e-3,
                                                    min_span=2.0, variant="global")
        assert onset is None
        assert sq.check_dwell(sig, n * T)
        prof = sq.mismatch_profile(sig, T, witness + T)
        target = witness / n - (T / n + 1e-3)
        assert prof.mu(witness) == pytest.approx(target, abs=1e-12)
        # the dwell upper bounds still hold (the construction is tight, not
        # violating): mu(t,0) < t/n at every interval end
        for e in prof.ends:
            assert prof.mu(float(e)) < e / n


def test_adversarial_anchored_achieves_stated_gap():
    for n in (1, 3, 20):
        sig, witness, onset = sq.adversarial_signal(n, T, slack=1e-3,
                                                    min_span=1.0, variant="anchored")
        assert onset is not None
        assert sq.check_dwell(sig, n * T)
        prof = sq.mismatch_profile(sig, T, witness + T)
        assert np.min(np.abs(prof.onsets - onset)) < 1e-12
        target = T + (witness - onset) / n - (T / n + 1e-3)
        assert prof.mu(witness, onset) >= target - 1e-12
        for e in prof.ends[prof.ends > onset]:
            assert prof.mu(float(e), onset) < T + (e - onset) / n


def test_adversarial_minimum_dwell_saturates_time():
    # with dwell equal to one sampling period the mismatch share approaches 1
    sig, witness, _ = sq.adversarial_signal(1, T, slack=1e-3, min_span=50.0,
                                            variant="global")
    prof = sq.mismatch_profile(sig, T, witness + T)
    assert prof.mu(witness) / witness > 0.99


def test_adversarial_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        sq.adversarial_signal(1, T, slack=0.2, min_span=1.0)   # slack >= period
    with pytest.raises(ParameterError):
        sq.adversarial_signal(1, T, slack=1e-3, min_span=1.0, variant="weird")
