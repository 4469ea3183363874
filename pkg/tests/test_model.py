import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

import switchquant as sq
from switchquant.errors import StructuralError
from switchquant.model import sample_floor, sample_index

from conftest import A1, A2, B1, B2, SAMPLING_PERIOD, lqr


def make_random_plant(rng, n_modes=2, dim=2, period=0.025):
    modes = []
    for i in range(n_modes):
        A = rng.normal(size=(dim, dim))
        A *= rng.uniform(0.2, 2.0) / max(1.0, np.linalg.norm(A, 2))
        modes.append(sq.Mode(index=i, A=A, B=np.zeros((dim, 1)), K=np.zeros((1, dim))))
    return sq.Plant(modes=tuple(modes), sampling_period=period)


def random_signal(rng, horizon, n_modes=2, max_switches=4):
    if n_modes < 2:
        return sq.SwitchingSignal(initial_mode=0)
    times = np.sort(rng.uniform(0.0, horizon, size=rng.integers(0, max_switches + 1)))
    switches, mode = [], 0
    for t in times:
        mode = int((mode + 1) % n_modes)
        switches.append((float(t), mode))
    return sq.SwitchingSignal(initial_mode=0, switches=tuple(switches))


# ---------------------------------------------------------------- validation

def test_validate_benchmark_plant(bench_plant):
    report = sq.validate_plant(bench_plant)
    assert report.ok
    assert all(c.hurwitz for c in report.modes)
    assert report.dim == 2 and report.input_dim == 1


def test_validate_cross_gain_reports_unstable_eigenvalue():
    # first plant paired with the gain designed for the second one
    plant = sq.Plant(modes=(sq.Mode(0, A1, B1, lqr(A2, B2)),),
                     sampling_period=SAMPLING_PERIOD)
    report = sq.validate_plant(plant)
    assert not report.ok
    eig = report.modes[0].eigenvalues
    assert np.min(np.abs(eig.real - 4.4538)) < 1e-3


def test_validate_already_stable_open_loop():
    plant = sq.Plant(modes=(sq.Mode(0, -np.eye(2), np.zeros((2, 1)),
                                    np.zeros((1, 2))),),
                     sampling_period=1.0)
    assert sq.validate_plant(plant).ok


def test_dimension_mismatch_raises_with_mode_index():
    good = sq.Mode(0, np.eye(2), np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(StructuralError, match="mode 1"):
        sq.Plant(modes=(good, sq.Mode(1, np.eye(3), np.ones((3, 1)),
                                      np.ones((1, 3)))),
                 sampling_period=0.1)
    with pytest.raises(StructuralError, match="mode 7"):
        sq.Mode(7, np.eye(2), np.ones((2, 1)), np.ones((1, 3)))


# ---------------------------------------------------------- switching signal

def test_signal_validation():
    with pytest.raises(StructuralError):
        sq.SwitchingSignal(0, ((1.0, 1), (0.5, 0)))   # not increasing
    with pytest.raises(StructuralError):
        sq.SwitchingSignal(0, ((1.0, 0),))            # no mode change
    sig = sq.SwitchingSignal(0, ((0.5, 1), (1.5, 0)))
    assert sig.mode_at(0.0) == 0
    assert sig.mode_at(0.5) == 1                      # right continuity
    assert sig.mode_at(1.49) == 1
    assert list(sig.modes_at(np.array([0.0, 0.5, 2.0]))) == [0, 1, 0]


def test_at_most_one_switch_per_interval():
    sig = sq.SwitchingSignal(0, ((0.01, 1), (0.015, 0)))
    assert not sig.at_most_one_switch_per_interval(SAMPLING_PERIOD)
    sig = sq.SwitchingSignal(0, ((0.01, 1), (0.03, 0)))
    assert sig.at_most_one_switch_per_interval(SAMPLING_PERIOD)
    # a switch exactly on the grid sits in no open interval
    sig = sq.SwitchingSignal(0, ((0.025, 1), (0.026, 0)))
    assert sig.at_most_one_switch_per_interval(SAMPLING_PERIOD)


def test_sample_floor_snaps_grid_values():
    for k in range(0, 900, 7):
        t = k * SAMPLING_PERIOD
        assert sample_index(t, SAMPLING_PERIOD) == k
        assert sample_floor(t + 0.6 * SAMPLING_PERIOD, SAMPLING_PERIOD) == pytest.approx(t)


# ---------------------------------------------------------- transition matrix

def test_transition_identity_at_equal_times(bench_plant):
    sig = sq.SwitchingSignal(0)
    tm = sq.transition_matrix(bench_plant, sig, 0.7, 0.7)
    assert np.array_equal(tm.value, np.eye(2))


def test_transition_single_mode_is_matrix_exponential(bench_plant):
    sig = sq.SwitchingSignal(1)
    tm = sq.transition_matrix(bench_plant, sig, 0.2, 0.9)
    assert np.allclose(tm.value, scipy.linalg.expm(0.7 * A2), rtol=1e-12)


def _ode_transition(plant, sig, t_from, t_to, rtol=1e-12):
    def rhs(t, y):
        A = plant.modes[sig.mode_at(t)].A
        return (A @ y.reshape(2, 2)).ravel()

    knots = [t_from] + [t for t, _ in sig.switches_in(t_from, t_to)] + [t_to]
    y = np.eye(2).ravel()
    for a, b in zip(knots[:-1], knots[1:]):
        sol = scipy.integrate.solve_ivp(rhs, (a, b), y, rtol=rtol, atol=1e-14)
        y = sol.y[:, -1]
    return y.reshape(2, 2)


def test_transition_one_switch_matches_ode_oracle(bench_plant):
    # one switch at the midpoint of a single sampling interval
    sig = sq.SwitchingSignal(0, ((SAMPLING_PERIOD / 2, 1),))
    tm = sq.transition_matrix(bench_plant, sig, 0.0, SAMPLING_PERIOD)
    oracle = _ode_transition(bench_plant, sig, 0.0, SAMPLING_PERIOD, rtol=1e-10)
    assert np.max(np.abs(tm.value - oracle)) <= 1e-8


def test_transition_composition_property():
    rng = np.random.default_rng(11)
    for _ in range(40):
        plant = make_random_plant(rng)
        sig = random_signal(rng, 1.0)
        t1, t2, t3 = np.sort(rng.uniform(0.0, 1.0, size=3))
        full = sq.transition_matrix(plant, sig, t1, t3).value
        left = sq.transition_matrix(plant, sig, t2, t3).value
        right = sq.transition_matrix(plant, sig, t1, t2).value
        assert np.linalg.norm(full - left @ right, 2) <= 1e-8 * (1 + np.linalg.norm(full, 2))


def test_transition_growth_and_inverse_bounds():
    # ||Phi(t,0) - I|| <= e^{Lt} - 1 and ||Phi(t,0)^-1|| <= e^{Lt}
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 1000:
        plant = make_random_plant(rng, n_modes=rng.integers(1, 4))
        drift = plant.max_drift_norm()
        for _ in range(10):
            t = rng.uniform(0.0, plant.sampling_period)
            sig = random_signal(rng, plant.sampling_period,
                                n_modes=plant.num_modes)
            phi = sq.transition_matrix(plant, sig, 0.0, t).value
            bound = np.expm1(drift * t)
            assert np.linalg.norm(phi - np.eye(2), 2) <= bound + 1e-12
            inv = np.linalg.inv(phi)
            assert np.linalg.norm(inv, 2) <= np.exp(drift * t) + 1e-12
            checked += 1


def test_transition_rejects_bad_interval(bench_plant):
    with pytest.raises(StructuralError):
        sq.transition_matrix(bench_plant, sq.SwitchingSignal(0), 1.0, 0.5)


# ------------------------------------------------------------- hold integral

def test_hold_integral_zero_duration():
    assert np.array_equal(sq.hold_integral(A1, B1, 0.0), np.zeros((2, 1)))


def test_hold_integral_zero_dynamics():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(sq.hold_integral(np.zeros((2, 2)), B, 0.7), 0.7 * B)


def test_hold_integral_matches_simpson_oracle():
    t = SAMPLING_PERIOD
    grid = np.linspace(0.0, t, 10_001)   # 1e4 panels
    vals = np.array([scipy.linalg.expm(A1 * s) @ B1 for s in grid])
    oracle = scipy.integrate.simpson(vals, x=grid, axis=0)
    assert np.max(np.abs(sq.hold_integral(A1, B1, t) - oracle)) <= 1e-10


@given(st.floats(min_value=0.0, max_value=2.0))
@settings(max_examples=40, deadline=None)
def test_hold_integral_accepts_vector_drive(t):
    vec = sq.hold_integral(A2, B2.ravel(), t)
    mat = sq.hold_integral(A2, B2, t)
    assert np.allclose(vec, mat)
