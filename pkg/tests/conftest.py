import numpy as np
import pytest
from scipy.linalg import solve_continuous_are

import switchquant as sq

# Two-mode benchmark system used throughout the suite.  The gains minimize
# the standard quadratic cost with identity weights, which is what makes the
# cross-mode loops unstable in the documented way.
A1 = np.array([[1.0, -2.0], [-3.0, 2.0]]) / 6.0
B1 = np.array([[-4.0], [3.0]]) / 6.0
A2 = np.array([[1.0, -5.0], [1.0, 2.0]])
B2 = np.array([[1.0], [-1.0]])
SAMPLING_PERIOD = 0.025
P_BENCH = np.array([[2.9171, 0.3489], [0.3489, 3.6256]])


def lqr(A, B):
    X = solve_continuous_are(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))
    return -B.T @ X


@pytest.fixture(scope="session")
def bench_plant():
    return sq.Plant(
        modes=(sq.Mode(index=0, A=A1, B=B1, K=lqr(A1, B1)),
               sq.Mode(index=1, A=A2, B=B2, K=lqr(A2, B2))),
        sampling_period=SAMPLING_PERIOD)


@pytest.fixture(scope="session")
def bench_partition():
    return sq.build_log_quantizer(deadzone=0.08, ratio=1.2,
                                  levels_per_axis=38, dim=2)


@pytest.fixture(scope="session")
def bench_cert():
    return sq.LyapunovCertificate(matrix=P_BENCH, decrease_rate=1.0,
                                  outer_radius=68.6, inner_radius=0.175)


@pytest.fixture(scope="session")
def bench_bounds(bench_plant, bench_partition, bench_cert):
    return sq.stability_bounds(bench_plant, bench_partition, bench_cert)
