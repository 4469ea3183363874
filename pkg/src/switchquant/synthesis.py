"""Randomized gradient synthesis of a common quadratic Lyapunov matrix.

The algorithm searches for a positive-definite ``P`` such that, for every
mode run in closed loop with its own quantized feedback, the function
``V(x) = x' P x`` decays at rate ``C ||x||^2`` everywhere in the working
annulus between an inner ball (where the finite quantizer can no longer
force decrease) and an outer ball (the analysis region).  States paired
with their cells are sampled on cell faces and on the two ball boundaries;
whenever the sampled flow violates the decrease condition, ``P`` takes a
projected gradient step sized to clear the violation by a fixed margin.
A posteriori, :func:`check_assumption4` verifies the decrease property of
any candidate certificate on a deterministic grid plus random samples.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (CertificateError, ParameterError, StructuralError,
                     SynthesisError)
from .linalg import expm, propagators, spectral_norm
from .model import Plant, hold_integral
from .quantizer import QuantizerPartition, cells_covering_ellipsoid, quantize_batch

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning knobs of the randomized synthesis.

    ``outer_ball``/``inner_ball`` are the radii of the enforcement annulus;
    ``step_margin`` (with ``margin_floor`` below it) sets both the
    overshoot of each gradient step and the eigenvalue floor
    ``sqrt((step_margin^2 - margin_floor^2) / n)`` used by the projection.
    """

    outer_ball: float
    inner_ball: float
    decrease_rate: float = 1.0
    step_margin: float = 0.1
    margin_floor: float = 0.05
    samples_per_run: int = 100_000
    time_samples: int = 5
    seed: int = 0
    max_runs: int = 50
    initial_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.outer_ball > self.inner_ball > 0:
            raise ParameterError("need outer_ball > inner_ball > 0")
        if not self.step_margin > self.margin_floor > 0:
            raise ParameterError("need step_margin > margin_floor > 0")
        if self.decrease_rate <= 0:
            raise ParameterError("decrease rate must be positive")
        if self.time_samples < 1 or self.samples_per_run < 1 or self.max_runs < 1:
            raise ParameterError("sample counts and run budget must be positive")

    def eigenvalue_floor(self, dim: int) -> float:
        return float(np.sqrt((self.step_margin ** 2 - self.margin_floor ** 2) / dim))


@dataclass(frozen=True)
class LyapunovCertificate:
    """Quadratic certificate ``V(x) = x' P x`` with decrease rate and radii.

    ``outer_radius`` R and ``inner_radius`` r parametrize the level sets

    * outer:  ``{x : V(x) <= R^2 lambda_max(P)}`` (smallest level set
      containing the ball of radius R),
    * inner:  ``{x : V(x) <= r^2 lambda_min(P)}`` (largest level set
      contained in the ball of radius r).
    """

    matrix: np.ndarray
    decrease_rate: float
    outer_radius: float
    inner_radius: float
    lambda_max: float = 0.0
    lambda_min: float = 0.0

    def __post_init__(self):
        P = np.array(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise StructuralError(f"certificate matrix must be square, got {P.shape}")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise StructuralError("certificate matrix must be symmetric")
        P = (P + P.T) / 2.0
        P.setflags(write=False)
        w = np.linalg.eigvalsh(P)
        if w[0] <= 0:
            raise StructuralError(f"certificate matrix must be positive definite "
                                  f"(min eigenvalue {w[0]:.3g})")
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "lambda_min", float(w[0]))
        object.__setattr__(self, "lambda_max", float(w[-1]))
        if not (self.outer_radius > 0 and self.inner_radius > 0):
            raise StructuralError("certificate radii must be positive")
        if self.decrease_rate <= 0:
            raise StructuralError("decrease rate must be positive")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def level_outer(self) -> float:
        return self.outer_radius ** 2 * self.lambda_max

    @property
    def level_inner(self) -> float:
        return self.inner_radius ** 2 * self.lambda_min

    def value(self, x: np.ndarray) -> np.ndarray:
        """``V`` at one state or at each row of a stack of states."""
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            return float(X @ self.matrix @ X)
        return np.einsum("ij,jk,ik->i", X, self.matrix, X)

    def admits_expansion(self, level_expansion: float) -> bool:
        """Whether the inner level set scaled by ``level_expansion`` still
        fits strictly inside the outer level set."""
        return (level_expansion ** 2 * self.level_inner) < self.level_outer


class RoundRobin:
    """Mode scheduler cycling through ``0..count-1``; every mode recurs in
    every window of ``count`` consecutive indices."""

    def __init__(self, count: int):
        if count < 1:
            raise ParameterError("scheduler needs at least one mode")
        self.count = count

    def __call__(self, k: int) -> int:
        return k % self.count


def flow(A: np.ndarray, B: np.ndarray, x0: np.ndarray, u: np.ndarray,
         t: float) -> np.ndarray:
    """State of ``x' = A x + B u`` after time ``t`` under constant ``u``."""
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if t == 0.0:
        return x0.copy()
    return expm(A * t) @ x0 + hold_integral(A, B, t) @ u


def decrease_violation(P: np.ndarray, A: np.ndarray, B: np.ndarray,
                       x: np.ndarray, u: np.ndarray, t: float,
                       decrease_rate: float) -> float:
    """Signed violation of the decrease condition at the flowed point.

    With ``y = flow(A, B, x, u, t)`` this is ``dV/dt(y) + C ||y||^2``;
    nonpositive values mean the Lyapunov decrease holds there.
    """
    y = flow(A, B, x, u, t)
    ydot = A @ y + np.atleast_2d(B) @ np.atleast_1d(u)
    return float(ydot @ P @ y + y @ P @ ydot + decrease_rate * (y @ y))


def decrease_violation_gradient(P: np.ndarray, A: np.ndarray, B: np.ndarray,
                                x: np.ndarray, u: np.ndarray,
                                t: float) -> np.ndarray:
    """Entrywise gradient of :func:`decrease_violation` with respect to ``P``
    (the violation is linear in ``P``, so the gradient is P-independent)."""
    y = flow(A, B, x, u, t)
    ydot = A @ y + np.atleast_2d(B) @ np.atleast_1d(u)
    return np.outer(ydot, y) + np.outer(y, ydot)


def project_psd(X: np.ndarray, step_margin: float, margin_floor: float) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix from below.

    Eigen-decomposes ``X`` and lifts every eigenvalue below
    ``sqrt((step_margin^2 - margin_floor^2)/n)`` up to that floor.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise StructuralError(f"project_psd expects a square matrix, got {X.shape}")
    if not np.allclose(X, X.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(X).max())):
        raise StructuralError("project_psd expects a symmetric matrix")
    if not step_margin > margin_floor > 0:
        raise ParameterError("need step_margin > margin_floor > 0")
    floor = np.sqrt((step_margin ** 2 - margin_floor ** 2) / X.shape[0])
    w, U = np.linalg.eigh(X)
    return (U * np.maximum(w, floor)) @ U.T


class _FaceSampler:
    """Uniform sampler over the update surface: cell faces clipped to the
    outer ball plus the two ball boundaries, with mass proportional to
    surface measure (faces are sampled by full-measure proposal and
    rejection against the ball, which leaves the clipped-face law uniform).
    """

    def __init__(self, partition: QuantizerPartition, outer_ball: float,
                 inner_ball: float):
        self.partition = partition
        self.outer = outer_ball
        self.inner = inner_ball
        dim = partition.dim
        active = np.flatnonzero(partition.min_norms <= outer_ball)
        lowers = partition._lower[active]
        uppers = partition._upper[active]
        widths = uppers - lowers
        # one entry per (cell, axis, side): face where coordinate `axis`
        # sticks at lower or upper bound
        faces_cell, faces_axis, faces_side, faces_meas = [], [], [], []
        for axis in range(dim):
            other = [d for d in range(dim) if d != axis]
            measure = np.prod(widths[:, other], axis=1) if other else np.ones(len(active))
            for side in (0, 1):
                faces_cell.append(active)
                faces_axis.append(np.full(len(active), axis))
                faces_side.append(np.full(len(active), side))
                faces_meas.append(measure)
        self.face_cell = np.concatenate(faces_cell)
        self.face_axis = np.concatenate(faces_axis)
        self.face_side = np.concatenate(faces_side)
        measures = np.concatenate(faces_meas)
        self.face_cum = np.cumsum(measures)
        self.face_mass = float(self.face_cum[-1])
        sphere_area = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}
        area = sphere_area.get(dim)
        if area is None:
            # surface area of the unit (dim-1)-sphere in R^dim
            from math import gamma, pi
            area = 2 * pi ** (dim / 2) / gamma(dim / 2)
        self.sphere_mass = [area * inner_ball ** (dim - 1),
                            area * outer_ball ** (dim - 1)]
        self.total = self.face_mass + sum(self.sphere_mass)

    def draw(self, rng) -> tuple:
        """Returns ``(x, cell_id, on_ball_boundary)``."""
        partition = self.partition
        dim = partition.dim
        while True:
            u = rng.uniform(0.0, self.total)
            if u < self.face_mass:
                i = int(np.searchsorted(self.face_cum, u, side="right"))
                cell = int(self.face_cell[i])
                lo, hi = partition._lower[cell], partition._upper[cell]
                x = lo + rng.uniform(size=dim) * (hi - lo)
                axis = int(self.face_axis[i])
                x[axis] = hi[axis] if self.face_side[i] else lo[axis]
                if x @ x <= self.outer ** 2:
                    return x, cell, False
                continue  # outside the outer ball: reject and redraw
            radius = self.inner if (u - self.face_mass) < self.sphere_mass[0] else self.outer
            direction = rng.normal(size=dim)
            direction /= np.linalg.norm(direction)
            x = radius * direction
            _, ids = quantize_batch(partition, x[None, :])
            return x, int(ids[0]), True


@dataclass(frozen=True)
class SynthesisOutcome:
    certificate: "LyapunovCertificate"
    runs_executed: int
    total_updates: int
    converged: bool


def synthesize(plant: Plant, partition: QuantizerPartition,
               params: AlgorithmParams) -> SynthesisOutcome:
    """Run the randomized gradient search for a common Lyapunov matrix.

    Each sample pairs a surface point with its cell; ball-boundary samples
    are tested instantaneously, face samples along their mode flow at
    ``time_samples`` random times within one sampling period.  A violated
    decrease condition triggers ``P <- project(P) - mu * grad`` with the
    step size chosen to clear the violation by ``step_margin`` times the
    gradient norm.  Modes are scheduled round-robin over the sample
    counter.  The search stops after the first full run without updates;
    exhausting ``max_runs`` raises :class:`SynthesisError`.

    The returned certificate carries the largest outer radius whose level
    set fits in the outer ball and the smallest inner radius whose level
    set contains the inner ball.
    """
    if partition.coverage_radius < params.outer_ball:
        raise ParameterError(
            f"partition coverage {partition.coverage_radius:.6g} does not "
            f"reach the outer ball radius {params.outer_ball:.6g}")
    n = plant.dim
    period = plant.sampling_period
    rate = params.decrease_rate
    floor = params.eigenvalue_floor(n)
    margin = params.step_margin
    r0, R0 = params.inner_ball, params.outer_ball

    P = np.eye(n) if params.initial_matrix is None else np.array(params.initial_matrix, dtype=float)
    if P.shape != (n, n) or not np.allclose(P, P.T):
        raise StructuralError("initial matrix must be symmetric n x n")

    schedule = RoundRobin(plant.num_modes)
    sampler = _FaceSampler(partition, R0, r0)
    rng = np.random.default_rng(params.seed)
    drives = [(m.A, (m.B @ m.K)) for m in plant.modes]
    q_points = partition.q_points
    lowers, uppers = partition._lower, partition._upper

    k_global = 0
    total_updates = 0
    converged = False
    runs = 0
    for runs in range(1, params.max_runs + 1):
        run_updates = 0
        for _ in range(params.samples_per_run):
            mode = schedule(k_global)
            k_global += 1
            A, BK = drives[mode]
            x, cell, on_boundary = sampler.draw(rng)
            drive = BK @ q_points[cell]
            P_ref = P  # violation, gradient and step all use the sample-entry P
            if on_boundary:
                xdot = A @ x + drive
                viol = 2.0 * (xdot @ P_ref @ x) + rate * (x @ x)
                if viol > 0.0:
                    grad = np.outer(xdot, x) + np.outer(x, xdot)
                    gnorm2 = float((grad * grad).sum())
                    step = (viol + margin * np.sqrt(gnorm2)) / gnorm2
                    P = project_psd(P, params.step_margin, params.margin_floor) - step * grad
                    run_updates += 1
                continue
            times = np.sort(rng.uniform(0.0, period, size=params.time_samples))
            E, f = propagators(A, drive, times)
            points = E @ x + f
            lo, hi = lowers[cell], uppers[cell]
            for t_i, y in zip(times, points):
                ny = float(y @ y)
                in_cell = bool(np.all(y >= lo - _BOUNDARY_TOL) and np.all(y <= hi + _BOUNDARY_TOL))
                left_annulus = (ny >= (R0 - _BOUNDARY_TOL) ** 2
                                or ny <= (r0 + _BOUNDARY_TOL) ** 2)
                if t_i != 0.0 and in_cell and left_annulus:
                    break  # flow escaped the enforcement annulus inside its cell
                ydot = A @ y + drive
                viol = 2.0 * (ydot @ P_ref @ y) + rate * ny
                if viol > 0.0 and ny > r0 * r0:
                    grad = np.outer(ydot, y) + np.outer(y, ydot)
                    gnorm2 = float((grad * grad).sum())
                    step = (viol + margin * np.sqrt(gnorm2)) / gnorm2
                    P = project_psd(P, params.step_margin, params.margin_floor) - step * grad
                    run_updates += 1
        total_updates += run_updates
        if run_updates == 0:
            converged = True
            break
    if not converged:
        raise SynthesisError(
            f"no update-free run within {params.max_runs} runs "
            f"({total_updates} updates total)",
            runs_executed=runs, total_updates=total_updates)

    w = np.linalg.eigvalsh((P + P.T) / 2.0)
    if w[0] <= 0:
        raise SynthesisError("search terminated on a non positive-definite matrix",
                             runs_executed=runs, total_updates=total_updates)
    outer_radius = R0 * float(np.sqrt(w[0] / w[-1]))
    inner_radius = r0 * float(np.sqrt(w[-1] / w[0]))
    if inner_radius ** 2 * w[0] > outer_radius ** 2 * w[-1]:
        raise CertificateError(
            f"no inner radius fits: the level set containing the inner ball "
            f"(radius {inner_radius:.6g}) exceeds the outer level set "
            f"(radius {outer_radius:.6g})")
    certificate = LyapunovCertificate(
        matrix=(P + P.T) / 2.0, decrease_rate=rate,
        outer_radius=outer_radius, inner_radius=inner_radius)
    return SynthesisOutcome(certificate=certificate, runs_executed=runs,
                            total_updates=total_updates, converged=True)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of the a-posteriori decrease check."""

    ok: bool
    worst_slack: float          # min over samples of -(dV/dt + C ||y||^2)
    tolerance: float
    points_checked: int
    witness: Optional[tuple]    # (state, mode, time) at the worst slack


def check_assumption4(plant: Plant, partition: QuantizerPartition,
                      certificate: LyapunovCertificate, grid_density: int,
                      time_samples: int = 5, random_samples: int = 2000,
                      seed: int = 2024,
                      tolerance: Optional[float] = None) -> CheckReport:
    """Verify the certified decrease on a grid plus random samples.

    States are drawn from the region between the outer level set and the
    inner level set; each is flowed under every mode's own quantized
    feedback over one sampling period.  At each sampled time the decrease
    ``dV/dt <= -C ||y||^2`` (within tolerance) must hold unless the flow
    has already entered the inner level set.  Failure is reported with the
    worst margin and its witness, never raised.
    """
    P = certificate.matrix
    rate = certificate.decrease_rate
    lev_outer = certificate.level_outer
    lev_inner = certificate.level_inner
    if tolerance is None:
        tolerance = 1e-7 * (1.0 + spectral_norm(P))

    half_widths = np.sqrt(lev_outer * np.diag(np.linalg.inv(P)))
    axes = [np.linspace(-w, w, grid_density) for w in half_widths]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, plant.dim)
    rng = np.random.default_rng(seed)
    randoms = rng.uniform(-1.0, 1.0, size=(random_samples, plant.dim)) * half_widths
    states = np.vstack([mesh, randoms])
    values = np.einsum("ij,jk,ik->i", states, P, states)
    keep = (values <= lev_outer) & (values > lev_inner * (1 + 1e-12))
    states = states[keep]
    q_values, _ = quantize_batch(partition, states)

    times = np.linspace(0.0, plant.sampling_period, time_samples)
    worst = -np.inf
    witness = None
    checked = 0
    n = plant.dim
    for mode in plant.modes:
        A = mode.A
        drive_pts = q_values @ (mode.B @ mode.K).T
        entered = np.zeros(len(states), dtype=bool)
        aug = np.zeros((time_samples, 2 * n, 2 * n))
        aug[:, :n, :n] = A[None] * times[:, None, None]
        aug[:, :n, n:] = np.eye(n)[None] * times[:, None, None]
        blocks = expm(aug)
        for idx, t in enumerate(times):
            Y = states @ blocks[idx, :n, :n].T + drive_pts @ blocks[idx, :n, n:].T
            Vy = np.einsum("ij,jk,ik->i", Y, P, Y)
            entered |= Vy <= lev_inner
            Ydot = Y @ A.T + drive_pts
            slack = -(2.0 * np.einsum("ij,jk,ik->i", Ydot, P, Y)
                      + rate * (Y * Y).sum(axis=1))
            active = ~entered
            checked += int(active.sum())
            if active.any():
                local = np.where(active, -slack, -np.inf)
                j = int(local.argmax())
                if local[j] > worst:
                    worst = float(local[j])
                    witness = (states[j].copy(), mode.index, float(t))
    worst_slack = -worst if np.isfinite(worst) else np.inf
    return CheckReport(ok=bool(worst_slack >= -tolerance),
                       worst_slack=float(worst_slack),
                       tolerance=float(tolerance),
                       points_checked=checked, witness=witness)


def save_certificate(certificate: LyapunovCertificate, path) -> None:
    """Write a certificate as plain text, full decimal precision, row-major."""
    lines = [f"dim {certificate.dim}"]
    for row in certificate.matrix:
        lines.append("P " + " ".join(f"{v:.17g}" for v in row))
    lines.append(f"decrease_rate {certificate.decrease_rate:.17g}")
    lines.append(f"outer_radius {certificate.outer_radius:.17g}")
    lines.append(f"inner_radius {certificate.inner_radius:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_certificate(path) -> LyapunovCertificate:
    """Inverse of :func:`save_certificate`."""
    rows = []
    scalars = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "P":
                rows.append([float(v) for v in parts[1:]])
            elif parts[0] != "dim":
                scalars[parts[0]] = float(parts[1])
    return LyapunovCertificate(
        matrix=np.array(rows),
        decrease_rate=scalars["decrease_rate"],
        outer_radius=scalars["outer_radius"],
        inner_radius=scalars["inner_radius"])
