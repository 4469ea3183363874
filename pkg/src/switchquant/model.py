"""Switched plant model: modes, feedback gains, switching signals, and the
exact state-transition algebra of the sampled-data loop.

A plant is a finite family of linear modes ``x' = A_p x + B_p u`` with
static gains ``K_p`` designed so that every ``A_p + B_p K_p`` is Hurwitz.
A switching signal is a right-continuous piecewise-constant map from time
to mode indices with finitely many switches on every bounded interval.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import StructuralError
from .linalg import expm, spectral_norm

HURWITZ_TOL = 1e-9          # eigenvalue real parts must be below -HURWITZ_TOL
_TIME_SNAP = 1e-9           # guard for snapping times onto the sampling grid


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Mode:
    """One plant mode: dynamics ``A``, input map ``B``, feedback gain ``K``."""

    index: int
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _readonly(self.A))
        object.__setattr__(self, "B", _readonly(self.B))
        object.__setattr__(self, "K", _readonly(self.K))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise StructuralError(f"mode {self.index}: A must be square, got {self.A.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise StructuralError(f"mode {self.index}: B must be {n}xm, got {self.B.shape}")
        m = self.B.shape[1]
        if self.K.shape != (m, n):
            raise StructuralError(f"mode {self.index}: K must be {m}x{n}, got {self.K.shape}")

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.K


@dataclass(frozen=True)
class Plant:
    """A finite set of modes sharing dimensions, plus the sampling period."""

    modes: tuple
    sampling_period: float

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise StructuralError("plant needs at least one mode")
        n, m = self.modes[0].A.shape[0], self.modes[0].B.shape[1]
        for mode in self.modes:
            if mode.A.shape[0] != n or mode.B.shape[1] != m:
                raise StructuralError(
                    f"mode {mode.index}: dimensions {mode.A.shape[0]}x{mode.B.shape[1]} "
                    f"inconsistent with {n}x{m}")
        if not (np.isfinite(self.sampling_period) and self.sampling_period > 0):
            raise StructuralError("sampling period must be finite and positive")

    @property
    def dim(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.modes[0].B.shape[1]

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def drive_matrix(self, plant_mode: int, gain_mode: int) -> np.ndarray:
        """``B_p K_q``: the state-to-drive map when plant mode ``p`` runs
        under the gain designed for mode ``q``."""
        return self.modes[plant_mode].B @ self.modes[gain_mode].K

    def max_drift_norm(self) -> float:
        """Largest spectral norm of the open-loop dynamics over all modes."""
        return max(spectral_norm(m.A) for m in self.modes)


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant mode schedule.

    ``switches`` is a strictly increasing sequence of ``(time, new_mode)``
    pairs; the signal equals ``initial_mode`` on ``[0, t_1)`` and each new
    mode from its switch time onward.  Signals are materialized per horizon;
    generators in :mod:`switchquant.switching` produce them lazily.
    """

    initial_mode: int
    switches: tuple = ()

    def __post_init__(self):
        sw = tuple((float(t), int(m)) for t, m in self.switches)
        object.__setattr__(self, "switches", sw)
        prev_t, prev_m = 0.0, self.initial_mode
        for t, m in sw:
            if not np.isfinite(t) or t <= prev_t:
                raise StructuralError(f"switch times must be strictly increasing and > 0, got {t}")
            if m == prev_m:
                raise StructuralError(f"switch at t={t} does not change the mode")
            prev_t, prev_m = t, m

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.switches])

    def mode_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.initial_mode if i < 0 else self.switches[i][1]

    def modes_at(self, times: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`mode_at`."""
        seq = np.concatenate([[self.initial_mode], [m for _, m in self.switches]]).astype(int)
        idx = np.searchsorted(self.times, np.asarray(times, dtype=float), side="right")
        return seq[idx]

    def switches_in(self, t_from: float, t_to: float) -> list:
        """Switch (time, mode) pairs with ``t_from < time < t_to``."""
        return [(t, m) for t, m in self.switches if t_from < t < t_to]

    def at_most_one_switch_per_interval(self, period: float) -> bool:
        """True when every open sampling interval ``(kT, (k+1)T)`` contains
        at most one switch.  Switches landing exactly on the grid belong to
        no open interval."""
        counts = {}
        for t, _ in self.switches:
            k = sample_index(t, period)
            if abs(t - k * period) <= _TIME_SNAP * max(1.0, abs(t)):
                continue
            counts[k] = counts.get(k, 0) + 1
            if counts[k] > 1:
                return False
        return True


@dataclass(frozen=True)
class TransitionMatrix:
    """Exact unforced state map over ``[t_from, t_to]`` of the switched flow."""

    value: np.ndarray
    t_from: float
    t_to: float

    def __post_init__(self):
        object.__setattr__(self, "value", _readonly(self.value))


@dataclass(frozen=True)
class ModeCheck:
    index: int
    hurwitz: bool
    eigenvalues: np.ndarray
    max_real_part: float


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    modes: tuple
    dim: int
    input_dim: int


def sample_index(t: float, period: float) -> int:
    """Index ``k`` of the sampling interval containing ``t``, i.e. the
    largest ``k`` with ``k * period <= t`` (snapped against roundoff)."""
    return int(np.floor(t / period + _TIME_SNAP))


def sample_floor(t: float, period: float) -> float:
    """The latest sampling instant at or before ``t``."""
    return sample_index(t, period) * period


def validate_plant(plant: Plant) -> ValidationReport:
    """Check dimensional consistency and that every matched closed loop
    ``A_p + B_p K_p`` is Hurwitz.

    Dimension mismatches already raise at :class:`Plant` construction; the
    report records per-mode closed-loop eigenvalues and Hurwitz status, and
    is ``ok`` only if every mode passes.
    """
    checks = []
    for mode in plant.modes:
        eig = np.linalg.eigvals(mode.closed_loop)
        max_re = float(eig.real.max())
        checks.append(ModeCheck(
            index=mode.index,
            hurwitz=bool(max_re < -HURWITZ_TOL),
            eigenvalues=eig,
            max_real_part=max_re,
        ))
    return ValidationReport(
        ok=all(c.hurwitz for c in checks),
        modes=tuple(checks),
        dim=plant.dim,
        input_dim=plant.input_dim,
    )


def transition_matrix(plant: Plant, signal: SwitchingSignal,
                      t_from: float, t_to: float) -> TransitionMatrix:
    """State-transition matrix of the unforced switched system.

    The interval ``[t_from, t_to]`` is split at the switch times
    ``t_1 < ... < t_m`` inside it and the result is the ordered product

        ``exp((t_to - t_m) A_{s(t_m)}) ... exp((t_1 - t_from) A_{s(t_from)})``

    with the latest factor leftmost.  Exact up to matrix-exponential
    accuracy; no time stepping is involved.
    """
    if not 0 <= t_from <= t_to:
        raise StructuralError(f"need 0 <= t_from <= t_to, got [{t_from}, {t_to}]")
    n = plant.dim
    if t_to == t_from:
        return TransitionMatrix(np.eye(n), t_from, t_to)
    knots = [t_from] + [t for t, _ in signal.switches_in(t_from, t_to)] + [t_to]
    spans = np.diff(knots)
    mats = np.empty((len(spans), n, n))
    for i, (a, dt) in enumerate(zip(knots[:-1], spans)):
        mats[i] = plant.modes[signal.mode_at(a)].A * dt
    exps = expm(mats)
    total = exps[0]
    for i in range(1, len(spans)):
        total = exps[i] @ total
    return TransitionMatrix(total, t_from, t_to)


def hold_integral(A: np.ndarray, B: np.ndarray, duration: float) -> np.ndarray:
    """Forced-response operator ``int_0^t exp(A s) ds @ B`` under a constant
    input, computed as the top-right block of the exponential of the
    augmented matrix ``[[A, B], [0, 0]]``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if duration < 0:
        raise StructuralError(f"duration must be nonnegative, got {duration}")
    n, m = A.shape[0], B.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A * duration
    aug[:n, n:] = B * duration
    return expm(aug)[:n, n:]
