"""Exact event-driven simulation of the quantized sampled-data loop.

Between events (sampling instants and switches) the closed loop is a
constant-coefficient affine system, so the state is propagated through
matrix exponentials of the augmented dynamics; there is no time-stepping
error.  The sampler reads state and active mode every period, the
zero-order hold keeps the quantized state and the gain index constant in
between, and probe records are inserted inside every inter-event span so
that derivative inequalities can be audited away from the events.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CoverageError, ParameterError
from .linalg import expm
from .model import Plant, SwitchingSignal, sample_floor, sample_index
from .quantizer import QuantizerPartition, quantize
from .synthesis import LyapunovCertificate

MEMBERSHIP_TOL = 1e-10   # relative slack for level-set membership calls

KIND_SAMPLE = "sample"
KIND_SWITCH = "switch"
KIND_PROBE = "probe"


@dataclass
class Trajectory:
    """Columnar event record of one closed-loop run.

    The state is continuous across events, so a single state column serves
    as both the pre- and post-event value.  ``x_held`` and ``qx`` carry the
    sampled state and its quantization currently latched by the hold;
    ``ctrl_mode`` is the gain index latched at the last sampling instant.
    """

    t: np.ndarray
    x: np.ndarray
    x_held: np.ndarray
    qx: np.ndarray
    plant_mode: np.ndarray
    ctrl_mode: np.ndarray
    V: np.ndarray
    kind: np.ndarray
    sampling_period: float
    horizon: float
    entered_attractor_at: Optional[float] = None
    coverage_exceeded_at: Optional[float] = None

    def __len__(self):
        return len(self.t)

    @property
    def x_pre(self) -> np.ndarray:
        """State just before each event; equals ``x`` by continuity."""
        return self.x

    @property
    def mismatch(self) -> np.ndarray:
        return self.plant_mode != self.ctrl_mode


def simulate(plant: Plant, partition: QuantizerPartition,
             signal: SwitchingSignal, x0: np.ndarray, horizon: float,
             certificate: Optional[LyapunovCertificate] = None,
             probes_per_interval: int = 8) -> Trajectory:
    """Run the loop exactly from ``x0`` over ``[0, horizon]``.

    Events are the sampling instants, the switch times, and the horizon;
    each inter-event span is bridged by one batched matrix exponential that
    also evaluates ``probes_per_interval`` interior probe states.  When a
    sampled state falls outside the quantizer coverage the run stops there
    and the trajectory is flagged, which is the expected outcome when the
    certificate's hypotheses are violated.
    """
    if horizon <= 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    period = plant.sampling_period
    x0 = np.asarray(x0, dtype=float)

    events = {horizon}
    k = 0
    while k * period < horizon:
        events.add(k * period)
        k += 1
    for ts_, _ in signal.switches:
        if 0.0 < ts_ < horizon:
            events.add(ts_)
    grid = sorted(events)
    switch_times = set(ts_ for ts_, _ in signal.switches)

    cols_t, cols_x, cols_held, cols_qx = [], [], [], []
    cols_pm, cols_cm, cols_kind = [], [], []
    coverage_exceeded_at = None

    x = x0.copy()
    ctrl_mode = signal.mode_at(0.0)
    try:
        q_now, _ = quantize(partition, x)
    except CoverageError:
        raise CoverageError("initial state lies outside the quantizer coverage")
    x_held = x.copy()
    cols_t.append(0.0); cols_x.append(x.copy()); cols_held.append(x_held.copy())
    cols_qx.append(q_now.copy()); cols_pm.append(signal.mode_at(0.0))
    cols_cm.append(ctrl_mode); cols_kind.append(KIND_SAMPLE)

    fractions = np.arange(1, probes_per_interval + 2) / (probes_per_interval + 1)
    t_now = 0.0
    for t_next in grid:
        if t_next <= t_now:
            continue
        span = t_next - t_now
        p_mode = signal.mode_at(t_now)
        mode = plant.modes[p_mode]
        drive = mode.B @ (plant.modes[ctrl_mode].K @ q_now)
        n = plant.dim
        aug = np.zeros((fractions.size, n + 1, n + 1))
        taus = fractions * span
        aug[:, :n, :n] = mode.A[None] * taus[:, None, None]
        aug[:, :n, n] = drive[None] * taus[:, None]
        blocks = expm(aug)
        states = blocks[:, :n, :n] @ x + blocks[:, :n, n]

        for i in range(fractions.size - 1):
            tt = t_now + taus[i]
            cols_t.append(tt); cols_x.append(states[i])
            cols_held.append(x_held.copy()); cols_qx.append(q_now.copy())
            cols_pm.append(p_mode); cols_cm.append(ctrl_mode)
            cols_kind.append(KIND_PROBE)
        x = states[-1]
        t_now = t_next

        k_idx = sample_index(t_now, period)
        is_sample = abs(k_idx * period - t_now) <= 1e-9 * max(1.0, t_now)
        if is_sample:
            ctrl_mode = signal.mode_at(t_now)
            try:
                q_now, _ = quantize(partition, x)
            except CoverageError:
                coverage_exceeded_at = t_now
            x_held = x.copy()
        kind = KIND_SAMPLE if is_sample else (
            KIND_SWITCH if t_now in switch_times else KIND_PROBE)
        cols_t.append(t_now); cols_x.append(x.copy())
        cols_held.append(x_held.copy()); cols_qx.append(q_now.copy())
        cols_pm.append(signal.mode_at(t_now)); cols_cm.append(ctrl_mode)
        cols_kind.append(kind)
        if coverage_exceeded_at is not None:
            break

    X = np.array(cols_x)
    if certificate is not None:
        V = np.einsum("ij,jk,ik->i", X, certificate.matrix, X)
    else:
        V = np.full(len(cols_t), np.nan)
    return Trajectory(
        t=np.array(cols_t), x=X, x_held=np.array(cols_held),
        qx=np.array(cols_qx), plant_mode=np.array(cols_pm, dtype=int),
        ctrl_mode=np.array(cols_cm, dtype=int), V=V,
        kind=np.array(cols_kind), sampling_period=period, horizon=horizon,
        coverage_exceeded_at=coverage_exceeded_at)


@dataclass(frozen=True)
class StabilityVerdict:
    """Per-trajectory findings against a certificate.

    ``contained``: every record stays strictly inside the outer level set.
    ``first_entry_inner``: first time the inner level set is reached.
    ``settling_time``: earliest record time after which every later record
    stays strictly inside the expanded inner set (the attractor).
    ``exits_on_mismatch_only``: each recorded departure from the inner set
    happens while the plant and held modes disagree.
    ``excursion_peak_ok``: V never exceeds the expanded inner level during
    excursions outside the inner set.
    """

    contained: bool
    first_exit_time: Optional[float]
    first_entry_inner: Optional[float]
    settling_time: Optional[float]
    exits_on_mismatch_only: bool
    bad_exit_time: Optional[float]
    excursion_peak_ok: bool
    excursion_peak: float
    coverage_exceeded: bool
    passed: bool


def stability_verdict(trajectory: Trajectory,
                      certificate: LyapunovCertificate,
                      level_expansion: float) -> StabilityVerdict:
    """Evaluate containment, settling, and excursion findings for one run."""
    if level_expansion <= 1.0:
        raise ParameterError("level expansion must exceed 1")
    V = trajectory.V
    if np.any(np.isnan(V)):
        raise ParameterError("trajectory was simulated without a certificate")
    lev_outer = certificate.level_outer
    lev_inner = certificate.level_inner
    lev_attr = level_expansion ** 2 * lev_inner
    tol_o = MEMBERSHIP_TOL * lev_outer
    tol_i = MEMBERSHIP_TOL * lev_inner
    tol_a = MEMBERSHIP_TOL * lev_attr

    outside_outer = V >= lev_outer - tol_o
    contained = not outside_outer.any()
    first_exit = float(trajectory.t[outside_outer.argmax()]) if outside_outer.any() else None

    in_inner = V <= lev_inner + tol_i
    first_entry = float(trajectory.t[in_inner.argmax()]) if in_inner.any() else None

    in_attr = V < lev_attr - tol_a
    if in_attr.all():
        settling = float(trajectory.t[0])
    else:
        last_out = int(np.flatnonzero(~in_attr)[-1])
        settling = float(trajectory.t[last_out + 1]) if last_out + 1 < len(V) else None

    exits_ok = True
    bad_exit = None
    peak = 0.0
    inside_prev = bool(in_inner[0])
    excursion = False
    for i in range(1, len(V)):
        inside = bool(in_inner[i])
        if inside_prev and not inside:
            excursion = True
            if trajectory.plant_mode[i] == trajectory.ctrl_mode[i]:
                exits_ok = False
                if bad_exit is None:
                    bad_exit = float(trajectory.t[i])
        if excursion and not inside:
            peak = max(peak, float(V[i]))
        if inside:
            excursion = False
        inside_prev = inside
    peak_ok = peak <= lev_attr + tol_a

    passed = (contained and first_entry is not None and settling is not None
              and exits_ok and peak_ok
              and trajectory.coverage_exceeded_at is None)
    verdict = StabilityVerdict(
        contained=contained, first_exit_time=first_exit,
        first_entry_inner=first_entry, settling_time=settling,
        exits_on_mismatch_only=exits_ok, bad_exit_time=bad_exit,
        excursion_peak_ok=peak_ok, excursion_peak=peak,
        coverage_exceeded=trajectory.coverage_exceeded_at is not None,
        passed=passed)
    trajectory.entered_attractor_at = settling
    return verdict


def lyapunov_rate(plant: Plant, certificate: LyapunovCertificate,
                  x: np.ndarray, q_x: np.ndarray, plant_mode: int,
                  gain_mode: int) -> float:
    """Instantaneous ``dV/dt`` at ``x`` when plant mode ``p`` runs under the
    gain of mode ``q`` driven by the held quantized state."""
    x = np.asarray(x, dtype=float)
    q_x = np.asarray(q_x, dtype=float)
    mode = plant.modes[plant_mode]
    xdot = mode.A @ x + mode.B @ (plant.modes[gain_mode].K @ q_x)
    return float(2.0 * (xdot @ certificate.matrix @ x))


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """CSV export: one row per record, 17 significant digits."""
    n = trajectory.x.shape[1]
    header = (["t"] + [f"x{i+1}" for i in range(n)]
              + ["plant_mode", "ctrl_mode"]
              + [f"qx{i+1}" for i in range(n)] + ["V", "kind"])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(trajectory)):
            row = [f"{trajectory.t[i]:.17g}"]
            row += [f"{v:.17g}" for v in trajectory.x[i]]
            row += [str(int(trajectory.plant_mode[i])), str(int(trajectory.ctrl_mode[i]))]
            row += [f"{v:.17g}" for v in trajectory.qx[i]]
            row += [f"{trajectory.V[i]:.17g}", str(trajectory.kind[i])]
            fh.write(",".join(row) + "\n")
