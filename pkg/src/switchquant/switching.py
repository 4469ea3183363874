"""Mode-mismatch accounting and switching-signal generators.

The controller holds the mode sampled at the last sampling instant, so a
switch strictly inside a sampling interval opens a mismatch window that
lasts until the next sample.  The total mismatch time mu(t1, t2) is the
measure of ``{tau in [t2, t1): plant mode != held mode}``; it is computed
here by exact interval arithmetic, never by time discretization.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, StructuralError
from .model import Plant, SwitchingSignal, sample_floor, sample_index


@dataclass(frozen=True)
class MismatchProfile:
    """Exact mismatch intervals of one signal over ``[0, horizon]``.

    ``starts``/``ends`` are matched arrays of disjoint intervals, each
    contained in a single sampling interval.  ``mu(t1, t2)`` is additive
    and piecewise linear with slope 0 or 1.
    """

    starts: np.ndarray
    ends: np.ndarray
    horizon: float
    sampling_period: float
    assumption_ok: bool        # at most one switch per sampling interval

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=float)
        e = np.asarray(self.ends, dtype=float)
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)
        if s.shape != e.shape or np.any(e <= s):
            raise StructuralError("mismatch intervals must satisfy start < end")

    def mu(self, t1: float, t2: float = 0.0) -> float:
        """Total mismatch time on ``[t2, t1)``."""
        if t1 < t2:
            raise ParameterError(f"need t1 >= t2, got ({t1}, {t2})")
        lo = np.maximum(self.starts, t2)
        hi = np.minimum(self.ends, t1)
        return float(np.clip(hi - lo, 0.0, None).sum())

    @property
    def total(self) -> float:
        return self.mu(self.horizon)

    @property
    def onsets(self) -> np.ndarray:
        """Times at which a mismatch window opens."""
        return self.starts


def mismatch_profile(signal: SwitchingSignal, period: float,
                     horizon: float) -> MismatchProfile:
    """Exact mismatch intervals of ``signal`` on ``[0, horizon]``.

    Works directly from the definition on every elementary interval between
    consecutive events (switches and sampling instants), so signals that
    violate the one-switch-per-interval assumption are still measured
    correctly; the violation is only flagged.
    """
    if horizon < 0 or period <= 0:
        raise ParameterError("need horizon >= 0 and period > 0")
    events = {0.0, horizon}
    k = 1
    while k * period < horizon:
        events.add(k * period)
        k += 1
    for t, _ in signal.switches:
        if 0.0 < t < horizon:
            events.add(t)
    grid = np.array(sorted(events))

    starts, ends = [], []
    for a, b in zip(grid[:-1], grid[1:]):
        plant_mode = signal.mode_at(a)
        held_mode = signal.mode_at(sample_floor(a, period))
        if plant_mode != held_mode:
            if starts and math.isclose(ends[-1], a, rel_tol=0.0, abs_tol=1e-15):
                ends[-1] = b
            else:
                starts.append(a)
                ends.append(b)
    return MismatchProfile(
        starts=np.array(starts), ends=np.array(ends),
        horizon=float(horizon), sampling_period=float(period),
        assumption_ok=signal.at_most_one_switch_per_interval(period),
    )


@dataclass(frozen=True)
class BudgetReport:
    """Outcome of the mismatch-budget check."""

    ok: bool
    global_ok: bool                  # mu(t, 0) <= ratio * t for all t
    anchored_ok: bool                # mu(t, T0) <= allowance + ratio (t - T0)
    first_violation: Optional[tuple] # (t, T0 or None) of the earliest failure
    worst_slack: float               # min over checks of budget - mu


def check_mismatch_budget(profile: MismatchProfile, ratio: float,
                          allowance: float, horizon: Optional[float] = None,
                          ratio_sup: Optional[float] = None) -> BudgetReport:
    """Verify the two mismatch-time budgets of a signal.

    Globally the mismatch may not exceed the fraction ``ratio`` of elapsed
    time; after every mismatch onset ``T0`` the tail budget is
    ``allowance + ratio * (t - T0)``.  Since mu is piecewise linear with
    slope 0 or 1 and ``ratio < 1``, the slack is minimized at the right
    endpoints of mismatch intervals, so only those finitely many points are
    evaluated.
    """
    if ratio < 0:
        raise ParameterError(f"mismatch ratio must be nonnegative, got {ratio}")
    if ratio_sup is not None and ratio >= ratio_sup:
        raise ParameterError(
            f"mismatch ratio {ratio} must lie strictly below {ratio_sup}")
    end = profile.horizon if horizon is None else min(horizon, profile.horizon)
    ends = profile.ends[profile.starts < end]
    ends = np.minimum(ends, end)
    prefix = {float(e): profile.mu(float(e)) for e in ends}

    ok_global, ok_anchored = True, True
    first, worst = None, np.inf
    for e in ends:
        slack = ratio * e - prefix[float(e)]
        worst = min(worst, slack)
        if slack < -1e-12 and ok_global:
            ok_global = False
            first = (float(e), None)
    for t0 in profile.onsets:
        if t0 >= end:
            continue
        base = profile.mu(float(t0))
        for e in ends[ends > t0]:
            slack = allowance + ratio * (e - t0) - (prefix[float(e)] - base)
            worst = min(worst, slack)
            if slack < -1e-12:
                ok_anchored = False
                if first is None:
                    first = (float(e), float(t0))
                break
        if not ok_anchored:
            break
    return BudgetReport(ok=ok_global and ok_anchored, global_ok=ok_global,
                        anchored_ok=ok_anchored, first_violation=first,
                        worst_slack=float(worst if np.isfinite(worst) else np.inf))


def check_dwell(signal: SwitchingSignal, dwell: float) -> bool:
    """True iff consecutive switches are at least ``dwell`` apart and no
    switch occurs before ``dwell`` has elapsed from time zero (up to
    roundoff slop in the gap arithmetic)."""
    times = signal.times
    if times.size == 0:
        return True
    slop = 1e-12 * max(1.0, dwell)
    if times[0] < dwell - slop:
        return False
    return bool(np.all(np.diff(times) >= dwell - slop)) if times.size > 1 else True


def random_dwell_signal(plant: Plant, dwell_intervals: int, switch_prob: float,
                        horizon: float, seed) -> SwitchingSignal:
    """Random signal with dwell time ``dwell_intervals * T``.

    After every quiet period of ``dwell_intervals`` sampling intervals, each
    subsequent interval hosts a switch with probability ``switch_prob`` at a
    time uniform inside the interval.  Two-mode plants alternate; larger
    mode sets draw uniformly among the other modes.  Deterministic per seed.
    """
    if dwell_intervals < 1:
        raise ParameterError("dwell must span at least one sampling interval")
    if not 0.0 <= switch_prob <= 1.0:
        raise ParameterError(f"switch probability must be in [0, 1], got {switch_prob}")
    rng = np.random.default_rng(seed)
    period = plant.sampling_period
    mode = 0
    switches = []
    quiet_until = dwell_intervals * period
    k = 0
    while k * period < horizon:
        t0 = k * period
        if t0 >= quiet_until - 1e-12 * max(1.0, t0) and rng.uniform() < switch_prob:
            tau = t0 + rng.uniform() * period
            if tau < horizon:
                if plant.num_modes == 2:
                    mode = 1 - mode
                else:
                    others = [m for m in range(plant.num_modes) if m != mode]
                    mode = int(rng.choice(others))
                switches.append((tau, mode))
                quiet_until = tau + dwell_intervals * period
        k += 1
    return SwitchingSignal(initial_mode=0, switches=tuple(switches))


def adversarial_signal(dwell_intervals: int, period: float, slack: float,
                       min_span: float, variant: str = "global"):
    """Worst-case dwell-compliant signal approaching the mismatch bounds.

    Places every switch just after a sampling instant so that almost the
    whole following interval is mismatched, while keeping exact dwell gaps
    of ``dwell_intervals * period``.

    Returns ``(signal, witness_time, onset)``:

    * ``"global"``:   switches at ``k n T + slack/m``; at the witness time
      ``t = m n T + T`` the mismatch satisfies
      ``mu(t, 0) = t/n - (T/n + slack)`` exactly.
    * ``"anchored"``: a first switch at ``T0 = n T + slack / (2 (m + 1))``
      and then switches every ``n T``; at ``t = T0 + m n T + T`` the tail
      mismatch reaches ``T + (t - T0)/n - (T/n + slack)`` or better.
    """
    if slack <= 0 or slack >= period:
        raise ParameterError(f"slack must lie in (0, period), got {slack}")
    if dwell_intervals < 1:
        raise ParameterError("dwell must span at least one sampling interval")
    if min_span < 0:
        raise ParameterError("min_span must be nonnegative")
    n, T = dwell_intervals, period
    m = max(1, math.ceil(min_span / (n * T)))
    if variant == "global":
        times = [k * n * T + slack / m for k in range(1, m + 1)]
        switches = [(t, 1 if i % 2 == 0 else 0) for i, t in enumerate(times)]
        witness = m * n * T + T
        return SwitchingSignal(0, tuple(switches)), witness, None
    if variant == "anchored":
        offset = slack / (2 * (m + 1))
        onset = n * T + offset
        times = [onset] + [onset + k * n * T + offset for k in range(1, m + 1)]
        switches = [(t, 1 if i % 2 == 0 else 0) for i, t in enumerate(times)]
        witness = onset + m * n * T + T
        return SwitchingSignal(0, tuple(switches)), witness, onset
    raise ParameterError(f"unknown adversarial variant {variant!r}")
