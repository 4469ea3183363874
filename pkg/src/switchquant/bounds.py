"""Growth-rate and dwell-time bound chain for the quantized sampled loop.

Given a plant with sampling period T, a quantizer partition, and a
Lyapunov certificate (P, C, R, r), this module derives the constants that
bound the loop's behavior when the controller's held mode disagrees with
the plant:

* ``a0``    quantized-drive gain: ``||B_p K_q Q(x)|| <= a0 ||x||`` on the
  outer level set,
* ``eta = a0 (e^{L T} - 1) / L`` with ``L`` the largest open-loop norm;
  the chain is usable only while ``eta < 1``,
* ``a1 = e^{L T} / (1 - eta)`` bounding ``||x(sample)|| < a1 ||x(t)||``,
* ``b1 = (e^{L T} - 1)(1 + a0 / L)`` bounding the intersample drift
  ``||x(t) - x(sample)|| < b1 ||x(sample)||``,
* ``g0(p,q)`` quantization-error gain ``||P B_p K_q (Q(x) - x)|| <= g0 ||x||``,
* ``g(p,q) = a1 (b1 ||P B_p K_q|| + g0(p,q))`` and the growth rate
  ``D = 2 max_{p != q} (||P (A_p + B_p K_q)|| + g(p,q))`` so that
  ``dV/dt <= D ||x||^2`` during any mode mismatch.

Normalizing by the certificate's extreme eigenvalues turns (C, D) into
exponential rates on V itself, from which the dwell-time condition and the
attractor expansion factor follow.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import CertificateError, ConditionViolatedError, ParameterError
from .linalg import expm, spectral_norm, spectral_norms
from .model import Plant
from .quantizer import (QuantizerPartition, cells_covering_ellipsoid,
                        quantization_bits)
from .synthesis import LyapunovCertificate


@dataclass(frozen=True)
class DwellRates:
    """Exponential rates on V and the derived dwell-time certificate."""

    decay_exponent: float       # C / lambda_max: matched-mode decay rate of V
    growth_exponent: float      # D / lambda_min: mismatched growth rate of V
    level_expansion: float      # kappa: V-level expansion over one period
    expansion_time: float       # mismatch time producing the kappa^2 expansion
    mismatch_ratio_sup: float   # exclusive bound on the admissible ratio
    min_dwell_intervals: int    # dwell requirement in sampling periods


@dataclass(frozen=True)
class StabilityBounds:
    """The full constant chain for one (plant, partition, certificate)."""

    drift_norm: float
    drive_gain: float
    contraction: float
    sampled_norm_gain: float
    intersample_drift_gain: float
    quantization_error_gains: Dict[Tuple[int, int], float]
    mismatch_gains: Dict[Tuple[int, int], float]
    growth_rate: float
    rates: DwellRates
    covering_cells: int
    bits_per_sample: float
    bit_rate: float

    def as_dict(self) -> dict:
        pair_key = lambda d: {f"{p}->{q}": v for (p, q), v in sorted(d.items())}
        return {
            "drift_norm": self.drift_norm,
            "drive_gain": self.drive_gain,
            "contraction": self.contraction,
            "sampled_norm_gain": self.sampled_norm_gain,
            "intersample_drift_gain": self.intersample_drift_gain,
            "quantization_error_gains": pair_key(self.quantization_error_gains),
            "mismatch_gains": pair_key(self.mismatch_gains),
            "growth_rate": self.growth_rate,
            "rates": {
                "decay_exponent": self.rates.decay_exponent,
                "growth_exponent": self.rates.growth_exponent,
                "level_expansion": self.rates.level_expansion,
                "expansion_time": self.rates.expansion_time,
                "mismatch_ratio_sup": self.rates.mismatch_ratio_sup,
                "min_dwell_intervals": self.rates.min_dwell_intervals,
            },
            "covering_cells": self.covering_cells,
            "bits_per_sample": self.bits_per_sample,
            "bit_rate": self.bit_rate,
        }


def _covering(plant: Plant, partition: QuantizerPartition,
              certificate: LyapunovCertificate,
              cell_ids: Optional[np.ndarray]) -> np.ndarray:
    if cell_ids is not None:
        return np.asarray(cell_ids, dtype=int)
    return cells_covering_ellipsoid(partition, certificate.matrix,
                                    certificate.level_outer)


def quantized_drive_gain(plant: Plant, partition: QuantizerPartition,
                         certificate: LyapunovCertificate,
                         cell_ids: Optional[np.ndarray] = None) -> float:
    """Smallest chain constant a0 with ``||B_p K_q Q(x)|| <= a0 ||x||``
    over the covering cells, all mode pairs included.

    Per cell the worst ratio is ``||B_p K_q q_j|| / min_{x in cell} ||x||``;
    cells whose closure contains the origin quantize to zero and contribute
    nothing.
    """
    ids = _covering(plant, partition, certificate, cell_ids)
    q = partition.q_points[ids]
    dist = partition.min_norms[ids]
    origin = dist == 0.0
    if np.any(origin & np.any(q != 0.0, axis=1)):
        raise CertificateError("a cell touching the origin has a nonzero "
                               "quantization point")
    active = ~origin
    if not active.any():
        return 0.0
    best = 0.0
    for p in range(plant.num_modes):
        for g in range(plant.num_modes):
            drives = q[active] @ plant.drive_matrix(p, g).T
            best = max(best, float((np.linalg.norm(drives, axis=1)
                                    / dist[active]).max()))
    return best


def sampling_contraction(drift_norm: float, drive_gain: float,
                         period: float) -> float:
    """``eta = a0 (e^{L T} - 1)/L``; values below 1 make the chain usable."""
    if drift_norm < 0 or period < 0:
        raise ParameterError("drift norm and period must be nonnegative")
    if drift_norm == 0.0:
        return drive_gain * period
    return drive_gain * math.expm1(drift_norm * period) / drift_norm


def sampled_norm_gain(drift_norm: float, drive_gain: float,
                      period: float) -> float:
    """``a1 = e^{L T} / (1 - eta)``, the sampled-to-current norm gain.

    Raises :class:`ConditionViolatedError` carrying ``eta`` when the
    contraction reaches 1 (sampling or quantization too coarse).
    """
    eta = sampling_contraction(drift_norm, drive_gain, period)
    if eta >= 1.0:
        raise ConditionViolatedError(
            f"intersample contraction {eta:.6g} >= 1: sampling period or "
            f"quantizer too coarse for this plant", value=eta)
    return math.exp(drift_norm * period) / (1.0 - eta)


def intersample_drift_gain(drift_norm: float, drive_gain: float,
                           period: float) -> float:
    """``b1 = (e^{L T} - 1)(1 + a0/L)`` bounding the relative intersample
    drift of the state away from its last sample."""
    if drift_norm == 0.0:
        return period * drive_gain  # limit of the closed form as L -> 0
    return math.expm1(drift_norm * period) * (1.0 + drive_gain / drift_norm)


def quantization_error_gain(plant: Plant, partition: QuantizerPartition,
                            certificate: LyapunovCertificate,
                            plant_mode: int, gain_mode: int,
                            cell_ids: Optional[np.ndarray] = None) -> float:
    """Gain g0 with ``||P B_p K_q (Q(x) - x)|| <= g0 ||x||`` on the outer
    level set.

    Origin cells force ``g0 >= ||P B_p K_q||``; every other covering cell
    contributes ``||P B_p K_q|| * max_dev / min_norm`` with the deviation
    maximized over the cell's vertices.
    """
    if plant_mode == gain_mode:
        raise ParameterError("the error gain is defined for mismatched pairs")
    ids = _covering(plant, partition, certificate, cell_ids)
    PBK = certificate.matrix @ plant.drive_matrix(plant_mode, gain_mode)
    base = spectral_norm(PBK)
    dist = partition.min_norms[ids]
    active = ids[dist > 0.0]
    if active.size == 0:
        return base
    lo = partition._lower[active]
    hi = partition._upper[active]
    q = partition.q_points[active]
    worst_dev = np.zeros(len(active))
    for combo in range(2 ** partition.dim):
        pick = [(combo >> d) & 1 for d in range(partition.dim)]
        vertex = np.where(np.array(pick, dtype=bool), hi, lo)
        worst_dev = np.maximum(worst_dev, np.linalg.norm(q - vertex, axis=1))
    refined = float((base * worst_dev / partition.min_norms[active]).max())
    return max(base, refined)


def mismatch_growth_rate(plant: Plant, certificate: LyapunovCertificate,
                         sampled_norm_gain_value: float,
                         intersample_drift_gain_value: float,
                         quantization_error_gains: Dict[Tuple[int, int], float],
                         ) -> Tuple[float, Dict[Tuple[int, int], float]]:
    """Growth rate D with ``dV/dt <= D ||x||^2`` during mode mismatch.

    For each mismatched pair the quantized-loop error enters through
    ``g(p,q) = a1 (b1 ||P B_p K_q|| + g0(p,q))`` and

        ``D = 2 max_{p != q} ( ||P (A_p + B_p K_q)|| + g(p,q) )``.

    Returns ``(D, g)`` with the per-pair gains.
    """
    P = certificate.matrix
    gains = {}
    terms = []
    for p in range(plant.num_modes):
        for g in range(plant.num_modes):
            if p == g:
                continue
            BK = plant.drive_matrix(p, g)
            gain = sampled_norm_gain_value * (
                intersample_drift_gain_value * spectral_norm(P @ BK)
                + quantization_error_gains[(p, g)])
            gains[(p, g)] = gain
            terms.append(spectral_norm(P @ (plant.modes[p].A + BK)) + gain)
    return 2.0 * max(terms), gains


def dwell_time_rates(certificate: LyapunovCertificate, growth_rate: float,
                     period: float) -> DwellRates:
    """Normalize (C, D) into rates on V and derive the dwell certificate.

    The level expansion over one sampling period is
    ``kappa = exp(T (C_V + D_V) / 2)``; by construction the mismatch time
    that produces exactly a ``kappa^2`` level expansion equals the period
    (asserted to machine precision).  Stability under dwell switching needs
    ``n >= 1 + D_V / C_V`` sampling periods between switches, and the
    expanded inner level set must stay inside the outer one.
    """
    if growth_rate <= 0:
        raise ParameterError(f"growth rate must be positive, got {growth_rate}")
    decay = certificate.decrease_rate / certificate.lambda_max
    growth = growth_rate / certificate.lambda_min
    expansion = math.exp(period * (decay + growth) / 2.0)
    expansion_time = 2.0 * math.log(expansion) / (decay + growth)
    assert abs(expansion_time - period) <= 1e-12 * max(1.0, period)
    ratio_sup = decay / (decay + growth)
    dwell_value = 1.0 + growth / decay
    min_dwell = math.ceil(dwell_value - 1e-9 * max(1.0, abs(dwell_value)))
    if not certificate.admits_expansion(expansion):
        raise CertificateError(
            f"expanded inner level set (factor {expansion:.6g}) does not fit "
            f"inside the outer level set; enlarge the radius gap")
    return DwellRates(decay_exponent=decay, growth_exponent=growth,
                      level_expansion=expansion, expansion_time=expansion_time,
                      mismatch_ratio_sup=ratio_sup,
                      min_dwell_intervals=int(min_dwell))


def _prefix_integrals(values: np.ndarray, step: float) -> np.ndarray:
    """Cumulative integral at every grid node by composite Simpson, with a
    trapezoid closing panel where the node count is even."""
    out = np.zeros(len(values))
    for k in range(1, len(values)):
        if k % 2 == 0:
            out[k] = out[k - 2] + step / 3.0 * (values[k - 2] + 4 * values[k - 1] + values[k])
        else:
            out[k] = out[k - 1] + step / 2.0 * (values[k - 1] + values[k])
    return out


def refined_gains(plant: Plant, drive_gain: float, period: float,
                  grid: int = 50) -> Tuple[float, float]:
    """Sharper (a1, b1) for plants with at most one switch per interval.

    Instead of bounding every propagator norm by ``e^{L t}``, the exact
    two-factor products across a single switch at time ``t'`` inside
    ``[0, t]`` are maximized over a uniform grid in ``(t, t')`` for every
    ordered mode pair, with the propagator-norm integrals evaluated by
    composite Simpson on the same grid.  Both results are guaranteed not to
    exceed their closed-form counterparts.
    """
    if grid < 2:
        raise ParameterError("grid must have at least two nodes")
    h = period / grid
    ts = np.arange(grid + 1) * h
    n = plant.dim

    def norm_table(A_row, A_col, sign):
        """W[j, k] = || e^{sign*A_row*ts[j]} @ e^{sign*A_col*ts[k]} ||."""
        Er = expm(sign * A_row[None] * ts[:, None, None])
        Ec = expm(sign * A_col[None] * ts[:, None, None])
        prod = Er[:, None] @ Ec[None, :]
        return spectral_norms(prod), Er, Ec

    pairs = [(p, q) for p in range(plant.num_modes)
             for q in range(plant.num_modes) if p != q]
    if not pairs:
        pairs = [(0, 0)]  # single-mode plant: the switch is a no-op
    best_a1 = 0.0
    best_b1 = 0.0
    for p, q in pairs:
        Ap, Aq = plant.modes[p].A, plant.modes[q].A
        # --- sampled-norm gain: inverse-time propagators
        W, Em_p, _ = norm_table(Ap, Aq, -1.0)          # ||e^{-Ap ts_j} e^{-Aq ts_k}||
        pre_p = _prefix_integrals(spectral_norms(Em_p), h)
        W_pre = np.stack([_prefix_integrals(W[j], h) for j in range(grid + 1)])
        for i in range(grid + 1):                      # t = ts[i]
            for j in range(i + 1):                     # switch at t' = ts[j]
                denom = 1.0 - drive_gain * (W_pre[j, i - j] + pre_p[j])
                if denom <= 0.0:
                    raise ConditionViolatedError(
                        "refined contraction denominator vanished; the "
                        "sampling period is too coarse", value=denom)
                best_a1 = max(best_a1, W[j, i - j] / denom)
        # --- intersample drift gain: forward-time propagators
        G, Fq, Fp = norm_table(Aq, Ap, 1.0)            # ||e^{Aq ts_a} e^{Ap ts_b}||
        pre_q = _prefix_integrals(spectral_norms(Fq), h)
        diff = spectral_norms(Fq[:, None] @ Fp[None, :] - np.eye(n))
        G_pre = np.stack([_prefix_integrals(G[a], h) for a in range(grid + 1)])
        for i in range(grid + 1):
            for j in range(i + 1):
                term = (diff[i - j, j]
                        + drive_gain * (pre_q[i - j] + G_pre[i - j, j]))
                best_b1 = max(best_b1, term)
    return float(best_a1), float(best_b1)


def stability_bounds(plant: Plant, partition: QuantizerPartition,
                     certificate: LyapunovCertificate) -> StabilityBounds:
    """Evaluate the whole chain for one configuration."""
    ids = cells_covering_ellipsoid(partition, certificate.matrix,
                                   certificate.level_outer)
    drift = plant.max_drift_norm()
    a0 = quantized_drive_gain(plant, partition, certificate, cell_ids=ids)
    eta = sampling_contraction(drift, a0, plant.sampling_period)
    a1 = sampled_norm_gain(drift, a0, plant.sampling_period)
    b1 = intersample_drift_gain(drift, a0, plant.sampling_period)
    g0 = {}
    for p in range(plant.num_modes):
        for g in range(plant.num_modes):
            if p != g:
                g0[(p, g)] = quantization_error_gain(
                    plant, partition, certificate, p, g, cell_ids=ids)
    growth, gains = mismatch_growth_rate(plant, certificate, a1, b1, g0)
    rates = dwell_time_rates(certificate, growth, plant.sampling_period)
    bits = quantization_bits(len(ids), plant.num_modes)
    return StabilityBounds(
        drift_norm=drift, drive_gain=a0, contraction=eta,
        sampled_norm_gain=a1, intersample_drift_gain=b1,
        quantization_error_gains=g0, mismatch_gains=gains,
        growth_rate=growth, rates=rates, covering_cells=len(ids),
        bits_per_sample=bits, bit_rate=bits / plant.sampling_period)
