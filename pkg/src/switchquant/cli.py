"""Batch front end: load a declarative experiment config, run the pipeline
(validation, certificate, bound chain, simulation campaigns), and write
plain-text, JSON, and CSV reports plus plot-ready polylines.

The config is a single JSON file with nested sections (``plant``,
``quantizer``, ``certificate`` or ``synthesis``, ``bounds``, ``campaign``,
``output``); matrices are row-major nested lists.  Fixed config and seeds
give byte-identical outputs.  The worker count for campaigns comes from
the ``SWITCHQUANT_WORKERS`` environment variable (default 1).
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import solve_continuous_are

from . import bounds as bounds_mod
from .errors import (CertificateError, ConditionViolatedError, ConfigError,
                     SwitchQuantError)
from .model import Mode, Plant, SwitchingSignal, validate_plant
from .quantizer import QuantizerPartition, build_log_quantizer
from .sim import simulate, stability_verdict, write_trajectory_csv
from .switching import adversarial_signal, mismatch_profile, random_dwell_signal
from .synthesis import (AlgorithmParams, LyapunovCertificate, check_assumption4,
                        load_certificate, save_certificate, synthesize)

WORKERS_ENV = "SWITCHQUANT_WORKERS"


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def load_config(path) -> dict:
    """Read and structurally validate a JSON experiment config."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if "plant" not in cfg or "quantizer" not in cfg:
        raise ConfigError("config needs 'plant' and 'quantizer' sections")
    cfg.setdefault("_base_dir", str(Path(path).resolve().parent))
    return cfg


def _matrix(entry, what: str) -> np.ndarray:
    try:
        arr = np.array(entry, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a numeric matrix") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{what}: expected a 2-D row-major matrix")
    return arr


def lqr_gain(A: np.ndarray, B: np.ndarray, state_weight: np.ndarray,
             input_weight: np.ndarray) -> np.ndarray:
    """Infinite-horizon LQR gain (sign convention ``u = K x``)."""
    X = solve_continuous_are(A, B, state_weight, input_weight)
    return -np.linalg.solve(input_weight, B.T @ X)


def build_plant(cfg: dict) -> Plant:
    section = cfg["plant"]
    try:
        period = float(section["sampling_period"])
        entries = section["modes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"plant section malformed: {exc}") from exc
    modes = []
    for i, entry in enumerate(entries):
        A = _matrix(entry["A"], f"mode {i} A")
        B = _matrix(entry["B"], f"mode {i} B")
        if "K" in entry:
            K = _matrix(entry["K"], f"mode {i} K")
        elif "lqr" in entry:
            spec = entry["lqr"] or {}
            sw = spec.get("state_weight", "identity")
            iw = spec.get("input_weight", "identity")
            Q = np.eye(A.shape[0]) if sw == "identity" else _matrix(sw, f"mode {i} state weight")
            R = np.eye(B.shape[1]) if iw == "identity" else _matrix(iw, f"mode {i} input weight")
            K = lqr_gain(A, B, Q, R)
        else:
            raise ConfigError(f"mode {i}: provide 'K' or an 'lqr' block")
        modes.append(Mode(index=i, A=A, B=B, K=K))
    return Plant(modes=tuple(modes), sampling_period=period)


def build_partition(cfg: dict) -> QuantizerPartition:
    section = cfg["quantizer"]
    try:
        return build_log_quantizer(
            deadzone=float(section["deadzone"]),
            ratio=float(section["ratio"]),
            levels_per_axis=int(section["levels_per_axis"]),
            dim=int(section.get("dim", 2)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"quantizer section malformed: {exc}") from exc


def obtain_certificate(cfg: dict, plant: Plant,
                       partition: QuantizerPartition):
    """Certificate from the config: inline matrix, file path, or synthesis.

    Returns ``(certificate, provenance, synthesis_outcome_or_None)``.
    """
    section = cfg.get("certificate")
    if section and "P" in section:
        cert = LyapunovCertificate(
            matrix=_matrix(section["P"], "certificate P"),
            decrease_rate=float(section["decrease_rate"]),
            outer_radius=float(section["outer_radius"]),
            inner_radius=float(section["inner_radius"]))
        return cert, "inline", None
    if section and "path" in section:
        path = Path(cfg.get("_base_dir", ".")) / section["path"]
        if not path.exists():
            raise ConfigError(f"certificate file {path} does not exist")
        return load_certificate(path), f"file:{section['path']}", None
    syn = cfg.get("synthesis")
    if syn is None:
        raise ConfigError("config provides neither a certificate nor a "
                          "synthesis section")
    params = AlgorithmParams(
        outer_ball=float(syn["outer_ball"]),
        inner_ball=float(syn["inner_ball"]),
        decrease_rate=float(syn.get("decrease_rate", 1.0)),
        step_margin=float(syn.get("step_margin", 0.1)),
        margin_floor=float(syn.get("margin_floor", 0.05)),
        samples_per_run=int(syn.get("samples_per_run", 100_000)),
        time_samples=int(syn.get("time_samples", 5)),
        seed=int(syn.get("seed", 0)),
        max_runs=int(syn.get("max_runs", 50)))
    outcome = synthesize(plant, partition, params)
    return outcome.certificate, "synthesized", outcome


# --------------------------------------------------------------------------
# geometry helpers
# --------------------------------------------------------------------------

def ellipsoid_polyline(P: np.ndarray, level: float, points: int) -> np.ndarray:
    """Boundary polyline of ``{x : x' P x = level}`` for planar systems.

    Maps equally spaced angles through the eigen-decomposition of ``P``;
    every returned point satisfies the level equation to relative 1e-9.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (2, 2):
        raise ConfigError(f"ellipsoid polylines need a planar system, got {P.shape}")
    w, U = np.linalg.eigh(P)
    angles = np.linspace(0.0, 2 * np.pi, points)
    circle = np.stack([np.cos(angles), np.sin(angles)])
    return (U @ (circle / np.sqrt(w)[:, None]) * np.sqrt(level)).T


def boundary_state(cert: LyapunovCertificate, radius: float, rng) -> np.ndarray:
    """Random state on the level set ``{V = radius^2 lambda_max}``."""
    w, U = np.linalg.eigh(cert.matrix)
    direction = rng.normal(size=cert.dim)
    direction /= np.linalg.norm(direction)
    level = radius ** 2 * cert.lambda_max
    return U @ (direction / np.sqrt(w)) * np.sqrt(level)


# --------------------------------------------------------------------------
# campaign execution
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    verdict: object
    trajectory: object
    mismatch_total: float
    switch_count: int


def _campaign_run(payload) -> RunResult:
    (plant, partition, cert, seed, dwell, prob, horizon, placement,
     margin, expansion, probes, adversarial) = payload
    if adversarial is None:
        signal = random_dwell_signal(plant, dwell, prob, horizon, seed=[seed, 0])
    else:
        signal, _, _ = adversarial_signal(dwell, plant.sampling_period,
                                          adversarial["slack"], horizon,
                                          adversarial["variant"])
    rng = np.random.default_rng([seed, 1])
    if placement == "outer_boundary":
        x0 = boundary_state(cert, cert.outer_radius - margin, rng)
    else:
        x0 = np.asarray(placement, dtype=float)
    trajectory = simulate(plant, partition, signal, x0, horizon,
                          certificate=cert, probes_per_interval=probes)
    verdict = stability_verdict(trajectory, cert, expansion)
    profile = mismatch_profile(signal, plant.sampling_period, horizon)
    return RunResult(seed=seed, verdict=verdict, trajectory=trajectory,
                     mismatch_total=profile.total,
                     switch_count=len(signal.switches))


def run_campaign(plant, partition, cert, campaign: dict, expansion: float,
                 adversarial: Optional[dict] = None) -> list:
    seeds = [int(s) for s in campaign["seeds"]]
    dwell = int(campaign.get("dwell_intervals", 1))
    prob = float(campaign.get("switch_probability", 0.0))
    horizon = float(campaign["horizon"])
    placement = campaign.get("initial_state", "outer_boundary")
    margin = float(campaign.get("boundary_margin", 0.001))
    probes = int(campaign.get("probes_per_interval", 8))
    payloads = [(plant, partition, cert, s, dwell, prob, horizon, placement,
                 margin, expansion, probes, adversarial) for s in seeds]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_campaign_run, payloads))
    else:
        results = [_campaign_run(p) for p in payloads]
    return sorted(results, key=lambda r: r.seed)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class ExitReport:
    exit_code: int
    stage: str
    message: str
    verdict_failures: int = 0
    output_dir: Optional[str] = None


def _fmt(value) -> str:
    return f"{value:.12g}"


def _summary_text(plant, partition, validation, cert, cert_source, bounds,
                  rates_used, rates_source, results, campaign_kind,
                  synthesis_outcome) -> str:
    lines = []
    out = lines.append
    out("switchquant experiment summary")
    out("==============================")
    out("")
    out("[plant]")
    out(f"modes: {plant.num_modes}  state dim: {plant.dim}  "
        f"input dim: {plant.input_dim}  sampling period: {_fmt(plant.sampling_period)}")
    for check in validation.modes:
        eig = ", ".join(f"{v.real:.6g}{v.imag:+.6g}j" if v.imag else f"{v.real:.6g}"
                        for v in np.sort_complex(check.eigenvalues))
        out(f"mode {check.index}: matched closed-loop eigenvalues [{eig}] "
            f"hurwitz={'yes' if check.hurwitz else 'NO'}")
    for p in range(plant.num_modes):
        for q in range(plant.num_modes):
            if p == q:
                continue
            eig = np.sort_complex(np.linalg.eigvals(
                plant.modes[p].A + plant.drive_matrix(p, q)))
            txt = ", ".join(f"{v.real:.6g}{v.imag:+.6g}j" if v.imag else f"{v.real:.6g}"
                            for v in eig)
            out(f"cross mode plant {p} under gain {q}: eigenvalues [{txt}]")
    out("")
    out("[quantizer]")
    out(f"cells: {len(partition.cells)}  coverage radius: "
        f"{_fmt(partition.coverage_radius)}")
    out("")
    out("[certificate]")
    out(f"source: {cert_source}")
    if synthesis_outcome is not None:
        out(f"synthesis runs: {synthesis_outcome.runs_executed}  "
            f"updates: {synthesis_outcome.total_updates}")
    for row in cert.matrix:
        out("P  " + "  ".join(f"{v:.12g}" for v in row))
    out(f"decrease rate: {_fmt(cert.decrease_rate)}  outer radius: "
        f"{_fmt(cert.outer_radius)}  inner radius: {_fmt(cert.inner_radius)}")
    out(f"eigenvalues: min {_fmt(cert.lambda_min)}  max {_fmt(cert.lambda_max)}")
    if bounds is not None:
        out("")
        out("[bounds]")
        out(f"drift norm: {_fmt(bounds.drift_norm)}")
        out(f"drive gain: {_fmt(bounds.drive_gain)}")
        out(f"contraction: {_fmt(bounds.contraction)}")
        out(f"sampled norm gain: {_fmt(bounds.sampled_norm_gain)}")
        out(f"intersample drift gain: {_fmt(bounds.intersample_drift_gain)}")
        for (p, q), v in sorted(bounds.quantization_error_gains.items()):
            out(f"quantization error gain {p}->{q}: {_fmt(v)}")
        for (p, q), v in sorted(bounds.mismatch_gains.items()):
            out(f"mismatch gain {p}->{q}: {_fmt(v)}")
        out(f"growth rate (computed): {_fmt(bounds.growth_rate)}")
        out(f"covering cells: {bounds.covering_cells}  bits per sample: "
            f"{_fmt(bounds.bits_per_sample)}  bit rate: {_fmt(bounds.bit_rate)}")
    if rates_used is not None:
        out("")
        out(f"[rates] ({rates_source})")
        out(f"decay exponent: {_fmt(rates_used.decay_exponent)}")
        out(f"growth exponent: {_fmt(rates_used.growth_exponent)}")
        out(f"level expansion: {_fmt(rates_used.level_expansion)}")
        out(f"expansion time: {_fmt(rates_used.expansion_time)}")
        out(f"mismatch ratio sup: {_fmt(rates_used.mismatch_ratio_sup)}")
        out(f"min dwell intervals: {rates_used.min_dwell_intervals}")
    if results:
        out("")
        out(f"[campaign] kind: {campaign_kind}  runs: {len(results)}")
        passes = 0
        for res in results:
            v = res.verdict
            passes += bool(v.passed)
            settle = "never" if v.settling_time is None else _fmt(v.settling_time)
            out(f"seed {res.seed}: {'PASS' if v.passed else 'FAIL'}  "
                f"settling={settle}  contained={v.contained}  "
                f"exits_on_mismatch={v.exits_on_mismatch_only}  "
                f"peak_ok={v.excursion_peak_ok}  "
                f"coverage_exceeded={v.coverage_exceeded}  "
                f"switches={res.switch_count}  "
                f"mismatch_total={_fmt(res.mismatch_total)}")
        out(f"tally: {passes}/{len(results)} pass")
    out("")
    return "\n".join(lines)


def _write_outputs(out_dir: Path, summary: str, bounds, rates_used,
                   rates_source, cert, results, expansion) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.txt").write_text(summary)
    record = {}
    if bounds is not None:
        record["bounds"] = bounds.as_dict()
    if rates_used is not None:
        record["rates_used"] = {
            "source": rates_source,
            "decay_exponent": rates_used.decay_exponent,
            "growth_exponent": rates_used.growth_exponent,
            "level_expansion": rates_used.level_expansion,
            "expansion_time": rates_used.expansion_time,
            "mismatch_ratio_sup": rates_used.mismatch_ratio_sup,
            "min_dwell_intervals": rates_used.min_dwell_intervals,
        }
    record["certificate"] = {
        "P": cert.matrix.tolist(),
        "decrease_rate": cert.decrease_rate,
        "outer_radius": cert.outer_radius,
        "inner_radius": cert.inner_radius,
        "lambda_min": cert.lambda_min,
        "lambda_max": cert.lambda_max,
    }
    if results:
        record["campaign"] = [{
            "seed": res.seed,
            "passed": bool(res.verdict.passed),
            "contained": bool(res.verdict.contained),
            "settling_time": res.verdict.settling_time,
            "first_entry_inner": res.verdict.first_entry_inner,
            "exits_on_mismatch_only": bool(res.verdict.exits_on_mismatch_only),
            "excursion_peak_ok": bool(res.verdict.excursion_peak_ok),
            "coverage_exceeded": bool(res.verdict.coverage_exceeded),
            "switch_count": res.switch_count,
            "mismatch_total": res.mismatch_total,
        } for res in results]
    (out_dir / "bounds.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")
    save_certificate(cert, out_dir / "certificate.txt")

    if cert.dim == 2:
        plots = out_dir / "plots"
        plots.mkdir(exist_ok=True)
        for name, level in (("outer_ellipse", cert.level_outer),
                            ("attractor_ellipse",
                             expansion ** 2 * cert.level_inner)):
            poly = ellipsoid_polyline(cert.matrix, level, 512)
            with open(plots / f"{name}.csv", "w") as fh:
                fh.write("x1,x2\n")
                for x1, x2 in poly:
                    fh.write(f"{x1:.17g},{x2:.17g}\n")
        for res in results:
            with open(plots / f"trajectory_{res.seed}.csv", "w") as fh:
                fh.write("x1,x2\n")
                for row in res.trajectory.x:
                    fh.write(f"{row[0]:.17g},{row[1]:.17g}\n")
    runs_dir = out_dir / "runs"
    if results:
        runs_dir.mkdir(exist_ok=True)
        for res in results:
            write_trajectory_csv(res.trajectory, runs_dir / f"run_{res.seed}.csv")


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def run(config, out_dir: Optional[str] = None,
        stages: tuple = ("bounds", "campaign"),
        adversarial_mode: bool = False) -> ExitReport:
    """Execute the pipeline described by ``config`` (path or dict)."""
    cfg = load_config(config) if not isinstance(config, dict) else config
    stage = "config"
    try:
        plant = build_plant(cfg)
        partition = build_partition(cfg)
        stage = "validation"
        validation = validate_plant(plant)
        if not validation.ok:
            bad = [c.index for c in validation.modes if not c.hurwitz]
            return ExitReport(2, stage,
                              f"matched closed loop not Hurwitz for modes {bad}")
        stage = "certificate"
        cert, cert_source, outcome = obtain_certificate(cfg, plant, partition)

        bounds = None
        rates_used, rates_source = None, ""
        if "bounds" in stages:
            stage = "bounds"
            bounds = bounds_mod.stability_bounds(plant, partition, cert)
            rates_used, rates_source = bounds.rates, "computed growth rate"
            override = (cfg.get("bounds") or {}).get("growth_rate_override")
            if override is not None:
                rates_used = bounds_mod.dwell_time_rates(
                    cert, float(override), plant.sampling_period)
                rates_source = f"growth rate override {override}"

        results = []
        campaign_kind = "none"
        campaign = cfg.get("campaign")
        if "campaign" in stages and campaign:
            stage = "campaign"
            expansion = campaign.get("level_expansion_override")
            if expansion is None:
                if rates_used is None:
                    raise ConfigError("campaign needs bounds or an explicit "
                                      "level_expansion_override")
                expansion = rates_used.level_expansion
            expansion = float(expansion)
            if not cert.admits_expansion(expansion):
                raise CertificateError(
                    f"level expansion {expansion:.6g} pushes the attractor "
                    f"outside the outer level set; increase the radius gap "
                    f"or lower the growth rate")
            adversarial = cfg.get("adversarial") if adversarial_mode else None
            if adversarial_mode:
                adversarial = {"slack": float((adversarial or {}).get("slack", 1e-3)),
                               "variant": (adversarial or {}).get("variant", "global")}
                campaign = dict(campaign)
                campaign["dwell_intervals"] = int(
                    (cfg.get("adversarial") or {}).get("dwell_intervals", 1))
            campaign_kind = "adversarial" if adversarial_mode else "dwell-random"
            results = run_campaign(plant, partition, cert, campaign,
                                   expansion, adversarial)
        else:
            expansion = rates_used.level_expansion if rates_used else 1.0 + 1e-9

        stage = "report"
        summary = _summary_text(plant, partition, validation, cert,
                                cert_source, bounds, rates_used, rates_source,
                                results, campaign_kind, outcome)
        target = Path(out_dir or (cfg.get("output") or {}).get("directory", "out"))
        _write_outputs(target, summary, bounds, rates_used, rates_source,
                       cert, results, expansion)

        failures = sum(not r.verdict.passed for r in results)
        if failures and not adversarial_mode:
            return ExitReport(1, "campaign",
                              f"{failures} of {len(results)} runs failed the "
                              f"stability verdict", verdict_failures=failures,
                              output_dir=str(target))
        note = ""
        if adversarial_mode and failures:
            note = (f" ({failures} expected-unstable adversarial runs, "
                    f"not counted as errors)")
        return ExitReport(0, "done", f"outputs in {target}{note}",
                          verdict_failures=failures, output_dir=str(target))
    except ConditionViolatedError as exc:
        return ExitReport(3, stage,
                          f"{exc} | remediation: shorten the sampling period "
                          f"or refine the quantizer")
    except CertificateError as exc:
        return ExitReport(4, stage,
                          f"{exc} | remediation: widen the gap between inner "
                          f"and outer radii or recompute the certificate")
    except SwitchQuantError as exc:
        return ExitReport(5, stage, str(exc))


def bundled_config(name: str = "paper_sec5") -> dict:
    """Load a config shipped with the package."""
    text = resources.files("switchquant").joinpath(f"data/{name}.json").read_text()
    return json.loads(text)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="switchquant",
        description="Stability certificates for quantized sampled-data "
                    "switched linear systems")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the synthesis seed")

    add_common(sub.add_parser("synthesize", help="compute a certificate only"))
    add_common(sub.add_parser("bounds", help="certificate plus bound chain"))
    add_common(sub.add_parser("simulate", help="full pipeline with campaign"))
    add_common(sub.add_parser("adversarial",
                              help="campaign driven by worst-case switching"))
    repro = sub.add_parser("reproduce-sec5",
                           help="run the bundled benchmark scenario")
    repro.add_argument("--out", default="out_sec5")
    repro.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    if args.verb == "reproduce-sec5":
        cfg = bundled_config()
    else:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"error [config]: {exc}", file=sys.stderr)
            return 5
    if args.seed is not None and "synthesis" in cfg:
        cfg["synthesis"]["seed"] = args.seed

    stages = {"synthesize": (), "bounds": ("bounds",),
              "simulate": ("bounds", "campaign"),
              "adversarial": ("bounds", "campaign"),
              "reproduce-sec5": ("bounds", "campaign")}[args.verb]
    report = run(cfg, out_dir=args.out, stages=stages,
                 adversarial_mode=args.verb == "adversarial")
    stream = sys.stdout if report.exit_code == 0 else sys.stderr
    prefix = "" if report.exit_code == 0 else f"error [{report.stage}]: "
    print(f"{prefix}{report.message}", file=stream)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
