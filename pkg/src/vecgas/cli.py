"""Command-line entry point: config ingestion, hypothesis gating, experiment
dispatch, CSV emission, and a reproducibility manifest."""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_from_dict, load_config, parse_sets
from .core import make_degree_schedule, validate_hypotheses
from .ensemble import (
    EnsembleSpec,
    NeighborhoodSpec,
    SamplerOptions,
    ldp_concentration_experiment,
    partition_function,
    sample_prob_k,
)
from .equilibrium import SolverOptions, solve_equilibrium, verify_variational
from .errors import ConfigError, VecgasError
from .fekete import transfinite_diameter_estimate
from .bmtest import RationalFamilySpec, bm_ratio_poly, bm_ratio_rational
from .potential import uniform_measure, vector_energy

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _write_manifest(out: Path, cfg: ExperimentConfig, args, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(cfg.raw_text.encode("utf-8")).hexdigest()
    lines = [
        f"vecgas_version: {__version__}",
        f"numpy_version: {np.__version__}",
        f"config_sha256: {digest}",
        f"seed: {cfg.seed}",
        f"subcommand: {args.command}",
        f"timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S')}",
    ]
    if extra:
        lines.extend(f"{k}: {v}" for k, v in extra.items())
    lines.append("config: |")
    body = cfg.raw_text if cfg.raw_text else "(built from command-line flags)"
    lines.extend("  " + ln for ln in body.splitlines() or ["(empty)"])
    (out / "manifest.yaml").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        if not args.sets:
            raise ConfigError("need --config or --sets")
        sets = parse_sets(args.sets)
        problem = {
            "preset": args.preset,
            "sets": args.sets,
            "r": [float(v) for v in args.r.split(",")] if args.r else [1.0] * len(sets),
        }
        if args.beta is not None:
            problem["beta"] = args.beta
        if args.weights:
            problem["weights"] = args.weights
        data = {
            "problem": problem,
            "grid": {"resolution": args.resolution},
            "ensemble": {"seed": args.seed if args.seed is not None else 0},
        }
        cfg = config_from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    return cfg


def _gate_hypotheses(cfg: ExperimentConfig, force: bool):
    C = cfg.interaction_matrix()
    K = cfg.set_tuple()
    report = validate_hypotheses(C, K)
    if not report.passed and not force:
        print("hypothesis validation FAILED:", file=sys.stderr)
        if not report.nonneg_pass:
            print(f"  negative coupling on intersecting pairs: {report.nonneg_violations}",
                  file=sys.stderr)
        if not report.sign_pass:
            print("  no strict-sign range vector for the intersection graph",
                  file=sys.stderr)
        if not report.independence_pass:
            print(f"  dependent columns share grid cells: {report.dependent_flagged}",
                  file=sys.stderr)
        return C, K, report, False
    if not report.passed and force:
        print("WARNING: hypotheses failed; continuing under --force. "
              "Results are outside the validated regime.", file=sys.stderr)
    return C, K, report, True


def _hypothesis_rows(report):
    rows = [
        ("nonnegative_coupling", report.nonneg_pass),
        ("range_vector_signs", report.sign_pass),
        ("independent_columns", report.independence_pass),
        ("all", report.passed),
    ]
    return [(name, "pass" if ok else "fail") for name, ok in rows]


def cmd_validate(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, force=True)
    out = Path(cfg.out_dir)
    _write_csv(out / "hypotheses.csv", ["hypothesis", "status"],
               _hypothesis_rows(report))
    _write_manifest(out, cfg, args)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _minimizer_rows(K, measure):
    rows = []
    for i in range(K.d):
        comp = measure.components[i]
        for z, w in zip(comp.nodes, comp.weights):
            rows.append((i, repr(z.real), repr(z.imag), repr(float(w))))
    return rows


def cmd_equilibrium(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, args.force)
    if not ok:
        return EXIT_VALIDATION
    Q = cfg.weight_tuple()
    r = cfg.mass_vector()
    opts = SolverOptions(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    sol = solve_equilibrium(C, K, Q, r, opts)
    out = Path(cfg.out_dir)
    _write_csv(out / "minimizer.csv",
               ["component", "node_re", "node_im", "weight"],
               _minimizer_rows(K, sol.minimizer))
    residual = verify_variational(sol, C, K, Q, tol=cfg.solver_tol)
    _write_csv(out / "residuals.csv",
               ["component", "robin_constant", "residual_lower",
                "residual_support", "passed"],
               [(i, repr(float(residual.robin_constants[i])),
                 repr(float(residual.residual_lower[i])),
                 repr(float(residual.residual_support[i])),
                 residual.passed)
                for i in range(K.d)])
    breakdown = vector_energy(sol.minimizer, C, Q)
    _write_csv(out / "energy.csv", ["term", "index", "value"], breakdown.csv_rows())
    _write_manifest(out, cfg, args, {"converged": sol.converged,
                                     "iterations": sol.iterations})
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def _parse_k_range(text):
    lo, _, hi = text.partition("..")
    lo, hi = int(lo), int(hi or lo)
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad k range {text!r}")
    return range(lo, hi + 1)


def cmd_fekete(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, args.force)
    if not ok:
        return EXIT_VALIDATION
    Q = cfg.weight_tuple()
    r = cfg.mass_vector()
    ks = _parse_k_range(args.k_range)
    schedule = cfg.schedule(max(ks))
    solver_opts = SolverOptions(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    estimates = transfinite_diameter_estimate(
        C, K, Q, r, schedule, ks, solver_opts=solver_opts
    )
    out = Path(cfg.out_dir)
    _write_csv(out / "fekete_summary.csv",
               ["k", "total_degree", "log_vdm", "log_vdm_weighted",
                "delta_hat", "energy_reference", "gap_vs_energy"],
               [(e.k, e.total_degree, repr(e.log_vdm), repr(e.log_vdm_weighted),
                 repr(e.delta_hat), repr(e.energy_reference), repr(e.gap))
                for e in estimates])
    _write_manifest(out, cfg, args)
    return EXIT_OK


def _ensemble_spec(cfg, C, K, k_max):
    return EnsembleSpec(
        C=C, K=K, Q=cfg.weight_tuple(), r=cfg.mass_vector(),
        schedule=cfg.schedule(k_max), nu_density=None, seed=cfg.seed,
    )


def cmd_sample(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, args.force)
    if not ok:
        return EXIT_VALIDATION
    spec = _ensemble_spec(cfg, C, K, args.k)
    opts = SamplerOptions(burn_in=cfg.burn_in, thin=cfg.thin, chains=cfg.chains,
                          threads=args.threads)
    batch = sample_prob_k(spec, args.k, args.draws, opts)
    out = Path(cfg.out_dir)
    rows = []
    for s, config in enumerate(batch.configurations(K)):
        for i in range(K.d):
            for z in config.points[i]:
                rows.append((s, i, repr(z.real), repr(z.imag)))
    _write_csv(out / "draws.csv", ["draw", "component", "re", "im"], rows)
    _write_csv(out / "sample_summary.csv",
               ["k", "total_degree", "draws", "acceptance_rate", "sweeps",
                "stalled_sweeps"],
               [(args.k, int(np.sum(batch.degrees)), batch.n_draws,
                 repr(batch.acceptance_rate), batch.sweeps, batch.stalled_sweeps)])
    _write_manifest(out, cfg, args, {"draws": batch.n_draws})
    return EXIT_OK


def cmd_ldp(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, args.force)
    if not ok:
        return EXIT_VALIDATION
    ks = _parse_k_range(args.k_range)
    spec = _ensemble_spec(cfg, C, K, max(ks))
    opts = SamplerOptions(burn_in=cfg.burn_in, thin=cfg.thin, chains=cfg.chains,
                          threads=args.threads)
    center = uniform_measure(K, cfg.mass_vector())
    G = NeighborhoodSpec(center=center, radius=args.ball_radius)
    report_c = ldp_concentration_experiment(
        spec, ks, args.eta, [G], n_draws=cfg.draws, sampler_opts=opts
    )
    out = Path(cfg.out_dir)
    rows = []
    for t, k in enumerate(report_c.ks):
        z = partition_function(spec, k)
        rows.append((k, report_c.total_degrees[t], repr(float(report_c.speeds[t])),
                     repr(z.log_value), repr(z.stderr_log),
                     repr(float(report_c.p_below[t])),
                     repr(float(report_c.q_hits[0][t]))))
    _write_csv(out / "ldp_summary.csv",
               ["k", "total_degree", "speed", "log_z", "log_z_stderr",
                "p_below", "q_ball"],
               rows)
    rate, se = report_c.fitted_rates[0]
    _write_csv(out / "ldp_fit.csv",
               ["fitted_rate", "stderr", "predicted_rate", "delta_reference", "eta"],
               [(repr(rate), repr(se), repr(report_c.predicted_rates[0]),
                 repr(report_c.delta_reference), repr(args.eta))])
    _write_manifest(out, cfg, args)
    return EXIT_OK


def cmd_bm_test(cfg, args):
    C, K, report, ok = _gate_hypotheses(cfg, args.force)
    if not ok:
        return EXIT_VALIDATION
    i = args.component
    comp = K.components[i]
    nu = comp.weights
    Q = cfg.weight_tuple()[i] if cfg.weights else None
    ks = _parse_k_range(args.k_range)
    if args.rational:
        fam = RationalFamilySpec.from_sets(K, i)
        curve = bm_ratio_rational(fam, comp, nu, Q, ks, seed=cfg.seed)
    else:
        curve = bm_ratio_poly(comp, nu, Q, ks, seed=cfg.seed)
    out = Path(cfg.out_dir)
    _write_csv(out / "bm_curve.csv", ["k", "M_k", "M_k_root"],
               [(int(k), repr(float(m)), repr(float(rt)))
                for k, m, rt in zip(curve.ks, curve.ratios, curve.roots)])
    _write_manifest(out, cfg, args)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vecgas",
        description="Vector equilibrium measures, Fekete arrays, Gibbs "
                    "ensembles and their large-deviation diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--preset", choices=("angelesco", "nikishin", "beta"))
        p.add_argument("--sets", help='e.g. "[-1,-0.2];[0.2,1]" or "disc(0,0,1)"')
        p.add_argument("--r", help="comma-separated masses")
        p.add_argument("--weights", help='expressions, e.g. "0;x**2/2"')
        p.add_argument("--beta", type=float, help="coupling for the beta preset")
        p.add_argument("--resolution", type=int, default=400)
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("VECGAS_THREADS", "1")))
        p.add_argument("--force", action="store_true",
                       help="run even if hypothesis validation fails")

    p = sub.add_parser("validate", help="check the standing hypotheses")
    common(p)
    p = sub.add_parser("equilibrium", help="solve the energy minimization")
    common(p)
    p = sub.add_parser("fekete", help="optimize Vandermonde configurations")
    common(p)
    p.add_argument("--k-range", required=True, help="a..b")
    p = sub.add_parser("sample", help="draw from the configuration ensemble")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--draws", type=int, default=200)
    p = sub.add_parser("ldp", help="concentration and rate-function fit")
    common(p)
    p.add_argument("--k-range", required=True, help="a..b")
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--ball-radius", type=float, default=0.1)
    p = sub.add_parser("bm-test", help="Bernstein-Markov ratio curves")
    common(p)
    p.add_argument("--k-range", required=True, help="a..b")
    p.add_argument("--rational", action="store_true")
    p.add_argument("--component", type=int, default=0)
    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "equilibrium": cmd_equilibrium,
    "fekete": cmd_fekete,
    "sample": cmd_sample,
    "ldp": cmd_ldp,
    "bm-test": cmd_bm_test,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except VecgasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
