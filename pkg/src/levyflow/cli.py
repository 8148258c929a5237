"""Command-line entry point: simulate / verify / tightness / noise-test.

Every successful run directory contains the config echo, a versioned JSON
report, CSV tables, a generated gnuplot script, and a checksum manifest
(timestamps live only in the manifest, so re-running with the same seed
reproduces every other artifact byte for byte).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import __version__, harness, noise, verification
from .config import RunConfig, parse_config
from .errors import ConfigurationError, LevyflowError, NumericalError, UsageError

REPORT_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                             for x in row) + "\n")


def _write_manifest(outdir, files):
    entries = {}
    for f in sorted(files):
        p = Path(outdir) / f
        entries[f] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "format_version": REPORT_FORMAT_VERSION,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "checksums": entries,
    }
    _write_json(Path(outdir) / "manifest.json", manifest)


def _echo_config(cfg, outdir):
    with open(Path(outdir) / "config_echo.yaml", "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def _emit_plot_script(outdir, have_increments, have_moments):
    lines = [
        "# gnuplot script generated by levyflow; run: gnuplot plots.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set key left top",
    ]
    if have_moments:
        lines += [
            "set output 'energy_moments.png'",
            "set logscale y",
            "set xlabel 'p'",
            "set ylabel 'E sup ||sqrt(rho) u||^p'",
            "plot 'moments.csv' every ::1 using 1:2:3 with yerrorlines "
            "title 'sup energy moment'",
        ]
    if have_increments:
        lines += [
            "set output 'increment_scaling.png'",
            "set logscale xy",
            "set xlabel 'theta'",
            "set ylabel 'E int ||(rho u)(t+theta)-(rho u)(t)||_{V'}^2 dt'",
            "plot 'increments.csv' every ::1 using 1:2:3 with yerrorlines "
            "title 'measured', 'increments.csv' every ::1 using 1:($2*0+column(2)) "
            "with lines dashtype 2 title 'reference'",
        ]
    with open(Path(outdir) / "plots.gp", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _report_payload(report):
    return {"format_version": REPORT_FORMAT_VERSION,
            "package_version": __version__,
            "report": report.to_json_dict()}


def _write_ensemble_artifacts(cfg, report, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, outdir)
    files = ["config_echo.yaml", "report.json"]
    _write_json(outdir / "report.json", _report_payload(report))
    if "csv" in cfg.output.get("formats", ["json", "csv"]):
        rows = []
        for m in report.moment_estimates:
            g = report.gronwall_bounds[m.p]
            rows.append((float(m.p), m.sup_energy, m.sup_energy_se,
                         m.grad_integral, m.grad_integral_se,
                         g["value"], g["log10"]))
        _write_csv(
            outdir / "moments.csv",
            ["p", "sup_energy", "sup_energy_se", "grad_integral",
             "grad_integral_se", "gronwall_bound", "gronwall_log10_bound"],
            rows,
        )
        files.append("moments.csv")
        if report.increment_table:
            _write_csv(
                outdir / "increments.csv",
                ["theta", "estimate", "stderr"],
                [(t, e, s) for t, e, s in report.increment_table],
            )
            files.append("increments.csv")
    _emit_plot_script(outdir, bool(report.increment_table), True)
    files.append("plots.gp")
    _write_manifest(outdir, files)
    return files


def cmd_simulate(cfg, quiet=False):
    setup = harness.build_setup(cfg)
    traj_mode = cfg.output.get("trajectories", "none")
    outdir = Path(cfg.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    if traj_mode != "none":
        n_stream = 1 if traj_mode == "first" else cfg.ensemble["n_paths"]
        for i in range(n_stream):
            with open(outdir / f"trajectory_{i:05d}.jsonl", "w") as fh:
                harness.simulate_path(setup, i, stream=fh)
    snapshot_times = cfg.output.get("snapshot_times", [])
    if snapshot_times:
        from .transport import write_density_snapshot

        res = harness.simulate_path(setup, 0, record_history=True)
        for ts in snapshot_times:
            idx = int(round(ts / setup.dt))
            write_density_snapshot(
                res.history.rhos[idx], outdir / f"density_t{ts:g}"
            )
    report = harness.run_ensemble(cfg, setup)
    files = _write_ensemble_artifacts(cfg, report, outdir)
    if not quiet:
        print(f"simulate: {report.n_paths} paths, "
              f"aborted fraction {report.aborted_fraction:.3g}")
        for m in report.moment_estimates:
            print(f"  p={m.p}: E sup ||sqrt(rho)u||^p = "
                  f"{m.sup_energy:.6g} +- {m.sup_energy_se:.2g}")
        print(f"  artifacts: {', '.join(files)} in {outdir}")
    return EXIT_OK


def cmd_verify(cfg, quiet=False):
    results, report, all_passed = verification.run_verification_battery(cfg)
    outdir = Path(cfg.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, outdir)
    payload = {
        "format_version": REPORT_FORMAT_VERSION,
        "package_version": __version__,
        "all_passed": all_passed,
        "checks": [
            {"name": r.name, "passed": r.passed, "detail": r.detail}
            for r in results
        ],
        "ensemble_report": report.to_json_dict(),
    }
    _write_json(outdir / "verify_report.json", payload)
    files = _write_ensemble_artifacts(cfg, report, outdir)
    _write_manifest(outdir, sorted(set(files) | {"verify_report.json"}))
    if not quiet:
        for r in results:
            print(r.line())
    return EXIT_OK if all_passed else EXIT_ACCEPTANCE


def cmd_tightness(cfg, quiet=False):
    if not cfg.ensemble.get("theta_grid"):
        raise ConfigurationError("tightness needs a nonempty ensemble.theta_grid")
    setup = harness.build_setup(cfg)
    report = harness.run_ensemble(cfg, setup)
    outdir = Path(cfg.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, outdir)
    _write_csv(
        outdir / "increments.csv",
        ["theta", "estimate", "stderr"],
        [(t, e, s) for t, e, s in report.increment_table],
    )
    _write_csv(
        outdir / "increments_u.csv",
        ["theta", "estimate", "stderr"],
        [(t, e, s) for t, e, s in report.increment_table_u],
    )
    exponent = {
        "format_version": REPORT_FORMAT_VERSION,
        "fitted_increment_exponent": report.fitted_increment_exponent,
        "confidence_interval": list(report.fitted_increment_ci),
        "fitted_increment_exponent_u": report.fitted_increment_exponent_u,
        "dual_truncation_bias": [list(r) for r in report.increment_table_bias],
    }
    _write_json(outdir / "exponent.json", exponent)
    _emit_plot_script(outdir, True, False)
    _write_manifest(
        outdir,
        ["config_echo.yaml", "increments.csv", "increments_u.csv",
         "exponent.json", "plots.gp"],
    )
    if not quiet:
        print(f"tightness: exponent {report.fitted_increment_exponent:.3f} "
              f"CI {report.fitted_increment_ci}")
    return EXIT_OK


def cmd_noise_test(cfg, quiet=False):
    measure = noise.make_measure(cfg.noise["measure"],
                                 **cfg.noise.get("params", {}))
    res = verification.check_noise_statistics(
        measure, cfg.noise["epsilon"], cfg.time["horizon"],
        cfg.verify.get("noise_paths", 4000), cfg.ensemble["seed"],
    )
    outdir = Path(cfg.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, outdir)
    payload = {
        "format_version": REPORT_FORMAT_VERSION,
        "passed": res.passed,
        "detail": res.detail,
        "large_total": measure.large_total,
        "small_total_at_epsilon": measure.small_total(cfg.noise["epsilon"]),
        "neglected_variance": measure.neglected_variance(cfg.noise["epsilon"]),
        "tail_moments": {str(p): measure.moment(p) for p in (1, 2, 4, 8)},
    }
    _write_json(outdir / "noise_report.json", payload)
    _write_csv(
        outdir / "tail_moments.csv",
        ["p", "tail_moment"],
        [(p, measure.moment(p)) for p in (1, 2, 4, 8)],
    )
    with open(outdir / "plots.gp", "w") as fh:
        fh.write(
            "# gnuplot script generated by levyflow; run: gnuplot plots.gp\n"
            "set datafile separator ','\n"
            "set terminal pngcairo size 900,600\n"
            "set output 'tail_moments.png'\n"
            "set logscale y\nset xlabel 'p'\nset ylabel 'tail moment'\n"
            "plot 'tail_moments.csv' every ::1 using 1:2 with linespoints "
            "title 'integral |z|^p over large jumps'\n"
        )
    _write_manifest(outdir, ["config_echo.yaml", "noise_report.json",
                             "tail_moments.csv", "plots.gp"])
    if not quiet:
        print(res.line())
    return EXIT_OK if res.passed else EXIT_ACCEPTANCE


def build_parser():
    parser = argparse.ArgumentParser(
        prog="levyflow",
        description="Spectral Galerkin Monte Carlo simulator for "
        "variable-density flow with Levy forcing",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("verify", cmd_verify),
                     ("tightness", cmd_tightness), ("noise-test", cmd_noise_test)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="YAML config file (defaults used when omitted)")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--paths", type=int, default=None,
                       help="override ensemble.n_paths")
        p.add_argument("--out", type=str, default=None,
                       help="override output.directory")
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else RunConfig.from_dict({})
        overrides = {}
        if args.seed is not None:
            overrides["ensemble"] = {"seed": args.seed}
        if args.paths is not None:
            overrides.setdefault("ensemble", {})["n_paths"] = args.paths
        if args.out is not None:
            overrides["output"] = {"directory": args.out}
        if overrides:
            cfg = cfg.replace(**overrides)
        return args.fn(cfg, quiet=args.quiet)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigurationError):
            for p in exc.problems:
                print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LevyflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
