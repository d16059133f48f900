"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

import numpy as np

from .building import NumericalFailure
from .community import JointAction
from .scenario import config as C
from .scenario import runs as R
from .scenario.baseline import baseline_full_information

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
VERBS = ("run-building", "run-community", "compare-baseline", "sweep-ambiguity", "extreme-pricing",
         "dump-model", "validate-config")
DEFAULT_ALPHAS = (0.0, 0.5, 1.0, 1.5, 2.0)


def _parse_alphas(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--alpha-list expects comma-separated numbers: {exc}") from exc
    if not vals or any(v < 0.0 for v in vals):
        raise argparse.ArgumentTypeError("--alpha-list needs at least one non-negative value")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="dualaif", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, default=None, help="scenario JSON (default: built-in)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override seeds.master")
    p.add_argument("--alpha-list", type=_parse_alphas, default=None, help="ambiguity weights for sweep-ambiguity")
    p.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return p


# -- model dump -----------------------------------------------------------------------------

def matrix_text(title, m):
    buf = io.StringIO()
    buf.write(f"# {title}\n")
    buf.write(f"# shape {m.shape[0]} {m.shape[1]}\n")
    for row in m:
        buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def parse_matrix_text(text):
    rows = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    return np.array([[float(x) for x in r] for r in rows])


def dump_model(cfg, out_dir):
    model = C.community_model_from(cfg)
    out_dir = Path(out_dir)
    written = []
    p = out_dir / "A.txt"
    R.atomic_write(p, matrix_text("A: p(observation | state), rows = observations, columns = states", model.A))
    written.append(p)
    for u in range(model.B.shape[0]):
        p = out_dir / f"B_{u:02d}.txt"
        title = f"B[{u}] action index {u} ({JointAction.from_index(u).label()}): p(next state | state)"
        R.atomic_write(p, matrix_text(title, model.B[u]))
        written.append(p)
    return written


# -- verbs ----------------------------------------------------------------------------------

def _compare_baseline(cfg, out):
    setup = R.building_setups(cfg)[0]
    params = C.thermal_params_from(cfg)
    vcfg = C.vfe_config_from(cfg)
    from .building import optimize_full_horizon

    T0 = cfg["world"]["initial_temp_c"]
    aif = optimize_full_horizon(T0, vcfg, params, setup.profile)
    base = baseline_full_information(T0, vcfg.target_rho, vcfg.sigma_rho, params, setup.profile,
                                     seed=C.component_seed(cfg, "baseline"))
    one_step = R.run_building_day(cfg)
    rows = [
        {"step": t, "aif_full_horizon_c": float(aif.temperatures[t + 1]),
         "baseline_c": float(base.temperatures[t + 1]), "one_step_c": one_step.building_traces[0][t + 1]["temp_c"]
         if t + 1 < len(one_step.building_traces[0]) else float("nan"),
         "target_c": float(vcfg.target_rho[t]), "aif_airflow_kgps": float(aif.airflow[t]),
         "aif_supply_c": float(aif.supply_temp[t]), "baseline_airflow_kgps": float(base.airflow[t]),
         "baseline_supply_c": float(base.supply_temp[t])}
        for t in range(setup.profile.steps)
    ]
    cols = tuple(rows[0])
    R.atomic_write(out / "compare_baseline.csv", R.csv_text(rows, cols))
    diff = float(np.max(np.abs(aif.temperatures - base.temperatures)))
    report = R.RunReport(config=cfg, building_traces=one_step.building_traces, metrics=dict(one_step.metrics))
    report.metrics.update({
        "max_temperature_difference_c": diff,
        "full_horizon_objective": aif.objective,
        "baseline_objective": base.objective,
        "full_horizon_converged": aif.converged,
        "baseline_converged": base.converged,
    })
    R.write_report(report, out)
    return report, f"max|dT|={diff:.4f}C objective aif={aif.objective:.6f} baseline={base.objective:.6f}"


def execute(args, stdout=None):
    stdout = stdout or sys.stdout
    try:
        cfg = C.load_config(args.config, seed=args.seed)
    except C.ConfigError as exc:
        print(f"config error ({len(exc.problems)} problem(s)):", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error reading config: {exc}", file=sys.stderr)
        return EXIT_IO

    out = args.out
    summary = None
    try:
        if args.verb == "validate-config":
            summary = "OK"
        elif args.verb == "dump-model":
            files = dump_model(cfg, out)
            summary = f"wrote {len(files)} matrix files to {out}"
        elif args.verb == "run-building":
            rep = R.run_building_day(cfg)
            R.write_report(rep, out)
            summary = rep.summary_line()
        elif args.verb in ("run-community", "extreme-pricing"):
            if args.verb == "extreme-pricing":
                baseline_rep = R.run_community_day(cfg)
                cfg = C.extreme_pricing(cfg)
            rep = R.run_community_day(cfg)
            if args.verb == "extreme-pricing":
                rep.extra["baseline_price_metrics"] = {
                    k: v for k, v in baseline_rep.metrics.items() if k.startswith("peak_")
                }
                rep.extra["baseline_price_totals"] = baseline_rep.totals
            R.write_report(rep, out)
            summary = rep.summary_line()
            if args.verb == "extreme-pricing":
                summary += f" peak_discharge={rep.metrics['peak_battery_discharge_kwh']:.3f}kWh"
        elif args.verb == "compare-baseline":
            _, summary = _compare_baseline(cfg, out)
        elif args.verb == "sweep-ambiguity":
            alphas = args.alpha_list or list(DEFAULT_ALPHAS)
            reports = R.sweep_ambiguity(cfg, alphas)
            for al, rep in reports.items():
                R.write_report(rep, out / f"alpha_{al:g}")
            rows = R.sweep_rows(reports)
            R.atomic_write(out / "sweep.csv", R.csv_text(rows, tuple(rows[0])))
            monotone = all(R.ambiguity_monotone(rep.extra["selected_ambiguity_by_alpha"]) for rep in reports.values())
            sweep = {
                "alphas": sorted(reports),
                "ambiguity_non_increasing_every_step": monotone,
                "total_spot_cost_usd": {f"{al:g}": rep.totals["spot_cost_usd"] for al, rep in reports.items()},
                "config": cfg,
            }
            R.atomic_write(out / "sweep_report.json", R.json_text(sweep))
            costs = " ".join(f"a={al:g}:{rep.totals['spot_cost_usd']:.4f}$" for al, rep in reports.items())
            summary = f"{costs} ambiguity_monotone={monotone}"
    except NumericalFailure as exc:
        print(f"numerical failure in {exc.module} at step {exc.step} (iteration {exc.iteration}): {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except C.ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet and summary is not None:
        print(summary, file=stdout)
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())

