"""Command-line entry points: synth, train, eval, ri fit, interpret, serve."""

from __future__ import annotations

import json
import os
from pathlib import Path

import click

from .pipeline import write_csv


def fmt_num(x) -> str:
    """Shortest round-trip decimal, integral floats keeping a trailing .0.

    The web client renders server floats with the same rule, so interval
    endpoints compare string-exactly across CLI and UI.
    """
    if x is None:
        return "---"
    return repr(float(x))


@click.group()
def main():
    """Reference intervals for longitudinal blood biomarkers."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth(spec_path, out_dir):
    """Generate a synthetic cohort (measurements, outcomes, ground truth)."""
    from .synth import CohortSpec, write_cohort
    spec = CohortSpec.from_dict(json.loads(Path(spec_path).read_text()))
    paths = write_cohort(spec, out_dir)
    for name, p in paths.items():
        click.echo(f"{name}: {p}")


def _load_model_config(model_cfg: dict):
    from .model import ModelConfig, preset
    cfg = dict(model_cfg)
    preset_name = cfg.pop("preset", None)
    if "quantile_levels" in cfg:
        cfg["quantile_levels"] = tuple(cfg["quantile_levels"])
    if preset_name:
        return preset(preset_name, **cfg), preset_name
    return ModelConfig(**cfg), None


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
def ingest(input_path, out_dir):
    """Canonicalize a measurement CSV; writes canonical.csv and rejections.csv."""
    from .pipeline import load_measurements, write_canonical_measurements
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_measurements(input_path)
    write_canonical_measurements(out / "canonical.csv", data)
    write_csv(out / "rejections.csv", ["row", "reason"],
              [(r.row, r.reason) for r in data.rejects])
    for w in data.warnings:
        click.echo(f"warning: {w}")
    n_kept = sum(len(s) for per in data.series.values() for s in per.values())
    click.echo(f"kept {n_kept} measurements, rejected {len(data.rejects)} rows")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--log", "log_path", type=click.Path(), default=None)
def train(config_path, data_path, out_path, log_path):
    """Train a model on a measurement CSV (or a synth output directory)."""
    from .checkpoint import save_checkpoint
    from .pipeline import load_measurements
    from .training import TrainPlan, train as run_train, write_training_log

    cfg_json = json.loads(Path(config_path).read_text())
    config, preset_name = _load_model_config(cfg_json.get("model", {}))
    plan = TrainPlan(**{k: tuple(v) if k == "fractions" else v
                        for k, v in cfg_json.get("plan", {}).items()})

    data = Path(data_path)
    csv_path = data / "measurements.csv" if data.is_dir() else data
    cohort = load_measurements(csv_path)
    result = run_train(config, cohort.all_series(), plan)
    if preset_name:
        result.model.meta["preset"] = preset_name
    save_checkpoint(result.model, out_path)
    if log_path:
        write_training_log(result.log, log_path)
    status = "aborted (NaN loss)" if result.aborted else f"best val loss {result.best_val:.6g}"
    click.echo(f"saved {out_path}: {status}")


@main.command("eval")
@click.option("--task", required=True,
              type=click.Choice(["forecast", "ii", "prevalence", "leadtime",
                                 "deviation", "confusion", "cox", "sweep"]))
@click.option("--input", "--in", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None)
@click.option("--outcomes", "outcomes_path", type=click.Path(exists=True), default=None)
@click.option("--policy", "policy_path", type=click.Path(exists=True), default=None)
@click.option("--outcome-name", default="death")
@click.option("--variant", type=click.Choice(["deviation", "raw"]), default="deviation")
@click.option("--bins", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--n-boot", type=int, default=1000)
@click.option("--analytes", "analyte_list", default=None,
              help="comma-separated analyte codes (sweep only; default all)")
def eval_cmd(task, input_path, out_path, ckpt_path, outcomes_path, policy_path,
             outcome_name, variant, bins, seed, n_boot, analyte_list):
    """Run one evaluation task and write a CSV table."""
    from . import pipeline as pl

    model = None
    if ckpt_path:
        from .checkpoint import load_checkpoint
        model = load_checkpoint(ckpt_path)

    if task == "sweep":
        from .checkpoint import load_checkpoint
        from .sweep import sensitivity_sweep
        model = model or load_checkpoint(input_path)
        codes = analyte_list.split(",") if analyte_list else None
        records = sensitivity_sweep(model, codes, seed=seed)
        write_csv(out_path, ["analyte", "feature", "value", "median",
                             "interval_width", "pct_width_change"],
                  [(r.analyte, r.feature, r.value, r.median,
                    r.interval_width, r.pct_width_change) for r in records])
        click.echo(f"wrote {out_path} ({len(records)} rows)")
        return

    data = pl.load_measurements(input_path)
    policy = pl.policy_from_json(policy_path) if policy_path else None
    outcomes = pl.load_outcomes(outcomes_path) if outcomes_path else {}

    if task == "forecast":
        metrics = pl.task_forecast(data, model)
        write_csv(out_path, ["analyte", "model", "mae", "mape", "r2", "n"],
                  [(a, kind, m.mae, m.mape, m.r2, m.n)
                   for (a, kind), m in metrics.items()])
    elif task == "ii":
        res = pl.task_individuality(data, n_boot=n_boot, seed=seed)
        rows = []
        for a, r in res.items():
            rows.append((a, r.cv_intra, r.ci_intra[0], r.ci_intra[1],
                         r.cv_inter,
                         r.ci_inter[0] if r.ci_inter else None,
                         r.ci_inter[1] if r.ci_inter else None,
                         r.ii,
                         r.ci_ii[0] if r.ci_ii else None,
                         r.ci_ii[1] if r.ci_ii else None,
                         r.n_patients))
        write_csv(out_path, ["analyte", "cv_intra", "cv_intra_lo", "cv_intra_hi",
                             "cv_inter", "cv_inter_lo", "cv_inter_hi",
                             "ii", "ii_lo", "ii_hi", "n_patients"], rows)
    elif task in ("prevalence", "leadtime", "confusion", "cox"):
        if policy is None:
            raise click.UsageError(f"--policy is required for task {task}")
        frameworks = ("pop", "per", "norma") if model is not None else ("pop", "per")
        classified = pl.classify_cohort(data, policy, model, frameworks)
        if task == "prevalence":
            res = pl.task_prevalence(classified)
            rows = [(a, r.n,
                     r.prevalence.get("pop"), r.prevalence.get("per"),
                     r.prevalence.get("norma"),
                     r.reclassification.get("per"), r.reclassification.get("norma"))
                    for a, r in res.items()]
            write_csv(out_path, ["analyte", "n", "pop_prevalence", "per_prevalence",
                                 "norma_prevalence", "per_reclassification",
                                 "norma_reclassification"], rows)
        elif task == "leadtime":
            res = pl.task_lead_time(classified)
            rows = [(a, r.n_model_only_flags, r.n_confirmed, r.median_days,
                     r.iqr_days[0] if r.iqr_days else None,
                     r.iqr_days[1] if r.iqr_days else None)
                    for a, r in res.items()]
            write_csv(out_path, ["analyte", "n_model_only_flags", "n_confirmed",
                                 "median_days", "iqr_lo_days", "iqr_hi_days"], rows)
        elif task == "confusion":
            res = pl.task_confusion(classified, outcomes, outcome_name)
            rows = [(a, fw, m.tp, m.fp, m.fn, m.tn, m.ppv, m.sensitivity,
                     m.specificity, m.balanced_accuracy)
                    for (a, fw), m in res.items()]
            write_csv(out_path, ["analyte", "framework", "tp", "fp", "fn", "tn",
                                 "ppv", "sensitivity", "specificity",
                                 "balanced_accuracy"], rows)
        else:
            res = pl.task_cox(classified, data, outcomes, outcome_name,
                              seed=seed, n_boot=n_boot)
            rows = []
            for (a, fw), r in res.items():
                if isinstance(r, str):
                    rows.append((a, fw) + ("---",) * 16 + (r,))
                    continue
                rows.append((a, fw, r.hazard_ratio, r.hr_ci[0], r.hr_ci[1],
                             r.p_value, r.adjusted_p, r.concordance,
                             r.concordance_ci[0] if r.concordance_ci else None,
                             r.concordance_ci[1] if r.concordance_ci else None,
                             r.roc_auc.get(1, (None, None))[0],
                             r.roc_auc.get(3, (None, None))[0],
                             r.roc_auc.get(5, (None, None))[0],
                             r.roc_auc.get(10, (None, None))[0],
                             r.n_train, r.n_test, r.events_train, r.events_test, ""))
            write_csv(out_path, ["analyte", "framework", "hr", "hr_lo", "hr_hi",
                                 "p", "adj_p", "concordance", "c_lo", "c_hi",
                                 "auc_1y", "auc_3y", "auc_5y", "auc_10y",
                                 "n_train", "n_test", "events_train",
                                 "events_test", "note"], rows)
    elif task == "deviation":
        if policy is None:
            raise click.UsageError("--policy is required for task deviation")
        n_bins = bins or (5 if variant == "raw" else 10)
        res = pl.task_deviation_bins(data, policy, outcomes, outcome_name,
                                     variant=variant, n_bins=n_bins)
        rows = []
        for a, bins_list in res.items():
            if bins_list is None:
                rows.append((a,) + ("---",) * 8)
                continue
            for i, b in enumerate(bins_list):
                rows.append((a, i, b.lo, b.hi, b.n, b.events, b.rate, b.ci[0], b.ci[1]))
        write_csv(out_path, ["analyte", "bin", "lo", "hi", "n", "events",
                             "rate", "ci_lo", "ci_hi"], rows)
    click.echo(f"wrote {out_path}")


@main.group()
def ri():
    """Reference-interval fitting commands."""


@ri.command("fit")
@click.option("--framework", required=True, type=click.Choice(["per", "pop"]))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def ri_fit(framework, input_path, policy_path, out_path):
    """Fit reference intervals per patient-analyte and write a CSV."""
    from . import pipeline as pl
    data = pl.load_measurements(input_path)
    policy = pl.policy_from_json(policy_path)
    rows = pl.fit_reference_intervals(data, policy, framework)
    write_csv(out_path, ["patient_id", "analyte", "framework", "lower", "upper", "valid"],
              [(pid, a, fw, lo, hi, valid) for pid, a, fw, lo, hi, valid in rows])
    click.echo(f"wrote {out_path} ({len(rows)} rows)")


@main.command()
@click.option("--analyte", required=True)
@click.option("--sex", required=True, type=click.Choice(["F", "M"]))
@click.option("--age", required=True, type=float)
@click.option("--history", "history_path", required=True, type=click.Path(exists=True),
              help="CSV with columns timestamp,value,unit")
@click.option("--horizon", "horizon_days", type=float, default=None)
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None)
@click.option("--frameworks", default="pop,per,norma")
def interpret(analyte, sex, age, history_path, horizon_days, ckpt_path, frameworks):
    """Interpret a lab history; prints one line per framework."""
    import csv as csv_mod
    from .service import HistoryPoint, InterpretRequest, interpret as run_interpret

    model = None
    if ckpt_path:
        from .checkpoint import load_checkpoint
        model = load_checkpoint(ckpt_path)
    history = []
    with open(history_path, newline="") as fh:
        for row in csv_mod.DictReader(fh):
            history.append(HistoryPoint(timestamp=row["timestamp"],
                                        value=float(row["value"]), unit=row["unit"]))
    req = InterpretRequest(sex=sex, age=age, analyte=analyte, history=history,
                           horizon_days=horizon_days,
                           frameworks=[f for f in frameworks.split(",") if f])
    resp = run_interpret(req, model)
    click.echo(f"analyte={resp.analyte} unit={resp.unit} "
               f"latest={fmt_num(resp.latest_value)} horizon_days={fmt_num(resp.horizon_days)}")
    for fw in ("pop", "per", "norma"):
        r = resp.frameworks.get(fw)
        if r is None:
            continue
        flag = "---" if r.flag_abnormal is None else ("abnormal" if r.flag_abnormal else "normal")
        line = f"{fw} lower={fmt_num(r.lower)} upper={fmt_num(r.upper)} flag={flag}"
        if r.point_forecast is not None:
            line += f" point={fmt_num(r.point_forecast)}"
        click.echo(line)
    for w in resp.warnings:
        click.echo(f"warning: {w}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=None)
@click.option("--ckpt", "ckpt_path", type=click.Path(), default=None)
def serve(host, port, ckpt_path):
    """Start the HTTP service (env: NORMA_CKPT, NORMA_PORT)."""
    import uvicorn
    from .service import create_app
    port = port or int(os.environ.get("NORMA_PORT", "8000"))
    app = create_app(ckpt_path=ckpt_path)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
