"""Experiment orchestration: runs cells (density x seed x method), persists
metrics/events/summary CSVs, and emits the accuracy-vs-density plot."""

from __future__ import annotations

import csv
import os
import statistics

from . import data as datamod
from . import netcore
from .pruner import prune_train_loop

METRICS_COLUMNS = ["run_id", "seed", "method", "epoch", "lr", "train_loss",
                   "test_acc", "global_density"]
EVENTS_COLUMNS = ["epoch", "density_before", "density_after", "layer", "tau",
                  "pruned", "shortfall"]
SUMMARY_COLUMNS = ["density", "method", "n", "mean_acc", "std_acc"]


def load_experiment_data(config, seed=0):
    flatten = config.model == "mlp"
    return datamod.load_dataset(config.dataset, config.data_path,
                                seed=seed, flatten=flatten)


def build_model_for(config, input_shape, num_classes, seed):
    return netcore.build_model(config.model, input_shape, num_classes, seed,
                               hidden=tuple(config.hidden))


def _run_cell(config, dataset, method, density, seed, out_dir, log=None):
    x_tr, y_tr, x_te, y_te, input_shape, num_classes = dataset
    model = build_model_for(config, input_shape, num_classes, seed)
    cfg = config.train_config(seed, density if method != "dense" else 1.0)
    run_id = (f"dense_s{seed}" if method == "dense"
              else f"{method}_d{density:g}_s{seed}")
    loop_method = "dense" if method == "dense" else method
    ckpt_path = None
    if config.checkpoint_every:
        ckpt_path = os.path.join(out_dir, f"{run_id}.ckpt")
    if log:
        log(f"running {run_id} ({cfg.total_epochs} epochs)")
    result = prune_train_loop(
        model, (x_tr, y_tr, x_te, y_te), cfg, method=loop_method, run_id=run_id,
        checkpoint_path=ckpt_path, checkpoint_every=config.checkpoint_every,
        importance_dir=out_dir)
    return result


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("lr", "train_loss", "test_acc", "global_density"):
                out[key] = repr(float(row[key]))
            writer.writerow(out)


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rows.append({
                "run_id": row["run_id"],
                "seed": int(row["seed"]),
                "method": row["method"],
                "epoch": int(row["epoch"]),
                "lr": float(row["lr"]),
                "train_loss": float(row["train_loss"]),
                "test_acc": float(row["test_acc"]),
                "global_density": float(row["global_density"]),
            })
    return rows


def write_events_csv(path, events):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EVENTS_COLUMNS)
        for event in events:
            for lp in event.layers:
                writer.writerow([event.epoch, repr(event.density_before),
                                 repr(event.density_after), lp.position,
                                 repr(lp.tau), lp.pruned, lp.shortfall])
            if not event.layers:
                writer.writerow([event.epoch, repr(event.density_before),
                                 repr(event.density_after), "", "", 0, 0])


def summarize_metrics(rows):
    """Per (density, method) mean/std of final-epoch test accuracy."""
    finals = {}
    for row in rows:
        key = row["run_id"]
        if key not in finals or row["epoch"] > finals[key]["epoch"]:
            finals[key] = row
    cells = {}
    for row in finals.values():
        if row["method"] == "dense":
            density = 1.0
        else:
            # nominal target density is encoded in the run id:
            # "<method>_d<density>_s<seed>"
            try:
                density = float(row["run_id"].split("_d")[1].split("_s")[0])
            except (IndexError, ValueError):
                density = round(row["global_density"], 6)
        cells.setdefault((density, row["method"]), []).append(row["test_acc"])
    summary = []
    for (density, method), accs in sorted(cells.items(), reverse=True):
        summary.append({
            "density": density,
            "method": method,
            "n": len(accs),
            "mean_acc": statistics.fmean(accs),
            "std_acc": statistics.stdev(accs) if len(accs) > 1 else 0.0,
        })
    return summary


def write_summary_csv(path, summary):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in summary:
            out = dict(row)
            out["mean_acc"] = repr(row["mean_acc"])
            out["std_acc"] = repr(row["std_acc"])
            writer.writerow(out)


def plot_degradation(summary, path):
    """Accuracy-vs-density SVG, one series per method (dense drawn as a rule)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    by_method = {}
    dense_acc = None
    for row in summary:
        if row["method"] == "dense":
            dense_acc = row["mean_acc"]
            continue
        by_method.setdefault(row["method"], []).append(
            (row["density"], row["mean_acc"], row["std_acc"]))
    for method, points in sorted(by_method.items()):
        points.sort(reverse=True)
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        errs = [p[2] for p in points]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=method)
    if dense_acc is not None:
        ax.axhline(dense_acc, linestyle="--", color="gray", label="dense baseline")
    ax.set_xlabel("density (fraction of weights kept)")
    ax.set_ylabel("test accuracy")
    ax.set_title("Accuracy degradation vs network density")
    ax.invert_xaxis()
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run_experiment(config, log=print):
    """Execute the full experiment grid and persist all artifacts.

    Per seed: one shared dense baseline. Per (density, seed, method): one
    pruned run. Failures are isolated to their cell and reported; the summary
    simply lacks the failed cells.
    """
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_experiment_data(config)

    all_metrics = []
    all_events = []
    failures = []

    cells = [("dense", 1.0, seed) for seed in config.seeds]
    cells += [(method, density, seed)
              for density in config.densities
              for seed in config.seeds
              for method in config.methods]

    for method, density, seed in cells:
        try:
            result = _run_cell(config, dataset, method, density, seed, out_dir,
                               log=log)
        except Exception as e:  # noqa: BLE001 - cell isolation is the contract
            failures.append((method, density, seed, str(e)))
            if log:
                log(f"cell ({method}, d={density}, seed={seed}) failed: {e}")
            continue
        all_metrics.extend(result.metrics)
        all_events.extend(result.events)

    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), all_metrics)
    write_events_csv(os.path.join(out_dir, "events.csv"), all_events)
    summary = summarize_metrics(all_metrics)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    plot_degradation(summary, os.path.join(out_dir, "degradation.svg"))
    return {"metrics": all_metrics, "events": all_events, "summary": summary,
            "failures": failures, "out_dir": out_dir}


def summarize_directory(out_dir):
    """Rebuild summary.csv and the degradation plot from metrics.csv."""
    rows = read_metrics_csv(os.path.join(out_dir, "metrics.csv"))
    summary = summarize_metrics(rows)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    plot_degradation(summary, os.path.join(out_dir, "degradation.svg"))
    return summary
