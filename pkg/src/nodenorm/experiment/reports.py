"""CSV / JSON / SVG outputs for a collection of run records."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from ..diagnostics import overfit_gaps, variance_bins
from .runner import RunRecord, aggregate

RESULT_COLUMNS = (
    "variant", "depth", "seed", "status", "test_acc", "train_acc", "val_acc", "train_loss", "val_loss",
    "acc_gap", "loss_gap", "lipschitz", "hidden_dim", "placement", "residual", "lr", "weight_decay",
    "l1_weight", "dropout_rate", "epochs", "error",
)
AGGREGATE_COLUMNS = ("variant", "depth", "runs", "failed", "mean", "std")
BIN_COLUMNS = ("variant", "shallow_depth", "deep_depth", "seeds", "bin", "acc_shallow", "acc_deep", "gap")


def fmt(value) -> str:
    """Stable text for CSV cells; floats use the shortest exact round-trip form."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def jsonable(obj):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def _sort_key(r: RunRecord):
    return (r.variant, r.depth, r.seed)


def result_rows(records: Sequence[RunRecord]) -> list[dict]:
    rows = []
    for r in sorted(records, key=_sort_key):
        cfg = r.config
        row = {k: cfg.get(k) for k in ("variant", "depth", "seed", "hidden_dim", "placement", "residual",
                                        "lr", "weight_decay", "l1_weight", "dropout_rate", "epochs")}
        row.update(status=r.status, error=r.error)
        if r.ok:
            h = r.history
            acc_gap, loss_gap = overfit_gaps(h)
            row.update(test_acc=r.test_acc, train_acc=h.train_acc[-1], val_acc=h.val_acc[-1],
                       train_loss=h.train_loss[-1], val_loss=h.val_loss[-1], acc_gap=acc_gap, loss_gap=loss_gap,
                       lipschitz=r.diagnostics.get("lipschitz", {}).get("value"))
        rows.append(row)
    return rows


def bin_rows(records: Sequence[RunRecord]) -> list[dict]:
    """Per-variant variance-bin gaps between the shallowest and deepest depth, averaged over seeds."""
    rows = []
    by_variant: dict[str, list[RunRecord]] = {}
    for r in records:
        if r.ok and "variance" in r.diagnostics:
            by_variant.setdefault(r.variant, []).append(r)
    for variant in sorted(by_variant):
        group = by_variant[variant]
        depths = sorted({r.depth for r in group})
        if len(depths) < 2:
            continue
        shallow = {r.seed: r for r in group if r.depth == depths[0]}
        deep = {r.seed: r for r in group if r.depth == depths[-1]}
        seeds = sorted(set(shallow) & set(deep))
        reports = []
        for s in seeds:
            lo, hi = shallow[s], deep[s]
            if lo.test_ids != hi.test_ids:
                continue  # different splits cannot be compared node by node
            reports.append(variance_bins(hi.diagnostics["variance"]["deep_test_var"],
                                         hi.test_correct, lo.test_correct))
        if not reports:
            continue
        acc_s = np.mean([b.acc_shallow for b in reports], axis=0)
        acc_d = np.mean([b.acc_deep for b in reports], axis=0)
        for i in range(len(acc_s)):
            rows.append({"variant": variant, "shallow_depth": depths[0], "deep_depth": depths[-1],
                         "seeds": len(reports), "bin": i + 1, "acc_shallow": float(acc_s[i]),
                         "acc_deep": float(acc_d[i]), "gap": float(acc_s[i] - acc_d[i])})
    return rows


def _record_name(r: RunRecord, used: set[str]) -> str:
    base = f"{r.variant}_L{r.depth}_s{r.seed}"
    name, k = base, 1
    while name in used:
        k += 1
        name = f"{base}_{k}"
    used.add(name)
    return name + ".json"


# figures ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "nodenorm"  # fixed element ids
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)


def plot_accuracy(summary, path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in sorted({c.variant for c in summary}):
        cells = sorted((c for c in summary if c.variant == variant and not math.isnan(c.mean)),
                       key=lambda c: c.depth)
        if cells:
            ax.errorbar([c.depth for c in cells], [c.mean for c in cells], yerr=[c.std for c in cells],
                        marker="o", capsize=3, label=variant)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("number of layers")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def plot_variance(records: Sequence[RunRecord], path: Path) -> bool:
    usable = [r for r in records if r.ok and "variance" in r.diagnostics]
    if not usable:
        return False
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in sorted({r.variant for r in usable}):
        group = [r for r in usable if r.variant == variant]
        deepest = max(r.depth for r in group)
        curves = np.array([r.diagnostics["variance"]["max_log10"] for r in group if r.depth == deepest])
        ax.plot(range(1, deepest + 1), curves.mean(axis=0), marker=".", label=f"{variant} (L={deepest})")
    ax.set_xlabel("layer")
    ax.set_ylabel("max log10 node variance")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    return True


def plot_bins(rows: list[dict], path: Path) -> bool:
    if not rows:
        return False
    plt = _pyplot()
    variants = sorted({r["variant"] for r in rows})
    width = 0.8 / len(variants)
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, variant in enumerate(variants):
        sel = [r for r in rows if r["variant"] == variant]
        ax.bar([r["bin"] + (k - (len(variants) - 1) / 2) * width for r in sel], [r["gap"] for r in sel],
               width=width, label=variant)
    ax.set_xlabel("variance bin (low to high)")
    ax.set_ylabel("accuracy gap (shallow - deep)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    return True


def emit_reports(records: Sequence[RunRecord], out_dir, figures: bool = True) -> dict:
    """Write results.csv, aggregate.csv, bins.csv, records/*.json, SVG figures and manifest.json."""
    if not records:
        raise ValueError("emit_reports needs at least one record")
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    summary = aggregate(records)
    bins = bin_rows(records)

    (out / "results.csv").write_text(_csv_text(RESULT_COLUMNS, result_rows(records)), encoding="utf-8")
    (out / "aggregate.csv").write_text(
        _csv_text(AGGREGATE_COLUMNS, [c.__dict__ for c in summary]), encoding="utf-8")
    (out / "bins.csv").write_text(_csv_text(BIN_COLUMNS, bins), encoding="utf-8")

    used: set[str] = set()
    record_files = []
    for r in sorted(records, key=_sort_key):
        name = _record_name(r, used)
        (out / "records" / name).write_text(json.dumps(jsonable(r.to_dict()), indent=1) + "\n", encoding="utf-8")
        record_files.append(f"records/{name}")

    written = ["results.csv", "aggregate.csv", "bins.csv"]
    skipped: dict[str, str] = {}
    if figures:
        plot_accuracy(summary, out / "accuracy_vs_depth.svg")
        written.append("accuracy_vs_depth.svg")
        if plot_variance(records, out / "variance_profile.svg"):
            written.append("variance_profile.svg")
        else:
            skipped["variance_profile.svg"] = "no record carries variance diagnostics"
        if plot_bins(bins, out / "bin_gaps.svg"):
            written.append("bin_gaps.svg")
        else:
            skipped["bin_gaps.svg"] = "needs variance diagnostics at two or more depths with shared seeds and splits"
    else:
        for name in ("accuracy_vs_depth.svg", "variance_profile.svg", "bin_gaps.svg"):
            skipped[name] = "figures disabled"
    manifest = {"files": written, "records": record_files, "skipped": skipped,
                "correlation_diagonal_included": True}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_records(out_dir) -> list[RunRecord]:
    paths = sorted(Path(out_dir, "records").glob("*.json"))
    return [RunRecord.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths]

