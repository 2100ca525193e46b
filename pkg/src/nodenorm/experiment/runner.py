"""Training loop, depth/variant sweeps and aggregation."""
from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ..autodiff import AdamState, Tape, adam_step, l1_penalty, softmax_cross_entropy
from ..data import GraphDataset, generate_sbm, load_bundle, make_split, mask_features
from ..diagnostics import (History, correlation_frobenius, lipschitz_from_outputs, lipschitz_mode,
                           node_variance)
from ..models import Model, build_model, forward
from .config import RunConfig

log = logging.getLogger(__name__)

RECORD_VERSION = 1


@dataclass
class RunRecord:
    config: dict
    model: dict
    history: History = field(default_factory=History)
    test_acc: float = float("nan")
    wall_time: float = 0.0
    status: str = "ok"
    error: Optional[str] = None
    test_ids: list[int] = field(default_factory=list)
    test_correct: list[bool] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    version: int = RECORD_VERSION

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def variant(self) -> str:
        return self.config["variant"]

    @property
    def depth(self) -> int:
        return int(self.config["depth"])

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def to_dict(self) -> dict:
        return {
            "version": self.version, "status": self.status, "error": self.error,
            "config": self.config, "model": self.model, "history": self.history.to_dict(),
            "test_acc": self.test_acc, "wall_time": self.wall_time,
            "test_ids": self.test_ids, "test_correct": self.test_correct,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(config=d["config"], model=d["model"], history=History(**d["history"]),
                   test_acc=d["test_acc"], wall_time=d["wall_time"], status=d["status"],
                   error=d.get("error"), test_ids=d.get("test_ids", []),
                   test_correct=d.get("test_correct", []), diagnostics=d.get("diagnostics", {}),
                   version=d.get("version", RECORD_VERSION))


# data ----------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _base_dataset(bundle: Optional[str], sbm_items: Optional[tuple]) -> GraphDataset:
    if bundle is not None:
        return load_bundle(bundle)
    params = dict(sbm_items)
    seed = params.pop("seed", 0)
    return generate_sbm(rng=np.random.default_rng(seed), **params)


def prepare_dataset(config: RunConfig, rng_split: np.random.Generator,
                    rng_mask: np.random.Generator) -> GraphDataset:
    sbm = tuple(sorted(config.sbm.items())) if config.sbm is not None else None
    ds = _base_dataset(config.dataset, sbm)
    ds = make_split(ds, config.split, rng_split)
    return mask_features(ds, config.missing_rate, config.protect_train, rng_mask)


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each random decision of a run."""
    names = ("split", "mask", "init", "dropout")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


# training ----------------------------------------------------------------------------

def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    # argmax picks the lowest index on ties
    return float(np.mean(np.argmax(logits[mask], axis=1) == labels[mask]))


def train_model(config: RunConfig) -> tuple[RunRecord, Model, GraphDataset]:
    """Train one model; returns the record, the trained model and the split dataset."""
    start = time.perf_counter()
    config = config.resolved()
    streams = seed_streams(config.seed)
    ds = prepare_dataset(config, streams["split"], streams["mask"])
    spec = config.model_spec(ds.d, ds.num_classes)
    model = build_model(spec, streams["init"])
    adj, X, y = ds.propagation, ds.features, ds.labels
    train_mask, val_mask, test_mask = ds.mask("train"), ds.mask("val"), ds.mask("test")

    params = model.parameters()
    n_weights = len(model.weights)
    state = AdamState.for_params(params)
    history = History()
    for _ in range(config.epochs):
        with Tape() as tape:
            logits, _ = forward(model, X, adj, training=True, rng=streams["dropout"])
            loss = softmax_cross_entropy(logits, y, train_mask)
            if config.l1_weight > 0:
                loss = loss + l1_penalty(model.weights, config.l1_weight)
            grads = tape.gradient(loss, params)
        if config.weight_decay:
            # coupled L2 on weight matrices only (LayerNorm affine terms are exempt)
            grads = [g + config.weight_decay * p.data if i < n_weights else g
                     for i, (p, g) in enumerate(zip(params, grads))]
        adam_step(params, grads, state, config.lr)

        eval_logits, _ = forward(model, X, adj, training=False)
        history.append(
            softmax_cross_entropy(eval_logits.data, y, train_mask).item(),
            _accuracy(eval_logits.data, y, train_mask),
            softmax_cross_entropy(eval_logits.data, y, val_mask).item() if val_mask.any() else float("nan"),
            _accuracy(eval_logits.data, y, val_mask) if val_mask.any() else float("nan"),
        )

    final_logits, hidden = forward(model, X, adj, training=False)
    test_ids = np.flatnonzero(test_mask)
    correct = np.argmax(final_logits.data[test_ids], axis=1) == y[test_ids]
    record = RunRecord(
        config=config.to_dict(), model=spec.to_dict(), history=history,
        test_acc=float(correct.mean()), test_ids=test_ids.tolist(), test_correct=correct.tolist(),
    )
    record.diagnostics = run_diagnostics(config, X, final_logits.data, [h.data for h in hidden], test_ids)
    record.wall_time = time.perf_counter() - start
    return record, model, ds


def run_diagnostics(config: RunConfig, X: np.ndarray, logits: np.ndarray, hidden: list[np.ndarray],
                    test_ids: np.ndarray) -> dict:
    out: dict = {}
    opts = config.diagnostics
    if opts.variance:
        variances = [node_variance(h) for h in hidden]
        with np.errstate(divide="ignore"):
            logs = [np.log10(v) for v in variances]
        out["variance"] = {
            "layer_indices": list(range(1, len(hidden) + 1)),
            "max_log10": [float(np.max(lv)) for lv in logs],
            "median_log10": [float(np.median(lv)) for lv in logs],
            "min_log10": [float(np.min(lv)) for lv in logs],
            # deepest hidden layer, test nodes only; feeds the variance-bin analysis
            "deep_test_var": variances[-2][test_ids].tolist(),
        }
    if opts.lipschitz:
        rng = np.random.default_rng(config.seed)
        out["lipschitz"] = {"value": lipschitz_from_outputs(X, logits, opts.pair_limit, rng),
                            "mode": lipschitz_mode(X.shape[0], opts.pair_limit)}
    if opts.correlation:
        out["correlation"] = {"per_layer": [correlation_frobenius(h) for h in hidden],
                              "diagonal_included": True}
    return out


def train(config: RunConfig) -> RunRecord:
    """Full-batch training for exactly ``config.epochs`` epochs; no model selection."""
    return train_model(config)[0]


# sweeps ----------------------------------------------------------------------------

def sweep_configs(base: RunConfig, depths: Sequence[int], seeds: Sequence[int],
                  variants: Sequence[str]) -> list[RunConfig]:
    if not depths or not seeds or not variants:
        raise ValueError("sweep needs non-empty depth, seed and variant lists")
    return [replace(base, variant=v, depth=int(d), seed=int(s))
            for v, d, s in itertools.product(variants, depths, seeds)]


def _safe_train(config: RunConfig) -> RunRecord:
    try:
        return train(config)
    except Exception as exc:  # recorded per cell; the sweep carries on
        log.warning("run %s depth=%s seed=%s failed: %s", config.variant, config.depth, config.seed, exc)
        return RunRecord(config=config.to_dict(), model={}, status="failed",
                         error=f"{type(exc).__name__}: {exc}")


def sweep(base: RunConfig, depths: Sequence[int], seeds: Sequence[int], variants: Sequence[str],
          workers: int = 1) -> list[RunRecord]:
    """Every (variant, depth, seed) combination, in that nesting order.

    Runs share nothing, so ``workers > 1`` changes wall time only.
    """
    configs = sweep_configs(base, depths, seeds, variants)
    if workers <= 1:
        return [_safe_train(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_train, configs))


@dataclass(frozen=True)
class CellSummary:
    variant: str
    depth: int
    runs: int
    failed: int
    mean: float
    std: float


def aggregate(records: Sequence[RunRecord]) -> list[CellSummary]:
    """Mean and population std of test accuracy per (variant, depth), successful runs only."""
    cells: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.variant, r.depth), []).append(r)
    out = []
    for (variant, depth), group in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        # sort before summing so the result does not depend on record order
        accs = np.sort([r.test_acc for r in group if r.ok])
        mean = float(np.mean(accs)) if accs.size else float("nan")
        std = float(np.std(accs)) if accs.size else float("nan")
        out.append(CellSummary(variant, depth, len(group), sum(not r.ok for r in group), mean, std))
    return out
