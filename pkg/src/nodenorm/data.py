"""Graph datasets: the on-disk bundle format, splits, feature masking and a
stochastic block model generator."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DataError, SplitError, ValidationError
from .graph import SparseAdjacency, renormalize

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class GraphDataset:
    features: np.ndarray                 # n x d
    labels: np.ndarray                   # n, -1 for unlabeled
    edges: np.ndarray                    # m x 2, u < v, unique
    num_classes: int
    name: str = "graph"
    splits: Optional[dict] = None        # {"train"|"val"|"test": bool mask}
    dropped_edges: int = 0               # duplicates / self-loops removed on load

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        edges = canonical_edges(self.edges, feats.shape[0])
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)
        if feats.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DataError(f"expected {feats.shape[0]} labels, got {labels.shape[0]}")
        if labels.size and (labels.min() < -1 or labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [-1, {self.num_classes})")
        if self.splits is not None:
            masks = {k: np.asarray(self.splits[k], dtype=bool) for k in SPLIT_NAMES}
            for k, m in masks.items():
                if m.shape != (self.n,):
                    raise DataError(f"{k} mask has shape {m.shape}, expected ({self.n},)")
                if np.any(labels[m] < 0):
                    raise DataError(f"{k} split contains unlabeled nodes")
            if np.any(masks["train"].astype(int) + masks["val"] + masks["test"] > 1):
                raise DataError("train/val/test masks overlap")
            object.__setattr__(self, "splits", masks)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def adjacency(self) -> SparseAdjacency:
        return SparseAdjacency.from_edges(self.n, self.edges)

    @cached_property
    def propagation(self) -> SparseAdjacency:
        """The renormalized operator used by every GC layer."""
        return renormalize(self.adjacency)

    def mask(self, name: str) -> np.ndarray:
        if self.splits is None:
            raise ValidationError("dataset has no split assigned")
        return self.splits[name]


def canonical_edges(edges, n: int) -> np.ndarray:
    """Sorted unique (u, v) pairs with u < v; self-loops removed."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise DataError(f"edge endpoint out of range [0, {n})")
    edges = np.sort(edges, axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    return np.unique(edges, axis=0) if edges.size else np.zeros((0, 2), dtype=np.int64)


# bundle format --------------------------------------------------------------------

def _read_text(path: Path) -> list[str]:
    if not path.is_file():
        raise DataError(f"missing bundle file: {path}")
    return path.read_text(encoding="utf-8").splitlines()


def load_bundle(path: PathLike) -> GraphDataset:
    """Read a bundle directory (meta.json, edges.tsv, features.csv, labels.txt, optional splits.json)."""
    root = Path(path)
    try:
        meta = json.loads("\n".join(_read_text(root / "meta.json")))
        n, d, num_classes = int(meta["n"]), int(meta["d"]), int(meta["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{root / 'meta.json'}: invalid metadata ({exc})") from exc

    raw_edges = []
    for lineno, line in enumerate(_read_text(root / "edges.tsv"), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            u, v = (int(x) for x in parts)
        except ValueError:
            raise DataError(f"edges.tsv line {lineno}: expected 'u<TAB>v', got {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise DataError(f"edges.tsv line {lineno}: endpoint out of range [0, {n}) in {line!r}")
        raw_edges.append((u, v))

    feature_lines = [ln for ln in _read_text(root / "features.csv") if ln.strip()]
    if len(feature_lines) != n:
        raise DataError(f"features.csv has {len(feature_lines)} rows, meta.json says n={n}")
    features = np.empty((n, d))
    for i, line in enumerate(feature_lines):
        try:
            row = np.array(line.split(","), dtype=np.float64)
        except ValueError:
            raise DataError(f"features.csv line {i + 1}: non-numeric value") from None
        if row.size != d:
            raise DataError(f"features.csv line {i + 1}: {row.size} values, meta.json says d={d}")
        features[i] = row

    label_lines = [ln for ln in _read_text(root / "labels.txt") if ln.strip()]
    if len(label_lines) != n:
        raise DataError(f"labels.txt has {len(label_lines)} rows, meta.json says n={n}")
    try:
        labels = np.array([int(x) for x in label_lines], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"labels.txt: {exc}") from None

    splits = None
    if (root / "splits.json").is_file():
        splits = masks_from_ids(json.loads((root / "splits.json").read_text(encoding="utf-8")), n)

    edges = canonical_edges(raw_edges, n)
    dropped = len(raw_edges) - len(edges)
    if dropped:
        log.warning("%s: dropped %d duplicate or self-loop edge lines", root, dropped)
    return GraphDataset(features, labels, edges, num_classes, str(meta.get("name", root.name)), splits, dropped)


def masks_from_ids(ids: dict, n: int) -> dict:
    masks = {}
    for key in SPLIT_NAMES:
        if key not in ids:
            raise DataError(f"split file lacks a {key!r} list")
        idx = np.asarray(ids[key], dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DataError(f"split {key!r} references a node outside [0, {n})")
        m = np.zeros(n, dtype=bool)
        m[idx] = True
        masks[key] = m
    return masks


def save_bundle(ds: GraphDataset, path: PathLike) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"n": ds.n, "d": ds.d, "num_classes": ds.num_classes, "name": ds.name}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (root / "edges.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in ds.edges), encoding="utf-8")
    # repr gives the shortest string that round-trips exactly
    (root / "features.csv").write_text(
        "".join(",".join(repr(float(x)) for x in row) + "\n" for row in ds.features), encoding="utf-8")
    (root / "labels.txt").write_text("".join(f"{y}\n" for y in ds.labels), encoding="utf-8")
    if ds.splits is not None:
        ids = {k: np.flatnonzero(ds.splits[k]).tolist() for k in SPLIT_NAMES}
        (root / "splits.json").write_text(json.dumps(ids) + "\n", encoding="utf-8")
    return root


def convert_citation_files(content: PathLike, cites: PathLike, name: str = "cora") -> GraphDataset:
    """Convert the plain-text ``<name>.content`` / ``<name>.cites`` citation-network format.

    Each content line is ``paper_id  f_1 ... f_d  class_label`` (whitespace separated); each
    cites line is ``cited_id  citing_id``. Nodes keep their content-file order, classes are
    numbered by sorted label name, and links to unknown papers are dropped.
    """
    ids, rows, classes = [], [], []
    for lineno, line in enumerate(Path(content).read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise DataError(f"{content} line {lineno}: too few columns")
        ids.append(parts[0])
        rows.append(np.array(parts[1:-1], dtype=np.float64))
        classes.append(parts[-1])
    if len({r.size for r in rows}) != 1:
        raise DataError(f"{content}: rows have differing feature counts")
    index = {pid: i for i, pid in enumerate(ids)}
    names = sorted(set(classes))
    labels = np.array([names.index(c) for c in classes], dtype=np.int64)
    edges, unknown = [], 0
    for line in Path(cites).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        if parts[0] in index and parts[1] in index:
            edges.append((index[parts[0]], index[parts[1]]))
        else:
            unknown += 1
    if unknown:
        log.warning("%s: skipped %d links to papers without content", cites, unknown)
    return GraphDataset(np.vstack(rows), labels, np.array(edges, dtype=np.int64).reshape(-1, 2), len(names), name)


# splits ------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """How to carve train/val/test masks.

    kind ``per_class``: ``k`` train nodes per class, then ``val_size`` and ``test_size``
    from the remaining labeled nodes. ``fraction``: proportional cut of a shuffled
    labeled-node order. ``fixed``: id lists from a splits.json-style file, or the
    bundle's own split when ``path`` is None.
    """

    kind: str = "per_class"
    k: int = 20
    val_size: int = 500
    test_size: int = 1000
    fractions: tuple = (0.6, 0.2, 0.2)
    path: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("per_class", "fraction", "fixed"):
            raise ConfigError(f"unknown split kind {self.kind!r}")
        if self.kind == "per_class" and (self.k < 1 or self.val_size < 0 or self.test_size < 0):
            raise ConfigError("per_class split needs k >= 1 and non-negative val/test sizes")
        if self.kind == "fraction":
            f = tuple(float(x) for x in self.fractions)
            if len(f) != 3 or min(f) < 0 or sum(f) > 1 + 1e-12:
                raise ConfigError(f"fractions must be three non-negative reals summing to <= 1, got {f}")
            object.__setattr__(self, "fractions", f)

    @classmethod
    def per_class(cls, k: int, val_size: int, test_size: int, seed: int = 0) -> "SplitSpec":
        return cls("per_class", k=k, val_size=val_size, test_size=test_size, seed=seed)

    @classmethod
    def fraction(cls, train: float, val: float, test: float, seed: int = 0) -> "SplitSpec":
        return cls("fraction", fractions=(train, val, test), seed=seed)

    @classmethod
    def fixed(cls, path: Optional[PathLike] = None) -> "SplitSpec":
        return cls("fixed", path=None if path is None else str(path))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "val_size": self.val_size, "test_size": self.test_size,
                "fractions": list(self.fractions), "path": self.path, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        d = dict(d)
        if "fractions" in d:
            d["fractions"] = tuple(d["fractions"])
        return cls(**d)


def _cut(n: int, frac: float) -> int:
    # tolerate 0.6 * 100 == 60.00000000000001 style rounding
    return int(np.floor(frac * n + 1e-9))


def make_split(ds: GraphDataset, spec: SplitSpec, rng: Optional[np.random.Generator] = None) -> GraphDataset:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n = ds.n
    labeled = np.flatnonzero(ds.labels >= 0)

    if spec.kind == "fixed":
        if spec.path is None:
            if ds.splits is None:
                raise SplitError("fixed split requested but the dataset carries no splits")
            return ds
        ids = json.loads(Path(spec.path).read_text(encoding="utf-8"))
        return replace(ds, splits=masks_from_ids(ids, n))

    if spec.kind == "fraction":
        order = rng.permutation(labeled)
        sizes = [_cut(labeled.size, f) for f in spec.fractions]
        bounds = np.cumsum(sizes)
        parts = [order[:bounds[0]], order[bounds[0]:bounds[1]], order[bounds[1]:bounds[2]]]
    else:
        train = []
        for c in range(ds.num_classes):
            members = np.flatnonzero(ds.labels == c)
            if members.size < spec.k:
                raise SplitError(f"class {c} has {members.size} labeled nodes, need {spec.k}")
            train.append(rng.choice(members, size=spec.k, replace=False))
        train = np.concatenate(train)
        rest = np.setdiff1d(labeled, train)
        if rest.size < spec.val_size + spec.test_size:
            raise SplitError(f"only {rest.size} labeled nodes remain for val {spec.val_size} + test {spec.test_size}")
        pick = rng.choice(rest, size=spec.val_size + spec.test_size, replace=False)
        parts = [train, pick[:spec.val_size], pick[spec.val_size:]]

    masks = {}
    for key, idx in zip(SPLIT_NAMES, parts):
        m = np.zeros(n, dtype=bool)
        m[idx] = True
        masks[key] = m
    return replace(ds, splits=masks)


def mask_features(ds: GraphDataset, missing_rate: float, protect_train: bool = True,
                  rng: Optional[np.random.Generator] = None) -> GraphDataset:
    """Zero the feature rows of a seeded ``missing_rate`` share of eligible nodes.

    Eligible nodes are the non-training nodes when ``protect_train`` is set,
    otherwise every node.
    """
    if not 0.0 <= missing_rate <= 1.0:
        raise ConfigError(f"missing_rate must lie in [0, 1], got {missing_rate}")
    if missing_rate == 0.0:
        return ds
    rng = rng if rng is not None else np.random.default_rng(0)
    eligible = np.flatnonzero(~ds.mask("train")) if protect_train else np.arange(ds.n)
    count = int(round(missing_rate * eligible.size))
    chosen = rng.choice(eligible, size=count, replace=False)
    features = ds.features.copy()
    features[chosen] = 0.0
    return replace(ds, features=features)


# synthetic graphs ------------------------------------------------------------------

def generate_sbm(blocks: int, nodes_per_block: int, p_in: float, p_out: float,
                 feature_dim: Optional[int] = None, feature_noise: float = 0.5,
                 rng: Optional[np.random.Generator] = None, name: str = "sbm") -> GraphDataset:
    """Stochastic block model with block-id labels.

    Features are the one-hot block indicator (padded to ``feature_dim``) plus
    isotropic Gaussian noise scaled by ``feature_noise``.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise ConfigError("generate_sbm needs at least one block with at least one node")
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ConfigError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    feature_dim = blocks if feature_dim is None else feature_dim
    if feature_dim < blocks:
        raise ConfigError(f"feature_dim ({feature_dim}) must be at least the block count ({blocks})")
    if feature_noise < 0:
        raise ConfigError("feature_noise must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(0)

    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks), nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    features = np.zeros((n, feature_dim))
    features[np.arange(n), labels] = 1.0
    features += feature_noise * rng.standard_normal((n, feature_dim))
    return GraphDataset(features, labels, edges, blocks, name)
