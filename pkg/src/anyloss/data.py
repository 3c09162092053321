"""Datasets: CSV ingestion, a synthetic imbalanced generator, stratified folds,
standardization, and the two resampling baselines (random under-sampling
and SMOTE)."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "?", "none"})


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs at least one row and one feature")
        if Y.shape != (X.shape[0],):
            raise ValueError("Y must be a vector with one label per row")
        if not np.isin(Y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if not np.isfinite(X).all():
            raise ValueError("features must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y.astype(np.int64))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def n_pos(self) -> int:
        return int(self.Y.sum())

    @property
    def imbalance_ratio(self) -> float:
        """Majority count divided by minority count (``inf`` for one class)."""
        pos, neg = self.n_pos, self.n - self.n_pos
        lo = min(pos, neg)
        return math.inf if lo == 0 else max(pos, neg) / lo

    def subset(self, idx, name: str | None = None) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], name or self.name)


def load_csv(path, label_map: dict | None = None, drop_missing: bool = True,
             name: str | None = None) -> Dataset:
    """Read a header-first CSV whose last column is the label.

    ``label_map`` maps raw label strings to 0/1 (e.g. ``{"yes": 1, "no": 0}``).
    Rows with a missing cell are dropped (and counted in a warning) when
    ``drop_missing`` is set, otherwise they raise.
    """
    path = Path(path)
    rows, labels = [], []
    dropped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise ValueError(f"{path}: need at least one feature column and a label column")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            cells = [c.strip() for c in row]
            if any(c.lower() in MISSING_TOKENS for c in cells):
                if not drop_missing:
                    col = next(i for i, c in enumerate(cells) if c.lower() in MISSING_TOKENS)
                    raise ValueError(f"{path}:{lineno}: missing value in column {header[col]!r}")
                dropped += 1
                continue
            feats = []
            for col, cell in enumerate(cells[:-1]):
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: cannot parse {cell!r} in column {header[col]!r}"
                    ) from None
            raw = cells[-1]
            if label_map is not None and raw in label_map:
                lab = label_map[raw]
            else:
                try:
                    lab = float(raw)
                except ValueError:
                    lab = None
            if lab not in (0, 1):
                raise ValueError(f"{path}:{lineno}: label {raw!r} is not 0/1 (use a label map)")
            rows.append(feats)
            labels.append(int(lab))
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    return Dataset(np.array(rows), np.array(labels), name or path.stem)


def synth_imbalanced(n: int = 10_000, m: int = 2, pos_fraction: float = 0.1,
                     class_separation: float = 2.0, seed: int = 0) -> Dataset:
    """Two unit-covariance Gaussian clusters whose means are ``class_separation``
    apart along a random direction. Exactly ``round(n * pos_fraction)`` rows
    are positive; rows are shuffled."""
    if not 0 < pos_fraction < 1:
        raise ValueError("pos_fraction must lie in (0, 1)")
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * pos_fraction))
    direction = rng.normal(size=m)
    direction /= np.linalg.norm(direction)
    X = rng.normal(size=(n, m))
    Y = np.zeros(n, dtype=np.int64)
    Y[:n_pos] = 1
    X[:n_pos] += class_separation * direction
    order = rng.permutation(n)
    return Dataset(X[order], Y[order], f"synth-{n}x{m}-{pos_fraction:g}")


def stratified_kfold(Y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Partition row indices into ``k`` folds with near-equal class counts.

    Each class is shuffled, then dealt round-robin; the dealing continues
    across classes so fold sizes also differ by at most one.
    """
    y = np.asarray(Y).reshape(-1)
    n = y.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")
    rng = np.random.default_rng(seed)
    dealt = []
    for cls in (1, 0):
        members = np.flatnonzero(y == cls)
        if 0 < len(members) < k:
            log.warning("class %d has %d members for %d folds; some folds will lack it",
                        cls, len(members), k)
        dealt.append(rng.permutation(members))
    order = np.concatenate(dealt)
    assign = np.arange(n) % k
    return [np.sort(order[assign == f]) for f in range(k)]


def standardize(train_X, *others):
    """Scale features to zero mean and unit variance using ``train_X`` statistics.

    Constant columns are centred but not scaled.
    """
    mu = train_X.mean(axis=0)
    sd = train_X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = [(train_X - mu) / sd]
    out.extend((o - mu) / sd for o in others)
    return out


def _split_majority(d: Dataset):
    pos = np.flatnonzero(d.Y == 1)
    neg = np.flatnonzero(d.Y == 0)
    if len(pos) <= len(neg):
        return neg, pos, 0, 1
    return pos, neg, 1, 0


def random_undersample(d: Dataset, target_ratio: float, seed: int = 0) -> Dataset:
    """Delete majority rows uniformly until majority/minority equals ``target_ratio``."""
    if not target_ratio > 0:
        raise ValueError("target_ratio must be positive")
    maj, mino, _, _ = _split_majority(d)
    if len(mino) == 0:
        raise ValueError("cannot rebalance a single-class dataset")
    keep_maj = int(round(target_ratio * len(mino)))
    if keep_maj == len(maj):
        return d
    if keep_maj > len(maj):
        raise ValueError(
            f"ratio {target_ratio:g}:1 needs {keep_maj} majority rows but only {len(maj)} exist; "
            "under-sampling cannot add rows or remove minority rows"
        )
    if keep_maj < 1:
        raise ValueError("target ratio would remove the whole majority class")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(maj, size=keep_maj, replace=False)
    idx = np.sort(np.concatenate([chosen, mino]))
    return d.subset(idx, f"{d.name}+rus")


def smote_points(base: np.ndarray, neighbors: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Interpolate ``base + lam * (neighbors - base)`` row by row."""
    return base + lam[:, None] * (neighbors - base)


def smote(d: Dataset, k_neighbors: int = 5, target_ratio: float = 1.0, seed: int = 0) -> Dataset:
    """Oversample the minority class with SMOTE until majority/minority
    equals ``target_ratio``."""
    if not target_ratio > 0:
        raise ValueError("target_ratio must be positive")
    maj, mino, _, min_label = _split_majority(d)
    if len(mino) <= k_neighbors:
        raise ValueError(f"SMOTE needs more than k_neighbors={k_neighbors} minority rows, got {len(mino)}")
    n_new = int(round(len(maj) / target_ratio)) - len(mino)
    if n_new <= 0:
        return d
    rng = np.random.default_rng(seed)
    Xmin = d.X[mino]
    # first neighbour returned is the point itself
    _, nn = cKDTree(Xmin).query(Xmin, k=k_neighbors + 1)
    nn = np.atleast_2d(nn)[:, 1:]
    src = rng.integers(0, len(mino), size=n_new)
    pick = nn[src, rng.integers(0, k_neighbors, size=n_new)]
    lam = rng.uniform(0.0, 1.0, size=n_new)
    synth = smote_points(Xmin[src], Xmin[pick], lam)
    X = np.vstack([d.X, synth])
    Y = np.concatenate([d.Y, np.full(n_new, min_label, dtype=np.int64)])
    return Dataset(X, Y, f"{d.name}+smote")


def resampling_rates() -> list[float]:
    """Majority:minority ratios 1:1, 1:0.9, ..., 1:0.1 expressed as majority/minority."""
    return [1.0 / (r / 10) for r in range(10, 0, -1)]
