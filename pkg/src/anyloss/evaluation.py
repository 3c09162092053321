"""Cross-validation and the comparisons built on it: winner tallies, the
Bayesian sign test, achievement rates, L sweeps, timing ratios and the
multi-dataset bench."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import Decimal

import numpy as np

from .confusion import (
    REPORT_METRICS,
    FBeta,
    hard_confusion,
    is_degenerate,
    metric_score,
)
from .data import (
    Dataset,
    random_undersample,
    resampling_rates,
    smote,
    standardize,
    stratified_kfold,
)
from .losses import BCE, LossSpec, loss_from_name
from .network import NetworkConfig, TrainConfig, init, predict, train

log = logging.getLogger(__name__)

METRIC_NAMES = tuple(k.name for k in REPORT_METRICS)
BASELINES = ("mse", "bce")


def derive_seed(*ids: int) -> int:
    """Stable 32-bit seed for a cell identified by integers (seed, dataset, fold, ...)."""
    return int(np.random.SeedSequence([int(i) for i in ids]).generate_state(1)[0])


@dataclass
class CVReport:
    spec: str
    fold_scores: dict[str, list[float]]
    fold_degenerate: dict[str, list[bool]]
    fold_times: list[float]
    fold_epoch_times: list[float]
    loss_curves: list[np.ndarray]
    epochs: int
    batch_fraction: float
    n: int

    @property
    def k(self) -> int:
        return len(self.fold_times)

    @property
    def means(self) -> dict[str, float]:
        return {m: float(np.mean(v)) for m, v in self.fold_scores.items()}

    @property
    def wall_time_per_epoch(self) -> float:
        return float(np.mean(self.fold_epoch_times))

    @property
    def settings(self) -> tuple:
        return (self.epochs, self.batch_fraction, self.n)

    def mean_curve(self) -> np.ndarray:
        return np.mean(np.vstack(self.loss_curves), axis=0)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "spec": self.spec,
            "k": self.k,
            "means": self.means,
            "fold_scores": self.fold_scores,
            "fold_degenerate": self.fold_degenerate,
        }
        if timing:
            d["fold_times"] = self.fold_times
            d["wall_time_per_epoch"] = self.wall_time_per_epoch
        return d


def cross_validate(d: Dataset, spec: LossSpec, nc: NetworkConfig, tc: TrainConfig,
                   k: int = 10, seed: int = 0, scale: bool = True, resample=None,
                   folds=None) -> CVReport:
    """k-fold CV: per fold standardize on the train split, optionally resample
    it, train, and score the validation split with all four hard metrics.

    ``resample`` is a callable ``(Dataset, seed) -> Dataset`` applied to the
    training split only. Fold plans and initial weights depend on ``seed``
    and the fold index but not on ``spec``, so different losses see identical
    splits and starting points.
    """
    plan = folds if folds is not None else stratified_kfold(d.Y, k, seed)
    scores = {m: [] for m in METRIC_NAMES}
    degenerate = {m: [] for m in METRIC_NAMES}
    times, epoch_times, curves = [], [], []
    all_idx = np.arange(d.n)
    n_train = 0
    for f, val in enumerate(plan):
        tr = np.setdiff1d(all_idx, val, assume_unique=True)
        Xtr, Xval = (d.X[tr], d.X[val])
        if scale:
            Xtr, Xval = standardize(Xtr, Xval)
        ytr = d.Y[tr]
        if resample is not None:
            rs = resample(Dataset(Xtr, ytr, d.name), derive_seed(seed, f, 7))
            Xtr, ytr = rs.X, rs.Y
        n_train = len(ytr)
        net = init(replace(nc, input_dim=d.m, seed=derive_seed(seed, f, 1)))
        rep = train(net, Xtr, ytr, replace(tc, loss=spec, seed=derive_seed(seed, f, 2)))
        _, labels = predict(net, Xval)
        conf = hard_confusion(d.Y[val], labels)
        for kind in REPORT_METRICS:
            scores[kind.name].append(metric_score(conf, kind))
            degenerate[kind.name].append(is_degenerate(conf, kind))
        times.append(rep.wall_time)
        epoch_times.append(rep.wall_time_per_epoch)
        curves.append(rep.loss_curve)
    return CVReport(spec=spec.name, fold_scores=scores, fold_degenerate=degenerate,
                    fold_times=times, fold_epoch_times=epoch_times, loss_curves=curves,
                    epochs=tc.epochs, batch_fraction=tc.batch_fraction, n=n_train)


def count_wins(table: dict[str, dict[str, float]], columns) -> dict[str, int]:
    """Tally, over datasets, which column has the highest score.

    ``table`` maps dataset -> column -> score. Exact ties go to the earliest
    column in ``columns``, so tallies always sum to the number of datasets.
    """
    columns = list(columns)
    tally = {c: 0 for c in columns}
    for ds, row in table.items():
        missing = [c for c in columns if c not in row or row[c] is None]
        if missing:
            raise ValueError(f"dataset {ds!r} has no score for {missing}")
        best = columns[0]
        for c in columns[1:]:
            if row[c] > row[best]:
                best = c
        tally[best] += 1
    return tally


@dataclass(frozen=True)
class SignTestResult:
    p_win: float
    p_rope: float
    p_lose: float
    rope: float
    counts: tuple[int, int, int] = (0, 0, 0)

    def to_dict(self) -> dict:
        n_lose, n_rope, n_win = self.counts
        return {"p_win": self.p_win, "p_rope": self.p_rope, "p_lose": self.p_lose,
                "rope": self.rope, "n_win": n_win, "n_rope": n_rope, "n_lose": n_lose}


def bayesian_sign_test(diffs, rope: float = 0.01, mc_samples: int = 50_000,
                       seed: int = 0, prior: float = 1.0) -> SignTestResult:
    """Bayesian sign test with a region of practical equivalence.

    Differences are binned into lose (``d < -rope``), rope (``|d| <= rope``)
    and win (``d > rope``). The posterior over the three cell probabilities is
    Dirichlet(counts) with ``prior`` pseudo-counts on the rope cell; each
    reported probability is the fraction of Monte Carlo draws in which that
    cell is the strictly largest.
    """
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise ValueError("need at least one difference")
    if rope < 0:
        raise ValueError("rope must be non-negative")
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    n_lose = int(np.sum(d < -rope))
    n_win = int(np.sum(d > rope))
    n_rope = d.size - n_lose - n_win
    alpha = np.array([n_lose, n_rope + prior, n_win], dtype=np.float64)
    rng = np.random.default_rng(seed)
    wins = np.zeros(3, dtype=np.int64)
    chunk = 250_000
    done = 0
    while done < mc_samples:
        s = min(chunk, mc_samples - done)
        # unnormalized gammas order the same way as the Dirichlet draw;
        # a zero parameter is a point mass at zero
        draws = np.zeros((s, 3))
        for j in range(3):
            if alpha[j] > 0:
                draws[:, j] = rng.standard_gamma(alpha[j], size=s)
        top = draws.max(axis=1, keepdims=True)
        strict = (draws == top).sum(axis=1) == 1
        wins += np.bincount(draws[strict].argmax(axis=1), minlength=3)
        done += s
    p_lose, p_rope, p_win = (wins / mc_samples).tolist()
    return SignTestResult(p_win=p_win, p_rope=p_rope, p_lose=p_lose, rope=rope,
                          counts=(n_lose, n_rope, n_win))


def achievement_rate(curve, e: int) -> float:
    """``(initial - current) / (initial - final)`` at index ``e`` of a loss curve.

    The differences are taken in decimal on each value's shortest repr, so
    a curve logged as 1.0, 0.7, 0.4 gives exactly 0.5 rather than suffering
    binary cancellation.
    """
    c = np.asarray(curve, dtype=np.float64).reshape(-1)
    if c.size < 2:
        raise ValueError("curve needs at least two points")
    if not -c.size <= e < c.size:
        raise IndexError(f"epoch {e} outside curve of length {c.size}")
    first, current, last = (Decimal(repr(float(v))) for v in (c[0], c[e], c[-1]))
    span = first - last
    if span == 0:
        raise ValueError("achievement rate is undefined for a flat curve")
    return float((first - current) / span)


def timing_ratio(reports: dict, baseline: str) -> dict[str, float]:
    """Per-epoch wall time of each report divided by the baseline's.

    Reports must carry ``wall_time_per_epoch`` and ``settings``; all settings
    must match, otherwise the times are not comparable.
    """
    if baseline not in reports:
        raise ValueError(f"baseline {baseline!r} not among reports")
    ref = reports[baseline]
    for name, rep in reports.items():
        if rep.settings != ref.settings:
            raise ValueError(f"{name} was run with {rep.settings}, baseline with {ref.settings}")
    base = ref.wall_time_per_epoch
    return {name: rep.wall_time_per_epoch / base for name, rep in reports.items()}


def l_sweep(d: Dataset, metrics, L_values, nc: NetworkConfig, tc: TrainConfig,
            k: int = 10, seed: int = 0) -> dict[str, dict[float, float]]:
    """Cross-validate the AnyLoss for each metric at each ``L``; the grid holds
    the mean score of the targeted metric."""
    grid: dict[str, dict[float, float]] = {}
    for kind in metrics:
        row = {}
        for L in L_values:
            if not L > 0:
                raise ValueError(f"L must be positive, got {L}")
            spec = LossSpec(kind, float(L), allow_any_L=True)
            rep = cross_validate(d, spec, nc, tc, k=k, seed=seed)
            row[float(L)] = rep.means[_report_metric(kind)]
        grid[kind.name] = row
    return grid


def _report_metric(kind) -> str:
    # an F-beta loss is scored on F1 unless beta is 1 anyway
    return "f1" if isinstance(kind, FBeta) else kind.name


# ----------------------------------------------------------------------------
# bench


@dataclass
class BenchReport:
    datasets: list[str]
    specs: list[str]
    cells: dict[str, dict[str, CVReport]]
    tallies: dict[str, dict[str, int]] = field(default_factory=dict)
    sign_tests: dict = field(default_factory=dict)
    timing: dict[str, dict[str, float]] = field(default_factory=dict)

    def score_grid(self) -> dict[str, dict[str, dict[str, float]]]:
        return {ds: {s: rep.means for s, rep in row.items()} for ds, row in self.cells.items()}

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "datasets": self.datasets,
            "specs": self.specs,
            "scores": self.score_grid(),
            "degenerate_folds": {
                ds: {s: {m: int(sum(v)) for m, v in rep.fold_degenerate.items()}
                     for s, rep in row.items()}
                for ds, row in self.cells.items()
            },
            "tallies": self.tallies,
            "sign_tests": self.sign_tests,
        }
        if timing:
            d["timing_ratios"] = self.timing
        return d


def _target_spec(metric: str, specs: list[str]) -> str | None:
    name = f"L_{metric}"
    return name if name in specs else None


def summarize(report: BenchReport, ropes=(0.01, 0.05), mc_samples: int = 50_000,
              seed: int = 0) -> BenchReport:
    """Fill in winner tallies, sign tests and timing ratios from the cells."""
    grid = report.score_grid()
    baselines = [b for b in BASELINES if b in report.specs]
    for metric in METRIC_NAMES:
        target = _target_spec(metric, report.specs)
        if target is None:
            continue
        cols = baselines + [target]
        table = {ds: {c: grid[ds][c][metric] for c in cols} for ds in report.datasets}
        report.tallies[metric] = count_wins(table, cols)
        tests = {}
        for b in baselines:
            diffs = [grid[ds][target][metric] - grid[ds][b][metric] for ds in report.datasets]
            tests[f"{target}_vs_{b}"] = {
                f"r={r:g}": bayesian_sign_test(diffs, r, mc_samples, seed).to_dict() for r in ropes
            }
        report.sign_tests[metric] = tests
    if "bce" in report.specs:
        for ds in report.datasets:
            row = report.cells[ds]
            try:
                report.timing[ds] = timing_ratio(row, "bce")
            except ValueError as exc:
                log.warning("%s: timing ratios skipped (%s)", ds, exc)
    return report


def _run_cell(args):
    d, spec, nc, tc, k, seed = args
    return cross_validate(d, spec, nc, tc, k=k, seed=seed)


def max_workers() -> int:
    env = os.environ.get("ANYLOSS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer ANYLOSS_THREADS=%r", env)
    return os.cpu_count() or 1


def run_bench(datasets: list[Dataset], specs: list[LossSpec], arch: str = "slp",
              hidden: int = 2, batch_norm: bool = True, k: int = 10, seed: int = 0,
              train_overrides: dict | None = None, workers: int | None = None,
              on_cell=None, ropes=(0.01, 0.05), mc_samples: int = 50_000) -> BenchReport:
    """Cross-validate every (dataset, spec) cell and summarize.

    Cells are independent and may run in worker processes; every cell's
    randomness comes from ``seed`` and the dataset index, so results do not
    depend on scheduling. ``on_cell(dataset, spec, report)`` is called as
    cells finish, which lets callers flush partial results.
    """
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    overrides = train_overrides or {}
    jobs = []
    for di, d in enumerate(datasets):
        nc = NetworkConfig(input_dim=d.m, arch=arch, hidden=hidden, batch_norm=batch_norm)
        for spec in specs:
            tc = TrainConfig.defaults(arch, spec, **overrides)
            jobs.append(((di, spec.name), (d, spec, nc, tc, k, derive_seed(seed, di))))
    cells: dict[str, dict[str, CVReport]] = {n: {} for n in names}
    workers = workers or max_workers()

    def _collect(key, rep):
        di, sname = key
        cells[names[di]][sname] = rep
        if on_cell is not None:
            on_cell(names[di], sname, rep)

    if workers <= 1 or len(jobs) == 1:
        for key, args in jobs:
            _collect(key, _run_cell(args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(key, pool.submit(_run_cell, args)) for key, args in jobs]
            for key, fut in futures:
                _collect(key, fut.result())
    # restore declared spec order regardless of completion order
    cells = {n: {s.name: cells[n][s.name] for s in specs} for n in names}
    report = BenchReport(datasets=names, specs=[s.name for s in specs], cells=cells)
    return summarize(report, ropes=ropes, mc_samples=mc_samples, seed=seed)


def resampling_comparison(d: Dataset, nc: NetworkConfig, tc: TrainConfig, k: int = 10,
                          seed: int = 0, rates=None, k_neighbors: int = 5) -> dict[str, dict]:
    """BCE with SMOTE (``bso``) and with random under-sampling (``bru``), each at
    the majority:minority rate giving the best mean F1."""
    rates = list(rates) if rates is not None else resampling_rates()
    bce = LossSpec(BCE())
    out = {}
    samplers = {
        "bso": lambda r: (lambda ds, s: smote(ds, k_neighbors, r, s)),
        "bru": lambda r: (lambda ds, s: random_undersample(ds, r, s)),
    }
    for label, make in samplers.items():
        best = None
        for r in rates:
            try:
                rep = cross_validate(d, bce, nc, tc, k=k, seed=seed, resample=make(r))
            except ValueError as exc:
                log.warning("%s at ratio %.3g skipped: %s", label, r, exc)
                continue
            if best is None or rep.means["f1"] > best[1].means["f1"]:
                best = (r, rep)
        if best is not None:
            out[label] = {"ratio": best[0], "report": best[1]}
    return out


def spec_list(names, beta: float | None = None, L: float = 73.0) -> list[LossSpec]:
    return [loss_from_name(n, beta=beta, L=L) for n in names]
