"""Command-line entry point: ``anyloss <subcommand> [options]``.

Every subcommand that writes artifacts echoes its effective configuration to
``run_config.json`` in the output directory. A JSON ``--config`` file can
supply any long option (dashes become underscores); flags given on the
command line win over the file.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .approx import TABLE_LEVELS, valid_L_range
from .confusion import REPORT_METRICS, hard_confusion, metric_from_name, metric_score
from .data import Dataset, load_csv, random_undersample, smote, synth_imbalanced
from .evaluation import (
    bayesian_sign_test,
    cross_validate,
    l_sweep,
    run_bench,
    spec_list,
)
from .gradcheck import FAULTS, run_suite
from .losses import ALL_LOSS_NAMES, loss_from_name
from .network import NetworkConfig, TrainConfig, init, predict, save_model, train

log = logging.getLogger("anyloss")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# built-in values used when neither the config file nor a flag sets an option
DEFAULTS = {
    "loss": "f1",
    "beta": None,
    "scale_l": 73.0,
    "arch": "slp",
    "hidden": 2,
    "no_bn": False,
    "epochs": None,
    "lr": None,
    "batch_frac": None,
    "folds": 10,
    "seed": 0,
    "out": None,
    "data": None,
    "losses": ",".join(ALL_LOSS_NAMES),
    "metrics": "accuracy,f1,gmean,bacc",
    "l_values": "1,5,10,20,35,50,73",
    "resampling": "none",
    "ratio": 1.0,
    "no_scale": False,
    "workers": None,
    "mc_samples": 50_000,
    "ropes": "0.01,0.05",
}


class UsageError(Exception):
    """Bad option values, unreadable inputs or inconsistent configuration."""


# ----------------------------------------------------------------------------
# option plumbing


def _add_model_opts(p: argparse.ArgumentParser, loss: bool = True):
    if loss:
        p.add_argument("--loss", help="mse, bce, acc, f1, fBETA, gmean or bacc (default f1)")
        p.add_argument("--beta", type=float, help="beta for an F-beta loss")
    p.add_argument("--scale-l", type=float, help="amplifying scale L (default 73)")
    p.add_argument("--arch", choices=("slp", "mlp"), help="network (default slp)")
    p.add_argument("--hidden", type=int, help="hidden nodes for mlp (default 2)")
    p.add_argument("--no-bn", action="store_const", const=True, help="mlp without batch norm")
    p.add_argument("--epochs", type=int, help="default 1000 for slp, 100 for mlp")
    p.add_argument("--lr", type=float, help="learning rate (default depends on loss and arch)")
    p.add_argument("--batch-frac", type=float, help="batch size as a fraction of the training set")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--no-scale", action="store_const", const=True,
                   help="skip per-fold feature standardization")


def _add_io_opts(p: argparse.ArgumentParser, many: bool = False):
    help_ = ("CSV file, directory of CSVs, or synth:n=..,m=..,pos=..,sep=..,seed=.."
             + ("; repeatable" if many else ""))
    p.add_argument("--data", action="append" if many else "store", help=help_)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file of option values; flags override it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anyloss", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lrange", help="valid amplifying-scale interval per accuracy level")
    p.add_argument("levels", nargs="*", type=float, help="accuracy levels t in (0, 0.5)")
    p.add_argument("--raw", action="store_true", help="print unrounded bounds")
    p.add_argument("--csv", help="also write rows to this CSV file")

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--losses", help="comma list to check (default: all six)")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=FAULTS, help="sabotage a gradient to test the checker")

    p = sub.add_parser("train", help="train one network and save it")
    _add_model_opts(p)
    _add_io_opts(p)

    p = sub.add_parser("cv", help="k-fold cross-validation of one loss")
    _add_model_opts(p)
    _add_io_opts(p)
    p.add_argument("--folds", type=int, help="k (default 10)")
    p.add_argument("--resampling", choices=("none", "smote", "under"),
                   help="rebalance each training split")
    p.add_argument("--ratio", type=float, help="target majority:minority ratio for --resampling")

    p = sub.add_parser("bench", help="datasets x losses grid with tallies and sign tests")
    _add_model_opts(p, loss=False)
    _add_io_opts(p, many=True)
    p.add_argument("--losses", help="comma list (default mse,bce,acc,f1,gmean,bacc)")
    p.add_argument("--beta", type=float, help="beta for F-beta entries")
    p.add_argument("--folds", type=int, help="k (default 10)")
    p.add_argument("--workers", type=int, help="parallel cells (default ANYLOSS_THREADS or CPU count)")
    p.add_argument("--mc-samples", type=int, help="sign-test Monte Carlo draws (default 50000)")
    p.add_argument("--ropes", help="comma list of rope widths (default 0.01,0.05)")

    p = sub.add_parser("sweep", help="cross-validated score as a function of L")
    _add_model_opts(p, loss=False)
    _add_io_opts(p)
    p.add_argument("--metrics", help="comma list of targeted metrics")
    p.add_argument("--l-values", help="comma list of L values")
    p.add_argument("--folds", type=int, help="k (default 10)")

    p = sub.add_parser("signtest", help="Bayesian sign test on paired score differences")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--diffs", help="comma list of differences (a minus b)")
    src.add_argument("--scores", help="CSV with two score columns a,b (header row)")
    p.add_argument("--rope", type=float, default=0.01)
    p.add_argument("--mc-samples", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the optional config file, and explicit flags."""
    cfg = {k: v for k, v in DEFAULTS.items() if hasattr(args, k)}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"{path}: expected a JSON object")
        for key, value in loaded.items():
            k = key.replace("-", "_")
            if k not in cfg:
                raise UsageError(f"{path}: unknown option {key!r} for {args.command}")
            cfg[k] = value
    for k in cfg:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = v
    return cfg


def _floats(text, what: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = [s for s in str(text).split(",") if s.strip()]
    try:
        return [float(s) for s in items]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _names(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(s).strip() for s in text]
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _parse_synth(spec: str) -> Dataset:
    keys = {"n": int, "m": int, "pos": float, "sep": float, "seed": int}
    kw = {"n": 10_000, "m": 2, "pos": 0.1, "sep": 2.0, "seed": 0}
    body = spec.split(":", 1)[1]
    for part in filter(None, (s.strip() for s in body.split(","))):
        key, _, value = part.partition("=")
        if key not in keys or not value:
            raise UsageError(f"bad synthetic field {part!r}; use n, m, pos, sep, seed")
        try:
            kw[key] = keys[key](value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    d = synth_imbalanced(kw["n"], kw["m"], kw["pos"], kw["sep"], kw["seed"])
    tag = f"synth-n{kw['n']}-m{kw['m']}-pos{kw['pos']:g}-sep{kw['sep']:g}-s{kw['seed']}"
    return Dataset(d.X, d.Y, tag)


def load_datasets(specs) -> list[Dataset]:
    if not specs:
        raise UsageError("no dataset given; pass --data")
    if isinstance(specs, str):
        specs = [specs]
    out = []
    for spec in specs:
        if spec.startswith("synth"):
            out.append(_parse_synth(spec if ":" in spec else spec + ":"))
            continue
        path = Path(spec)
        if path.is_dir():
            files = sorted(path.glob("*.csv"))
            if not files:
                raise UsageError(f"{path}: no .csv files found")
        elif path.is_file():
            files = [path]
        else:
            raise UsageError(f"{path}: no such file or directory")
        for f in files:
            try:
                out.append(load_csv(f))
            except (OSError, UnicodeDecodeError) as exc:
                raise UsageError(f"cannot read {f}: {exc}") from None
    return out


def _network_config(cfg: dict, d: Dataset) -> NetworkConfig:
    return NetworkConfig(input_dim=d.m, arch=cfg["arch"], hidden=int(cfg["hidden"]),
                         batch_norm=not cfg["no_bn"])


def _overrides(cfg: dict) -> dict:
    return {"epochs": cfg["epochs"], "learning_rate": cfg["lr"], "batch_fraction": cfg["batch_frac"]}


def _out_dir(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"] or f"anyloss-{command}")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_config(out: Path, command: str, cfg: dict) -> None:
    _dump(out / "run_config.json", {"command": command, **cfg})


def _write_curves(path: Path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    length = max(len(c) for c in columns.values())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch"] + names)
        for e in range(length):
            w.writerow([e + 1] + [repr(float(columns[n][e])) for n in names])


# ----------------------------------------------------------------------------
# subcommands


def cmd_lrange(args) -> int:
    levels = args.levels or list(TABLE_LEVELS)
    rows = []
    for t in levels:
        if not 0 < t < 0.5:
            raise UsageError(f"accuracy level must lie in (0, 0.5), got {t:g}")
        r = valid_L_range(t)
        lo, hi = (r.min_L, r.max_L) if args.raw else (r.table_min, r.table_max)
        rows.append((t, lo, hi, r.empty))
    fmt = "{:.6f}" if args.raw else "{:.2f}"
    print(f"{'t':>8}  {'min_L':>10}  {'max_L':>10}")
    for t, lo, hi, empty in rows:
        print(f"{t:>8g}  {fmt.format(lo):>10}  {fmt.format(hi):>10}" + ("  empty" if empty else ""))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "min_L", "max_L", "empty"])
            for t, lo, hi, empty in rows:
                w.writerow([repr(t), fmt.format(lo), fmt.format(hi), int(empty)])
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    names = _names(args.losses) if args.losses else []
    try:
        specs = spec_list(names) if names else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.instances < 1:
        raise UsageError("--instances must be positive")
    results = run_suite(specs, instances=args.instances, seed=args.seed, fault=args.inject_fault)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        arch = "" if r.arch == "-" else f" [{r.arch}]"
        print(f"{status}  {r.level:<7} {r.loss:<8}{arch:<6} max rel err {r.max_rel_err:.3e} (tol {r.tol:g})")
    worst = max(results, key=lambda r: r.max_rel_err / r.tol)
    print(f"max rel err {max(r.max_rel_err for r in results):.3e}; "
          f"worst relative to tolerance: {worst.level} {worst.loss} {worst.arch} at {worst.worst}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"FAIL: {len(failed)} of {len(results)} checks exceeded tolerance")
        return EXIT_FAIL
    print(f"PASS: all {len(results)} checks")
    return EXIT_OK


def _spec_from_cfg(cfg: dict):
    try:
        return loss_from_name(cfg["loss"], beta=cfg["beta"], L=float(cfg["scale_l"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    spec = _spec_from_cfg(cfg)
    d = load_datasets(cfg["data"])[0]
    X = d.X
    scaler = None
    if not cfg["no_scale"]:
        mu, sd = d.X.mean(axis=0), d.X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        X = (d.X - mu) / sd
        scaler = {"mean": mu.tolist(), "std": sd.tolist()}
    nc = replace(_network_config(cfg, d), seed=int(cfg["seed"]))
    tc = TrainConfig.defaults(cfg["arch"], spec, seed=int(cfg["seed"]), **_overrides(cfg))
    out = _out_dir(cfg, "train")
    _echo_config(out, "train", cfg)
    net = init(nc)
    rep = train(net, X, d.Y, tc)
    save_model(net, out / "model.json", spec.L)
    if scaler is not None:
        _dump(out / "scaler.json", scaler)
    _write_curves(out / "loss_curve.csv", {spec.name: rep.loss_curve})
    _, labels = predict(net, X)
    conf = hard_confusion(d.Y, labels)
    scores = {k.name: metric_score(conf, k) for k in REPORT_METRICS}
    _dump(out / "train_scores.json", scores)
    print(f"{spec.name} on {d.name}: final loss {rep.loss_curve[-1]:.6f}, "
          + ", ".join(f"{k} {v:.4f}" for k, v in scores.items()) + " (training set)")
    print(f"wrote {out / 'model.json'}")
    return EXIT_OK


def _resampler(cfg: dict):
    kind, ratio = cfg["resampling"], float(cfg["ratio"])
    if kind == "none":
        return None
    if kind == "smote":
        return lambda ds, s: smote(ds, 5, ratio, s)
    if kind == "under":
        return lambda ds, s: random_undersample(ds, ratio, s)
    raise UsageError(f"unknown resampling {kind!r}; use none, smote or under")


def cmd_cv(args) -> int:
    cfg = resolve_config(args)
    spec = _spec_from_cfg(cfg)
    d = load_datasets(cfg["data"])[0]
    nc = _network_config(cfg, d)
    tc = TrainConfig.defaults(cfg["arch"], spec, **_overrides(cfg))
    out = _out_dir(cfg, "cv")
    _echo_config(out, "cv", cfg)
    rep = cross_validate(d, spec, nc, tc, k=int(cfg["folds"]), seed=int(cfg["seed"]),
                         scale=not cfg["no_scale"], resample=_resampler(cfg))
    doc = {"dataset": d.name, **rep.to_dict(timing=True)}
    _dump(out / "cv_report.json", doc)
    _write_curves(out / "loss_curves.csv",
                  {"mean": rep.mean_curve(), **{f"fold{i + 1}": c for i, c in enumerate(rep.loss_curves)}})
    print(f"{spec.name} on {d.name}, {rep.k}-fold: "
          + ", ".join(f"{k} {v:.4f}" for k, v in rep.means.items()))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    datasets = load_datasets(cfg["data"])
    try:
        specs = spec_list(_names(cfg["losses"]), beta=cfg["beta"], L=float(cfg["scale_l"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not specs:
        raise UsageError("--losses is empty")
    out = _out_dir(cfg, "bench")
    _echo_config(out, "bench", cfg)
    partial_path = out / "bench_partial.json"
    partial: dict[str, dict[str, dict]] = {}

    def on_cell(ds, sname, rep):
        partial.setdefault(ds, {})[sname] = rep.means
        _dump(partial_path, {"completed": partial})
        log.info("done %s / %s", ds, sname)

    overrides = _overrides(cfg)
    report = run_bench(datasets, specs, arch=cfg["arch"], hidden=int(cfg["hidden"]),
                       batch_norm=not cfg["no_bn"], k=int(cfg["folds"]), seed=int(cfg["seed"]),
                       train_overrides=overrides, workers=cfg["workers"], on_cell=on_cell,
                       ropes=tuple(_floats(cfg["ropes"], "--ropes")),
                       mc_samples=int(cfg["mc_samples"]))
    _dump(out / "bench.json", report.to_dict(timing=False))
    _dump(out / "sign_tests.json", report.sign_tests)
    _dump(out / "timing.json", {
        "ratios_vs_bce": report.timing,
        "wall_time_per_epoch": {ds: {s: rep.wall_time_per_epoch for s, rep in row.items()}
                                for ds, row in report.cells.items()},
    })
    curves_dir = out / "curves"
    curves_dir.mkdir(exist_ok=True)
    for ds, row in report.cells.items():
        _write_curves(curves_dir / f"{ds}.csv", {s: rep.mean_curve() for s, rep in row.items()})
    partial_path.unlink(missing_ok=True)

    for metric, tally in report.tallies.items():
        print(f"{metric:>9}: " + "  ".join(f"{k} {v}" for k, v in tally.items()))
    print(f"wrote {out / 'bench.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    d = load_datasets(cfg["data"])[0]
    try:
        metrics = [metric_from_name(m) for m in _names(cfg["metrics"])]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    L_values = _floats(cfg["l_values"], "--l-values")
    if not L_values or any(not L > 0 for L in L_values):
        raise UsageError("--l-values must be positive numbers")
    nc = _network_config(cfg, d)
    # the learning rate default is looked up per metric inside TrainConfig.defaults
    out = _out_dir(cfg, "sweep")
    _echo_config(out, "sweep", cfg)
    grid = {}
    for kind in metrics:
        spec = loss_from_name(kind.name, L=73.0)
        tc = TrainConfig.defaults(cfg["arch"], spec, **_overrides(cfg))
        grid.update(l_sweep(d, [kind], L_values, nc, tc, k=int(cfg["folds"]), seed=int(cfg["seed"])))
    _dump(out / "sweep.json", {"dataset": d.name,
                                "grid": {m: {repr(L): s for L, s in row.items()} for m, row in grid.items()}})
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L"] + list(grid))
        for L in L_values:
            w.writerow([repr(L)] + [repr(grid[m][L]) for m in grid])
    for m, row in grid.items():
        best = max(row, key=row.get)
        print(f"{m}: best L {best:g} ({row[best]:.4f})")
    return EXIT_OK


def _read_score_pairs(path: Path) -> list[float]:
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    diffs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) < 2:
            raise UsageError(f"{path}:{lineno}: need two score columns")
        try:
            diffs.append(float(row[-2]) - float(row[-1]))
        except ValueError:
            raise UsageError(f"{path}:{lineno}: scores must be numbers") from None
    return diffs


def cmd_signtest(args) -> int:
    if args.diffs is not None:
        diffs = _floats(args.diffs, "--diffs")
    else:
        diffs = _read_score_pairs(Path(args.scores))
    try:
        res = bayesian_sign_test(diffs, rope=args.rope, mc_samples=args.mc_samples, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "lrange": cmd_lrange,
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "cv": cmd_cv,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "signtest": cmd_signtest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"anyloss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # data and configuration validation errors raised by the library
        print(f"anyloss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
