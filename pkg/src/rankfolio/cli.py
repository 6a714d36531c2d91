"""Command-line entry point: ingest -> train/gridsearch -> backtest -> compare.

Every run directory receives a manifest (config, seed, data checksums,
versions) sufficient to reproduce the experiment bit-identically. Exit codes:
0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .backtest import run_backtest
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import ingest_csv, prepare_dataset, split_samples
from .errors import ConfigError, RankfolioError
from .metrics import compute_report
from .model import forward
from .synth import default_config_dict, generate_market, write_market_csvs
from .train import train_model

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(command: str, cfg: RunConfig, extra: dict | None = None) -> dict:
    data_dir = Path(cfg.data_directory)
    checksums = {}
    for ticker in cfg.tickers:
        path = data_dir / f"{ticker}.csv"
        if path.is_file():
            checksums[path.name] = _sha256(path)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "deterministic": cfg.deterministic,
        "data_checksums": checksums,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "rankfolio": __version__,
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def _load_config_with_overrides(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "out", None):
        updates["output_directory"] = args.out
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "deterministic", False):
        updates["deterministic"] = True
    if updates:
        cfg = replace(cfg, **updates)
        cfg = replace(
            cfg,
            train=replace(cfg.train, seed=cfg.seed, deterministic=cfg.deterministic),
        )
    return cfg


def _prepare(cfg: RunConfig):
    ds = ingest_csv(cfg.data_directory, cfg.tickers)
    panel, samples, split = prepare_dataset(ds, cfg.lookback, cfg.train_frac, cfg.val_frac)
    return ds, panel, samples, split


def cmd_ingest(args) -> int:
    cfg = _load_config_with_overrides(args)
    ds = ingest_csv(cfg.data_directory, cfg.tickers)
    summary = {
        "tickers": list(ds.tickers),
        "n_days": ds.n_days,
        "first_date": ds.dates[0].isoformat(),
        "last_date": ds.dates[-1].isoformat(),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config_with_overrides(args)
    ds, panel, samples, split = _prepare(cfg)
    train_samples, val_samples, _ = split_samples(samples, split)
    result = train_model(cfg.model, train_samples, val_samples, cfg.loss, cfg.train)

    out_dir = Path(cfg.output_directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.rfck", result.best_params, cfg.model, cfg.seed)
    _write_json(out_dir / "train_result.json", result.to_dict())
    _write_json(out_dir / "manifest.json", _manifest("train", cfg))
    print(f"trained {cfg.loss.kind} for {result.stopped_epoch} epochs "
          f"(best epoch {result.best_epoch}, val loss {result.best_val_loss:.6g})")
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    from .train import grid_search

    cfg = _load_config_with_overrides(args)
    if cfg.grid is None:
        raise ConfigError("config has no grid section; nothing to search")
    ds, panel, samples, split = _prepare(cfg)
    train_samples, val_samples, _ = split_samples(samples, split)
    best_result, best_point, leaderboard = grid_search(
        cfg.grid, cfg.model, cfg.loss, cfg.train, train_samples, val_samples
    )
    out_dir = Path(cfg.output_directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out_dir / "checkpoint.rfck", best_result.best_params, best_result.model_config,
        cfg.seed,
    )
    _write_json(out_dir / "leaderboard.json", {"leaderboard": leaderboard, "best_point": best_point})
    _write_json(out_dir / "train_result.json", best_result.to_dict())
    _write_json(out_dir / "manifest.json", _manifest("gridsearch", cfg))
    print(f"grid search over {len(leaderboard)} points; best point {best_point} "
          f"(val loss {best_result.best_val_loss:.6g})")
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _load_config_with_overrides(args)
    if cfg.backtest.k > len(cfg.tickers):
        raise ConfigError(
            f"backtest.k={cfg.backtest.k} exceeds universe size {len(cfg.tickers)}"
        )
    params, model_config, ckpt_seed = load_checkpoint(args.checkpoint)
    if model_config.lookback != cfg.lookback:
        raise ConfigError(
            f"checkpoint lookback {model_config.lookback} does not match config "
            f"lookback {cfg.lookback}"
        )
    ds, panel, samples, split = _prepare(cfg)
    _, _, test_samples = split_samples(samples, split)

    predictions = np.stack(
        [forward(params, model_config, s.x).predictions for s in test_samples]
    )
    realized = np.stack([s.y for s in test_samples])
    result = run_backtest(predictions, realized, cfg.backtest)
    report = compute_report(
        predictions, realized, cfg.backtest.k,
        icir_scale_by_sqrt_days=cfg.icir_scale_by_sqrt_days,
    )

    date_index = {d: i for i, d in enumerate(ds.dates)}
    target_dates = [ds.dates[date_index[s.anchor_date] + 1] for s in test_samples]

    out_dir = Path(cfg.output_directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    equity = pd.DataFrame(
        {
            "date": [d.isoformat() for d in target_dates],
            "value": result.equity_curve[1:],
            "daily_return": result.daily_returns,
            "holdings": [
                ";".join(ds.tickers[i] for i in picks) for picks in result.holdings
            ],
        }
    )
    equity.to_csv(out_dir / "equity_curve.csv", index=False)
    ics = pd.DataFrame(
        {"date": [d.isoformat() for d in target_dates], "ic": report.ic_series}
    )
    ics.to_csv(out_dir / "ic_series.csv", index=False)

    metrics_json = {
        k: (None if not np.isfinite(v) else float(v)) for k, v in result.metrics.items()
    }
    _write_json(out_dir / "portfolio_metrics.json", metrics_json)
    _write_json(out_dir / "predictive_metrics.json", report.to_dict())
    _write_json(
        out_dir / "manifest.json",
        _manifest(
            "backtest", cfg,
            extra={
                "checkpoint": str(args.checkpoint),
                "checkpoint_sha256": _sha256(Path(args.checkpoint)),
                "checkpoint_seed": ckpt_seed,
            },
        ),
    )
    print(f"backtest over {len(test_samples)} test days: "
          + ", ".join(f"{k}={metrics_json[k]}" for k in ("CR", "AR", "AV", "SR", "MDD")))
    print(f"outputs written to {out_dir}")
    return EXIT_OK


_COMPARE_COLUMNS = [
    ("CR", "portfolio", "CR"),
    ("AR", "portfolio", "AR"),
    ("AV", "portfolio", "AV"),
    ("SR", "portfolio", "SR"),
    ("MDD", "portfolio", "MDD"),
    ("IC", "predictive", "ic_mean"),
    ("StdIC", "predictive", "ic_std"),
    ("ICIR", "predictive", "icir"),
    ("P@k", "predictive", "precision_at_k"),
    ("TestMSE", "predictive", "test_mse"),
]


def cmd_compare(args) -> int:
    rows = []
    for run in args.runs:
        run_dir = Path(run)
        files = {
            "portfolio": run_dir / "portfolio_metrics.json",
            "predictive": run_dir / "predictive_metrics.json",
            "manifest": run_dir / "manifest.json",
        }
        for label, path in files.items():
            if not path.is_file():
                raise RankfolioError(f"run {run_dir}: missing {path.name}")
        loaded = {k: json.loads(p.read_text(encoding="utf-8")) for k, p in files.items()}
        row = {"loss": loaded["manifest"]["config"]["loss"]["kind"], "run": str(run_dir)}
        for col, section, key in _COMPARE_COLUMNS:
            row[col] = loaded[section][key]
        rows.append(row)
    table = pd.DataFrame(rows, columns=["loss"] + [c for c, _, _ in _COMPARE_COLUMNS] + ["run"])
    text = table.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    print(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / "comparison.csv", index=False)
        (out_dir / "comparison.txt").write_text(text + "\n", encoding="utf-8")
        print(f"comparison written to {out_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    market = generate_market(
        n_tickers=args.tickers, n_days=args.days, seed=args.seed, noise=args.noise
    )
    paths = write_market_csvs(market, args.out)
    print(f"wrote {len(paths)} ticker files to {args.out}")
    if args.config_out:
        cfg = default_config_dict(
            args.out, market.tickers, Path(args.out).parent / "run", seed=args.seed
        )
        Path(args.config_out).write_text(
            json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote starter config to {args.config_out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankfolio", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, checkpoint=False):
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--deterministic", action="store_true",
                       help="force the deterministic flag on")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="path to a model checkpoint")

    add_common(sub.add_parser("ingest", help="validate and summarize the input data"))
    add_common(sub.add_parser("train", help="train a model and write a checkpoint"))
    add_common(sub.add_parser("gridsearch", help="grid-search hyperparameters"))
    add_common(sub.add_parser("backtest", help="run the test-split backtest"),
               checkpoint=True)

    comp = sub.add_parser("compare", help="consolidate completed runs into one table")
    comp.add_argument("runs", nargs="+", help="run output directories")
    comp.add_argument("--out", help="directory for comparison.csv / comparison.txt")

    syn = sub.add_parser("synth", help="generate a synthetic dataset")
    syn.add_argument("--out", required=True, help="directory for the ticker CSVs")
    syn.add_argument("--tickers", type=int, default=12)
    syn.add_argument("--days", type=int, default=320)
    syn.add_argument("--seed", type=int, default=7)
    syn.add_argument("--noise", type=float, default=0.3,
                     help="noise std as a multiple of the signal std")
    syn.add_argument("--config-out", help="also write a starter run config here")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "backtest": cmd_backtest,
    "compare": cmd_compare,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankfolioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
