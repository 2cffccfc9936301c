"""``harbench`` command line: validate, features, run, matrix.

Exit codes: 0 success, 1 runtime failure (including reports with a failed
leakage audit), 2 configuration or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from harbench.dataset import (
    DATA_DIR_ENV,
    TABLE1_DATASETS,
    TECHNIQUES,
    load_manifest,
    load_trials,
    normalize_dataset_name,
    table1_support,
    tomllib,
    validate_trialset,
)
from harbench.errors import ConfigError, HarbenchError
from harbench.evaluation import ExperimentConfig, run_experiment
from harbench.features import extract_feature_matrix, write_feature_csv
from harbench.windowing import window_trialset

logger = logging.getLogger("harbench")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
RUN_FILE_KEYS = {"out_dir", "verbosity"}
VERBOSITY = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _resolve_manifest(raw: str, base_dir: Path) -> str:
    path = Path(raw).expanduser()
    if path.is_absolute():
        return str(path)
    candidate = base_dir / path
    if not candidate.exists() and os.environ.get(DATA_DIR_ENV):
        fallback = Path(os.environ[DATA_DIR_ENV]) / path
        if fallback.exists():
            return str(fallback)
    return str(candidate)


def _read_structured(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object at top level")
    return raw


def load_run_config(path: str | Path) -> tuple[ExperimentConfig, dict[str, Any]]:
    """Parse a run config file: experiment fields plus ``out_dir`` and ``verbosity``.

    The manifest path is resolved relative to the config file.
    """
    path = Path(path)
    raw = _read_structured(path)
    extras = {key: raw.pop(key) for key in list(raw) if key in RUN_FILE_KEYS}
    if "verbosity" in extras and extras["verbosity"] not in VERBOSITY:
        raise ConfigError(f"verbosity must be one of {sorted(VERBOSITY)}")
    if "manifest" in raw:
        raw["manifest"] = _resolve_manifest(str(raw["manifest"]), path.parent)
    cfg = ExperimentConfig.from_dict(raw)
    return cfg, extras


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_trialset(load_trials(manifest, jobs=args.jobs))
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    for flag in report.flags:
        print(f"FLAG: {flag}", file=sys.stderr)
    return EXIT_OK


def cmd_features(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if args.technique not in manifest.supported_windowing:
        raise ConfigError(
            f"{manifest.name} does not support {args.technique} windows "
            f"(benchmark support table allows {sorted(manifest.supported_windowing)})"
        )
    ts = load_trials(manifest, jobs=args.jobs)
    ws = window_trialset(ts, args.technique)
    X, layout, seconds = extract_feature_matrix(ws, manifest)
    write_feature_csv(args.out, X, layout, ws)
    print(
        f"wrote {len(ws)} windows x {len(layout)} features to {args.out} "
        f"(mean extraction {seconds.mean():.2e} s/window)"
    )
    return EXIT_OK


def _execute(cfg: ExperimentConfig, out_dir: Path, jobs: int) -> tuple[int, Any]:
    report = run_experiment(cfg, jobs=jobs, out_dir=out_dir)
    print(report.to_table(), end="")
    print(f"report written to {out_dir}")
    return (EXIT_OK if report.valid else EXIT_RUNTIME), report


def cmd_run(args: argparse.Namespace) -> int:
    cfg, extras = load_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if "verbosity" in extras and not args.verbose:
        logging.getLogger("harbench").setLevel(VERBOSITY[extras["verbosity"]])
    out_dir = Path(args.out or extras.get("out_dir") or "harbench-out")
    code, _ = _execute(cfg, out_dir, args.jobs)
    return code


def _cell_key(cfg: ExperimentConfig) -> str:
    key = cfg.scheme
    if cfg.scheme == "holdout":
        key += f" {cfg.variant}"
    return key


def cmd_matrix(args: argparse.Namespace) -> int:
    config_dir = Path(args.config_dir)
    if not config_dir.is_dir():
        raise FileNotFoundError(f"config directory not found: {config_dir}")
    paths = sorted(p for p in config_dir.iterdir() if p.suffix.lower() in {".json", ".toml"})
    if not paths:
        raise ConfigError(f"no run configs (*.json, *.toml) in {config_dir}")
    out_root = Path(args.out or "harbench-matrix")
    # grid[scheme][dataset][technique] -> cell text
    grid: dict[str, dict[str, dict[str, str]]] = {}
    support: dict[str, frozenset[str]] = {}
    display: dict[str, str] = {normalize_dataset_name(n): n for n in TABLE1_DATASETS}
    cells: list[dict[str, Any]] = []
    code = EXIT_OK
    for path in paths:
        cfg, _ = load_run_config(path)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        manifest = load_manifest(cfg.manifest)
        key = normalize_dataset_name(manifest.name)
        display.setdefault(key, manifest.name)
        support[key] = manifest.supported_windowing
        table = grid.setdefault(_cell_key(cfg), {})
        if cfg.technique not in manifest.supported_windowing:
            logger.warning("%s: %s does not support %s; cell left as '-'", path.name, manifest.name, cfg.technique)
            continue
        run_code, report = _execute(cfg, out_root / path.stem, args.jobs)
        code = max(code, run_code)
        acc = report.mean_accuracy
        table.setdefault(key, {})[cfg.technique] = "-" if acc is None else f"{100 * acc:.2f}"
        cells.append(
            {
                "config": path.name,
                "dataset": manifest.name,
                "technique": cfg.technique,
                "scheme": cfg.scheme,
                "variant": cfg.variant,
                "mean_accuracy": acc,
                "valid": report.valid,
            }
        )

    lines = []
    for scheme in sorted(grid):
        lines.append(f"Mean accuracy (%), validation: {scheme}")
        lines.append(f"{'dataset':<14}" + "".join(f"{t:>24}" for t in TECHNIQUES))
        keys = [normalize_dataset_name(n) for n in TABLE1_DATASETS]
        keys += sorted(k for k in display if k not in keys)
        for key in keys:
            allowed = support.get(key) or table1_support(key) or frozenset(TECHNIQUES)
            row = []
            for technique in TECHNIQUES:
                if technique not in allowed:
                    row.append("-")
                else:
                    row.append(grid[scheme].get(key, {}).get(technique, "."))
            lines.append(f"{display[key]:<14}" + "".join(f"{c:>24}" for c in row))
        lines.append("")
    lines.append("'-' unsupported by the dataset, '.' not run")
    text = "\n".join(lines) + "\n"
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "matrix.txt").write_text(text, encoding="utf-8")
    (out_root / "matrix.json").write_text(json.dumps(cells, indent=2) + "\n", encoding="utf-8")
    print(text, end="")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a dataset manifest and print a validation report")
    p.add_argument("manifest")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--jobs", type=int, default=1, help="concurrent trial-file readers")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("features", help="dump per-window features to CSV")
    p.add_argument("manifest")
    p.add_argument("--technique", choices=TECHNIQUES, default=TECHNIQUES[1])
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--jobs", type=int, default=1, help="folds trained concurrently")
    p.add_argument("--out", help="output directory (overrides out_dir in the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="run every config in a directory and tabulate mean accuracy")
    p.add_argument("config_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output root (default harbench-matrix)")
    p.set_defaults(func=cmd_matrix)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("harbench").setLevel(level)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarbenchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
