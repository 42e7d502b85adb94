"""Command-line surface: landscape sweeps, training runs and verification checks."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ValidationError

from . import __version__
from .config import DEFAULT_SEED, LOG_LEVEL
from .errors import DegenerateGradientError, DomainError, TrainingDivergedError
from .settings import apply_overrides, build_config, load_raw_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_OUTPUTS = {
    "sweep": "landscape.csv",
    "train": "history.csv",
    "check": "check_report.csv",
}


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out: Path, subcommand: str, seed: int, config: BaseModel) -> Path:
    """Resolved config, seed and version next to the output; accepted back by ``--config``."""
    manifest = {
        "subcommand": subcommand,
        "seed": seed,
        "version": __version__,
        "config": config.model_dump(mode="json"),
    }
    path = manifest_path(out)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _resolve(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> Tuple[BaseModel, int, Path]:
    raw, manifest_seed = load_raw_config(Path(args.config) if args.config else None)
    raw = apply_overrides(raw, args.set or [])
    if extra:
        raw.update(extra)
    config = build_config(args.command, raw)
    seed = args.seed if args.seed is not None else (manifest_seed if manifest_seed is not None else DEFAULT_SEED)
    out = Path(args.out or DEFAULT_OUTPUTS[args.command])
    out.parent.mkdir(parents=True, exist_ok=True)
    return config, int(seed), out


def cmd_sweep(args: argparse.Namespace) -> int:
    """Write the landscape grid CSV and log the qualitative orderings at the sweep's (d, r)."""
    from .mlflow_logging import log_sweep_run
    from .mls import landscape_orderings, sweep_landscape

    config, seed, out = _resolve(args)
    sphere = config.sphere
    grid = sweep_landscape(config.kappa_axis(), config.cos_theta_axis(), sphere)
    grid.write_csv(out)
    write_manifest(out, "sweep", seed, config)

    report = landscape_orderings(
        sphere,
        kappa_high=config.orderings_kappa_high,
        kappa_high_disagree=config.orderings_kappa_high_disagree,
        seed=seed,
    )
    orderings = {
        "confident_agreement": report.confident_agreement,
        "confident_disagreement": report.confident_disagreement,
        "increasing_in_cos": report.increasing_in_cos,
    }
    for name, holds in orderings.items():
        logger.info("ordering %-22s %s (d=%d, r=%.6g)", name, "holds" if holds else "does NOT hold", sphere.d, sphere.r)
    log_sweep_run(config.model_dump(mode="json"), grid.values.shape, orderings, str(out))
    print(f"Wrote {grid.values.size} cells to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train the toy encoder; write the diagnostics CSV and the final state."""
    from .contrastive import SimilarityKind
    from .mlflow_logging import log_training_run
    from .trainer import confidence_report, train

    extra = {"similarity": args.similarity} if args.similarity else None
    config, seed, out = _resolve(args, extra)
    write_manifest(out, "train", seed, config)
    try:
        state = train(config, seed)
    except TrainingDivergedError as exc:
        logger.error("Training diverged: %s", exc)
        return EXIT_FAILURE

    state.write_history_csv(out)
    state_path = state.save(out.with_name(out.stem + ".state.npz"))
    confidence = None
    if config.similarity is SimilarityKind.MLS and state.step > 0:
        confidence = confidence_report(state, seed=seed).as_dict()
        logger.info(
            "mean kappa: low-noise views %.4f, high-noise views %.4f",
            confidence["mean_kappa_low"], confidence["mean_kappa_high"],
        )
    log_training_run(
        config.model_dump(mode="json"), seed, state.history, confidence, [str(out), str(state_path)]
    )
    if state.history:
        first, last = state.history[0], state.history[-1]
        print(f"loss {first['loss']:.6f} -> {last['loss']:.6f} over {state.step} steps")
    print(f"Wrote {out} and {state_path}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    """Run the verification suites; exit 1 with the first failing instance if any suite fails."""
    from .checks import report_frame, run_checks
    from .mlflow_logging import log_check_run

    config, seed, out = _resolve(args)
    write_manifest(out, "check", seed, config)
    results = run_checks(config, seed)
    frame = report_frame(results)
    frame.to_csv(out, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
    log_check_run(seed, frame.to_dict(orient="records"))

    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check:<22} instances={r.instances:<6} max_err={r.max_err:.3g}  threshold={r.threshold:.3g}")
    failed = [r for r in results if not r.passed]
    if failed:
        first = failed[0]
        print(
            f"First failing instance of '{first.check}':\n" + json.dumps(first.failing_inputs, indent=2, default=float),
            file=sys.stderr,
        )
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="Probabilistic contrastive loss: landscape sweeps, toy training, verification checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", help="JSON config file or a run manifest")
        p.add_argument("--out", metavar="PATH", help="Output CSV path")
        p.add_argument("--seed", type=int, default=None, help=f"Random seed (default {DEFAULT_SEED})")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="Override a config field; dotted keys reach nested fields (repeatable)",
        )
        p.add_argument("--log-level", default=LOG_LEVEL, help="Logging level (default from PCL_LOG_LEVEL)")

    common(sub.add_parser("sweep", help="Evaluate the MLS landscape on a kappa x kappa x cos grid"))
    train_parser = sub.add_parser("train", help="Train the toy encoder on synthetic data")
    common(train_parser)
    train_parser.add_argument("--similarity", choices=["inner", "scaled_inner_product", "mls"])
    common(sub.add_parser("check", help="Run oracle, gradient and identity checks"))
    return parser


COMMANDS = {"sweep": cmd_sweep, "train": cmd_train, "check": cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"Invalid configuration:\n{exc}", file=sys.stderr)
    except (DomainError, DegenerateGradientError) as exc:
        print(f"Domain error: {exc}", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
    return EXIT_USAGE
