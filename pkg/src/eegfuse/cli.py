# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import RunConfig, load_config, write_run_json
from .corpus import load_manifest
from .errors import ConfigError, EegFuseError, MissingFileError
from .pipeline import (
    ABLATION_COLUMNS,
    ABLATION_TABLES,
    Experiment,
    load_recordings,
    run_ablation,
)
from .synth import generate_synthetic
from .types import BandMode, Mode, SensorSet, Source
from .util import write_csv

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_CORPUS = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with flat dotted keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--band", choices=[b.value for b in BandMode])
    common.add_argument("--sensors", choices=[s.value for s in SensorSet])
    common.add_argument("--rep-source", choices=[s.value for s in Source])
    common.add_argument("--half-length", action="store_true", default=None)
    common.add_argument("--baseline-only", action="store_true", default=None)
    common.add_argument("--corpus", help="manifest CSV")
    common.add_argument("--out-dir")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=JSON",
        help="override one configuration key, e.g. isolated.epochs=3",
    )
    common.add_argument(
        "--log-level", type=str.upper, default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )  # fmt: skip
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="eegfuse", description="EEG-augmented speech recognition")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    synth.add_argument("--utterances", type=int, default=60)
    synth.add_argument("--sentences", type=int, default=5)
    synth.set_defaults(func=cmd_synth)

    for name, func, help_text in (
        ("validate", cmd_validate, "check a manifest and its files"),
        ("features", cmd_features, "extract and reduce features"),
        ("train", cmd_train, "train all models and write checkpoints"),
        ("eval", cmd_eval, "evaluate on the test split"),
        ("variance-curve", cmd_variance_curve, "KPCA explained variance"),
    ):
        sub.add_parser(name, parents=[common], help=help_text).set_defaults(func=func)

    ablate = sub.add_parser("ablate", parents=[common], help="run an ablation table")
    ablate.add_argument("--table", choices=[*ABLATION_TABLES, "all"], default="all")
    ablate.set_defaults(func=cmd_ablate)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    flags = {
        "seed": args.seed,
        "mode": args.mode,
        "ablation.band": args.band,
        "ablation.sensor_set": args.sensors,
        "ablation.rep_source": args.rep_source,
        "ablation.half_length": args.half_length,
        "baseline_only": args.baseline_only,
        "paths.corpus": args.corpus,
        "paths.out_dir": args.out_dir,
    }
    overrides = {key: value for key, value in flags.items() if value is not None}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=JSON, got {item!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            raise UsageError(f"--set {key}: {raw!r} is not valid JSON") from None
    return overrides


def _resolve(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    config = load_config(args.config, _overrides(args))
    out_dir = Path(config.paths.out_dir)
    write_run_json(out_dir / "run.json", config)
    return config, out_dir


def _manifest(config: RunConfig):
    path = Path(config.paths.corpus)
    if not path.is_file():
        raise MissingFileError(f"corpus manifest not found: {path}")
    return load_manifest(path)


def cmd_synth(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    manifest = generate_synthetic(out_dir, args.utterances, args.sentences, config.seed)
    print(manifest)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config, _ = _resolve(args)
    manifest = _manifest(config)
    if config.mode is Mode.ISOLATED:
        manifest.check_closed_set()
    print(f"{len(manifest)} utterances OK")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    experiment = Experiment(config).prepare(_manifest(config))
    reducer = experiment.fit_reducer()
    for utterance in experiment.utterances:
        reduced = experiment.reduced(utterance)
        write_csv(
            out_dir / "features" / f"{utterance.id}.csv",
            [f"f{i}" for i in range(reduced.dim)],
            reduced.data.tolist(),
        )
    first = experiment.utterances[0]
    summary = {
        "utterances": len(experiment.utterances),
        "raw_dim": first.raw.dim,
        "reduced_dim": reducer.output_dim,
        "mfcc_dim": first.mfcc.dim,
    }
    (out_dir / "features.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def _train(out_dir: Path, experiment: Experiment) -> None:
    experiment.fit()
    experiment.save_checkpoints(out_dir / "checkpoints")
    experiment.write_loss_history(out_dir / "loss_history.csv")


def cmd_train(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    _train(out_dir, Experiment(config).prepare(_manifest(config)))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    experiment = Experiment(config).prepare(_manifest(config))
    checkpoints = out_dir / "checkpoints"
    if Experiment.has_checkpoints(checkpoints, experiment.system_names):
        logger.info("evaluating checkpoints in %s", checkpoints)
        experiment.load_checkpoints(checkpoints)
    else:
        _train(out_dir, experiment)
    results = experiment.evaluate()
    results.write(out_dir)
    return 0


def cmd_variance_curve(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    curve = Experiment(config).prepare(_manifest(config)).variance_curve()
    write_csv(out_dir / "variance.csv", ["components", "cumulative_ratio"], curve)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    manifest = _manifest(config)
    recordings = load_recordings(manifest)
    tables = list(ABLATION_TABLES) if args.table == "all" else [args.table]
    for table in tables:
        rows = run_ablation(config, table, manifest, recordings)
        write_csv(out_dir / f"table_{table.replace('-', '_')}.csv", ABLATION_COLUMNS, rows)
    return 0


def error_code(error: BaseException) -> str:
    name = type(error).__name__.removesuffix("Error")
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower() + "_error"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=args.log_level, format="%(levelname)s %(name)s: %(message)s"
        )
        return args.func(args)
    except UsageError as e:
        print(f"usage_error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config_error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingFileError as e:
        print(f"missing_corpus: {e}", file=sys.stderr)
        return EXIT_MISSING_CORPUS
    except EegFuseError as e:
        print(f"{error_code(e)}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        print(f"io_error: {e}", file=sys.stderr)
        return EXIT_FAILURE
