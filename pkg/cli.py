#!/usr/bin/env python3
"""Command-line entry point: run an experiment grid, generate a synthetic
cohort, or validate a feature CSV.

Usage:
  python cli.py run --config experiment.yaml [--override cv.seed=7] [--threads 4]
  python cli.py synth --n 1200 --separation 5 --seed 0 --out cohort.csv
  python cli.py validate --data features.csv

Exit codes:
  0  success
  1  internal error
  2  configuration or parameter error (the message names the key)
  3  data error (the message names the line where there is one)
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import yaml

from classifiers import LEARNER_DEFAULTS, LearnerSpec
from dataio import MESSIDOR_GRADE_PROPORTIONS, Scenario, audit_csv, generate_synthetic, write_csv
from errors import (BadProportionsError, ConfigError, DataError, FeatureVectorError, FoldError,
                    LearnerSpecError)
from fusion import STRATEGIES
from harness import Defaults, ExperimentConfig, SynthParams, emit_report, run_experiment
from selection import ENERGY_KINDS, SEARCH_METHODS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

TOP_LEVEL_KEYS = ("data", "scenario", "pool", "fusion", "search", "energy", "cv", "energy_on",
                  "validation_fraction", "search_mode", "product_epsilon", "threads", "out_dir")
DATA_KEYS = ("path", "synth")
SYNTH_KEYS = ("n", "proportions", "separation", "seed")
CV_KEYS = ("k", "seed")

# Axis keys accept one value, a list, or the keyword selecting the whole vocabulary.
AXES = {
    "scenario": ("all-scenarios", tuple(s.value for s in Scenario)),
    "fusion": ("all-strategies", STRATEGIES),
    "search": ("all-methods", SEARCH_METHODS),
    "energy": ("all-energies", ENERGY_KINDS),
}


def _reject_unknown(mapping: Dict[str, Any], allowed: Sequence[str], prefix: str = "") -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", f"expected a mapping, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _number(key: str, value: Any, integer: bool = False) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or (integer and not isinstance(value, int)):
        kind = "an integer" if integer else "a number"
        raise ConfigError(key, f"must be {kind}, got {value!r}")
    return value


def _axis(mapping: Dict[str, Any], key: str) -> Optional[tuple]:
    if key not in mapping:
        return None
    keyword, vocabulary = AXES[key]
    value = mapping[key]
    if value == keyword:
        return tuple(vocabulary)
    values = value if isinstance(value, list) else [value]
    for v in values:
        if v not in vocabulary:
            raise ConfigError(key, f"unknown value {v!r}; expected one of {'|'.join(vocabulary)} or {keyword}")
    return tuple(values)


def _pool(entries: Any) -> tuple:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("pool", "must be a non-empty list of learners")
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"pool.{i}", "each learner needs a 'kind'")
        kind = entry["kind"]
        if kind not in LEARNER_DEFAULTS:
            raise ConfigError(f"pool.{i}.kind", f"unknown learner {kind!r}; expected one of {'|'.join(LEARNER_DEFAULTS)}")
        _reject_unknown(entry, ("kind",) + tuple(LEARNER_DEFAULTS[kind]), f"pool.{i}.")
        try:
            specs.append(LearnerSpec.from_mapping(entry))
        except LearnerSpecError as e:
            raise ConfigError(f"pool.{i}", str(e)) from e
    return tuple(specs)


def parse_config(mapping: Dict[str, Any], base_dir: str = ".") -> ExperimentConfig:
    """Turn a parsed config document into an ExperimentConfig.

    Relative data paths are resolved against `base_dir`.

    Raises:
        ConfigError: unknown key or invalid value, naming the dotted key
    """
    _reject_unknown(mapping, TOP_LEVEL_KEYS)
    if "data" not in mapping:
        raise ConfigError("data", "missing")
    if "pool" not in mapping:
        raise ConfigError("pool", "missing")
    data = mapping["data"]
    _reject_unknown(data, DATA_KEYS, "data.")

    kwargs: Dict[str, Any] = {"pool": _pool(mapping["pool"])}
    if "path" in data:
        if not isinstance(data["path"], str):
            raise ConfigError("data.path", "must be a string")
        kwargs["data_path"] = os.path.normpath(os.path.join(base_dir, data["path"]))
    if "synth" in data:
        synth = data["synth"]
        _reject_unknown(synth, SYNTH_KEYS, "data.synth.")
        proportions = synth.get("proportions", list(MESSIDOR_GRADE_PROPORTIONS))
        if not isinstance(proportions, list):
            raise ConfigError("data.synth.proportions", "must be a list of 4 numbers")
        kwargs["synth"] = SynthParams(
            n=_number("data.synth.n", synth.get("n", 1200), integer=True),
            proportions=tuple(_number("data.synth.proportions", p) for p in proportions),
            separation=_number("data.synth.separation", synth.get("separation", 5.0)),
            seed=_number("data.synth.seed", synth.get("seed", 0), integer=True),
        )

    for key, field_name in (("scenario", "scenarios"), ("fusion", "fusion"),
                            ("search", "search"), ("energy", "energy")):
        values = _axis(mapping, key)
        if values is not None:
            kwargs[field_name] = tuple(Scenario(v) for v in values) if key == "scenario" else values

    if "cv" in mapping:
        cv = mapping["cv"]
        _reject_unknown(cv, CV_KEYS, "cv.")
        if "k" in cv:
            kwargs["k"] = _number("cv.k", cv["k"], integer=True)
        if "seed" in cv:
            kwargs["seed"] = _number("cv.seed", cv["seed"], integer=True)
    for key in ("energy_on", "search_mode", "out_dir"):
        if key in mapping:
            if not isinstance(mapping[key], str):
                raise ConfigError(key, "must be a string")
            kwargs[key] = mapping[key]
    for key in ("validation_fraction", "product_epsilon"):
        if key in mapping:
            kwargs[key] = float(_number(key, mapping[key]))
    if mapping.get("threads") is not None:
        kwargs["threads"] = _number("threads", mapping["threads"], integer=True)

    return ExperimentConfig(**kwargs)


def apply_override(mapping: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Return a copy of `mapping` with `dotted.key=value` applied.

    The value is read with YAML scalar rules, so `7` is an int and `[a, b]` a list.
    """
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    dotted, text = assignment.split("=", 1)
    parts = dotted.strip().split(".")
    try:
        value = yaml.safe_load(text) if text.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(dotted, f"cannot parse override value: {e}") from e

    result = copy.deepcopy(mapping)
    node: Any = result
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        where = ".".join(parts[:depth + 1])
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ConfigError(where, "no such list entry")
            if last:
                node[int(part)] = value
            else:
                node = node[int(part)]
        elif isinstance(node, dict):
            if last:
                node[part] = value
            else:
                node = node.setdefault(part, {})
        else:
            raise ConfigError(where, "cannot descend into a scalar")
    return result


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as handle:
            document = yaml.safe_load(handle)
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError("--config", f"{path} is not valid YAML: {e}") from e
    if document is None:
        raise ConfigError("--config", f"{path} is empty")
    return document


def load_config(path: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    mapping = read_config_file(path)
    for assignment in overrides:
        mapping = apply_override(mapping, assignment)
    return parse_config(mapping, base_dir=os.path.dirname(os.path.abspath(path)))


def _exit_code(error: BaseException) -> int:
    if isinstance(error, FoldError) and error.__cause__ is not None:
        return _exit_code(error.__cause__)
    if isinstance(error, (ConfigError, LearnerSpecError)):
        return EXIT_CONFIG
    if isinstance(error, (DataError, FeatureVectorError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override or ())
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {args.threads}")
        config = replace(config, threads=args.threads)
    report = run_experiment(config)
    emit_report(report, config.out_dir)
    print(config.out_dir)
    return EXIT_OK


def _proportions(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"proportions must be comma-separated numbers, got {text!r}")


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        dataset = generate_synthetic(args.n, args.proportions, args.separation, args.seed)
    except BadProportionsError as e:
        raise ConfigError("--proportions/--n/--separation", str(e)) from e
    write_csv(dataset, args.out)
    print(args.out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    problems = audit_csv(args.data)
    for problem in problems:
        print(f"{args.data}: line {problem.line}: {problem.reason}")
    if problems:
        logger.warning(f"{args.data}: {len(problems)} invalid row(s)")
        return EXIT_DATA
    print(f"{args.data}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Ensemble-based DR screening experiment harness.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log search steps and training details")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid from a YAML config")
    run.add_argument("--config", required=True, help="path to the experiment YAML")
    run.add_argument("--override", action="append", metavar="KEY=VALUE",
                     help="override a dotted config key, e.g. cv.seed=7 (repeatable)")
    run.add_argument("--threads", type=int, default=None, help="cap the number of fold workers")
    run.set_defaults(handler=cmd_run)

    synth = sub.add_parser("synth", help="write a synthetic cohort CSV")
    synth.add_argument("--n", type=int, default=1200)
    synth.add_argument("--proportions", type=_proportions, default=list(MESSIDOR_GRADE_PROPORTIONS),
                       help="R0,R1,R2,R3 proportions (default: the Messidor population)")
    synth.add_argument("--separation", type=float, default=5.0)
    synth.add_argument("--seed", type=int, default=Defaults.seed)
    synth.add_argument("--out", required=True, help="output CSV path")
    synth.set_defaults(handler=cmd_synth)

    validate = sub.add_parser("validate", help="check a feature CSV against the schema")
    validate.add_argument("--data", required=True)
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s")

    try:
        return args.handler(args)
    except Exception as e:
        code = _exit_code(e)
        logger.error(f"{args.command} failed: {e}")
        logger.debug("Traceback", exc_info=True)
        if code == EXIT_CONFIG and isinstance(e, ConfigError):
            print(f"config error: {e.key}: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
