"""Command line entry point: ``seqllr {ber,equivalence,fronthaul}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .harness import (
    equivalence_from_dict,
    experiment_from_dict,
    fronthaul_from_dict,
    run_ber,
    run_equivalence,
    run_fronthaul,
)
from .model import ConfigError, HypothesisCapError

EXIT_OK = 0
EXIT_INVALID_CONFIG = 1
EXIT_INVARIANT_FAILURE = 2

log = logging.getLogger("seqllr")


def write_csv(path: Path | None, rows: Sequence[Mapping[str, Any]], fieldnames: Iterable[str]) -> None:
    stream = sys.stdout if path is None else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(stream, fieldnames=list(fieldnames))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if path is not None:
            stream.close()


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def cmd_ber(args: argparse.Namespace) -> int:
    from .harness import BERRecord

    spec = experiment_from_dict(_load_config(args.config), seed=args.seed)
    records = run_ber(spec)
    out = args.out or spec.output_path
    fields = [f.name for f in dataclasses.fields(BERRecord)]
    write_csv(Path(out) if out else None, [dataclasses.asdict(r) for r in records], fields)
    return EXIT_OK


def cmd_equivalence(args: argparse.Namespace) -> int:
    spec = equivalence_from_dict(_load_config(args.config), seed=args.seed)
    results = run_equivalence(spec)
    rows = [r.to_row() for r in results]
    fields = ["invariant_name", "instances", "max_abs_dev", "max_rel_dev", "pass"]
    if args.out:
        out = Path(args.out)
        write_csv(out, rows, fields)
        out.with_suffix(".json").write_text(json.dumps(rows, indent=2))
    else:
        print(json.dumps(rows, indent=2))
    for r in results:
        log.info("%-32s %s  max_abs=%.3e max_rel=%.3e", r.invariant_name, "PASS" if r.passed else "FAIL",
                 r.max_abs_dev, r.max_rel_dev)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT_FAILURE


def cmd_fronthaul(args: argparse.Namespace) -> int:
    from .fronthaul import FronthaulReport

    spec = fronthaul_from_dict(_load_config(args.config))
    reports = run_fronthaul(spec)
    fields = [f.name for f in dataclasses.fields(FronthaulReport)]
    write_csv(Path(args.out) if args.out else None, [r.to_row() for r in reports], fields)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqllr",
        description="Sequential (daisy-chain) LLR computation for uplink cell-free massive MIMO.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
        ("ber", cmd_ber, "Monte Carlo uncoded BER over an SNR grid"),
        ("equivalence", cmd_equivalence, "randomized sequential-vs-centralized invariant suite"),
        ("fronthaul", cmd_fronthaul, "fronthaul load and saving tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file", required=(name == "ber"))
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", help="output CSV path (stdout if omitted)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, HypothesisCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
