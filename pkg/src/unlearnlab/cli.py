"""Command-line driver: ``unlearnlab {synth,pretrain,unlearn,eval,repro}``.

Every subcommand reads one INI config. Only ``--seed`` and ``--out`` can
override it. Exit codes: 0 ok, 1 acceptance threshold missed (repro only),
2 config or input error, 3 numeric failure, 4 artifact corruption.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as E
from .data import DataFormatError, SynthConfigError
from .model import ChecksumError, ConfigError
from .unlearn import MaskContractError, NumericalError

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CORRUPT = 0, 1, 2, 3, 4

log = logging.getLogger("unlearnlab")


def _config(args) -> E.ExperimentConfig:
    if args.config is None:
        if args.command != "repro":
            raise ConfigError(f"{args.command} needs --config")
        return E.acceptance_config(args.seed, args.out)
    return E.load_config(args.config, args.seed, args.out)


def cmd_synth(cfg: E.ExperimentConfig) -> int:
    for unit, manifest in E.run_synth(cfg).items():
        n = sum(1 for _ in manifest["files"])
        print(f"{cfg.unit_dir(unit) / 'bundle'}: {n} files")
    return EXIT_OK


def cmd_pretrain(cfg: E.ExperimentConfig) -> int:
    for unit, rec in E.run_pretrain(cfg).items():
        h = rec["history"]
        print(f"{unit}: loss {h[0]['loss']:.4f} -> {h[-1]['loss']:.4f}, checkpoint sha256 {rec['sha256'][:12]}")
    return EXIT_OK


def cmd_unlearn(cfg: E.ExperimentConfig) -> int:
    for (unit, mode), m in E.run_unlearn(cfg).items():
        print(f"{unit}/{mode}: {len(m.checkpoints)} checkpoints, objective "
              f"{m.losses[0][1]:.4f} -> {m.losses[-1][1]:.4f}")
    return EXIT_OK


def cmd_eval(cfg: E.ExperimentConfig) -> int:
    for (unit, mode), _ in E.run_eval(cfg).items():
        print((cfg.unit_dir(unit) / mode / "report.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_repro(cfg: E.ExperimentConfig) -> int:
    result = E.run_repro(cfg)
    print(result.summary(), end="")
    return EXIT_OK if result.passed else EXIT_THRESHOLD


COMMANDS = {"synth": cmd_synth, "pretrain": cmd_pretrain, "unlearn": cmd_unlearn,
            "eval": cmd_eval, "repro": cmd_repro}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unlearnlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"synth": "write synthetic bundles", "pretrain": "pretrain baseline checkpoints",
             "unlearn": "run masked (or full-sequence) unlearning",
             "eval": "score every checkpoint and write reports",
             "repro": "run every stage and check the acceptance thresholds"}
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="experiment INI file" + (" (default: shipped acceptance config)"
                                                                 if name == "repro" else ""))
        s.add_argument("--seed", type=int, help="override [experiment] seed")
        s.add_argument("--out", help="override [experiment] output_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](_config(args))
    except ChecksumError as e:
        print(f"error: artifact corrupted: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except NumericalError as e:
        print(f"error: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SynthConfigError, DataFormatError, MaskContractError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
