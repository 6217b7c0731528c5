"""Command line entry point.

Exit codes: 0 success, 2 unusable config or arguments, 3 safety violation
(an unsafe state was visited under the assured loop, which is always a bug),
1 training aborted after numbers stopped being finite.
"""

import argparse
import os
import sys

from ..nn import TrainingDivergenceError
from ..plants.rover import SafetyViolationError
from ..runtime import SafetyViolation
from .commands import (cmd_compare_srl, cmd_eval, cmd_extend_training,
                       cmd_run_nsa, cmd_train)
from .config import ConfigError, load_config

_COMMANDS = {
    "train": (cmd_train, "train a controller with the configured strategy"),
    "run-nsa": (cmd_run_nsa, "run assured trajectories, optionally retraining"),
    "eval": (cmd_eval, "evaluate checkpoints on a shared set of initial states"),
    "compare-srl": (cmd_compare_srl, "train and evaluate all three strategies"),
    "extend-training": (cmd_extend_training,
                        "continue training a checkpoint for a fixed update budget"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="simplexrl",
        description="Safe-learning experiments: a neural controller guarded "
                    "by a verified baseline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment INI file")
        p.add_argument("--seed", required=True, type=int, help="master seed")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command][0](cfg, args.seed, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SafetyViolation, SafetyViolationError) as e:
        print(f"safety violation: {e}", file=sys.stderr)
        return 3
    except TrainingDivergenceError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
