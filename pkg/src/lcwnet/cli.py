"""Command line entry point: ``lcwnet <subcommand>`` or ``python -m lcwnet``.

Exit codes: 0 success / all checks pass, 1 usage or configuration error,
2 verification failure, 3 runtime failure (I/O, missing data, divergence).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import diagnostics as diag
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .data import DatasetError, to_network_input
from .gradcheck import gradcheck_suite
from .linalg import Rng
from .train import STREAM_SHUFFLE, TrainingDiverged, load_data, prepare_network, train

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _print_verdicts(verdicts, json_path=None) -> int:
    width = max(len(v.name) for v in verdicts)
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name:<{width}}  observed={_short(v.observed)}"
              f"  expected={_short(v.expected)}  tol={v.tolerance}")
    if json_path:
        Path(json_path).parent.mkdir(parents=True, exist_ok=True)
        Path(json_path).write_text(diag.verdicts_json(verdicts))
    ok = all(v.passed for v in verdicts)
    print(f"{sum(v.passed for v in verdicts)}/{len(verdicts)} checks passed")
    return EXIT_OK if ok else EXIT_VERIFY


def _short(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_short(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{k}: {_short(v)}" for k, v in x.items()) + "}"
    if hasattr(x, "tolist"):
        return _short(x.tolist())
    return str(x)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.data_root:
        cfg.data.root = args.data_root
    result = train(cfg)
    last = result.metrics.rows[-1] if result.metrics.rows else None
    if last:
        print(f"epoch {last.epoch}: train loss {last.train_loss:.4f} acc {last.train_accuracy:.4f} "
              f"test loss {last.test_loss:.4f} acc {last.test_accuracy:.4f}")
    if result.checkpoint:
        print(f"wrote {result.checkpoint.parent}")
    return EXIT_OK


def cmd_verify(args) -> int:
    verdicts = diag.verify_all(args.seed, args.samples)
    return _print_verdicts(verdicts, args.json)


def cmd_gradcheck(args) -> int:
    return _print_verdicts(gradcheck_suite(range(args.seeds)), args.json)


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    if args.data_root:
        cfg.data.root = args.data_root
    train_data, _ = load_data(cfg)
    net, order = prepare_network(cfg, train_data, Rng(cfg.seed, STREAM_SHUFFLE))
    probe = train_data.subset(order[:args.probe_size])
    x = to_network_input(probe.inputs)
    out = Path(args.out)
    profile = diag.layer_profile(net, x, probe.labels if not args.random_labels else None,
                                 Rng(cfg.seed, 20))
    diag.write_csv(out / "layer_profile.csv", profile.rows())
    n_hidden = len(net.weighted_layers()) - 1
    layers = [l for l in args.layers if 1 <= l <= n_hidden] or [1]
    first = net.weighted_layers()[0]
    neurons = min(args.neurons, getattr(first, "out_features", args.neurons))
    rows = diag.activation_quantiles(net, x, layers, neurons)
    diag.write_csv(out / "activation_quantiles.csv", rows)
    if len(profile) > 1:
        last = len(profile) - 1
        print(f"V(grad z^1) / V(grad z^{last}) = {profile.gradient_variance_ratio(1, last):.4g}")
    print(f"wrote {out / 'layer_profile.csv'} and {out / 'activation_quantiles.csv'}")
    return EXIT_OK


def cmd_shift_demo(args) -> int:
    demo = diag.shift_demo(Rng(args.seed), args.size)
    out = Path(args.out)
    diag.write_csv(out / "shift_grid.csv", demo.grid_rows())
    diag.write_csv(out / "shift_means.csv", demo.mean_rows())
    hits = int(demo.report.within().sum())
    print(f"standard rows within 4 SE of predicted mean: {hits}/{args.size}")
    print(f"row-mean spread: standard {demo.report.empirical.std():.4f}, "
          f"lcw {demo.lcw_report.empirical.std():.4f}")
    print(f"wrote {out / 'shift_grid.csv'} and {out / 'shift_means.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lcwnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("config")
    t.add_argument("--out", help="output directory (overrides output_dir)")
    t.add_argument("--data-root", help="CIFAR directory (overrides data.root)")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify-props", help="run the shift and variance checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=1_000_000)
    v.add_argument("--json", help="write verdicts to this JSON file")
    v.set_defaults(func=cmd_verify)

    pr = sub.add_parser("profile", help="per-layer preactivation/gradient statistics after init")
    pr.add_argument("config")
    pr.add_argument("--out", default="profile")
    pr.add_argument("--data-root")
    pr.add_argument("--probe-size", type=int, default=100)
    pr.add_argument("--layers", type=lambda s: [int(x) for x in s.split(",")], default=[1, 5, 9])
    pr.add_argument("--neurons", type=int, default=20)
    pr.add_argument("--random-labels", action="store_true", help="ignore the dataset labels")
    pr.set_defaults(func=cmd_profile)

    s = sub.add_parser("shift-demo", help="random W times positive A: row-mean stripes")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=100)
    s.add_argument("--out", default="shift_demo")
    s.set_defaults(func=cmd_shift_demo)

    g = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    g.add_argument("--seeds", type=int, default=10)
    g.add_argument("--json")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, OSError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
