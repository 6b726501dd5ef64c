"""Command-line entry point: ``vesselmtl {train,eval,predict,synth,compare}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 divergence.
"""
import argparse
import logging
import sys

from .config import load_config, parse_overrides
from .errors import ConfigError, DataError, DivergenceError, FormatError, GeometryError, ParameterSetError
from .metrics import format_table
from .synth import synth_generate
from . import trainer

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("vesselmtl")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--threshold", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="vesselmtl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    _common(p)
    p.add_argument("--data", metavar="DIR")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--data", metavar="DIR")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])

    p = sub.add_parser("predict", help="write probability/mask/distance maps for images")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("inputs", help="a PNG file or a folder of PNGs")

    p = sub.add_parser("synth", help="generate a synthetic tubular dataset")
    _common(p)
    p.add_argument("-n", type=int, default=20)
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("compare", help="train all three modes over several seeds and tabulate")
    _common(p)
    p.add_argument("--data", metavar="DIR")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    return parser


def _config(args, base=None):
    pairs = parse_overrides(args.overrides)
    for key in ("seed", "out", "threshold", "data"):
        value = getattr(args, key, None)
        if value is not None:
            pairs[key] = str(value)
    return load_config(args.config, pairs, base=base)


def _run(args):
    if args.command == "synth":
        cfg = _config(args)
        out = args.out or cfg.out
        synth_generate(args.n, args.size, cfg.seed, out)
        print(f"wrote {args.n} samples to {out}")
        return

    if args.command == "train":
        cfg = _config(args)

        def progress(epoch, rows):
            last = rows[-1] if rows else {}
            log.info("epoch %d  l_bce=%.5f  l_mse=%s  alpha=%s", epoch, last.get("l_bce", float("nan")),
                     last.get("l_mse", "-"), last.get("alpha", "-"))

        res = trainer.train(cfg, progress=progress)
        print(f"checkpoints: {res.best_path}, {res.last_path}")
        print(f"log: {res.log_path}  split sha256: {res.split_digest}")
        return

    if args.command == "eval":
        cfg = _config(args)
        report = trainer.run_eval(args.checkpoint, cfg, args.split)
        print(report.table(args.split))
        return

    if args.command == "predict":
        cfg = _config(args)
        written = trainer.run_predict(args.checkpoint, args.inputs, args.out or cfg.out, cfg.threshold)
        print(f"predicted {len(written)} image(s) into {args.out or cfg.out}")
        return

    if args.command == "compare":
        cfg = _config(args, base=trainer.compare_base())
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None

        def progress(mode, seed, report, elapsed):
            log.info("%s seed %d: dice %.4f iou %.4f (%.0fs)", mode, seed, report.mean_dice, report.mean_iou, elapsed)

        summary = trainer.run_compare(cfg, seeds, progress=progress)
        print(format_table(summary))
        return


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        for row in exc.last_rows:
            print(f"  {row}", file=sys.stderr)
        return EXIT_DIVERGED
    except ParameterSetError as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, GeometryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
