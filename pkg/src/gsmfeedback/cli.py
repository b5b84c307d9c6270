"""
Command-line harness.

    gsmfeedback gen-data --config cfg.json --count 2000 --out test.bin
    gsmfeedback train    --config cfg.json --out-dir runs/b30
    gsmfeedback sweep    --checkpoint-set runs --axis bits --values 6,20,40 --out bits.csv
    gsmfeedback baseline --config cfg.json --out baseline.csv

Exit codes: 0 success, 1 usage/configuration/I-O problems, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import trainer
from .baseline import run_baseline
from .channel import generate_dataset, read_dataset, write_dataset
from .config import RunConfig, load_config
from .errors import ConfigurationError, NumericalDomainError

SWEEP_COLUMNS = ("axis_value", "mi_amp_phase", "mi_spatial", "rate", "mc_stderr", "scheme")

log = logging.getLogger("gsmfeedback")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config(path) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values list {text!r}") from exc


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def _test_set(cfg: RunConfig, path=None):
    if path is not None:
        return read_dataset(path)
    return generate_dataset(cfg.channel, cfg.eval.test_count)


def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(channel={"rng_seed": args.seed})
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    data = generate_dataset(cfg.channel, args.count)
    write_dataset(args.out, data)
    Path(str(args.out) + ".json").write_text(
        json.dumps({"count": args.count, "config": cfg.to_dict()}, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args.config)
    if args.threads:
        cfg = cfg.replace(eval={"threads": args.threads})
    test = _test_set(cfg, args.test_data)
    trainer.train(cfg, out_dir=args.out_dir, resume=args.resume, test_channels=test)
    return 0


def _runs(root: Path) -> list[Path]:
    found = [p.parent for p in sorted(root.glob("*/model.bin"))]
    if (root / "model.bin").exists():
        found.insert(0, root)
    return found


def cmd_sweep(args) -> int:
    root = Path(args.checkpoint_set)
    values = _values(args.values)
    runs = [(load_config(r / "config.json"), r) for r in _runs(root)]
    if not runs:
        print(f"no trained checkpoints (*/model.bin) under {root}", file=sys.stderr)
        return 1
    rows = []
    threads = args.threads or None
    if args.axis == "bits":
        by_bits = {cfg.train.feedback_bits: (cfg, r) for cfg, r in reversed(runs)}
        missing = [v for v in values if int(v) not in by_bits]
        if missing:
            print("missing checkpoints for B = " + ", ".join(str(_num(v)) for v in missing), file=sys.stderr)
            return 1
        for v in values:
            cfg, r = by_bits[int(v)]
            model = trainer.load_model(cfg, r / "model.bin")
            ev = trainer.evaluate(model, _test_set(cfg, args.test_data), cfg.train.snr_db,
                                  cfg.eval.mc_samples, seed=cfg.eval.seed, threads=threads)
            rows.append(_row(v, ev, "learned"))
            if args.baseline:
                b = run_baseline(cfg, _test_set(cfg, args.test_data), cfg.train.snr_db, [int(v)],
                                 threads=threads or 1, include_reference=False)
                rows.append(_row(v, b[-1], "OMP+SVD-GSM"))
        snapshot = runs[0][0]
    else:
        if args.bits is not None:
            runs = [(c, r) for c, r in runs if c.train.feedback_bits == args.bits]
            if not runs:
                print(f"missing checkpoint for B = {args.bits}", file=sys.stderr)
                return 1
        cfg, r = runs[0]
        model = trainer.load_model(cfg, r / "model.bin")
        test = _test_set(cfg, args.test_data)
        for v in values:
            ev = trainer.evaluate(model, test, v, cfg.eval.mc_samples, seed=cfg.eval.seed, threads=threads)
            rows.append(_row(v, ev, f"learned/B={cfg.train.feedback_bits}"))
            if args.baseline:
                b = run_baseline(cfg, test, v, [], threads=threads or 1, include_reference=False)
                rows.append(_row(v, b[0], "OMP+SVD-GSM/inf"))
        snapshot = cfg
    trainer.write_csv(args.out, SWEEP_COLUMNS, rows, snapshot.to_json())
    return 0


def _row(axis_value, ev, scheme):
    return {"axis_value": _num(axis_value), "mi_amp_phase": ev["mi_amp_phase"], "mi_spatial": ev["mi_spatial"],
            "rate": ev["rate"], "mc_stderr": ev["mc_stderr"], "scheme": scheme}


def cmd_baseline(args) -> int:
    cfg = _config(args.config)
    bits = cfg.baseline.feedback_bits if args.bits is None else [int(v) for v in _values(args.bits)]
    snr = cfg.train.snr_db if args.snr is None else args.snr
    res = run_baseline(cfg, _test_set(cfg, args.test_data), snr, bits, threads=args.threads or 1)
    rows = []
    for r in res:
        axis = "inf" if r["feedback_bits"] is None else r["feedback_bits"]
        row = _row(0, r, r["scheme"])
        row["axis_value"] = axis if isinstance(axis, str) else _num(axis)
        rows.append(row)
    trainer.write_csv(args.out, SWEEP_COLUMNS, rows, cfg.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsmfeedback", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a channel dataset file")
    g.add_argument("--config")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, help="override channel.rng_seed")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the feedback/beamforming network")
    t.add_argument("--config")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--resume", help="checkpoint.bin to continue from")
    t.add_argument("--test-data", help="dataset file used as the test set")
    t.add_argument("--threads", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="evaluate trained runs over feedback bits or SNR")
    s.add_argument("--checkpoint-set", required=True)
    s.add_argument("--axis", choices=("bits", "snr"), required=True)
    s.add_argument("--values", required=True, help="comma separated list (write --values=-5,0 when it starts with a minus)")
    s.add_argument("--out", required=True)
    s.add_argument("--bits", type=int, help="run to use on the snr axis")
    s.add_argument("--baseline", action="store_true", help="add OMP+SVD-GSM rows")
    s.add_argument("--test-data")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("baseline", help="OMP+SVD-GSM comparison rows")
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.add_argument("--bits", help="finite feedback budgets, comma separated")
    b.add_argument("--snr", type=float)
    b.add_argument("--test-data")
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalDomainError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, UsageError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
