"""Command line entry point: ``nidsbench run|report|compare|hardware|synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CampaignConfig, ConfigError
from .hardware import HardwareError, capture_hardware, parse_assignments
from .store import StoreError


def _cmd_run(args) -> int:
    from .campaign import CampaignError, run_campaign

    cfg = CampaignConfig.from_file(args.config)
    overrides = {**cfg.hardware, **parse_assignments(args.set)}
    cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, output=args.out)
    cfg.hardware = overrides
    hardware = capture_hardware(overrides)
    target = args.resume or cfg.output
    try:
        store = run_campaign(cfg, target, resume=args.resume is not None, hardware=hardware)
    except CampaignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = json.loads((Path(target) / "manifest.json").read_text())
    print(f"{manifest['n_records']} records in {target}; content hash {manifest['content_hash']}")
    return 0


def _cmd_report(args) -> int:
    from .store import ResultStore
    from .tables import emit_table

    store = ResultStore.open(args.store)
    text = emit_table(store, args.table, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _cmd_compare(args) -> int:
    from ..stats import compare_methods
    from .store import ResultStore

    res = compare_methods(ResultStore.open(args.store), args.a, args.b, args.metric, args.alpha)
    print(f"t = {res.t_statistic:.4f}  df = {res.degrees_of_freedom:.2f}  p = {res.p_value:.3g}  "
          f"(n = {res.n_a}/{res.n_b}, means {res.mean_a:.4f} vs {res.mean_b:.4f})")
    print(f"verdict: {res.verdict}")
    return 0


def _cmd_hardware(args) -> int:
    h = capture_hardware(parse_assignments(args.set), check=not args.no_check)
    print(json.dumps(h.to_dict(), indent=2))
    return 0


def _cmd_synth(args) -> int:
    from ..synthetic import main as synth_main

    argv = [str(args.out_dir), "--rows", str(args.rows), "--classes", str(args.classes), "--seed", str(args.seed)]
    return synth_main(argv)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nidsbench", description="NetFlow ML detector benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run or resume a campaign")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--resume", metavar="STORE", help="resume the campaign stored in this directory")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--workers", type=int, help="override the worker pool size")
    run.add_argument("--out", help="store directory (default: the config's output)")
    run.add_argument("--set", action="append", metavar="FIELD=VALUE", help="hardware descriptor override")
    run.set_defaults(fn=_cmd_run)

    rep = sub.add_parser("report", help="emit a result table")
    rep.add_argument("--store", required=True, type=Path)
    rep.add_argument("--table", required=True,
                     choices=["baseline", "open_world", "multiclass", "train_runtime", "test_runtime"])
    rep.add_argument("--format", default="csv", choices=["csv", "md", "markdown"])
    rep.add_argument("--out", type=Path)
    rep.set_defaults(fn=_cmd_report)

    cmp_ = sub.add_parser("compare", help="Welch t-test between two record groups")
    cmp_.add_argument("--store", required=True, type=Path)
    cmp_.add_argument("--a", required=True, help="e.g. pipeline=BMD,algorithm=HGB,availability=Limited")
    cmp_.add_argument("--b", required=True)
    cmp_.add_argument("--metric", required=True, choices=["tpr", "fpr", "acc", "acc_mal", "tpr_adv"])
    cmp_.add_argument("--alpha", type=float, default=0.05)
    cmp_.set_defaults(fn=_cmd_compare)

    hw = sub.add_parser("hardware", help="print the hardware descriptor")
    hw.add_argument("--set", action="append", metavar="FIELD=VALUE")
    hw.add_argument("--no-check", action="store_true", help="skip the CPU model specificity check")
    hw.set_defaults(fn=_cmd_hardware)

    syn = sub.add_parser("synth", help="write a synthetic NetFlow CSV and spec")
    syn.add_argument("out_dir", type=Path)
    syn.add_argument("--rows", type=int, default=2000)
    syn.add_argument("--classes", type=int, default=4)
    syn.add_argument("--seed", type=int, default=0)
    syn.set_defaults(fn=_cmd_synth)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, HardwareError, StoreError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
