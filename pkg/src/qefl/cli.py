"""Command-line entry point: ``qefl {train,reproduce-table1,gradcheck,privacy-report,eval}``.

Exit status: 0 on success, 1 when a check fails, 2 on bad configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import _backend, gradcheck, modelio
from .config import ConfigError, RunConfig, build_run, load
from .metrics import evaluate, export_csv, progress_line
from .privacy import epsilon_for, privacy_csv
from .reproduce import mutation_table, table_csv, train

log = logging.getLogger("qefl")


def _config(args) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg.validate()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_round(rec):
    print(progress_line(rec.metrics), flush=True)


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(args)
    run = train(cfg, on_round=_print_round, parallel=args.parallel)
    metrics = [r.metrics for r in run.history]
    (out / "metrics.csv").write_text(export_csv(metrics))
    (out / "privacy.csv").write_text(privacy_csv(run.history[-1].outcome.privacy))
    modelio.save(out / "model.qefl", run.arch, run.theta)
    (out / "config.txt").write_text(cfg.dumps())
    last = metrics[-1]
    print(f"final (global model, after aggregation): accuracy={last.accuracy:.6f} "
          f"macro_f1={last.macro_f1:.6f} loss={last.mean_loss:.6f}")
    print(f"wrote {out / 'metrics.csv'}, {out / 'model.qefl'}, {out / 'config.txt'}")
    return 0


def cmd_reproduce_table1(args) -> int:
    cfg = _config(args)
    out = _out(args)
    run = train(cfg, parallel=args.parallel)
    rows = mutation_table(run, cfg)
    print(f"{'Mutation ID':<12} Accuracy (selected variant, before noise)")
    for r in rows:
        print(f"{r.mutation_id:<12} {r.accuracy:.6f}")
    (out / "table1.csv").write_text(table_csv(rows))
    (out / "config.txt").write_text(cfg.dumps())
    print(f"wrote {out / 'table1.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    reports = gradcheck.run(seed, draws=args.draws)
    worst = max(reports, key=lambda r: r.rel_error)
    print(f"draws={len(reports)} backend={_backend.NAME} max_rel_error={worst.rel_error:.3e} "
          f"threshold={gradcheck.THRESHOLD:.0e}")
    print(f"worst draw dims={worst.dims}")
    for b in worst.blocks:
        print(f"  {b.name:<6} rel_error={b.rel_error:.3e} worst_coord={b.worst_index} abs_error={b.worst_abs_error:.3e}")
    if worst.rel_error >= gradcheck.THRESHOLD:
        print("FAIL: analytic gradient disagrees with finite differences")
        return 1
    print("PASS")
    return 0


def cmd_privacy_report(args) -> int:
    cfg = _config(args)
    pc = cfg.privacy_config()
    if pc.effective_sigma == 0 and not args.allow_unbounded:
        print("refusing: privacy noise is zero, so epsilon is unbounded "
              "(pass --allow-unbounded to report it anyway)", file=sys.stderr)
        return 2
    rows = []
    if pc.clip_norm is not None:
        source = "clip bound (worst case)"
        eps = epsilon_for(pc.clip_norm, pc.sigma_p) if pc.effective_sigma > 0 else float("inf")
        total = 0.0
        for r in range(1, cfg.rounds + 1):
            total += eps
            rows.append((r, pc.clip_norm, eps, total))
    else:
        source = "empirical max update norm (not a guarantee)"
        run = train(cfg, parallel=args.parallel)
        rows = list(run.history[-1].outcome.privacy.history)
    print(f"sensitivity source: {source}")
    print(f"sigma_p={pc.effective_sigma!r} delta={pc.delta!r}")
    print("round  sensitivity  epsilon_round  epsilon_total")
    for r, sens, eps, total in rows:
        print(f"{r:<6} {sens:<12.6g} {eps:<14.6g} {total:.6g}")
    if rows:
        print(f"epsilon_total={rows[-1][3]!r} over {len(rows)} rounds (linear composition)")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    arch, params = modelio.load(args.model)
    _, _, _, test = build_run(cfg)
    if test.input_dim != arch.input_dim or test.n_classes != arch.output_dim:
        print(f"model dims {arch.dims} do not fit dataset ({test.input_dim} -> {test.n_classes})", file=sys.stderr)
        return 2
    ev = evaluate(arch, params, test)
    print(f"accuracy={ev.accuracy!r} macro_f1={ev.macro_f1!r} loss={ev.mean_loss!r}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "reproduce-table1": cmd_reproduce_table1,
    "gradcheck": cmd_gradcheck,
    "privacy-report": cmd_privacy_report,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--parallel", action="store_true", help="run clients on a thread pool")

    p = argparse.ArgumentParser(prog="qefl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="run federated training")
    sub.add_parser("reproduce-table1", parents=[common], help="accuracies of K mutated variants")
    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    g.add_argument("--draws", type=int, default=100)
    pr = sub.add_parser("privacy-report", parents=[common], help="per-round epsilon summary")
    pr.add_argument("--allow-unbounded", action="store_true", help="report even when sigma_p is 0")
    e = sub.add_parser("eval", parents=[common], help="evaluate a saved model")
    e.add_argument("--model", required=True)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
