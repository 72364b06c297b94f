"""``xdecode`` command-line entry point.

Subcommands: schedule, gen-testset, train, eval, run, grid.
Exit codes: 0 ok, 2 config error, 3 data error, 4 training abort,
5 evaluation error.
"""

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .datapipe import DATASET_KINDS, EXTREME_LEVELS, DatasetSpec, generate_extreme_testset
from .errors import ConfigError, XDecodeError
from .metrics import evaluate
from .schedule import KINDS, ScheduleConfig, schedule_table, write_schedule_csv
from .trainer import train

log = logging.getLogger("xdecode")

CURRICULUM_KINDS = ("step5", "step10", "linear", "sigmoid", "exponential")
COMPARISON_HEADER = ["experiment", "schedule", "blur_level", "ssim", "psnr", "n_images"]


def emit_schedule_plot(cfg, epochs, out):
    """Write ``<out>.png`` (cap vs epoch) and ``<out>.csv`` (epoch,blur_cap)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table = schedule_table(cfg, epochs)
    csv_path = write_schedule_csv(table, out.with_suffix(".csv"))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([t for t, _ in table], [c for _, c in table], color="tab:blue", label=cfg.kind)
    if cfg.kind != "fixed":
        ax.axhline(cfg.b_max, color="tab:red", linestyle="--", label="fixed")
    ax.set_xlabel("epoch")
    ax.set_ylabel("blur level cap")
    ax.set_ylim(0, cfg.b_max + 2)
    ax.legend(loc="lower right")
    fig.tight_layout()
    png_path = out.with_suffix(".png")
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    return png_path, csv_path


def run_experiment(spec, resume=None):
    """Train, then evaluate on every manifest; artifacts go to runs/<name>/."""
    run_dir = spec.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.toml").write_text(config_mod.serialize(spec), encoding="utf-8")
    result = train(spec.train, spec.train_corpus, run_dir, resume=resume)
    reports = {}
    for tag, manifest in zip(config_mod.report_tags(spec.test_manifests), spec.test_manifests):
        out = run_dir / f"report_{tag}.csv"
        reports[tag] = evaluate(result.checkpoint, manifest, out=out, checkpoint_id=f"{spec.name}:last")
        log.info("%s", reports[tag].format_table())
    return {
        "run_dir": run_dir,
        "checkpoint": result.checkpoint,
        "train_log": result.log,
        "reports": {tag: run_dir / f"report_{tag}.csv" for tag in reports},
        "eval": reports,
    }


def with_schedule_kind(spec, kind):
    schedule = dataclasses.replace(spec.train.schedule, kind=kind)
    train_cfg = dataclasses.replace(spec.train, schedule=schedule)
    return dataclasses.replace(spec, name=f"{spec.name}-{kind}", train=train_cfg)


def write_comparison(results, path):
    """Comparison CSV: one block of rows per experiment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for spec, artifacts in results:
            for report in artifacts["eval"].values():
                for level, s, p, n in report.rows:
                    writer.writerow([spec.name, spec.train.schedule.kind, level, repr(s),
                                     "inf" if p == float("inf") else repr(p), n])
    return path


def run_grid(specs, kinds=None, out=None):
    if kinds:
        specs = [with_schedule_kind(s, k) for s in specs for k in kinds]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"experiment names must be unique within a grid: {names}")
    results = []
    for spec in specs:
        results.append((spec, run_experiment(spec)))
    if out is None:
        out = Path(specs[0].runs_dir) / "comparison.csv"
    write_comparison(results, out)
    return results, Path(out)


def _levels(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc


def _cmd_schedule(args):
    cfg = ScheduleConfig(
        kind=args.kind, b_min=args.b_min, b_max=args.b_max, epoch_base=args.epoch_base
    )
    if args.plot:
        png, csv_path = emit_schedule_plot(cfg, args.epochs, args.plot)
        print(f"wrote {png} and {csv_path}")
    if args.out:
        write_schedule_csv(schedule_table(cfg, args.epochs), args.out)
        print(f"wrote {args.out}")
    if not args.out and not args.plot:
        print("epoch,blur_cap")
        for t, cap in schedule_table(cfg, args.epochs):
            print(f"{t},{cap}")


def _cmd_gen_testset(args):
    spec = DatasetSpec(root=args.root, kind=args.kind, split="test", image_size=args.image_size)
    manifest = generate_extreme_testset(spec, args.out, args.levels, args.seed)
    print(f"wrote {manifest}")


def _cmd_train(args):
    spec = config_mod.parse_config(args.config)
    out = Path(args.out) if args.out else spec.run_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(config_mod.serialize(spec), encoding="utf-8")
    result = train(spec.train, spec.train_corpus, out, resume=args.resume)
    print(f"wrote {result.checkpoint} and {result.log}")


def _cmd_eval(args):
    report = evaluate(args.checkpoint, args.manifest, out=args.out)
    print(report.format_table(), end="")


def _cmd_run(args):
    spec = config_mod.parse_config(args.config)
    artifacts = run_experiment(spec, resume=args.resume)
    print(f"artifacts in {artifacts['run_dir']}")


def _cmd_grid(args):
    specs = [config_mod.parse_config(p) for p in args.configs]
    kinds = args.kinds.split(",") if args.kinds else None
    _, out = run_grid(specs, kinds, args.out)
    print(f"wrote {out}")


def build_parser():
    p = argparse.ArgumentParser(prog="xdecode", description="Curriculum training for extreme deblurring")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("schedule", help="tabulate or plot a blur-level progression")
    s.add_argument("--kind", choices=KINDS, default="linear")
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--b-min", type=int, default=3)
    s.add_argument("--b-max", type=int, default=29)
    s.add_argument("--epoch-base", choices=("zero", "one"), default="zero")
    s.add_argument("--out", help="CSV path")
    s.add_argument("--plot", help="write <plot>.png and <plot>.csv")
    s.set_defaults(func=_cmd_schedule)

    g = sub.add_parser("gen-testset", help="generate an offline Extreme-* test set")
    g.add_argument("--root", required=True)
    g.add_argument("--kind", choices=DATASET_KINDS, default="flat_folder")
    g.add_argument("--levels", type=_levels, default=list(EXTREME_LEVELS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=int, default=256)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_testset)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output folder (default runs/<name>)")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a test manifest")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", default="report.csv")
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("run", help="train and evaluate one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--resume")
    r.set_defaults(func=_cmd_run)

    gr = sub.add_parser("grid", help="run several experiments and compare them")
    gr.add_argument("configs", nargs="+")
    gr.add_argument("--kinds", help=f"comma list, e.g. {','.join(CURRICULUM_KINDS)}")
    gr.add_argument("--out", help="comparison CSV path")
    gr.set_defaults(func=_cmd_grid)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except XDecodeError as exc:
        print(f"xdecode: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"xdecode: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
