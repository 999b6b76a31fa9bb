"""Command-line surface: run orchestration and exports.

Subcommands: synth | priors | evolve | predict | evaluate |
export-front | inspect.  Every command is deterministic given
(config, seed).  A config file (INI sections) supplies defaults;
flags override.  GPFUSE_WORKERS overrides the worker count.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from collections import defaultdict

import numpy as np

from . import datamodel as dm
from . import evolve as ev
from .errors import GpfuseError
from .fitness import predict as clf_predict
from .fitness import ridge_fit, stack_dataset
from .metrics import METRIC_COLUMNS, metric_report
from .program import Program, eval_tree, from_text, to_text


def _load_config(path) -> dict:
    parser = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise GpfuseError(f"config file not found: {path}")
        parser.read(path)
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            out[f"{section}.{key}"] = value
    return out


def _evolve_config(cfg: dict, args) -> ev.EvolveConfig:
    def pick(flag, key, cast, default):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        if key in cfg:
            return cast(cfg[key])
        return default

    return ev.EvolveConfig(
        population=pick("population", "evolve.population", int, 200),
        generations=pick("generations", "evolve.generations", int, 50),
        crossover_rate=pick("crossover_rate", "evolve.crossover_rate", float, 0.8),
        mutation_rate=pick("mutation_rate", "evolve.mutation_rate", float, 0.2),
        elitism_rate=pick("elitism_rate", "evolve.elitism_rate", float, 0.05),
        tournament_size=pick("tournament_size", "evolve.tournament_size", int, 5),
        ridge_lambda=pick("ridge_lambda", "evolve.ridge_lambda", float, 1e-3),
        seed=pick("seed", "run.seed", int, 100),
    )


def _workers(args) -> int:
    env = os.environ.get("GPFUSE_WORKERS")
    if env:
        return int(env)
    return getattr(args, "workers", None) or 1


def _read_program(spec: str) -> Program:
    """Accept an s-expression directly or a path to a file holding one."""
    text = spec
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            text = fh.read().strip()
        # archive/prior line format: q_a<TAB>q_c<TAB>s-expression
        first = text.splitlines()[0]
        if "\t" in first:
            first = first.rsplit("\t", 1)[-1]
        text = first
    return from_text(text)


def _read_priors(path) -> list[Program]:
    programs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            text = line.rsplit("\t", 1)[-1]
            programs.append(from_text(text))
    return programs


def _write_metrics_report(report: dict, out_dir, name: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        writer.writerow([f"{report[c]:.6f}" for c in METRIC_COLUMNS])
    print(_format_table([("", report)]))


def _format_table(rows: list[tuple[str, dict]]) -> str:
    name_w = max(6, max(len(n) for n, _ in rows))
    header = " ".join([" " * name_w] + [f"{c:>10}" for c in METRIC_COLUMNS])
    lines = [header]
    for name, report in rows:
        cells = " ".join(f"{report[c]:>10.4f}" for c in METRIC_COLUMNS)
        lines.append(f"{name:<{name_w}} {cells}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)

    def get(key, cast, default):
        return cast(cfg[key]) if key in cfg else default

    synth = dm.SynthConfig(
        n_proteins=args.n_proteins or get("synth.n_proteins", int, 50),
        length=args.length or get("synth.length", int, 50),
        dim=args.dim or get("synth.dim", int, 24),
        noise_scale=args.noise if args.noise is not None else get("synth.noise_scale", float, 1.0),
    )
    if synth.length > dm.DEFAULT_TARGET_LENGTH:
        raise GpfuseError(
            f"synthetic length {synth.length} exceeds the 700-residue cap"
        )
    seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    for i, split in enumerate(("train", "validation", "test")):
        scfg = dm.SynthConfig(**{**synth.__dict__, "split": split})
        if split == "validation":
            scfg.n_proteins = args.n_validation or scfg.n_proteins // 2
        elif split == "test":
            scfg.n_proteins = args.n_validation or scfg.n_proteins // 2
        ds = dm.generate_synthetic(scfg, seed + i)
        path = os.path.join(args.out, f"{split}.mmfb")
        dm.save_feature_bank(ds, path)
        print(
            f"{split}: {len(ds.proteins)} proteins, L={ds.padded_length}, "
            f"D={ds.banks[ds.proteins[0].id][dm.ALL_FEATURE_IDS[0]].cols} -> {path}"
        )
    return 0


def _load_splits(args):
    train = stack_dataset(dm.load_feature_bank(args.train, split="train"))
    validation = stack_dataset(
        dm.load_feature_bank(args.validation, split="validation")
    )
    return train, validation


def cmd_priors(args) -> int:
    cfg = _load_config(args.config)
    ecfg = _evolve_config(cfg, args)
    train, validation = _load_splits(args)
    rng = np.random.default_rng(ecfg.seed)
    pool = ev.run_sogp(
        ecfg, train, validation, rng=rng, workers=_workers(args),
        runs=args.runs, picks_per_run=args.picks,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        for ind in pool:
            fh.write(
                f"{ind.fit.q_a:.12g}\t{ind.fit.q_c:.12g}\t{to_text(ind.program)}\n"
            )
    print(f"wrote {len(pool)} prior programs to {args.out}")
    return 0


def cmd_evolve(args) -> int:
    cfg = _load_config(args.config)
    ecfg = _evolve_config(cfg, args)
    train, validation = _load_splits(args)
    priors: list[Program] = []
    if args.priors and not args.no_kt:
        priors = _read_priors(args.priors)
    os.makedirs(args.out, exist_ok=True)
    archive, stats = ev.run_mogp(
        ecfg,
        train,
        validation,
        priors=priors,
        checkpoint_dir=os.path.join(args.out, "checkpoints"),
        resume=args.resume,
        workers=_workers(args),
    )
    with open(os.path.join(args.out, "archive.txt"), "w", encoding="utf-8") as fh:
        fh.write(archive.export_lines())
    with open(
        os.path.join(args.out, "archive_metrics.csv"), "w", newline="",
        encoding="utf-8",
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(("q_a", "q_c", *METRIC_COLUMNS, "program"))
        for ind, report in zip(archive.entries, archive.metrics):
            writer.writerow(
                [f"{ind.fit.q_a:.6f}", f"{ind.fit.q_c:.6f}"]
                + [f"{report[c]:.6f}" for c in METRIC_COLUMNS]
                + [to_text(ind.program)]
            )
    with open(os.path.join(args.out, "stats.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ev.GenerationStats.FIELDS)
        for row in stats:
            writer.writerow([getattr(row, f) for f in ev.GenerationStats.FIELDS])
    if args.baselines:
        reports = ev.fixed_fusion_baselines(train, validation, ecfg.ridge_lambda)
        print(_format_table(sorted(reports.items())))
    best = max(ind.fit.q_a for ind in archive.entries)
    print(
        f"archive: {len(archive.entries)} non-dominated programs, "
        f"best Q8 {best:.4f} -> {args.out}"
    )
    return 0


def _predict_dataset(program, train_split, target_ds):
    """Fit on the train split and predict every protein of the target."""
    target = stack_dataset(target_ds)
    fused_train = eval_tree(program, train_split.bank)
    x = fused_train[train_split.mask]
    y = np.zeros((len(x), dm.N_STATES))
    y[np.arange(len(x)), train_split.labels[train_split.mask].astype(np.int64)] = 1.0
    clf = ridge_fit(x, y)
    fused = eval_tree(program, target.bank)
    preds = [clf_predict(clf, fused[i]) for i in range(fused.shape[0])]
    return preds, target


def _merge_windowed(records, preds):
    """Group window records (id `base#start`) and reassemble predictions."""
    plain = []
    grouped = defaultdict(list)
    for rec, pred in zip(records, preds):
        if "#" in rec.id:
            base, _, start = rec.id.rpartition("#")
            grouped[base].append((int(start), pred[rec.mask]))
        else:
            plain.append((rec.id, pred[rec.mask]))
    merged = []
    for base, windows in grouped.items():
        width = len(windows[0][1])
        true_length = max(s for s, _ in windows) + width
        merged.append((base, dm.merge_window_predictions(windows, true_length)))
    return plain + merged


def cmd_predict(args) -> int:
    program = _read_program(args.program)
    train = stack_dataset(dm.load_feature_bank(args.train, split="train"))
    target_ds = dm.load_feature_bank(args.bank, split="test")
    preds, target = _predict_dataset(program, train, target_ds)

    out_path = args.out or "predictions.tsv"
    merged = _merge_windowed(target_ds.proteins, preds)
    with open(out_path, "w", encoding="utf-8") as fh:
        for pid, pred in merged:
            chars = "".join(dm.LABEL_CHARS[c] for c in pred)
            fh.write(f"{pid}\t{chars}\n")
    print(f"wrote predictions for {len(merged)} proteins to {out_path}")

    report = metric_report(
        preds, list(target.labels), list(target.mask)
    )
    _write_metrics_report(report, os.path.dirname(out_path) or ".", "metrics")
    return 0


def cmd_evaluate(args) -> int:
    target = dm.load_feature_bank(args.bank, split="test")
    pred_lines = {}
    with open(args.pred, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pid, _, chars = line.partition("\t")
            pred_lines[pid] = chars
    preds, truths, masks = [], [], []
    for rec in target.proteins:
        if rec.id not in pred_lines:
            raise GpfuseError(f"no prediction for protein {rec.id}")
        chars = pred_lines[rec.id]
        real = chars.replace(dm.PAD_CHAR, "")
        if len(real) != rec.length:
            raise GpfuseError(
                f"protein {rec.id}: prediction length {len(real)} != {rec.length}"
            )
        preds.append(np.array([dm.char_to_label(c) for c in real]))
        truths.append(rec.labels[rec.mask])
        masks.append(np.ones(rec.length, bool))
    report = metric_report(preds, truths, masks)
    _write_metrics_report(report, args.out or ".", "metrics")
    return 0


def select_anchors(points: list[tuple[float, float]]) -> tuple[int, int, int]:
    """Indices of (low-complexity, knee, high-accuracy) archive anchors.

    The knee maximizes perpendicular distance from the chord between
    the two extreme points on min-max normalized objectives.
    """
    qa = np.array([p[0] for p in points])
    qc = np.array([p[1] for p in points])
    low = int(np.lexsort((-qa, qc))[0])  # min q_c, ties to max q_a
    high = int(np.lexsort((qc, -qa))[0])  # max q_a, ties to min q_c
    span_a = qa.max() - qa.min() or 1.0
    span_c = qc.max() - qc.min() or 1.0
    na, nc = (qa - qa.min()) / span_a, (qc - qc.min()) / span_c
    ax, ay = na[low], nc[low]
    bx, by = na[high], nc[high]
    chord = np.hypot(bx - ax, by - ay)
    if chord == 0:
        return low, low, high
    dist = np.abs((by - ay) * na - (bx - ax) * nc + bx * ay - by * ax) / chord
    knee = int(np.argmax(dist))
    return low, knee, high


def cmd_export_front(args) -> int:
    entries = []
    with open(args.archive, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            q_a, q_c, text = line.split("\t")
            entries.append((float(q_a), float(q_c), text))
    if not entries:
        raise GpfuseError(f"empty archive: {args.archive}")
    low, knee, high = select_anchors([(e[0], e[1]) for e in entries])
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "anchors.tsv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("anchor\tq_a\tq_c\tprogram\n")
        for name, idx in (
            ("low-complexity", low),
            ("knee", knee),
            ("high-accuracy", high),
        ):
            q_a, q_c, text = entries[idx]
            fh.write(f"{name}\t{q_a:.12g}\t{q_c:.12g}\t{text}\n")
            print(f"{name}: q_a={q_a:.4f} q_c={q_c:.4f} {text}")
    if args.dump_features:
        if not args.bank:
            raise GpfuseError("--dump-features requires --bank")
        program = _read_program(args.dump_features)
        dataset = dm.load_feature_bank(args.bank)
        csv_path = os.path.join(args.out, "fused_features.csv")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for rec in dataset.proteins:
                fused = eval_tree(program, dataset.banks[rec.id])
                for pos in np.flatnonzero(rec.mask):
                    writer.writerow(
                        [rec.id, pos, int(rec.labels[pos])]
                        + [f"{v:.8g}" for v in fused[pos]]
                    )
        print(f"fused features -> {csv_path}")
    return 0


def cmd_inspect(args) -> int:
    program = _read_program(args.program)
    dim = args.dim

    def shape_of(node):
        if node.is_terminal:
            return dim
        widths = [shape_of(c) for c in node.children]
        tag = node.op
        if tag in ("Root1", "Root2", "Root3"):
            return sum(widths)
        if tag in ("W_Add", "W_Sub", "Mul", "GRT"):
            return max(widths)
        if tag == "FFT":
            return widths[0] // 2 + 1
        if tag == "MaxP":
            return (widths[0] + 1) // 2
        return widths[0]

    def render(node, indent=0):
        pad = "  " * indent
        if node.is_terminal:
            print(f"{pad}{node.terminal.name}  [L x {dim}]")
            return
        ercs = " ".join(str(e.value) for e in node.ercs)
        suffix = f" ({ercs})" if ercs else ""
        print(f"{pad}{node.op}{suffix}  [L x {shape_of(node)}]")
        for child in node.children:
            render(child, indent + 1)

    render(program.root)
    terms = program.size
    print(f"depth={program.depth} nodes={terms}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpfuse",
        description="Multi-objective GP engine for per-residue feature fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic feature banks")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-proteins", type=int, dest="n_proteins")
    p.add_argument("--n-validation", type=int, dest="n_validation")
    p.add_argument("--length", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_synth)

    def evolve_flags(p):
        p.add_argument("--config")
        p.add_argument("--train", required=True, help="training MMFB file")
        p.add_argument("--validation", required=True, help="validation MMFB file")
        p.add_argument("--seed", type=int)
        p.add_argument("--population", type=int)
        p.add_argument("--generations", type=int)
        p.add_argument("--crossover-rate", type=float, dest="crossover_rate")
        p.add_argument("--mutation-rate", type=float, dest="mutation_rate")
        p.add_argument("--elitism-rate", type=float, dest="elitism_rate")
        p.add_argument("--tournament-size", type=int, dest="tournament_size")
        p.add_argument("--ridge-lambda", type=float, dest="ridge_lambda")
        p.add_argument("--workers", type=int)

    p = sub.add_parser("priors", help="build the SOGP prior pool")
    evolve_flags(p)
    p.add_argument("--out", required=True, help="prior pool file")
    p.add_argument("--runs", type=int, default=ev.PRIOR_RUNS)
    p.add_argument("--picks", type=int, default=ev.PRIOR_PICKS_PER_RUN)
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("evolve", help="run the MOGP main loop")
    evolve_flags(p)
    p.add_argument("--priors", help="prior pool file from `priors`")
    p.add_argument("--no-kt", action="store_true", dest="no_kt",
                   help="ignore the prior pool (no knowledge transfer)")
    p.add_argument("--resume", action="store_true",
                   help="continue from the latest checkpoint")
    p.add_argument("--baselines", action="store_true",
                   help="also print the five fixed-fusion baselines")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("predict", help="evaluate a program on a bank")
    p.add_argument("--program", required=True, help="s-expression or file")
    p.add_argument("--train", required=True, help="training MMFB file")
    p.add_argument("--bank", required=True, help="target MMFB file")
    p.add_argument("--out", help="predictions output path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a predictions file")
    p.add_argument("--pred", required=True, help="predictions TSV")
    p.add_argument("--bank", required=True, help="MMFB file with true labels")
    p.add_argument("--out", help="report output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-front", help="extract Pareto anchor programs")
    p.add_argument("--archive", required=True, help="archive.txt from `evolve`")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-features", dest="dump_features",
                   help="program whose fused features to dump as CSV")
    p.add_argument("--bank", help="MMFB file for --dump-features")
    p.set_defaults(func=cmd_export_front)

    p = sub.add_parser("inspect", help="pretty-print a program tree")
    p.add_argument("--program", required=True, help="s-expression or file")
    p.add_argument("--dim", type=int, default=264, help="terminal width")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GpfuseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
