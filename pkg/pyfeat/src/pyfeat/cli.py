"""Command-line surface: `pyfeat demo` and `pyfeat export`.

`demo` writes a directory of toy per-protein view files (one `.npz`
per protein holding the four view matrices, the residue sequence, and
8-state labels).  `export` runs the 16 extractors over such a
directory and writes an MMFB feature bank.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bank, encoding, extractors


def load_views_dir(directory) -> list[dict]:
    """Read every `.npz` protein file from a views directory."""
    names = sorted(f for f in os.listdir(directory) if f.endswith(".npz"))
    if not names:
        raise ValueError(f"no .npz view files in {directory}")
    proteins = []
    for name in names:
        with np.load(os.path.join(directory, name)) as data:
            entry = {"id": os.path.splitext(name)[0]}
            for view in encoding.VIEWS:
                if view not in data:
                    raise ValueError(f"{name}: missing view {view}")
                matrix = np.asarray(data[view], dtype=np.float32)
                if matrix.ndim != 2:
                    raise ValueError(f"{name}: view {view} is not 2-D")
                entry[view] = matrix
            entry["sequence"] = str(data["sequence"])
            entry["labels"] = str(data["labels"]) if "labels" in data else None
            lengths = {entry[v].shape[0] for v in encoding.VIEWS}
            lengths.add(len(entry["sequence"]))
            if len(lengths) != 1:
                raise ValueError(f"{name}: views disagree on protein length")
            proteins.append(entry)
    return proteins


def cmd_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    widths = {"HMM": 20, "PSSM": 21, "T5": args.t5_dim, "Sa": args.sa_dim}
    for i in range(args.n):
        length = args.length
        arrays = {
            view: rng.normal(size=(length, width)).astype(np.float32)
            for view, width in widths.items()
        }
        sequence = "".join(
            rng.choice(list(encoding.AMINO_ACIDS), size=length)
        )
        labels = "".join(
            rng.choice(list(extractors.LABEL_CHARS), size=length)
        )
        path = os.path.join(args.out, f"demo{i:03d}.npz")
        np.savez(path, sequence=sequence, labels=labels, **arrays)
    print(f"wrote {args.n} demo proteins to {args.out}")
    return 0


def cmd_export(args) -> int:
    proteins = load_views_dir(args.views)
    if args.train and any(p["labels"] is None for p in proteins):
        raise ValueError("--train requires labels in every view file")

    networks = {}
    if args.train:
        import torch

        label_index = {c: i for i, c in enumerate(extractors.LABEL_CHARS)}
        for view in encoding.VIEWS:
            inputs = [
                np.concatenate(
                    [p[view], encoding.one_hot(p["sequence"])], axis=1
                )
                for p in proteins
            ]
            targets = [
                np.array([label_index[c] for c in p["labels"]])
                for p in proteins
            ]
            for kind in encoding.EXTRACTOR_KINDS:
                spec = extractors.ExtractorSpec(kind)
                torch.manual_seed(extractors.derive_seed(args.seed, view, kind))
                net = extractors.build_network(spec, inputs[0].shape[1])
                networks[(view, kind)] = extractors.train_network(
                    net, inputs, targets
                )

    exported = []
    for p in proteins:
        labels = p["labels"] or "L" * len(p["sequence"])
        record = bank.ProteinFeatures(id=p["id"], labels=labels)
        for view in encoding.VIEWS:
            for kind in encoding.EXTRACTOR_KINDS:
                spec = extractors.ExtractorSpec(kind)
                record.features[(view, kind)] = extractors.extract(
                    p[view],
                    spec,
                    args.seed,
                    sequence=p["sequence"],
                    view=view,
                    network=networks.get((view, kind)),
                )
        exported.append(record)
    bank.export_bank(exported, args.out)
    print(f"exported {len(exported)} proteins x 16 features to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyfeat",
        description="Toy-scale feature extraction to MMFB banks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="generate toy view inputs")
    p.add_argument("--out", required=True, help="output views directory")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--length", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t5-dim", type=int, default=64, dest="t5_dim")
    p.add_argument("--sa-dim", type=int, default=48, dest="sa_dim")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("export", help="extract features and write an MMFB bank")
    p.add_argument("--views", required=True, help="views directory")
    p.add_argument("--out", required=True, help="output MMFB path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train", action="store_true",
                   help="briefly train the extractors on the labels")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
