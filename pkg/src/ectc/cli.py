"""Command-line entry point: ``ectc synth|train|eval|align|check``.

Exit codes: 0 success, 1 check failure, 2 usage or bad input, 3 infeasible
supervision, 4 numeric failure, 5 vocabulary mismatch.
"""
import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import checks, data_io, lattice, metrics, model, synth
from .errors import (
    FormatError,
    InfeasibleError,
    InvalidInputError,
    NumericError,
    VocabMismatchError,
)
from .similarity import DEFAULT_M, SIMILARITY_MODES

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_VOCAB = range(6)


def _kv(**fields):
    parts = []
    for k, v in fields.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        parts.append(f"{k}={v}")
    return " ".join(parts)


def _anchor_level(text):
    if text is None or text == "none":
        return None
    if text in ("segment", "per-segment-1"):
        return "segment"
    try:
        value = float(text)
    except ValueError:
        raise InvalidInputError(f"expected 'segment', 'none' or a fraction, got {text!r}")
    if not 0.0 < value <= 1.0:
        raise InvalidInputError(f"fraction must lie in (0, 1], got {value}")
    return value


def _load_data(path, vocab_path=None):
    """Corpus, vocabulary and whether the vocabulary came from a file.

    The vocabulary is ``vocab_path``, else ``vocab.txt`` beside the data,
    else the sorted action names found in the corpus.
    """
    if vocab_path is None:
        sibling = os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.txt")
        vocab_path = sibling if os.path.exists(sibling) else None
    if vocab_path is not None:
        vocab = data_io.read_vocab(vocab_path)
        return data_io.read_corpus(path, vocab), vocab, True
    corpus = data_io.read_corpus(path)
    names = set()
    for rec in corpus:
        names.update(rec.frame_labels or [])
        names.update(rec.ordering or [])
    return corpus, lattice.LabelVocab(tuple(sorted(names))), False


def _load_for_model(args):
    """Checkpoint plus a corpus whose vocabulary agrees with it; never re-indexes."""
    corpus, data_vocab, from_file = _load_data(args.data, args.vocab)
    if from_file:
        params, vocab, config = data_io.load_checkpoint(args.checkpoint, expected_vocab=data_vocab)
    else:
        params, vocab, config = data_io.load_checkpoint(args.checkpoint)
        unknown = sorted(set(data_vocab.actions) - set(vocab.actions))
        if unknown:
            raise VocabMismatchError(f"actions {unknown} are not in the checkpoint vocabulary")
    d = params["fw_Wx"].shape[0]
    for rec in corpus:
        if rec.features.shape[1] != d:
            raise FormatError(f"record {rec.id!r}: feature dim {rec.features.shape[1]}, checkpoint expects {d}")
    return params, vocab, config, corpus


def _write_rows(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_synth(args):
    fields = {}
    if args.spec is not None:
        with open(args.spec) as fh:
            fields.update(json.load(fh))
    inline = {
        "n_actions": args.n_actions, "dim": args.dim, "proto_scale": args.proto_scale,
        "sigma": args.sigma, "segments": args.segments, "seg_len": args.seg_len,
        "n_videos": args.n_videos, "drift": args.drift, "seed": args.seed,
    }
    fields.update({k: v for k, v in inline.items() if v is not None})
    if args.anchors is not None:
        fields["anchors"] = _anchor_level(args.anchors)
    for key in ("segments", "seg_len"):
        if key in fields:
            fields[key] = tuple(fields[key])
    try:
        spec = synth.SyntheticSpec(**fields)
    except TypeError as exc:
        raise InvalidInputError(str(exc))
    os.makedirs(args.out, exist_ok=True)
    vocab = synth.vocab_for(spec)
    data_io.write_vocab(vocab, os.path.join(args.out, "vocab.txt"))
    splits = {"train": spec, "test": replace(spec, n_videos=args.n_test)}
    for split, split_spec in splits.items():
        corpus = synth.generate_corpus(split_spec, split)
        data_io.write_corpus(corpus, os.path.join(args.out, f"{split}.jsonl"))
        print(_kv(split=split, **synth.corpus_stats(corpus)))
    with open(os.path.join(args.out, "spec.json"), "w") as fh:
        json.dump(spec.to_dict(), fh, sort_keys=True)
    return EXIT_OK


def cmd_train(args):
    corpus, vocab, _ = _load_data(args.data, args.vocab)
    if args.annot_fraction is not None:
        level = _anchor_level(args.annot_fraction)
        rng = np.random.default_rng([args.seed, 7])
        for rec in corpus:
            if rec.frame_labels is None:
                raise InvalidInputError(f"record {rec.id!r}: --annot-fraction needs frame labels")
            rec.annotations = None if level is None else synth.sample_anchors(rec.frame_labels, level, rng)
    config = model.with_overrides(
        model.TrainConfig(),
        mode=args.mode, similarity=args.similarity, theta=args.theta, hidden=args.hidden,
        lr=args.lr, epochs=args.epochs, seed=args.seed, cluster_size=args.cluster_size,
        gradient=args.gradient, weight_decay=args.weight_decay,
    )
    print(_kv(event="start", records=len(corpus), actions=vocab.A, **config.to_dict()), flush=True)

    def on_epoch(entry):
        print(_kv(**entry), flush=True)

    params, history = model.train(corpus, config, vocab, on_epoch=on_epoch)
    data_io.save_checkpoint(args.out, params, vocab, config.to_dict())
    print(_kv(event="saved", checkpoint=args.out))
    return EXIT_OK


def cmd_eval(args):
    params, vocab, _, corpus = _load_for_model(args)
    rows = []
    for rec in corpus:
        if rec.frame_labels is None:
            raise InvalidInputError(f"record {rec.id!r}: evaluation needs frame labels")
        pred = model.predict_frames(params, rec.features)
        scores = metrics.segment_scores(pred, vocab.encode(rec.frame_labels))
        rows.append({"id": rec.id, **scores})
        print(_kv(id=rec.id, **scores))
    summary = {"id": "__mean__", "videos": len(rows)}
    for key in ("frame_acc", "unit_acc", "jaccard"):
        summary[key] = float(np.mean([r[key] for r in rows])) if rows else float("nan")
    print(_kv(**summary))
    if args.report is not None:
        _write_rows(args.report, rows + [summary])
    return EXIT_OK


def alignment(params, record, vocab, config):
    """Frame labels maximizing the training target for one record."""
    sup = model.prepare_supervision(record, vocab, config)
    if sup.kind == "ce":
        return np.asarray(sup.target, dtype=np.int64)
    _, z, _ = model.net_forward(params, record.features)
    lat = lattice.lattice(z, sup.ell, sup.sim, sup.ann, decomposition="chain")
    return np.argmax(lattice.posterior_target(lat, z, sup.ell), axis=1)


def cmd_align(args):
    params, vocab, stored, corpus = _load_for_model(args)
    config = model.with_overrides(
        model.TrainConfig.from_dict(stored), mode=args.mode, similarity=args.similarity
    )
    rows = []
    for rec in corpus:
        path = alignment(params, rec, vocab, config)
        row = {"id": rec.id, "alignment": vocab.decode(path)}
        if rec.frame_labels is not None:
            gt = vocab.encode(rec.frame_labels)
            row["frame_acc"] = metrics.frame_accuracy(path, gt)
            row["jaccard"] = metrics.jaccard(path, metrics.to_segments(gt))
            print(_kv(id=rec.id, frame_acc=row["frame_acc"], jaccard=row["jaccard"]))
        rows.append(row)
    scored = [r for r in rows if "frame_acc" in r]
    if scored:
        print(_kv(
            id="__mean__", videos=len(scored),
            frame_acc=float(np.mean([r["frame_acc"] for r in scored])),
            jaccard=float(np.mean([r["jaccard"] for r in scored])),
        ))
    _write_rows(args.out, rows)
    return EXIT_OK


def cmd_check(args):
    if args.trials < 0:
        raise InvalidInputError("--trials must be non-negative")
    report = checks.run_checks(args.sizes, args.trials, args.seed, inject=args.inject)
    print(report.table())
    print(_kv(result="pass" if report.passed else "fail", trials=args.trials, seed=args.seed))
    return EXIT_OK if report.passed else EXIT_CHECK


def _sizes(text):
    try:
        return checks.parse_sizes(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes look like '3x6,4x8', got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="ectc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate train/test corpora")
    p.add_argument("--spec", help="JSON file with SyntheticSpec fields")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-actions", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--proto-scale", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--segments", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--seg-len", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--n-videos", type=int, help="training videos")
    p.add_argument("--n-test", type=int, default=50, help="test videos (default 50)")
    p.add_argument("--drift", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--anchors", help="'segment', a frame fraction, or 'none'")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--mode", choices=model.MODES)
    p.add_argument("--similarity", choices=SIMILARITY_MODES)
    p.add_argument("--theta", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cluster-size", type=int, help=f"mean k-means cluster length (default {DEFAULT_M})")
    p.add_argument("--gradient", choices=("exact", "target"))
    p.add_argument("--annot-fraction", help="resample anchors: 'segment', a fraction, or 'none'")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("eval", cmd_eval, "score predictions"), ("align", cmd_align, "export alignments")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--vocab")
        if name == "eval":
            p.add_argument("--report", help="JSONL file for per-video and mean rows")
        else:
            p.add_argument("--out", required=True, help="JSONL alignment file")
            p.add_argument("--mode", choices=model.MODES, help="override the checkpoint's mode")
            p.add_argument("--similarity", choices=SIMILARITY_MODES)
        p.set_defaults(func=func)

    p = sub.add_parser("check", help="verify the lattice against brute force")
    p.add_argument("--sizes", type=_sizes, default=checks.DEFAULT_SIZES, help="e.g. 3x6,4x8 (actions x frames)")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject", choices=("wrong-sign",), help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VocabMismatchError as exc:
        code, msg = EXIT_VOCAB, exc
    except InfeasibleError as exc:
        code, msg = EXIT_INFEASIBLE, exc
    except (NumericError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, exc
    except (FormatError, InvalidInputError, OSError) as exc:
        code, msg = EXIT_USAGE, exc
    print(f"ectc {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
