"""Command-line front end.

Each subcommand maps onto one library operation and writes its artifacts plus
a run manifest (resolved config, config hash, library versions, output file
hashes) into the output directory.  All randomness flows from --seed, so
repeating a command reproduces its outputs byte for byte.
"""
from __future__ import annotations

import os
import sys


def _cap_threads() -> None:
    # must happen before numpy loads its BLAS; thread count changes speed only
    cap = os.environ.get("CAMATTN_THREADS")
    if not cap:
        return
    try:
        n = int(cap)
    except ValueError:
        n = 0
    if n < 1:
        print(f"camattn: ignoring CAMATTN_THREADS={cap!r} (want a positive integer)",
              file=sys.stderr)
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


_cap_threads()

import argparse
import hashlib
import json
import platform
import time

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcam import hot_maps_for_dataset, load_map_csv, save_map_csv, save_map_pgm
from .model import CnnCsaModel, count_params
from .pipeline import DEFAULT_Q, run_pipeline
from .preproc import (
    CLASS_NAMES,
    IMAGE_WIDTH,
    load_epochs,
    load_recording,
    preprocess_recording,
    save_epochs,
    save_recording,
)
from .selection import (
    average_class_maps,
    load_ranking,
    rank_channels,
    reduce_dataset,
    save_ranking,
    select_top_q,
)
from .synthdata import SynthConfig, generate
from .traineval import (
    TrainConfig,
    evaluate,
    load_report,
    save_loss_curve,
    save_report,
    split,
    train,
)

_DTYPES = {"f32": np.float32, "f64": np.float64}


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir, command: str, config: dict, outputs) -> str:
    """Record what ran and what it produced, enough to reproduce from scratch."""
    import scipy

    payload = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(_canonical(config).encode("ascii")).hexdigest(),
        "seed": config.get("seed"),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "camattn": _version(),
        },
        "outputs": {name: _sha256(os.path.join(out_dir, name)) for name in sorted(outputs)},
    }
    path = os.path.join(out_dir, f"manifest_{command}.json")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_canonical(payload))
        fh.write("\n")
    return path


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("camattn")
    except Exception:
        return "unknown"


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        seed=args.seed,
        split=args.split,
    )


def _add_train_flags(sp, epochs_default: int = 200) -> None:
    sp.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    sp.add_argument("--epochs", type=int, default=epochs_default)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--weight-decay", type=float, default=0.005)
    sp.add_argument("--split", default="random", metavar="{random|session:N}")
    sp.add_argument("--precision", choices=sorted(_DTYPES), default="f32")


def _add_out(sp) -> None:
    sp.add_argument("--out", required=True, metavar="DIR", help="output directory")


def _ensure_out(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _model_matching(dataset, seed: int, dtype) -> CnnCsaModel:
    rows = dataset.n_channels * dataset.samples_per_epoch // IMAGE_WIDTH
    return CnnCsaModel(input_height=rows, seed=seed, dtype=dtype)


# -- subcommands ---------------------------------------------------------------


def _cmd_synth(args) -> int:
    out = _ensure_out(args)
    config = SynthConfig(seed=args.seed, n_sessions=args.sessions,
                         segments_per_class=args.segments_per_class)
    recording = generate(config)
    save_recording(os.path.join(out, "recording.eegr"), recording)
    with open(os.path.join(out, "synth_config.json"), "w", encoding="ascii") as fh:
        fh.write(_canonical(config.to_dict()))
        fh.write("\n")
    _write_manifest(out, "synth", {"seed": args.seed, "synth": config.to_dict()},
                    ["recording.eegr", "synth_config.json"])
    print(f"synth: {recording.samples.shape[0]} channels x {recording.samples.shape[1]} "
          f"samples, {len(recording.segments)} segments -> {out}")
    return 0


def _cmd_preprocess(args) -> int:
    out = _ensure_out(args)
    recording = load_recording(args.input)
    dataset = preprocess_recording(recording)
    save_epochs(os.path.join(out, "epochs.eege"), dataset)
    _write_manifest(out, "preprocess", {"input": os.path.basename(args.input)},
                    ["epochs.eege"])
    print(f"preprocess: {len(dataset)} epochs of {dataset.n_channels} channels "
          f"x {dataset.samples_per_epoch} samples -> {out}")
    return 0


def _cmd_train(args) -> int:
    out = _ensure_out(args)
    dataset = load_epochs(args.input)
    config = _train_config(args)
    train_set, test_set = split(dataset, config)
    model = _model_matching(dataset, config.seed, _DTYPES[args.precision])
    curve = train(model, train_set, config)
    save_checkpoint(os.path.join(out, "model.camw"),
                    [(n, p.data) for n, p in model.parameters()])
    save_loss_curve(os.path.join(out, "loss.csv"), curve)
    report = evaluate(model, test_set, config.eval_batch, seed=config.seed)
    save_report(os.path.join(out, "report.json"), report)
    _write_manifest(out, "train",
                    {"input": os.path.basename(args.input), "seed": config.seed,
                     "precision": args.precision, "train": config.to_dict()},
                    ["model.camw", "loss.csv", "report.json"])
    print(f"train: {config.epochs} epochs on {len(train_set)} samples; "
          f"test accuracy {report.accuracy:.2f}%, f1 {report.f1:.2f}%")
    return 0


def _cmd_gradcam(args) -> int:
    out = _ensure_out(args)
    dataset = load_epochs(args.input)
    model = _model_matching(dataset, args.seed, _DTYPES[args.precision])
    model.load_state(load_checkpoint(args.model))
    maps = hot_maps_for_dataset(model, dataset)
    class_maps = average_class_maps(maps)
    written = []
    if not args.no_csv:
        save_map_csv(os.path.join(out, "allhot.csv"), class_maps.all_hot)
        written.append("allhot.csv")
        for c, name in enumerate(CLASS_NAMES):
            save_map_csv(os.path.join(out, f"hot_{name}.csv"), class_maps.per_class_mean[c])
            written.append(f"hot_{name}.csv")
    if not args.no_pgm:
        save_map_pgm(os.path.join(out, "allhot.pgm"), class_maps.all_hot)
        written.append("allhot.pgm")
        for c, name in enumerate(CLASS_NAMES):
            save_map_pgm(os.path.join(out, f"hot_{name}.pgm"), class_maps.per_class_mean[c])
            written.append(f"hot_{name}.pgm")
    if not written:
        raise ValueError("both CSV and PGM export disabled; nothing to write")
    _write_manifest(out, "gradcam",
                    {"input": os.path.basename(args.input),
                     "model": os.path.basename(args.model), "seed": args.seed,
                     "precision": args.precision},
                    written)
    print(f"gradcam: averaged {len(maps)} maps into {len(written)} files -> {out}")
    return 0


def _cmd_select(args) -> int:
    out = _ensure_out(args)
    all_hot = load_map_csv(args.input)
    ranking = rank_channels(all_hot)
    qs = args.q or list(DEFAULT_Q)
    written = []
    for q in qs:
        picked = select_top_q(ranking, q)
        name = f"ranking_q{q}.json"
        save_ranking(os.path.join(out, name), picked)
        written.append(name)
    _write_manifest(out, "select",
                    {"input": os.path.basename(args.input), "q": list(qs)},
                    written)
    print("select: order " + " ".join(str(c) for c in ranking.order))
    return 0


def _cmd_reduce(args) -> int:
    out = _ensure_out(args)
    dataset = load_epochs(args.input)
    ranking = load_ranking(args.ranking)
    if ranking.q is None:
        raise ValueError(f"{args.ranking}: ranking has no Q set")
    reduced = reduce_dataset(dataset, ranking.selected)
    name = f"epochs_q{ranking.q}.eege"
    save_epochs(os.path.join(out, name), reduced)
    _write_manifest(out, "reduce",
                    {"input": os.path.basename(args.input),
                     "ranking": os.path.basename(args.ranking), "q": ranking.q},
                    [name])
    print(f"reduce: kept {reduced.n_channels} of {dataset.n_channels} channels -> {name}")
    return 0


def _cmd_evaluate(args) -> int:
    out = _ensure_out(args)
    dataset = load_epochs(args.input)
    if args.split == "none":
        test_set = dataset
    else:
        config = TrainConfig(seed=args.seed, split=args.split)
        _, test_set = split(dataset, config)
    model = _model_matching(dataset, args.seed, _DTYPES[args.precision])
    model.load_state(load_checkpoint(args.model))
    report = evaluate(model, test_set, seed=args.seed)
    save_report(os.path.join(out, "report.json"), report)
    _write_manifest(out, "evaluate",
                    {"input": os.path.basename(args.input),
                     "model": os.path.basename(args.model), "seed": args.seed,
                     "split": args.split, "precision": args.precision},
                    ["report.json"])
    print(f"evaluate: accuracy {report.accuracy:.2f}%, f1 {report.f1:.2f}% "
          f"on {len(test_set)} samples")
    return 0


def _cmd_flops(args) -> int:
    from .model import count_flops

    qs = args.q or list(DEFAULT_Q)
    lines = []
    for q in qs:
        rows = q * 4  # 21 channels fold to 84 rows, so 4 rows per channel
        macs = count_flops(rows)
        params = count_params(rows)
        line = f"q={q} rows={rows} params={params} macs={macs} ({macs / 1e6:.2f}M)"
        lines.append(line)
        print(line)
    if args.out:
        out = _ensure_out(args)
        with open(os.path.join(out, "flops.txt"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        _write_manifest(out, "flops", {"q": list(qs)}, ["flops.txt"])
    return 0


def _cmd_pipeline(args) -> int:
    out = _ensure_out(args)
    qs = tuple(args.q) if args.q else DEFAULT_Q
    config = _train_config(args)
    synth = SynthConfig(seed=args.seed, n_sessions=args.sessions,
                        segments_per_class=args.segments_per_class)
    dataset = load_epochs(args.input) if args.input else None
    recording = load_recording(args.recording) if args.recording else None
    result = run_pipeline(
        out,
        synth_config=synth,
        train_config=config,
        q_values=qs,
        recording=recording,
        dataset=dataset,
        export_pgm=not args.no_pgm,
        export_csv=not args.no_csv,
        dtype=_DTYPES[args.precision],
        log=lambda msg: print(f"pipeline: {msg}"),
    )
    outputs = sorted(
        name for name in os.listdir(out)
        if not name.startswith("manifest_") and os.path.isfile(os.path.join(out, name))
    )
    _write_manifest(out, "pipeline",
                    {"seed": args.seed, "q": list(qs), "precision": args.precision,
                     "train": config.to_dict(), "synth": synth.to_dict(),
                     "input": os.path.basename(args.input) if args.input else None,
                     "recording": os.path.basename(args.recording) if args.recording else None},
                    outputs)
    acc = " ".join(f"q{q}={r.accuracy:.2f}%" for q, r in sorted(result.reports.items()))
    print(f"pipeline: full={result.full_report.accuracy:.2f}% {acc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camattn",
        description="Attention-guided channel selection for multi-channel EEG epochs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic labeled recording")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sessions", type=int, default=4)
    sp.add_argument("--segments-per-class", type=int, default=20)
    _add_out(sp)
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("preprocess", help="filter, downsample and epoch a recording")
    sp.add_argument("--in", dest="input", required=True, metavar="RECORDING.eegr")
    _add_out(sp)
    sp.set_defaults(func=_cmd_preprocess)

    sp = sub.add_parser("train", help="train a classifier on an epoch file")
    sp.add_argument("--in", dest="input", required=True, metavar="EPOCHS.eege")
    _add_train_flags(sp)
    _add_out(sp)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("gradcam", help="average class activation maps over an epoch file")
    sp.add_argument("--in", dest="input", required=True, metavar="EPOCHS.eege")
    sp.add_argument("--model", required=True, metavar="MODEL.camw")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--precision", choices=sorted(_DTYPES), default="f32")
    sp.add_argument("--no-pgm", action="store_true")
    sp.add_argument("--no-csv", action="store_true")
    _add_out(sp)
    sp.set_defaults(func=_cmd_gradcam)

    sp = sub.add_parser("select", help="rank channels from an averaged activation map")
    sp.add_argument("--in", dest="input", required=True, metavar="ALLHOT.csv")
    sp.add_argument("--q", type=int, action="append", metavar="N",
                    help="channel budget, repeatable (default 4 8 12 16 21)")
    _add_out(sp)
    sp.set_defaults(func=_cmd_select)

    sp = sub.add_parser("reduce", help="keep only the channels a ranking selected")
    sp.add_argument("--in", dest="input", required=True, metavar="EPOCHS.eege")
    sp.add_argument("--ranking", required=True, metavar="RANKING.json")
    _add_out(sp)
    sp.set_defaults(func=_cmd_reduce)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint on an epoch file")
    sp.add_argument("--in", dest="input", required=True, metavar="EPOCHS.eege")
    sp.add_argument("--model", required=True, metavar="MODEL.camw")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--split", default="random",
                    metavar="{random|session:N|none}",
                    help="evaluate on this split's test part, or none for the whole file")
    sp.add_argument("--precision", choices=sorted(_DTYPES), default="f32")
    _add_out(sp)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("flops", help="print multiply-accumulate counts per channel budget")
    sp.add_argument("--q", type=int, action="append", metavar="N")
    sp.add_argument("--out", metavar="DIR", help="also write flops.txt and a manifest")
    sp.set_defaults(func=_cmd_flops)

    sp = sub.add_parser("pipeline", help="run synth, train, rank and per-Q retrain end to end")
    sp.add_argument("--in", dest="input", metavar="EPOCHS.eege",
                    help="start from an existing epoch file instead of synthesizing")
    sp.add_argument("--recording", metavar="RECORDING.eegr",
                    help="start from an existing recording instead of synthesizing")
    sp.add_argument("--q", type=int, action="append", metavar="N",
                    help="channel budget, repeatable (default 4 8 12 16 21)")
    sp.add_argument("--sessions", type=int, default=4)
    sp.add_argument("--segments-per-class", type=int, default=20)
    sp.add_argument("--no-pgm", action="store_true")
    sp.add_argument("--no-csv", action="store_true")
    _add_train_flags(sp)
    _add_out(sp)
    sp.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        code = args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"camattn {args.command}: {exc}", file=sys.stderr)
        return 1
    if code == 0:
        print(f"camattn {args.command}: done in {time.time() - t0:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
