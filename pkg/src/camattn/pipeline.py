"""End-to-end channel-selection pipeline.

One call runs the whole study: synthesize (or accept) a recording, preprocess
it into epochs, train the full-montage network, read class activation maps off
the training split, rank channels, and then retrain and evaluate a fresh model
for every requested channel budget Q.  Every artifact lands in ``out_dir``
with a stable name so repeated runs with the same seed are byte-identical.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .gradcam import hot_maps_for_dataset, save_map_csv, save_map_pgm
from .model import CnnCsaModel
from .preproc import (
    CLASS_NAMES,
    IMAGE_WIDTH,
    EegRecording,
    EpochDataset,
    preprocess_recording,
    save_epochs,
    save_recording,
)
from .selection import (
    ChannelRanking,
    average_class_maps,
    rank_channels,
    reduce_dataset,
    save_ranking,
    select_top_q,
)
from .synthdata import SynthConfig, generate
from .traineval import EvalReport, TrainConfig, evaluate, save_loss_curve, save_report, split
from .traineval import train as train_model

DEFAULT_Q = (4, 8, 12, 16, 21)


def _model_for(dataset: EpochDataset, config: TrainConfig, dtype=np.float32) -> CnnCsaModel:
    rows = dataset.n_channels * dataset.samples_per_epoch // IMAGE_WIDTH
    return CnnCsaModel(input_height=rows, input_width=IMAGE_WIDTH,
                       seed=config.seed, dtype=dtype)


def _validate_q(q_values, n_channels: int) -> tuple:
    qs = tuple(int(q) for q in q_values)
    if not qs:
        raise ValueError("need at least one Q value")
    if any(not 1 <= q <= n_channels for q in qs):
        raise ValueError(f"Q values {qs} must lie in 1..{n_channels}")
    if any(b <= a for a, b in zip(qs, qs[1:])):
        raise ValueError(f"Q values {qs} must be strictly increasing")
    return qs


@dataclass
class PipelineResult:
    out_dir: str
    dataset: EpochDataset
    full_report: EvalReport
    full_curve: list
    ranking: ChannelRanking
    all_hot: np.ndarray
    reports: dict = field(default_factory=dict)  # q -> EvalReport
    curves: dict = field(default_factory=dict)  # q -> loss curve
    selected: dict = field(default_factory=dict)  # q -> channel tuple, rank order

    def summary_dict(self) -> dict:
        per_q = {
            str(q): {
                "accuracy": float(r.accuracy),
                "f1": float(r.f1),
                "flops": int(r.flops),
                "params": int(r.params),
                "selected": [int(c) for c in self.selected[q]],
            }
            for q, r in sorted(self.reports.items())
        }
        return {
            "seed": int(self.full_report.seed),
            "full": {
                "accuracy": float(self.full_report.accuracy),
                "f1": float(self.full_report.f1),
                "flops": int(self.full_report.flops),
                "params": int(self.full_report.params),
            },
            "order": [int(c) for c in self.ranking.order],
            "per_q": per_q,
        }


def run_pipeline(out_dir, synth_config: SynthConfig | None = None,
                 train_config: TrainConfig | None = None,
                 q_values=DEFAULT_Q,
                 recording: EegRecording | None = None,
                 dataset: EpochDataset | None = None,
                 export_pgm: bool = True, export_csv: bool = True,
                 dtype=np.float32, log=None) -> PipelineResult:
    """Synthesize, train, rank channels by activation mass, retrain per Q.

    Exactly one data source is used: an explicit ``dataset``, an explicit
    ``recording`` (preprocessed here), or a synthetic recording generated
    from ``synth_config`` (the default).  The reduced models are trained
    from scratch on the reduced epochs with the same seed; selection at
    full Q therefore reproduces the unreduced run exactly.
    """
    say = log if log is not None else (lambda msg: None)
    if train_config is None:
        train_config = TrainConfig()
    if dataset is not None and recording is not None:
        raise ValueError("pass a dataset or a recording, not both")
    os.makedirs(out_dir, exist_ok=True)

    if dataset is None:
        if recording is None:
            if synth_config is None:
                synth_config = SynthConfig(seed=train_config.seed)
            say(f"synthesizing recording (seed {synth_config.seed})")
            recording = generate(synth_config)
            save_recording(os.path.join(out_dir, "recording.eegr"), recording)
            with open(os.path.join(out_dir, "synth_config.json"), "w", encoding="ascii") as fh:
                fh.write(json.dumps(synth_config.to_dict(), sort_keys=True,
                                    separators=(",", ":")))
                fh.write("\n")
        say("preprocessing")
        dataset = preprocess_recording(recording)
        save_epochs(os.path.join(out_dir, "epochs.eege"), dataset)
    qs = _validate_q(q_values, dataset.n_channels)

    train_set, test_set = split(dataset, train_config)
    say(f"split: {len(train_set)} train / {len(test_set)} test")

    model = _model_for(dataset, train_config, dtype)
    say(f"training full model ({dataset.n_channels} channels, "
        f"{train_config.epochs} epochs)")
    full_curve = train_model(model, train_set, train_config)
    save_checkpoint(os.path.join(out_dir, "model_full.camw"),
                    [(n, p.data) for n, p in model.parameters()])
    save_loss_curve(os.path.join(out_dir, "loss_full.csv"), full_curve)
    full_report = evaluate(model, test_set, train_config.eval_batch,
                           seed=train_config.seed)
    save_report(os.path.join(out_dir, "report_full.json"), full_report)
    say(f"full model: accuracy {full_report.accuracy:.2f}%, f1 {full_report.f1:.2f}%")

    say("reading activation maps off the training split")
    maps = hot_maps_for_dataset(model, train_set)
    class_maps = average_class_maps(maps)
    if export_csv:
        save_map_csv(os.path.join(out_dir, "allhot.csv"), class_maps.all_hot)
        for c, name in enumerate(CLASS_NAMES):
            save_map_csv(os.path.join(out_dir, f"hot_{name}.csv"),
                         class_maps.per_class_mean[c])
    if export_pgm:
        save_map_pgm(os.path.join(out_dir, "allhot.pgm"), class_maps.all_hot)
        for c, name in enumerate(CLASS_NAMES):
            save_map_pgm(os.path.join(out_dir, f"hot_{name}.pgm"),
                         class_maps.per_class_mean[c])

    ranking = rank_channels(class_maps.all_hot)
    say("channel order: " + " ".join(str(c) for c in ranking.order))

    result = PipelineResult(
        out_dir=str(out_dir),
        dataset=dataset,
        full_report=full_report,
        full_curve=full_curve,
        ranking=ranking,
        all_hot=class_maps.all_hot,
    )
    for q in qs:
        picked = select_top_q(ranking, q, dataset.channel_names)
        save_ranking(os.path.join(out_dir, f"ranking_q{q}.json"), picked)
        reduced = reduce_dataset(dataset, picked.selected)
        save_epochs(os.path.join(out_dir, f"epochs_q{q}.eege"), reduced)
        train_q, test_q = split(reduced, train_config)
        model_q = _model_for(reduced, train_config, dtype)
        say(f"training Q={q} model ({train_config.epochs} epochs)")
        curve = train_model(model_q, train_q, train_config)
        save_checkpoint(os.path.join(out_dir, f"model_q{q}.camw"),
                        [(n, p.data) for n, p in model_q.parameters()])
        save_loss_curve(os.path.join(out_dir, f"loss_q{q}.csv"), curve)
        report = evaluate(model_q, test_q, train_config.eval_batch,
                          seed=train_config.seed)
        save_report(os.path.join(out_dir, f"report_q{q}.json"), report)
        say(f"Q={q}: accuracy {report.accuracy:.2f}%, f1 {report.f1:.2f}%")
        result.reports[q] = report
        result.curves[q] = curve
        result.selected[q] = picked.selected

    with open(os.path.join(out_dir, "summary.json"), "w", encoding="ascii") as fh:
        fh.write(json.dumps(result.summary_dict(), sort_keys=True, separators=(",", ":")))
        fh.write("\n")
    return result
