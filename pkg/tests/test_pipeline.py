"""End-to-end pipeline on miniature data: artifact layout, the full-Q
identity, data-source precedence, and Q validation."""
import json
import os

import numpy as np
import pytest

from camattn.pipeline import DEFAULT_Q, run_pipeline, _validate_q
from camattn.preproc import Epoch, EpochDataset, CHANNEL_NAMES, load_epochs
from camattn.synthdata import SynthConfig, generate
from camattn.traineval import TrainConfig, load_report


TINY_SYNTH = SynthConfig(seed=0, n_sessions=1, segments_per_class=1)
TINY_TRAIN = TrainConfig(epochs=1, seed=0)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    result = run_pipeline(out, synth_config=TINY_SYNTH, train_config=TINY_TRAIN,
                          q_values=(4, 21), export_pgm=False)
    return out, result


def test_artifact_layout(tiny_run):
    out, result = tiny_run
    expected = [
        "recording.eegr", "synth_config.json", "epochs.eege",
        "model_full.camw", "loss_full.csv", "report_full.json",
        "allhot.csv", "hot_sour.csv", "hot_sweet.csv", "hot_bitter.csv",
        "hot_salty.csv",
        "ranking_q4.json", "epochs_q4.eege", "model_q4.camw", "loss_q4.csv",
        "report_q4.json",
        "ranking_q21.json", "epochs_q21.eege", "model_q21.camw", "loss_q21.csv",
        "report_q21.json",
        "summary.json",
    ]
    for name in expected:
        assert (out / name).exists(), name
    assert not list(out.glob("*.pgm"))
    assert sorted(result.reports) == [4, 21]
    assert result.all_hot.shape == (84, 64)


def test_full_q_identity(tiny_run):
    out, result = tiny_run
    # training on the "reduced" 21-channel dataset is the same computation
    assert (out / "report_full.json").read_bytes() == \
           (out / "report_q21.json").read_bytes()
    assert (out / "model_full.camw").read_bytes() == \
           (out / "model_q21.camw").read_bytes()
    assert (out / "loss_full.csv").read_bytes() == (out / "loss_q21.csv").read_bytes()
    assert result.reports[21].to_json() == result.full_report.to_json()


def test_summary_contents(tiny_run):
    out, result = tiny_run
    summary = json.loads((out / "summary.json").read_text())
    assert summary == result.summary_dict()
    assert summary["seed"] == 0
    assert sorted(summary["per_q"]) == ["21", "4"]
    assert summary["per_q"]["4"]["selected"] == list(result.selected[4])
    assert len(summary["order"]) == 21


def test_reduced_artifacts_consistent(tiny_run):
    out, result = tiny_run
    ds4 = load_epochs(out / "epochs_q4.eege")
    assert ds4.n_channels == 4
    assert ds4.channel_subset == tuple(sorted(result.selected[4]))
    report4 = load_report(out / "report_q4.json")
    assert report4.q == 4
    assert report4.flops < result.full_report.flops


def test_rejects_both_sources(tmp_path):
    rec = generate(TINY_SYNTH)
    ds = EpochDataset(epochs=[Epoch(np.zeros((21, 256), dtype=np.float32), 0, 1,
                                    tuple(range(21)))])
    with pytest.raises(ValueError, match="not both"):
        run_pipeline(tmp_path, recording=rec, dataset=ds)


def test_explicit_dataset_skips_synth_artifacts(tmp_path):
    eps = []
    r = np.random.default_rng(0)
    for i in range(32):
        data = r.standard_normal((6, 256)).astype(np.float32)
        data[i % 4] += 3.0
        eps.append(Epoch(data=data, label=i % 4, session=1,
                         channel_subset=tuple(range(6))))
    ds = EpochDataset(epochs=eps, channel_names=CHANNEL_NAMES[:6])
    result = run_pipeline(tmp_path, train_config=TINY_TRAIN, q_values=(2,),
                          dataset=ds, export_pgm=False, export_csv=False)
    assert not (tmp_path / "recording.eegr").exists()
    assert not (tmp_path / "epochs.eege").exists()
    assert not (tmp_path / "allhot.csv").exists()
    assert (tmp_path / "report_q2.json").exists()
    assert result.reports[2].q == 2


def test_q_validation():
    assert _validate_q(DEFAULT_Q, 21) == (4, 8, 12, 16, 21)
    with pytest.raises(ValueError, match="at least one"):
        _validate_q((), 21)
    with pytest.raises(ValueError, match="must lie in"):
        _validate_q((0, 4), 21)
    with pytest.raises(ValueError, match="must lie in"):
        _validate_q((4, 22), 21)
    with pytest.raises(ValueError, match="strictly increasing"):
        _validate_q((4, 4), 21)
    with pytest.raises(ValueError, match="strictly increasing"):
        _validate_q((12, 4), 21)
