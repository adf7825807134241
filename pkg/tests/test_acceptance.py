"""Release gate: ten numbered acceptance checks with pinned tolerances.

Each check prints one PASS/FAIL verdict line (echoed in the terminal
summary).  The two training-heavy checks, planted-channel recovery and the
accuracy-versus-Q trend, share a single five-seed harness so the whole gate
stays inside its runtime budget on one CPU.
"""
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_VERDICTS

from camattn.cli import main as cli_main
from camattn.gradcam import (
    cam_intermediates,
    channel_weights,
    feature_gradient,
    hot_maps_for_dataset,
    low_res_map,
    to_hot,
)
from camattn.model import CnnCsaModel, count_flops, count_params, layer_plan
from camattn.preproc import Epoch, EpochDataset, bandpass_filter, notch_filter
from camattn.pipeline import run_pipeline
from camattn.selection import baseline_rank
from camattn.synthdata import SynthConfig, ground_truth
from camattn.tensor import Tensor, no_grad, softmax_cross_entropy
from camattn.traineval import TrainConfig, evaluate, save_report, split, train

TINY_CHANNELS = (2, 2, 4, 4, 6, 6, 8, 8)


def _verdict(num: int, ok: bool, detail: str):
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_VERDICTS.append(line)
    print(line)
    assert ok, line


# --- 1. shape conformance ---------------------------------------------------

EXPECTED_TRACE = [
    ("conv1", (84, 64, 1), (84, 64, 8), "relu"),
    ("sam", (84, 64, 8), (84, 64, 8), None),
    ("maxpool", (84, 64, 8), (42, 32, 8), None),
    ("conv2", (42, 32, 8), (42, 32, 16), "relu"),
    ("sam", (42, 32, 16), (42, 32, 16), None),
    ("maxpool", (42, 32, 16), (21, 16, 16), None),
    ("conv3", (21, 16, 16), (21, 16, 32), "relu"),
    ("conv4", (21, 16, 32), (21, 16, 32), "relu"),
    ("maxpool", (21, 16, 32), (10, 8, 32), None),
    ("conv5", (10, 8, 32), (10, 8, 64), "relu"),
    ("conv6", (10, 8, 64), (10, 8, 64), "relu"),
    ("maxpool", (10, 8, 64), (5, 4, 64), None),
    ("conv7", (5, 4, 64), (5, 4, 128), "relu"),
    ("cam", (5, 4, 128), (5, 4, 128), None),
    ("conv8", (5, 4, 128), (5, 4, 128), None),
    ("maxpool", (5, 4, 128), (2, 2, 128), None),
    ("flatten", (2, 2, 128), (512,), None),
    ("fc", (512,), (4,), None),
    ("softmax", (4,), (4,), None),
]


def test_criterion_01_shape_conformance():
    t0 = time.perf_counter()
    plan = [(r.op, r.in_shape, r.out_shape, r.activation) for r in layer_plan(84)]
    model = CnnCsaModel(input_height=84, input_width=64, seed=0)
    trace = [(r.op, r.in_shape, r.out_shape, r.activation) for r in model.shape_trace()]
    capture = model.forward_with_capture(
        Tensor(np.zeros((84, 64, 1), dtype=np.float32)))
    elapsed = time.perf_counter() - t0
    ok = (len(plan) == 19 and plan == EXPECTED_TRACE and trace == EXPECTED_TRACE
          and capture.features.data.shape == (5, 4, 128)
          and capture.logits.data.shape == (4,)
          and elapsed < 1.0)
    _verdict(1, ok, f"forward trace matches all 19 expected rows ({elapsed:.2f} s)")


# --- 2. gradient correctness ------------------------------------------------

def test_criterion_02_gradient_correctness():
    t0 = time.perf_counter()
    model = CnnCsaModel(input_height=12, input_width=8,
                        channels=(1, 2, 3, 4, 5, 6, 7, 8),
                        seed=1, dtype=np.float64)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 12, 8, 1))
    y = np.array([0, 2])

    loss = softmax_cross_entropy(model.logits(Tensor(x, dtype=np.float64)), y)
    loss.backward()
    tape = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
            for name, p in model.parameters()}

    def loss_value() -> float:
        with no_grad():
            out = softmax_cross_entropy(
                model.logits(Tensor(x, dtype=np.float64)), y)
        return float(out.data)

    h = 1e-6
    worst = 0.0
    n_params = 0
    for name, p in model.parameters():
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            dn = loss_value()
            flat[i] = orig
            fd[i] = (up - dn) / (2.0 * h)
        n_params += flat.size
        num = float(np.abs(tape[name].reshape(-1) - fd).max())
        den = max(float(np.abs(fd).max()), 1e-12)
        worst = max(worst, num / den)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 120.0
    _verdict(2, ok, f"{n_params} parameter gradients vs central differences, "
                    f"worst relative error {worst:.2e} ({elapsed:.1f} s)")


# --- 3. MAC accounting ------------------------------------------------------

def test_criterion_03_flop_accounting():
    t0 = time.perf_counter()
    full = count_flops(84)
    reduced = count_flops(48)
    reduction = 100.0 * (1.0 - reduced / full)
    params = count_params(84)
    elapsed = time.perf_counter() - t0
    ok = (abs(full - 15.64e6) / 15.64e6 <= 0.05
          and abs(reduced - 9.20e6) / 9.20e6 <= 0.05
          and abs(reduction - 41.18) <= 1.0
          and elapsed < 1.0)
    _verdict(3, ok, f"macs {full} at 84 rows / {reduced} at 48 rows, "
                    f"reduction {reduction:.2f}% (targets 15.64M / 9.20M "
                    f"+-5%, 41.18 +-1); params {params} reported, not asserted")


# --- 4. activation-map oracle -----------------------------------------------

def _script_head(model: CnnCsaModel, feat: np.ndarray) -> np.ndarray:
    """Classifier head recomputed with explicit loops: 2x2 floor max pool,
    flatten, affine."""
    h, w, c = feat.shape
    ph = h // 2 if h >= 2 else h
    pw = w // 2 if w >= 2 else w
    pooled = np.empty((ph, pw, c))
    for i in range(ph):
        for j in range(pw):
            pooled[i, j] = feat[2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(0, 1))
    return model.fc_weight.data @ pooled.ravel() + model.fc_bias.data


def _script_upsample(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize, written out cell by cell."""
    h, w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        si = i * (h - 1) / (out_h - 1) if out_h > 1 else 0.0
        i0 = int(np.floor(si))
        i1 = min(i0 + 1, h - 1)
        fi = si - i0
        for j in range(out_w):
            sj = j * (w - 1) / (out_w - 1) if out_w > 1 else 0.0
            j0 = int(np.floor(sj))
            j1 = min(j0 + 1, w - 1)
            fj = sj - j0
            out[i, j] = ((1 - fi) * (1 - fj) * src[i0, j0]
                         + (1 - fi) * fj * src[i0, j1]
                         + fi * (1 - fj) * src[i1, j0]
                         + fi * fj * src[i1, j1])
    return out


def test_criterion_04_activation_map_oracle():
    t0 = time.perf_counter()
    model = CnnCsaModel(input_height=48, input_width=64, channels=TINY_CHANNELS,
                        seed=3, dtype=np.float64)
    rng = np.random.default_rng(4)
    epochs = [Epoch(data=rng.standard_normal((12, 256)).astype(np.float32),
                    label=k, session=1, channel_subset=tuple(range(12)))
              for k in (0, 3)]
    ds = EpochDataset(epochs=epochs, channel_names=tuple(f"ch{i}" for i in range(12)))

    maps = hot_maps_for_dataset(model, ds)
    images = ds.images(np.float64)
    worst = 0.0
    for m, image in zip(maps, images):
        capture = model.forward_with_capture(Tensor(image, dtype=np.float64))
        feat = np.asarray(capture.features.data)
        assert np.abs(_script_head(model, feat) - capture.logits.data).max() < 1e-8

        fd = np.zeros_like(feat)
        eps = 1e-5
        for idx in np.ndindex(feat.shape):
            up, dn = feat.copy(), feat.copy()
            up[idx] += eps
            dn[idx] -= eps
            fd[idx] = (_script_head(model, up)[m.class_id]
                       - _script_head(model, dn)[m.class_id]) / (2 * eps)
        weights = fd.sum(axis=(0, 1)) / (feat.shape[0] * feat.shape[1])
        low = np.maximum(np.einsum("ijc,c->ij", feat, weights), 0.0)
        hot = _script_upsample(low, 48, 64)
        span = hot.max() - hot.min()
        hot = np.zeros_like(hot) if span <= 0 else (hot - hot.min()) / span
        worst = max(worst, float(np.abs(m.values - hot).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 60.0
    _verdict(4, ok, f"hot maps vs scripted finite-difference oracle, "
                    f"max abs difference {worst:.2e} ({elapsed:.1f} s)")


# --- 5. normalization and range invariants -----------------------------------

def test_criterion_05_range_invariants():
    t0 = time.perf_counter()
    model = CnnCsaModel(input_height=24, input_width=64, channels=TINY_CHANNELS,
                        seed=0, dtype=np.float64)
    rng = np.random.default_rng(5)
    images = rng.standard_normal((1000, 24, 64, 1))
    labels = rng.integers(0, 4, size=1000)

    probs = model.forward(Tensor(images, dtype=np.float64)).data
    sums_ok = np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6
    masks = [model.sam1.last_mask, model.sam2.last_mask, model.cam.last_mask]
    masks_ok = all(m.min() > 0.0 and m.max() < 1.0 for m in masks)

    capture = model.forward_with_capture(Tensor(images, dtype=np.float64))
    grads = feature_gradient(capture, list(labels))
    feats = np.asarray(capture.features.data)
    l_ok, bounds_ok, degenerate = True, True, 0
    for i in range(1000):
        low = low_res_map(feats[i], channel_weights(grads[i]))
        l_ok = l_ok and low.min() >= 0.0
        hot = to_hot(low, 24, 64)
        if hot.max() == 0.0:
            degenerate += 1
            bounds_ok = bounds_ok and not hot.any()
        else:
            bounds_ok = bounds_ok and hot.min() == 0.0 and hot.max() == 1.0
    elapsed = time.perf_counter() - t0
    ok = sums_ok and masks_ok and l_ok and bounds_ok and elapsed < 60.0
    _verdict(5, ok, f"1000 samples: softmax sums +-1e-6, masks in (0,1), "
                    f"L >= 0, hot in [0,1] hitting both bounds "
                    f"({degenerate} degenerate maps) ({elapsed:.1f} s)")


# --- 6 and 7. recovery and accuracy trend (shared harness) --------------------

N_SEEDS = 5
PLANTED_Q = 12


@pytest.fixture(scope="module")
def five_seed_runs(tmp_path_factory):
    runs = []
    seed0_dataset = None
    t0 = time.perf_counter()
    for seed in range(N_SEEDS):
        out = tmp_path_factory.mktemp(f"seed{seed}")
        cfg = SynthConfig(seed=seed)
        planted = set(ground_truth(cfg))
        res = run_pipeline(out, synth_config=cfg,
                           train_config=TrainConfig(epochs=30, seed=seed),
                           q_values=(4, PLANTED_Q),
                           export_pgm=False, export_csv=False)
        if seed == 0:
            seed0_dataset = res.dataset
        runs.append({
            "seed": seed,
            "planted": planted,
            "recovered": len(planted & set(res.ranking.order[:PLANTED_Q])),
            "acc4": res.reports[4].accuracy,
            "acc12": res.reports[PLANTED_Q].accuracy,
            "acc_full": res.full_report.accuracy,
        })
    return runs, seed0_dataset, time.perf_counter() - t0


def test_criterion_06_planted_channel_recovery(five_seed_runs):
    runs, seed0_dataset, elapsed = five_seed_runs
    recovered = [r["recovered"] for r in runs]
    chance = PLANTED_Q * PLANTED_Q / 21.0  # random-order expectation
    var_rank = baseline_rank(seed0_dataset, "variance")
    var_recovered = len(runs[0]["planted"] & set(var_rank.order[:PLANTED_Q]))
    ok = (float(np.mean(recovered)) >= 10.0
          and all(r > chance for r in recovered)
          and var_recovered >= 10
          and elapsed < 1800.0)
    _verdict(6, ok, f"recovery per seed {recovered} (mean {np.mean(recovered):.1f} "
                    f">= 10, every seed > {chance:.1f}); variance baseline "
                    f"pre-check {var_recovered}/12; harness {elapsed / 60:.1f} min")


def test_criterion_07_accuracy_vs_q_trend(five_seed_runs):
    runs, _, _ = five_seed_runs
    mean4 = float(np.mean([r["acc4"] for r in runs]))
    mean12 = float(np.mean([r["acc12"] for r in runs]))
    mean_full = float(np.mean([r["acc_full"] for r in runs]))
    ok = abs(mean_full - mean12) <= 3.0 and mean4 < mean12
    _verdict(7, ok, f"mean accuracy Q=4 {mean4:.2f} < Q=12 {mean12:.2f} "
                    f"within 3 points of Q=21 {mean_full:.2f} "
                    f"(budget shared with criterion 6)")


# --- 8. identity selection ----------------------------------------------------

def test_criterion_08_identity_selection(tmp_path):
    t0 = time.perf_counter()
    cfg = SynthConfig(seed=7, n_sessions=4, segments_per_class=10)
    tc = TrainConfig(epochs=15, seed=7)
    res = run_pipeline(tmp_path / "pipe", synth_config=cfg, train_config=tc,
                       q_values=(21,), export_pgm=False, export_csv=False)

    # no-selection training, assembled by hand from the same parts
    ds = res.dataset
    train_set, test_set = split(ds, tc)
    model = CnnCsaModel(input_height=4 * ds.n_channels, input_width=64,
                        seed=tc.seed, dtype=np.float32)
    train(model, train_set, tc)
    report = evaluate(model, test_set, tc.eval_batch, seed=tc.seed)
    save_report(tmp_path / "report_direct.json", report)

    q21 = (tmp_path / "pipe" / "report_q21.json").read_bytes()
    full = (tmp_path / "pipe" / "report_full.json").read_bytes()
    direct = (tmp_path / "report_direct.json").read_bytes()
    elapsed = time.perf_counter() - t0
    ok = q21 == full == direct and elapsed < 600.0
    _verdict(8, ok, f"Q=21 report byte-identical to selection-free training "
                    f"({elapsed / 60:.1f} min)")


# --- 9. determinism -----------------------------------------------------------

def _cli_chain(root):
    synth, prep = root / "synth", root / "prep"
    trained, cam, sel = root / "trained", root / "cam", root / "sel"
    red, fit, ev = root / "red", root / "fit", root / "ev"
    for args in (
        ["synth", "--out", str(synth), "--seed", "3", "--sessions", "2",
         "--segments-per-class", "2"],
        ["preprocess", "--in", str(synth / "recording.eegr"), "--out", str(prep)],
        ["train", "--in", str(prep / "epochs.eege"), "--out", str(trained),
         "--seed", "3", "--epochs", "2"],
        ["gradcam", "--in", str(prep / "epochs.eege"),
         "--model", str(trained / "model.camw"), "--out", str(cam),
         "--seed", "3", "--no-pgm"],
        ["select", "--in", str(cam / "allhot.csv"), "--out", str(sel),
         "--q", "4"],
        ["reduce", "--in", str(prep / "epochs.eege"),
         "--ranking", str(sel / "ranking_q4.json"), "--out", str(red)],
        ["train", "--in", str(red / "epochs_q4.eege"), "--out", str(fit),
         "--seed", "3", "--epochs", "2"],
        ["evaluate", "--in", str(red / "epochs_q4.eege"),
         "--model", str(fit / "model.camw"), "--out", str(ev), "--seed", "3"],
    ):
        assert cli_main(args) == 0, args
    return {
        "ranking": (sel / "ranking_q4.json").read_bytes(),
        "model_full": (trained / "model.camw").read_bytes(),
        "model_q4": (fit / "model.camw").read_bytes(),
        "report_full": (trained / "report.json").read_bytes(),
        "report_q4": (fit / "report.json").read_bytes(),
        "report_eval": (ev / "report.json").read_bytes(),
        "loss": (trained / "loss.csv").read_bytes(),
    }


def test_criterion_09_cli_determinism(tmp_path):
    first = _cli_chain(tmp_path / "a")
    second = _cli_chain(tmp_path / "b")
    same = [k for k in first if first[k] == second[k]]
    ok = len(same) == len(first)
    _verdict(9, ok, f"repeated CLI chain byte-identical on "
                    f"{len(same)}/{len(first)} artifacts "
                    f"(ranking, checkpoints, reports)")


# --- 10. preprocessing spectra -------------------------------------------------

def test_criterion_10_filter_spectra():
    t0 = time.perf_counter()
    sr = 256.0
    t = np.arange(int(24 * sr)) / sr
    margin = 1800  # discard filter edge transients

    def interior_rms(x):
        return float(np.sqrt(np.mean(x[margin:-margin] ** 2)))

    tone50 = np.sin(2 * np.pi * 50.0 * t)
    tone10 = np.sin(2 * np.pi * 10.0 * t)
    dc = np.ones_like(t)

    notch_ratio = interior_rms(notch_filter(tone50)) / interior_rms(tone50)
    gain10 = interior_rms(bandpass_filter(tone10)) / interior_rms(tone10)
    dc_residual = interior_rms(bandpass_filter(dc))
    elapsed = time.perf_counter() - t0
    ok = (notch_ratio <= 10 ** (-30 / 20.0)
          and abs(gain10 - 1.0) <= 0.05
          and dc_residual < 0.01
          and elapsed < 10.0)
    _verdict(10, ok, f"50 Hz notched to {20 * np.log10(max(notch_ratio, 1e-12)):.1f} dB, "
                     f"10 Hz gain {gain10:.3f}, DC residual {dc_residual:.2e} "
                     f"({elapsed:.1f} s)")
