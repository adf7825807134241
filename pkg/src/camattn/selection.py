"""Channel scoring and selection from averaged activation maps.

Per-class hot maps are averaged, the four class means are averaged again
(unweighted, so class imbalance cannot skew the result), each channel is
scored by summing its four-row block of the combined map, and the top Q
channels by score are kept.  Reduced datasets keep rows in canonical
electrode order, which makes selection with Q equal to the full channel
count an exact identity.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gradcam import ActivationMap
from .preproc import CHANNEL_NAMES, CLASS_NAMES, Epoch, EpochDataset
from .seeding import derive_rng

N_CLASSES = 4
ROWS_PER_CHANNEL = 4


@dataclass
class ClassActivationSet:
    per_class_mean: np.ndarray  # [4, H, W]
    counts: tuple  # samples per class
    all_hot: np.ndarray  # [H, W] mean of the four class means


@dataclass
class ChannelRanking:
    scores: np.ndarray  # per channel, canonical row order
    order: tuple  # channel indices, descending score
    q: int | None = None
    selected: tuple = field(default_factory=tuple)
    selected_names: tuple = field(default_factory=tuple)


def average_class_maps(maps) -> ClassActivationSet:
    """Average hot maps per class, then across the four class means.

    Accepts ActivationMap objects or (values, class_id) pairs.
    """
    sums = None
    counts = [0] * N_CLASSES
    for item in maps:
        if isinstance(item, ActivationMap):
            values, class_id = item.values, item.class_id
        else:
            values, class_id = item
        values = np.asarray(values, dtype=np.float64)
        if not 0 <= class_id < N_CLASSES:
            raise ValueError(f"class id out of range 0..{N_CLASSES - 1}: {class_id}")
        if sums is None:
            sums = np.zeros((N_CLASSES,) + values.shape)
        if values.shape != sums.shape[1:]:
            raise ValueError(
                f"map shape {values.shape} does not match earlier maps {sums.shape[1:]}"
            )
        sums[class_id] += values
        counts[class_id] += 1
    for c, n in enumerate(counts):
        if n == 0:
            raise ValueError(f"no maps for class {CLASS_NAMES[c]} ({c})")
    per_class = sums / np.asarray(counts, dtype=np.float64)[:, None, None]
    return ClassActivationSet(
        per_class_mean=per_class,
        counts=tuple(counts),
        all_hot=per_class.mean(axis=0),
    )


def rank_channels(all_hot: np.ndarray) -> ChannelRanking:
    """Score each channel's four-row block sum and sort descending.

    Ties break toward the lower channel index so the order is total.
    """
    m = np.asarray(all_hot, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got {m.shape}")
    if m.shape[0] % ROWS_PER_CHANNEL != 0:
        raise ValueError(
            f"map height {m.shape[0]} is not a multiple of {ROWS_PER_CHANNEL} rows per channel"
        )
    n_ch = m.shape[0] // ROWS_PER_CHANNEL
    scores = m.reshape(n_ch, ROWS_PER_CHANNEL, m.shape[1]).sum(axis=(1, 2))
    order = tuple(sorted(range(n_ch), key=lambda c: (-scores[c], c)))
    return ChannelRanking(scores=scores, order=order)


def select_top_q(ranking: ChannelRanking, q: int, channel_names=None) -> ChannelRanking:
    """Fix Q on a ranking: keep the first Q channels of the order."""
    n_ch = len(ranking.order)
    if not 1 <= q <= n_ch:
        raise ValueError(f"Q must be in 1..{n_ch}, got {q}")
    if channel_names is None:
        channel_names = CHANNEL_NAMES if n_ch == len(CHANNEL_NAMES) \
            else tuple(str(i) for i in range(n_ch))
    selected = tuple(ranking.order[:q])
    return ChannelRanking(
        scores=ranking.scores,
        order=ranking.order,
        q=q,
        selected=selected,
        selected_names=tuple(channel_names[c] for c in selected),
    )


def reduce_dataset(dataset: EpochDataset, selected) -> EpochDataset:
    """Keep only the selected channel rows, in canonical (ascending) order.

    ``selected`` holds row positions within this dataset.  Selecting every
    row returns an identical dataset, so selection at full Q is a no-op.
    """
    n_ch = dataset.n_channels
    positions = sorted(set(int(c) for c in selected))
    if len(positions) != len(tuple(selected)):
        raise ValueError("selected channels contain duplicates")
    if not positions:
        raise ValueError("selected channel set is empty")
    if positions[0] < 0 or positions[-1] >= n_ch:
        raise ValueError(
            f"selected channels {positions} not a subset of the dataset's 0..{n_ch - 1}"
        )
    subset = tuple(dataset.channel_subset[p] for p in positions)
    names = tuple(dataset.channel_names[p] for p in positions)
    epochs = [
        Epoch(
            data=np.ascontiguousarray(ep.data[positions]),
            label=ep.label,
            session=ep.session,
            channel_subset=subset,
        )
        for ep in dataset.epochs
    ]
    return EpochDataset(epochs=epochs, provenance=dataset.provenance, channel_names=names)


def baseline_rank(dataset: EpochDataset, method: str = "variance",
                  seed: int | None = None) -> ChannelRanking:
    """Reference rankings: per-channel signal variance, or a seeded shuffle."""
    if len(dataset) == 0:
        raise ValueError("dataset has no epochs")
    n_ch = dataset.n_channels
    if method == "variance":
        x = dataset.stack().astype(np.float64)
        scores = x.var(axis=2).mean(axis=0)
        order = tuple(sorted(range(n_ch), key=lambda c: (-scores[c], c)))
    elif method == "random":
        rng = derive_rng(0 if seed is None else seed, "baseline")
        perm = tuple(int(v) for v in rng.permutation(n_ch))
        scores = np.zeros(n_ch)
        for rank, c in enumerate(perm):
            scores[c] = float(n_ch - rank)
        order = perm
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    return ChannelRanking(scores=scores, order=order)


# -- ranking JSON ------------------------------------------------------------


def ranking_to_json(ranking: ChannelRanking) -> str:
    if ranking.q is None:
        raise ValueError("fix Q with select_top_q before serializing a ranking")
    payload = {
        "scores": [float(s) for s in ranking.scores],
        "order": [int(c) for c in ranking.order],
        "q": int(ranking.q),
        "selected_names": list(ranking.selected_names),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_ranking(path, ranking: ChannelRanking) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(ranking_to_json(ranking))
        fh.write("\n")


def load_ranking(path, channel_names=None) -> ChannelRanking:
    with open(path, "r", encoding="ascii") as fh:
        payload = json.loads(fh.read())
    order = tuple(int(c) for c in payload["order"])
    ranking = ChannelRanking(
        scores=np.asarray(payload["scores"], dtype=np.float64),
        order=order,
    )
    return select_top_q(ranking, int(payload["q"]), channel_names)
