"""Signal conditioning and epoch extraction for multi-channel recordings.

The chain mirrors a standard evoked-response protocol: zero-phase FIR
bandpass (0.5-50 Hz), zero-phase FIR band-stop around the 50 Hz mains
line, 2x downsampling (256 -> 128 Hz), then slicing each labeled segment
into consecutive non-overlapping 2 s epochs.  A 21-channel recording cut
into 2 s epochs at 128 Hz gives 21x256 matrices that fold into 84x64
images, four rows per channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import firwin, oaconvolve

CHANNEL_NAMES = (
    "Fz", "Cz", "Pz", "T3", "T4", "C3", "C4", "Fp1", "Fp2", "F7", "F8",
    "T5", "T6", "O1", "O2", "F3", "F4", "P3", "P4", "A1", "A2",
)
CLASS_NAMES = ("sour", "sweet", "bitter", "salty")

RAW_RATE = 256.0
TARGET_RATE = 128.0
EPOCH_SECONDS = 2.0
IMAGE_WIDTH = 64


@dataclass(frozen=True)
class Segment:
    """One labeled stretch of a recording, indexed in raw samples."""

    start: int
    duration: int
    label: int
    session: int


@dataclass
class EegRecording:
    channels: tuple
    sample_rate: float
    samples: np.ndarray  # [C, T] microvolts
    segments: list = field(default_factory=list)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be [channels, time], got {self.samples.shape}")
        if len(self.channels) != self.samples.shape[0]:
            raise ValueError(
                f"{len(self.channels)} channel names but {self.samples.shape[0]} signal rows"
            )
        total = self.samples.shape[1]
        for seg in self.segments:
            if seg.start < 0 or seg.start + seg.duration > total:
                raise ValueError(f"segment {seg} lies outside the {total}-sample recording")
            if seg.label not in (0, 1, 2, 3):
                raise ValueError(f"segment label must be 0..3, got {seg.label}")


@dataclass
class Epoch:
    data: np.ndarray  # [C, T]
    label: int
    session: int
    channel_subset: tuple


@dataclass
class EpochDataset:
    epochs: list
    provenance: str = ""
    channel_names: tuple = CHANNEL_NAMES

    def __post_init__(self):
        self.channel_names = tuple(self.channel_names)
        if self.epochs:
            subset = self.epochs[0].channel_subset
            t = self.epochs[0].data.shape[1]
            for ep in self.epochs:
                if ep.channel_subset != subset or ep.data.shape != (len(subset), t):
                    raise ValueError("all epochs must share channel subset and length")

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def n_channels(self) -> int:
        return self.epochs[0].data.shape[0] if self.epochs else 0

    @property
    def samples_per_epoch(self) -> int:
        return self.epochs[0].data.shape[1] if self.epochs else 0

    @property
    def channel_subset(self) -> tuple:
        return self.epochs[0].channel_subset if self.epochs else ()

    def labels(self) -> np.ndarray:
        return np.array([ep.label for ep in self.epochs], dtype=np.int64)

    def sessions(self) -> np.ndarray:
        return np.array([ep.session for ep in self.epochs], dtype=np.int64)

    def stack(self) -> np.ndarray:
        """All epochs as one [N, C, T] array."""
        return np.stack([ep.data for ep in self.epochs])

    def images(self, dtype=np.float32) -> np.ndarray:
        """Folded [N, H, 64, 1] image batch ready for the model."""
        x = self.stack().astype(dtype, copy=False)
        n, c, t = x.shape
        return x.reshape(n, c * t // IMAGE_WIDTH, IMAGE_WIDTH, 1)

    def subset(self, indices) -> "EpochDataset":
        """New dataset holding only the epochs at ``indices``, in order."""
        return EpochDataset(
            epochs=[self.epochs[i] for i in indices],
            provenance=self.provenance,
            channel_names=self.channel_names,
        )


# -- FIR filters ----------------------------------------------------------


def _fir_order(sample_rate: float, transition_hz: float = 1.0) -> int:
    # Hamming-window sinc needs roughly 3.3/width normalized taps; round the
    # order up to the next even integer so the filter is symmetric (type I)
    order = int(np.ceil(3.3 * sample_rate / transition_hz))
    return order + (order % 2)

def _zero_phase(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # forward-backward filtering collapses to one pass with the kernel's
    # autocorrelation, which is symmetric, hence exactly zero phase; the
    # signal is zero-extended, so one filter length at each end is edge
    squared = np.convolve(taps, taps[::-1])
    y = oaconvolve(x[None] if x.ndim == 1 else x, squared[None], mode="same", axes=-1)
    y = y.astype(np.result_type(x.dtype, np.float32), copy=False)
    return y[0] if x.ndim == 1 else y


def _check_band(low: float, high: float, sample_rate: float) -> None:
    nyq = sample_rate / 2.0
    if not (0.0 < low < high < nyq):
        raise ValueError(
            f"band edges must satisfy 0 < {low} < {high} < Nyquist {nyq}"
        )


def bandpass_filter(signal, low: float = 0.5, high: float = 50.0,
                    sample_rate: float = RAW_RATE) -> np.ndarray:
    """Zero-phase Hamming-sinc bandpass; output length equals input length."""
    _check_band(low, high, sample_rate)
    x = np.asarray(signal)
    taps = firwin(_fir_order(sample_rate) + 1, [low, high], window="hamming",
                  pass_zero=False, fs=sample_rate)
    return _zero_phase(x, taps)


def notch_filter(signal, low_edge: float = 49.0, high_edge: float = 51.0,
                 sample_rate: float = RAW_RATE) -> np.ndarray:
    """Zero-phase band-stop around the mains line."""
    _check_band(low_edge, high_edge, sample_rate)
    x = np.asarray(signal)
    taps = firwin(_fir_order(sample_rate) + 1, [low_edge, high_edge],
                  window="hamming", pass_zero=True, fs=sample_rate)
    return _zero_phase(x, taps)


def downsample(signal) -> np.ndarray:
    """Keep every second sample starting at index 0 (256 -> 128 Hz).

    Odd-length input simply yields ceil(n/2) samples; no error.
    """
    return np.asarray(signal)[..., ::2]


# -- epoching and folding --------------------------------------------------


def epoch(recording: EegRecording, epoch_seconds: float = EPOCH_SECONDS) -> EpochDataset:
    """Cut each labeled segment into consecutive non-overlapping epochs."""
    ep_len = int(round(epoch_seconds * recording.sample_rate))
    if ep_len < 1:
        raise ValueError("epoch length must cover at least one sample")
    known = all(name in CHANNEL_NAMES for name in recording.channels)
    subset = tuple(CHANNEL_NAMES.index(n) for n in recording.channels) if known \
        else tuple(range(len(recording.channels)))
    epochs = []
    for seg in recording.segments:
        if seg.duration < ep_len:
            raise ValueError(
                f"segment at {seg.start} is {seg.duration} samples, shorter than one "
                f"{ep_len}-sample epoch"
            )
        for k in range(seg.duration // ep_len):
            a = seg.start + k * ep_len
            epochs.append(Epoch(
                data=np.ascontiguousarray(recording.samples[:, a:a + ep_len]),
                label=seg.label,
                session=seg.session,
                channel_subset=subset,
            ))
    return EpochDataset(epochs=epochs, channel_names=recording.channels)


def preprocess_recording(recording: EegRecording,
                         low: float = 0.5, high: float = 50.0,
                         notch_low: float = 49.0, notch_high: float = 51.0,
                         epoch_seconds: float = EPOCH_SECONDS) -> EpochDataset:
    """Full conditioning chain: bandpass, notch, downsample, epoch.

    Filters run over the continuous recording before any slicing so epoch
    boundaries carry no filter edge artifacts of their own.
    """
    sr = recording.sample_rate
    x = bandpass_filter(recording.samples, low, high, sr)
    x = notch_filter(x, notch_low, notch_high, sr)
    x = downsample(x)
    halved = EegRecording(
        channels=recording.channels,
        sample_rate=sr / 2.0,
        samples=x,
        segments=[
            Segment(seg.start // 2, seg.duration // 2, seg.label, seg.session)
            for seg in recording.segments
        ],
    )
    ds = epoch(halved, epoch_seconds)
    ds.provenance = f"preproc(bp={low}-{high},notch={notch_low}-{notch_high},ds=2)"
    return ds


def fold_to_image(data: np.ndarray) -> np.ndarray:
    """Reshape one C x T epoch into rows of 64 samples, T//64 rows per
    channel stacked top to bottom (21x256 -> 84x64)."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"expected a [channels, time] matrix, got {data.shape}")
    c, t = data.shape
    if t % IMAGE_WIDTH != 0:
        raise ValueError(f"epoch length {t} is not divisible by {IMAGE_WIDTH}")
    return data.reshape(c * t // IMAGE_WIDTH, IMAGE_WIDTH)


def unfold_image(image: np.ndarray, n_channels: int) -> np.ndarray:
    """Inverse of fold_to_image."""
    image = np.asarray(image)
    h, w = image.shape
    if w != IMAGE_WIDTH or h % n_channels != 0:
        raise ValueError(f"cannot unfold {image.shape} into {n_channels} channels")
    return image.reshape(n_channels, h * w // n_channels)


# -- file formats ----------------------------------------------------------

_REC_MAGIC = b"EEGR1\n"
_EPOCH_MAGIC = b"EEGE1\n"


def _json_line(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def save_recording(path, recording: EegRecording) -> None:
    header = _json_line({
        "channels": list(recording.channels),
        "sample_rate": recording.sample_rate,
        "n_samples": int(recording.samples.shape[1]),
        "segments": [[s.start, s.duration, s.label, s.session] for s in recording.segments],
    })
    with open(path, "wb") as fh:
        fh.write(_REC_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(recording.samples, dtype="<f4").tobytes())


def load_recording(path) -> EegRecording:
    with open(path, "rb") as fh:
        magic = fh.read(len(_REC_MAGIC))
        if magic != _REC_MAGIC:
            raise ValueError(f"{path}: bad magic at byte 0, not a recording file")
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise ValueError(f"{path}: truncated header at byte {len(magic) + len(line)}")
        try:
            meta = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: unparseable header: {exc}") from exc
        c, t = len(meta["channels"]), int(meta["n_samples"])
        raw = fh.read(4 * c * t)
        if len(raw) != 4 * c * t:
            raise ValueError(
                f"{path}: truncated signal data at byte {len(magic) + len(line) + len(raw)}"
            )
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after signal data")
    samples = np.frombuffer(raw, dtype="<f4").reshape(c, t)
    return EegRecording(
        channels=tuple(meta["channels"]),
        sample_rate=float(meta["sample_rate"]),
        samples=samples.copy(),
        segments=[Segment(*row) for row in meta["segments"]],
    )


def save_epochs(path, dataset: EpochDataset) -> None:
    header = _json_line({
        "n_epochs": len(dataset),
        "n_channels": dataset.n_channels,
        "samples_per_epoch": dataset.samples_per_epoch,
        "labels": [int(v) for v in dataset.labels()],
        "sessions": [int(v) for v in dataset.sessions()],
        "channel_subset": list(dataset.channel_subset),
        "channel_names": list(dataset.channel_names),
        "provenance": dataset.provenance,
    })
    with open(path, "wb") as fh:
        fh.write(_EPOCH_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(dataset.stack(), dtype="<f4").tobytes())


def load_epochs(path) -> EpochDataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(_EPOCH_MAGIC))
        if magic != _EPOCH_MAGIC:
            raise ValueError(f"{path}: bad magic at byte 0, not an epoch dataset file")
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise ValueError(f"{path}: truncated header at byte {len(magic) + len(line)}")
        try:
            meta = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: unparseable header: {exc}") from exc
        n, c, t = int(meta["n_epochs"]), int(meta["n_channels"]), int(meta["samples_per_epoch"])
        raw = fh.read(4 * n * c * t)
        if len(raw) != 4 * n * c * t:
            raise ValueError(
                f"{path}: truncated epoch data at byte {len(magic) + len(line) + len(raw)}"
            )
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after epoch data")
    flat = np.frombuffer(raw, dtype="<f4").reshape(n, c, t)
    subset = tuple(meta["channel_subset"])
    epochs = [
        Epoch(data=flat[i].copy(), label=int(meta["labels"][i]),
              session=int(meta["sessions"][i]), channel_subset=subset)
        for i in range(n)
    ]
    return EpochDataset(
        epochs=epochs,
        provenance=meta.get("provenance", ""),
        channel_names=tuple(meta["channel_names"]),
    )
