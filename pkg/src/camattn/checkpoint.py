"""Flat binary weight checkpoints.

Layout: the magic line ``CAMW1``, a line with the parameter count, one
manifest line per parameter (``name dim0 dim1 ...``), then the raw values as
little-endian 32-bit floats concatenated in manifest order.
"""
from __future__ import annotations

import numpy as np

MAGIC = b"CAMW1\n"


def save_checkpoint(path, named_params) -> None:
    """Write ``[(name, array), ...]`` to ``path`` in manifest order."""
    items = [(str(name), np.asarray(arr)) for name, arr in named_params]
    lines = [MAGIC, f"{len(items)}\n".encode("ascii")]
    for name, arr in items:
        if " " in name or "\n" in name:
            raise ValueError(f"parameter name {name!r} must not contain whitespace")
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} {dims}".rstrip().encode("ascii") + b"\n")
    blob = b"".join(lines)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in items
    )
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as an ordered name -> float32 array mapping."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: bad magic at byte 0, expected {MAGIC!r}")
    offset = len(MAGIC)

    def next_line(off: int) -> tuple[bytes, int]:
        end = raw.find(b"\n", off)
        if end < 0:
            raise ValueError(f"{path}: truncated header at byte {off}")
        return raw[off:end], end + 1

    count_line, offset = next_line(offset)
    try:
        count = int(count_line)
    except ValueError:
        raise ValueError(
            f"{path}: bad parameter count at byte {len(MAGIC)}: {count_line!r}"
        ) from None

    manifest: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        line, offset = next_line(offset)
        parts = line.decode("ascii", errors="replace").split()
        if not parts:
            raise ValueError(f"{path}: empty manifest line at byte {offset}")
        name, dims = parts[0], parts[1:]
        try:
            shape = tuple(int(d) for d in dims)
        except ValueError:
            raise ValueError(
                f"{path}: bad shape for {name!r} at byte {offset}"
            ) from None
        manifest.append((name, shape))

    out: dict[str, np.ndarray] = {}
    for name, shape in manifest:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = n * 4
        if offset + nbytes > len(raw):
            raise ValueError(
                f"{path}: truncated data for {name!r} at byte {offset} "
                f"(need {nbytes} bytes, have {len(raw) - offset})"
            )
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
        out[name] = arr.copy()
        offset += nbytes
    if offset != len(raw):
        raise ValueError(
            f"{path}: {len(raw) - offset} unexpected trailing bytes at byte {offset}"
        )
    return out
