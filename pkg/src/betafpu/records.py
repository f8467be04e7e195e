"""Sampled trajectories in memory and on disk.

Binary framing, little-endian throughout::

    b"FPU1" | N:int64 | beta:float64 | dt:float64 | stride:int64
    then per sample: t:float64 followed by the payload

Payloads: site trajectories carry N doubles q then N doubles p; mode records
carry N complex Q then N complex P as (re, im) pairs; filtered fields carry
N doubles. The reader has to be told which payload to expect.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .modes import dispersion, transform

MAGIC = b"FPU1"
_HEADER = struct.Struct("<4sqddq")

# doubles per sample after t, as a multiple of N
PAYLOAD_WIDTH = {"trajectory": 2, "modes": 4, "field": 1}


class RecordFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RecordHeader:
    N: int
    beta: float
    dt: float
    stride: int

    @property
    def sample_interval(self) -> float:
        return self.dt * self.stride


@dataclass
class TrajectoryRecord:
    """A block of consecutive site-space samples; q and p are shaped (m, N)."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    header: RecordHeader

    def __len__(self) -> int:
        return self.t.size


@dataclass
class ModeRecord:
    """A block of consecutive mode-space samples; Q and P are shaped (m, N)."""

    t: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    header: RecordHeader

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def from_trajectory(cls, rec: TrajectoryRecord) -> "ModeRecord":
        Q, P = transform(rec.q, rec.p)
        return cls(rec.t, Q, P, rec.header)


class Collector:
    """Sink that keeps every block in memory as TrajectoryRecord objects."""

    def __init__(self, header: RecordHeader):
        self.header = header
        self.blocks: list[TrajectoryRecord] = []

    def __call__(self, t, q, p):
        self.blocks.append(TrajectoryRecord(t, q, p, self.header))

    def trajectory(self) -> TrajectoryRecord:
        return concat_trajectory(self.blocks)

    def modes(self) -> list[ModeRecord]:
        return [ModeRecord.from_trajectory(b) for b in self.blocks]


def concat_trajectory(blocks: Iterable[TrajectoryRecord]) -> TrajectoryRecord:
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no samples")
    return TrajectoryRecord(
        np.concatenate([b.t for b in blocks]),
        np.concatenate([b.q for b in blocks]),
        np.concatenate([b.p for b in blocks]),
        blocks[0].header,
    )


class RecordWriter:
    """Appends samples to a binary record file; usable as an integration sink.

    kind="trajectory" writes (q, p); kind="modes" transforms each block to
    (Q, P) before writing; kind="field" expects a single (m, N) array.
    """

    def __init__(self, path, header: RecordHeader, kind: str = "trajectory"):
        if kind not in PAYLOAD_WIDTH:
            raise ValueError(f"unknown record kind {kind!r}")
        self.path = Path(path)
        self.header = header
        self.kind = kind
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, header.N, header.beta, header.dt, header.stride))
        self.samples = 0

    def __call__(self, t, q, p=None):
        t = np.asarray(t, dtype="<f8").reshape(-1, 1)
        if self.kind == "trajectory":
            rows = np.hstack([t, q, p])
        elif self.kind == "modes":
            Q, P = transform(q, p)
            rows = np.hstack([t, _interleave(Q), _interleave(P)])
        else:
            rows = np.hstack([t, q])
        self._fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
        self.samples += t.shape[0]

    def write_modes(self, t, Q, P):
        """Write already transformed mode samples (kind='modes' only)."""
        t = np.asarray(t, dtype="<f8").reshape(-1, 1)
        rows = np.hstack([t, _interleave(Q), _interleave(P)])
        self._fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
        self.samples += t.shape[0]

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _interleave(Z: np.ndarray) -> np.ndarray:
    out = np.empty(Z.shape[:-1] + (2 * Z.shape[-1],))
    out[..., 0::2] = Z.real
    out[..., 1::2] = Z.imag
    return out


def read_header(path) -> RecordHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise RecordFormatError(f"{path}: truncated header")
    magic, N, beta, dt, stride = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise RecordFormatError(f"{path}: bad magic {magic!r}")
    return RecordHeader(int(N), float(beta), float(dt), int(stride))


def _iter_rows(path, kind: str, block: int) -> Iterator[tuple[RecordHeader, np.ndarray]]:
    header = read_header(path)
    width = 1 + PAYLOAD_WIDTH[kind] * header.N
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        while True:
            raw = fh.read(8 * width * block)
            if not raw:
                break
            if len(raw) % (8 * width):
                raise RecordFormatError(f"{path}: truncated sample (is this a {kind} record?)")
            yield header, np.frombuffer(raw, dtype="<f8").reshape(-1, width)


def iter_trajectory(path, block: int = 8192) -> Iterator[TrajectoryRecord]:
    for header, rows in _iter_rows(path, "trajectory", block):
        N = header.N
        yield TrajectoryRecord(rows[:, 0].copy(), rows[:, 1 : 1 + N].copy(), rows[:, 1 + N :].copy(), header)


def iter_modes(path, block: int = 8192) -> Iterator[ModeRecord]:
    for header, rows in _iter_rows(path, "modes", block):
        N = header.N
        body = rows[:, 1:]
        Q = body[:, 0 : 2 * N : 2] + 1j * body[:, 1 : 2 * N : 2]
        P = body[:, 2 * N :: 2] + 1j * body[:, 2 * N + 1 :: 2]
        yield ModeRecord(rows[:, 0].copy(), Q, P, header)


def read_field(path) -> tuple[RecordHeader, np.ndarray, np.ndarray]:
    """Whole filtered-field file as (header, t, values shaped (m, N))."""
    parts = list(_iter_rows(path, "field", 1 << 16))
    header = read_header(path)
    if not parts:
        return header, np.empty(0), np.empty((0, header.N))
    rows = np.concatenate([r for _, r in parts])
    return header, rows[:, 0].copy(), rows[:, 1:].copy()


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, columns: list[str], rows: Iterable[Iterable]) -> None:
    """Header row plus data; floats in repr form, '.' decimal, LF endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_snapshot_csv(path, q: np.ndarray, p: np.ndarray, e: np.ndarray) -> None:
    write_csv(path, ["site", "q", "p", "e"], zip(range(q.size), q, p, e))


def write_mode_csv(path, Q: np.ndarray, P: np.ndarray) -> None:
    """One row per mode k = 1..N-1; the zero mode has no frequency."""
    N = Q.size
    w = dispersion(N)
    rows = ((k, w[k - 1], Q[k].real, Q[k].imag, P[k].real, P[k].imag) for k in range(1, N))
    write_csv(path, ["k", "omega_k", "re_Q", "im_Q", "re_P", "im_P"], rows)
