"""LSV1 binary volumes and CSV metric reports.

Layout: a 19-byte little-endian header (``b"LSV1"``, kind u8, dims 3 x u32,
channels u16) followed by the payload, voxels x-fastest. Label-set maps store
one u64 bitmask per voxel; probability and feature maps store f32 values,
voxel-major then channel. Probability maps are quantized to f32 on write.
"""
from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .exceptions import (
    BadMagic,
    InvalidBitmask,
    NonFiniteValue,
    TruncatedFile,
    VolumeFormatError,
)
from .labelspace import Dims, LabelSetMap, ProbMap, num_voxels

MAGIC = b"LSV1"
HEADER = struct.Struct("<4sB3IH")
HEADER_SIZE = HEADER.size  # 19

KIND_LABELSET = 0
KIND_PROB = 1
KIND_FEATURE = 2

CSV_HEADER = ("case_id", "class_name", "dsc", "hd95_vox")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    dims: Dims
    values: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class VolumeHeader:
    kind: int
    dims: Dims
    channels: int

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.kind, *self.dims, self.channels)

    @classmethod
    def unpack(cls, raw: bytes) -> "VolumeHeader":
        if len(raw) < HEADER_SIZE:
            raise TruncatedFile(f"header needs {HEADER_SIZE} bytes, got {len(raw)}")
        magic, kind, x, y, z, channels = HEADER.unpack(raw[:HEADER_SIZE])
        if magic != MAGIC:
            raise BadMagic(f"expected magic {MAGIC!r}, got {magic!r}")
        if kind not in (KIND_LABELSET, KIND_PROB, KIND_FEATURE):
            raise VolumeFormatError(f"unknown volume kind {kind}")
        if 0 in (x, y, z):
            raise VolumeFormatError(f"dims must be nonzero, got {(x, y, z)}")
        if channels < 1:
            raise VolumeFormatError("channel count must be at least 1")
        return cls(kind, (x, y, z), channels)

    @property
    def payload_size(self) -> int:
        n = num_voxels(self.dims)
        return n * 8 if self.kind == KIND_LABELSET else n * self.channels * 4


Payload = Union[LabelSetMap, ProbMap, FeatureMap]


def _encode(payload: Payload) -> tuple[VolumeHeader, bytes]:
    if isinstance(payload, LabelSetMap):
        header = VolumeHeader(KIND_LABELSET, payload.dims, payload.num_labels)
        return header, payload.masks.astype("<u8").tobytes()
    if isinstance(payload, (ProbMap, FeatureMap)):
        kind = KIND_PROB if isinstance(payload, ProbMap) else KIND_FEATURE
        values = np.asarray(payload.values)
        if values.ndim != 2:
            raise VolumeFormatError(f"expected (N, C) values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue("cannot store non-finite values")
        data = values.astype("<f4")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("values overflow float32")
        return VolumeHeader(kind, payload.dims, values.shape[1]), data.tobytes()
    raise TypeError(f"cannot serialize {type(payload).__name__}")


def write_volume(path, payload: Payload) -> None:
    header, data = _encode(payload)
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(header.pack())
        fh.write(data)
    os.replace(tmp, path)


def decode_volume(raw: bytes) -> Payload:
    header = VolumeHeader.unpack(raw)
    body = raw[HEADER_SIZE:]
    if len(body) < header.payload_size:
        raise TruncatedFile(
            f"payload needs {header.payload_size} bytes, got {len(body)}")
    if len(body) > header.payload_size:
        raise VolumeFormatError(
            f"{len(body) - header.payload_size} unexpected trailing bytes")
    if header.kind == KIND_LABELSET:
        masks = np.frombuffer(body, dtype="<u8").astype(np.uint64)
        if header.channels > 64:
            raise VolumeFormatError("label-set maps support at most 64 channels")
        limit = np.uint64(header.channels)
        if header.channels < 64 and np.any(masks >> limit):
            bad = int(np.argmax(masks >> limit != 0))
            raise InvalidBitmask(
                f"voxel {bad} mask {int(masks[bad]):#x} sets a bit >= {header.channels}")
        if np.any(masks == 0):
            raise InvalidBitmask(f"voxel {int(np.argmax(masks == 0))} has an empty mask")
        return LabelSetMap(masks, header.dims, header.channels)
    n = num_voxels(header.dims)
    values = np.frombuffer(body, dtype="<f4").astype(np.float32).reshape(n, header.channels)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("volume contains non-finite values")
    if header.kind == KIND_PROB:
        return ProbMap(values, header.dims)
    return FeatureMap(header.dims, values)


def read_volume(path) -> Payload:
    with open(path, "rb") as fh:
        return decode_volume(fh.read())


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def write_metrics_csv(path, rows: Iterable[tuple]) -> None:
    """Write ``(case_id, class_name, dsc, hd95)`` rows; undefined hd95 is an empty cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for case_id, class_name, dsc, hd in rows:
            w.writerow([case_id, class_name, _fmt(dsc), _fmt(hd)])


def read_metrics_csv(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != CSV_HEADER:
            raise VolumeFormatError(f"unexpected CSV header {header}")
        return [(c, n, float(d), float(h) if h else None) for c, n, d, h in r]
