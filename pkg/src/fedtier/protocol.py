"""Protocol vocabulary: data profiles, model descriptors, update/request
messages, profile similarity, and the binary wire format for parameters.

Wire format (little endian), also used for on-disk model snapshots:
  u16 format version | u32 tensor count
  per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims... | f64 values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CodecShapeError, CodecTruncatedError, CodecVersionError
from .nn import CnnArch, ModelParams

FORMAT_VERSION = 1

HIST_TOL = 1e-9


@dataclass(frozen=True)
class DataProfile:
    """Normalized label histogram plus sample count; the protocol's match key."""

    label_hist: tuple[float, ...]
    sample_count: int

    def __post_init__(self) -> None:
        if len(self.label_hist) != 10:
            raise ValueError("label_hist must have 10 entries")
        if any(v < 0 for v in self.label_hist):
            raise ValueError("label_hist entries must be >= 0")
        if abs(sum(self.label_hist) - 1.0) > HIST_TOL:
            raise ValueError(f"label_hist must sum to 1, got {sum(self.label_hist)}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def hist_array(self) -> np.ndarray:
        return np.asarray(self.label_hist, dtype=np.float64)

    def support(self) -> set[int]:
        return {i for i, v in enumerate(self.label_hist) if v > 0}


@dataclass
class ModelDescriptor:
    """Identity and bookkeeping of one global model in the fedge registry."""

    model_id: int
    version: int
    profile: DataProfile
    cumulative_weight: float


@dataclass
class ModelUpdate:
    """Trained parameters travelling upward from a client."""

    model_id: int
    params: ModelParams
    sample_count: int
    profile: DataProfile
    client_id: int
    round_no: int


@dataclass
class ModelRequest:
    client_id: int
    profile: DataProfile
    round_no: int


@dataclass
class ModelResponse:
    model_id: int
    params: ModelParams
    version: int
    freshly_created: bool


def profile_of(dataset) -> DataProfile:
    """Label histogram of a LabeledSet."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot profile an empty dataset")
    counts = np.bincount(dataset.labels, minlength=10).astype(np.float64)
    return DataProfile(tuple(counts / n), n)


def profile_similarity(a: DataProfile, b: DataProfile) -> float:
    """Cosine similarity of the label histograms, clipped to [0, 1]."""
    va, vb = a.hist_array(), b.hist_array()
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm histogram")
    return float(min(max(float(va @ vb) / (na * nb), 0.0), 1.0))


def merge_profiles(a: DataProfile, wa: float, b: DataProfile, wb: float) -> DataProfile:
    """Weighted average of histograms; sample counts add."""
    if wa <= 0 or wb <= 0:
        raise ValueError("merge weights must be positive")
    hist = (wa * a.hist_array() + wb * b.hist_array()) / (wa + wb)
    hist = hist / hist.sum()  # keep the sum-to-one invariant against fp drift
    return DataProfile(tuple(hist), a.sample_count + b.sample_count)


# ---------------------------------------------------------------------------
# Parameter codec
# ---------------------------------------------------------------------------

def encode_params(params: ModelParams) -> bytes:
    """Serialize parameters; decode_params(encode_params(p)) is bit-identical."""
    parts = [struct.pack("<HI", FORMAT_VERSION, len(params.entries))]
    for name, tensor in params.entries:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CodecTruncatedError(
                f"payload truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def decode_params(data: bytes, arch: CnnArch) -> ModelParams:
    """Parse a payload and check it against the architecture layout."""
    cur = _Cursor(data)
    version, count = struct.unpack("<HI", cur.take(6))
    if version != FORMAT_VERSION:
        raise CodecVersionError(f"unsupported format version {version}")
    expected = arch.param_layout()
    if count != len(expected):
        raise CodecShapeError(f"payload has {count} tensors, architecture has {len(expected)}")
    entries = []
    for exp_name, exp_shape in expected:
        (name_len,) = struct.unpack("<H", cur.take(2))
        name = cur.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", cur.take(1))
        shape = struct.unpack(f"<{rank}I", cur.take(4 * rank))
        if name != exp_name or shape != exp_shape:
            raise CodecShapeError(
                f"tensor {name}{shape} does not match architecture {exp_name}{exp_shape}"
            )
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(cur.take(8 * size), dtype="<f8").reshape(shape)
        entries.append((name, values.astype(np.float64)))
    if cur.pos != len(data):
        raise CodecTruncatedError(f"{len(data) - cur.pos} trailing bytes after last tensor")
    return ModelParams(entries)


def encoded_size(arch: CnnArch) -> int:
    """Payload size in bytes for one parameter set of this architecture."""
    total = 6
    for name, shape in arch.param_layout():
        total += 2 + len(name.encode("utf-8")) + 1 + 4 * len(shape) + 8 * int(np.prod(shape))
    return total
