"""Budget planning, uniform quantization, and chunk packet serialization.

Wire layout (normative, big-endian):

    header: magic ``SCM1`` (4 bytes) | chunk_id u32 | N u16 | n_f u16 |
            M u16 | Q u8 | lo f64 | hi f64 | dynamic bitmap ceil(M/8) bytes
    body:   M frame-1 codes (static features carry the quantized chunk
            mean, dynamic features their quantized frame-1 value), then
            (n_f - 1) frames of m_dyn dynamic codes each, features in
            ascending index, packed MSB-first, zero-padded to a byte.

Bitmap bit for feature m is bit (7 - m % 8) of byte m // 8 (MSB-first);
its popcount is the dynamic feature count. Header bytes are protocol
overhead outside the bit budget, which counts coefficient bits only.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    BitmapMismatchError,
    InsufficientBudgetError,
    PacketError,
    TruncatedPacketError,
)
from .selector import SelectionReport
from .trace import ChunkView

MAGIC = b"SCM1"
_HEADER = struct.Struct(">4sIHHHBdd")
HEADER_FIXED_BYTES = _HEADER.size  # 31


@dataclass(frozen=True)
class LinkBudget:
    """Per-chunk transmission capacity: at most floor(tau * rate) bits."""

    tau: float
    rate: float
    budget_bits: int | None = None

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if not (self.rate > 0 and np.isfinite(self.rate)):
            raise ValueError("rate must be positive and finite")
        if self.budget_bits is None:
            object.__setattr__(self, "budget_bits", math.floor(self.tau * self.rate))

    @classmethod
    def from_chunk_bits(cls, bits: int, tau: float = 1e-3) -> "LinkBudget":
        """Budget stated directly as bits per chunk interval (exact, no float floor)."""
        if bits < 1:
            raise ValueError("chunk bit budget must be >= 1")
        return cls(tau=tau, rate=bits / tau, budget_bits=int(bits))


@dataclass(frozen=True)
class QuantizationSpec:
    """Uniform Q-bit quantizer over [lo, hi]."""

    q_bits: int = 16
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 1 <= self.q_bits <= 32:
            raise ValueError("q_bits must lie in [1, 32]")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.hi > self.lo):
            raise ValueError("require finite lo < hi")

    @property
    def levels(self) -> int:
        return (1 << self.q_bits) - 1

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.levels


@dataclass(frozen=True)
class ChunkPlan:
    """Frame-count decision under the bit budget."""

    n_f: int
    m: int
    m_dyn: int
    q_bits: int

    def __post_init__(self):
        if self.n_f < 1:
            raise ValueError("n_f must be >= 1")
        if not 0 <= self.m_dyn <= self.m:
            raise ValueError("m_dyn must lie in [0, M]")

    @property
    def payload_bits(self) -> int:
        return self.q_bits * self.m + self.q_bits * (self.n_f - 1) * self.m_dyn


def plan_frames(
    budget: LinkBudget, spec: QuantizationSpec, m: int, m_dyn: int, n: int
) -> ChunkPlan:
    """Maximum frames of dynamic-feature transmission that fit the budget.

    Closed form floor(budget/(Q*m_dyn) - m/m_dyn + 1), clamped to [1, N];
    with no dynamic features the single static transmission covers all N
    frames. Raises InsufficientBudgetError when even the first frame's
    Q*M bits do not fit.
    """
    if n < 1:
        raise ValueError("chunk frame count must be >= 1")
    if not 0 <= m_dyn <= m:
        raise ValueError("m_dyn must lie in [0, M]")
    q = spec.q_bits
    bits = budget.budget_bits
    if bits < q * m:
        raise InsufficientBudgetError(
            f"budget {bits} bits cannot carry one frame of {m} features at {q} bits each"
        )
    if m_dyn == 0:
        n_f = n
    else:
        n_f = (bits - q * m) // (q * m_dyn) + 1
        n_f = max(1, min(n, n_f))
    return ChunkPlan(n_f=int(n_f), m=m, m_dyn=m_dyn, q_bits=q)


def quantize(values, spec: QuantizationSpec):
    """Map values to unsigned codes < 2**Q (clamped to [lo, hi], half away from zero).

    Accepts a scalar or ndarray; returns the matching shape as uint32
    (scalars come back as int).
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite values")
    u = (np.clip(arr, spec.lo, spec.hi) - spec.lo) / (spec.hi - spec.lo) * spec.levels
    codes = np.floor(u + 0.5).astype(np.uint32)  # u >= 0, so this is half-away-from-zero
    if arr.ndim == 0:
        return int(codes)
    return codes


def dequantize(codes, spec: QuantizationSpec):
    """Inverse map: lo + code * (hi - lo) / (2**Q - 1)."""
    arr = np.asarray(codes)
    if np.any(arr < 0) or np.any(arr.astype(np.uint64) > spec.levels):
        raise ValueError(f"code out of range for Q={spec.q_bits}")
    out = spec.lo + arr.astype(np.float64) * (spec.hi - spec.lo) / spec.levels
    if arr.ndim == 0:
        return float(out)
    return out


def _pack_codes(codes: np.ndarray, q_bits: int) -> bytes:
    """MSB-first bit packing of uint codes, zero-padded to a byte boundary."""
    if codes.size == 0:
        return b""
    be = codes.astype(">u4").view(np.uint8).reshape(-1, 4)
    bits = np.unpackbits(be, axis=1)[:, 32 - q_bits :]
    return np.packbits(bits.ravel()).tobytes()


def _unpack_codes(data: bytes, n_codes: int, q_bits: int) -> np.ndarray:
    """Inverse of _pack_codes; validates the zero padding."""
    if n_codes == 0:
        if data:
            raise PacketError("unexpected body bytes for an empty code stream")
        return np.zeros(0, dtype=np.uint32)
    need_bits = n_codes * q_bits
    need_bytes = (need_bits + 7) // 8
    if len(data) < need_bytes:
        raise TruncatedPacketError(f"body holds {len(data)} bytes, need {need_bytes}")
    if len(data) > need_bytes:
        raise PacketError(f"body holds {len(data) - need_bytes} trailing bytes")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if np.any(bits[need_bits:]):
        raise PacketError("nonzero padding bits in body")
    padded = np.zeros((n_codes, 32), dtype=np.uint8)
    padded[:, 32 - q_bits :] = bits[:need_bits].reshape(n_codes, q_bits)
    return np.packbits(padded, axis=1).view(">u4").astype(np.uint32).ravel()


def _bitmap_from_indices(indices, m: int) -> bytes:
    bitmap = bytearray((m + 7) // 8)
    for idx in indices:
        bitmap[idx // 8] |= 1 << (7 - idx % 8)
    return bytes(bitmap)


def _indices_from_bitmap(bitmap: bytes, m: int) -> tuple[int, ...]:
    indices = []
    for byte_i, byte in enumerate(bitmap):
        for bit_i in range(8):
            if byte & (1 << (7 - bit_i)):
                idx = byte_i * 8 + bit_i
                if idx >= m:
                    raise BitmapMismatchError(f"bitmap sets feature {idx} but M={m}")
                indices.append(idx)
    return tuple(indices)


@dataclass(frozen=True)
class ChunkPacket:
    """Serialized chunk: header fields plus the packed code body."""

    chunk_id: int
    n: int
    n_f: int
    m: int
    qspec: QuantizationSpec
    dynamic_indices: tuple[int, ...]
    body: bytes = field(repr=False)

    @property
    def m_dyn(self) -> int:
        return len(self.dynamic_indices)

    @property
    def payload_bits(self) -> int:
        return self.qspec.q_bits * self.m + self.qspec.q_bits * (self.n_f - 1) * self.m_dyn

    @property
    def header_bytes(self) -> int:
        return HEADER_FIXED_BYTES + (self.m + 7) // 8

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            MAGIC,
            self.chunk_id,
            self.n,
            self.n_f,
            self.m,
            self.qspec.q_bits,
            self.qspec.lo,
            self.qspec.hi,
        )
        return header + _bitmap_from_indices(self.dynamic_indices, self.m) + self.body


@dataclass(frozen=True)
class ReceivedChunk:
    """Decoded packet: codes plus their dequantized values."""

    chunk_id: int
    n: int
    n_f: int
    m: int
    qspec: QuantizationSpec
    dynamic_indices: tuple[int, ...]
    frame1_codes: np.ndarray
    dynamic_codes: np.ndarray  # (n_f - 1, m_dyn)

    @property
    def m_dyn(self) -> int:
        return len(self.dynamic_indices)

    @property
    def frame1_values(self) -> np.ndarray:
        return dequantize(self.frame1_codes, self.qspec)

    @property
    def dynamic_values(self) -> np.ndarray:
        return dequantize(self.dynamic_codes, self.qspec)

    def dynamic_history(self) -> np.ndarray:
        """All received values of dynamic features, shape (n_f, m_dyn)."""
        first = self.frame1_values[list(self.dynamic_indices)]
        if self.m_dyn == 0:
            return np.zeros((self.n_f, 0), dtype=np.float64)
        return np.vstack([first[None, :], self.dynamic_values])


def pack_chunk(
    chunk: ChunkView, report: SelectionReport, plan: ChunkPlan, spec: QuantizationSpec
) -> ChunkPacket:
    """Quantize and pack one chunk according to the plan.

    Frame-1 codes carry the quantized chunk mean for static features and
    the quantized first-frame value for dynamic ones; the remaining
    n_f - 1 frames carry dynamic feature codes only.
    """
    n, m = chunk.n_frames, chunk.n_features
    if report.n_features != m:
        raise ValueError("selection report feature count does not match chunk")
    if plan.m != m or plan.m_dyn != report.m_dyn or plan.q_bits != spec.q_bits:
        raise ValueError("plan is inconsistent with report/spec")
    if plan.n_f > n:
        raise ValueError("plan n_f exceeds chunk frame count")

    dyn = list(report.dynamic_set)
    frame1 = chunk.values[0].copy()
    for s in report.static_set:
        frame1[s] = report.means[s]
    frame1_codes = quantize(frame1, spec)
    dyn_codes = quantize(chunk.values[1 : plan.n_f][:, dyn], spec) if dyn else np.zeros((plan.n_f - 1, 0), np.uint32)

    body = _pack_codes(
        np.concatenate([frame1_codes.ravel(), dyn_codes.ravel()]).astype(np.uint32),
        spec.q_bits,
    )
    return ChunkPacket(
        chunk_id=chunk.chunk_id,
        n=n,
        n_f=plan.n_f,
        m=m,
        qspec=spec,
        dynamic_indices=tuple(dyn),
        body=body,
    )


def unpack_chunk(data: bytes) -> ReceivedChunk:
    """Decode a packet, validating magic, header consistency, and body size."""
    if len(data) < HEADER_FIXED_BYTES:
        raise TruncatedPacketError(f"packet holds {len(data)} bytes, header needs {HEADER_FIXED_BYTES}")
    magic, chunk_id, n, n_f, m, q_bits, lo, hi = _HEADER.unpack(data[:HEADER_FIXED_BYTES])
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if m < 1:
        raise PacketError("header M must be >= 1")
    if not 1 <= n_f <= n:
        raise PacketError(f"header n_f={n_f} outside [1, N={n}]")
    if not 1 <= q_bits <= 32:
        raise PacketError(f"header Q={q_bits} outside [1, 32]")
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise PacketError("header quantization range invalid")

    bitmap_len = (m + 7) // 8
    if len(data) < HEADER_FIXED_BYTES + bitmap_len:
        raise TruncatedPacketError("packet truncated inside bitmap")
    bitmap = data[HEADER_FIXED_BYTES : HEADER_FIXED_BYTES + bitmap_len]
    dyn = _indices_from_bitmap(bitmap, m)
    m_dyn = len(dyn)

    n_codes = m + (n_f - 1) * m_dyn
    codes = _unpack_codes(data[HEADER_FIXED_BYTES + bitmap_len :], n_codes, q_bits)
    spec = QuantizationSpec(q_bits=q_bits, lo=lo, hi=hi)

    return ReceivedChunk(
        chunk_id=chunk_id,
        n=n,
        n_f=n_f,
        m=m,
        qspec=spec,
        dynamic_indices=dyn,
        frame1_codes=codes[:m],
        dynamic_codes=codes[m:].reshape(n_f - 1, m_dyn),
    )
