"""Transform codec packing a location pmf into a bounded radio payload.

The m x m pmf matrix goes through an orthonormal 2-D DCT; the largest-
magnitude coefficients (the DC term always among them) are kept, uniformly
quantized to 6-bit signed levels against a per-message scale, and bit-packed.
Coefficients that quantize to zero are dropped, so the kept count K is the
budget-limited maximum or less.

Wire format (MSB-first bitstream):

    byte 0     grid edge m
    byte 1     kept coefficient count K
    bytes 2-3  quantizer scale, big-endian unsigned 16-bit in units of 1/65535
    body       K coefficient indices (ceil(log2(m*m)) bits each, ascending,
               row-major index into the coefficient matrix), then K values
               (6 bits each, offset-binary: level + 31, levels -31..31),
               zero-padded to the next byte boundary
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CodecCapacityError, CodecDecodeError
from .grid import GridField, LocationPmf

HEADER_BYTES = 4
VALUE_BITS = 6
QMAX = 31  # symmetric 6-bit levels: -31..31
SCALE_UNITS = 65535
DEFAULT_PAYLOAD_BYTES = 102


@lru_cache(maxsize=32)
def _dct_matrix(m: int) -> np.ndarray:
    """Orthonormal type-II DCT basis, rows indexed by frequency."""
    x = np.arange(m)
    mat = np.sqrt(2.0 / m) * np.cos(np.pi * (2 * x[None, :] + 1) * np.arange(m)[:, None] / (2 * m))
    mat[0, :] = np.sqrt(1.0 / m)
    mat.setflags(write=False)
    return mat


def _dct2(block: np.ndarray) -> np.ndarray:
    d = _dct_matrix(block.shape[0])
    return d @ block @ d.T


def _idct2(coef: np.ndarray) -> np.ndarray:
    d = _dct_matrix(coef.shape[0])
    return d.T @ coef @ d


def _index_bits(m: int) -> int:
    return max(1, math.ceil(math.log2(m * m)))


def _pack_bits(values, width: int, acc: int = 0, nbits: int = 0) -> tuple[int, int]:
    for v in values:
        acc = (acc << width) | int(v)
        nbits += width
    return acc, nbits


@dataclass(frozen=True)
class EncodedPmf:
    """Quantized sparse-DCT representation of a location pmf."""

    m: int
    scale_units: int
    indices: tuple[int, ...]
    qvalues: tuple[int, ...]

    @property
    def kept(self) -> int:
        return len(self.indices)

    @property
    def scale(self) -> float:
        return self.scale_units / SCALE_UNITS

    @property
    def size_bytes(self) -> int:
        bits = self.kept * (_index_bits(self.m) + VALUE_BITS)
        return HEADER_BYTES + (bits + 7) // 8

    def to_bytes(self) -> bytes:
        header = bytes([self.m, self.kept]) + self.scale_units.to_bytes(2, "big")
        acc, nbits = _pack_bits(self.indices, _index_bits(self.m))
        acc, nbits = _pack_bits((q + QMAX for q in self.qvalues), VALUE_BITS, acc, nbits)
        pad = (-nbits) % 8
        acc <<= pad
        return header + acc.to_bytes((nbits + pad) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodedPmf":
        if len(data) < HEADER_BYTES:
            raise CodecDecodeError(f"payload too short: {len(data)} bytes")
        m, kept = data[0], data[1]
        scale_units = int.from_bytes(data[2:4], "big")
        if m < 1 or kept < 1 or scale_units < 1:
            raise CodecDecodeError(f"bad header: m={m}, K={kept}, scale={scale_units}")
        idx_bits = _index_bits(m)
        body_bits = kept * (idx_bits + VALUE_BITS)
        expect = HEADER_BYTES + (body_bits + 7) // 8
        if len(data) != expect:
            raise CodecDecodeError(f"payload length {len(data)} != expected {expect}")
        acc = int.from_bytes(data[HEADER_BYTES:], "big")
        total_bits = (len(data) - HEADER_BYTES) * 8
        fields = []
        consumed = 0
        for width in [idx_bits] * kept + [VALUE_BITS] * kept:
            shift = total_bits - consumed - width
            fields.append((acc >> shift) & ((1 << width) - 1))
            consumed += width
        indices = tuple(fields[:kept])
        raw = fields[kept:]
        n = m * m
        prev = -1
        for i in indices:
            if i >= n:
                raise CodecDecodeError(f"coefficient index {i} out of range for m={m}")
            if i <= prev:
                raise CodecDecodeError("coefficient indices must be strictly ascending")
            prev = i
        if any(v > 2 * QMAX for v in raw):
            raise CodecDecodeError("quantized value outside the 6-bit symmetric range")
        return cls(m, scale_units, indices, tuple(v - QMAX for v in raw))


def encode(pmf: LocationPmf, payload_limit: int = DEFAULT_PAYLOAD_BYTES) -> EncodedPmf:
    """Encode a normalized pmf into at most payload_limit bytes."""
    if abs(pmf.sum() - 1.0) > 1e-6:
        raise ValueError("encode expects a normalized pmf")
    m = pmf.field.m
    if m > 255:
        raise CodecCapacityError(f"grid edge {m} exceeds the 1-byte header field")
    coefs = _dct2(pmf.values.reshape(m, m)).ravel()
    mags = np.abs(coefs)
    idx_bits = _index_bits(m)
    budget = (payload_limit - HEADER_BYTES) * 8
    cap = budget // (idx_bits + VALUE_BITS)
    if payload_limit < HEADER_BYTES or cap < 1:
        raise CodecCapacityError(
            f"payload limit {payload_limit} B cannot hold the header plus one coefficient"
        )
    keep = min(cap, coefs.size)
    order = np.lexsort((np.arange(coefs.size), -mags))
    sel = order[:keep].copy()
    if 0 not in sel:
        sel[-1] = 0  # DC always survives selection
    scale = float(mags[sel].max())
    units = int(min(SCALE_UNITS, max(1, round(scale * SCALE_UNITS))))
    step = units / SCALE_UNITS
    q = np.clip(np.rint(coefs[sel] / step * QMAX), -QMAX, QMAX).astype(int)
    live = (q != 0) | (sel == 0)
    sel, q = sel[live], q[live]
    asc = np.argsort(sel)
    return EncodedPmf(m, units, tuple(int(i) for i in sel[asc]), tuple(int(v) for v in q[asc]))


def decode(enc: EncodedPmf | bytes, field: GridField) -> LocationPmf:
    """Reconstruct a pmf: inverse DCT, clamp negatives to zero, renormalize."""
    if isinstance(enc, (bytes, bytearray)):
        enc = EncodedPmf.from_bytes(bytes(enc))
    if enc.m != field.m:
        raise CodecDecodeError(f"encoded grid edge {enc.m} != field grid edge {field.m}")
    n = enc.m * enc.m
    if any(i >= n for i in enc.indices):
        raise CodecDecodeError("coefficient index out of range")
    coefs = np.zeros(n)
    coefs[list(enc.indices)] = np.array(enc.qvalues, dtype=np.float64) / QMAX * enc.scale
    vals = _idct2(coefs.reshape(enc.m, enc.m)).ravel()
    np.clip(vals, 0.0, None, out=vals)
    total = vals.sum()
    if not total > 0:
        raise CodecDecodeError("decoded pmf has no mass")
    return LocationPmf(field, vals / total)


def roundtrip(pmf: LocationPmf, payload_limit: int = DEFAULT_PAYLOAD_BYTES) -> LocationPmf:
    """encode + decode; what a receiver sees after one radio hop."""
    return decode(encode(pmf, payload_limit), pmf.field)
