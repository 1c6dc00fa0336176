"""Systematic (f+1, n) maximum-distance-separable erasure coding.

Reed-Solomon over GF(256): the f+1 source chunks are the values of a
degree-<(f+1) polynomial at points 0..f, per byte column; chunk j is
the polynomial evaluated at j.  Any f+1 distinct chunks interpolate
the polynomial back, hence decode.  Requires n <= 256 distinct
evaluation points.

Input data is length-prefixed and zero-padded to a multiple of f+1,
so the original byte string is recovered exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from ..core.types import BadParams


class InsufficientChunks(Exception):
    pass


class InconsistentChunks(Exception):
    pass


# GF(256) with the usual primitive polynomial x^8+x^4+x^3+x^2+1 (0x11d)
def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(510, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= 0x11D
    exp[255:510] = exp[0:255]
    return exp, log


_EXP, _LOG = _build_tables()


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(_EXP[_LOG[a] + _LOG[b]])


def _gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("inverse of 0 in GF(256)")
    return int(_EXP[255 - _LOG[a]])


def _mul_const_vec(c: int, vec: np.ndarray) -> np.ndarray:
    """c * vec elementwise over GF(256)."""
    if c == 0:
        return np.zeros_like(vec)
    out = _EXP[_LOG[c] + _LOG[vec.astype(np.int64)]]
    return np.where(vec == 0, 0, out).astype(np.uint8)


def _lagrange_row(points: list[int], x: int) -> list[int]:
    """Coefficients c_i with P(x) = sum_i c_i * P(points[i]) for deg(P) < len(points)."""
    row = []
    for i, xi in enumerate(points):
        num = 1
        den = 1
        for m, xm in enumerate(points):
            if m == i:
                continue
            num = _gf_mul(num, x ^ xm)
            den = _gf_mul(den, xi ^ xm)
        row.append(_gf_mul(num, _gf_inv(den)))
    return row


_ENCODE_COEFFS: dict[tuple[int, int], list[list[int]]] = {}


def _encode_coeffs(k: int, n: int) -> list[list[int]]:
    key = (k, n)
    cached = _ENCODE_COEFFS.get(key)
    if cached is None:
        source = list(range(k))
        cached = [_lagrange_row(source, j) for j in range(k, n)]
        _ENCODE_COEFFS[key] = cached
    return cached


def ec_encode(data: bytes, f: int, n: int) -> list[bytes]:
    """Encode data into n chunk payloads; any f+1 of them decode."""
    k = f + 1
    if k > n:
        raise BadParams(f"reconstruction threshold f+1={k} exceeds chunk count n={n}")
    if n > 256:
        raise BadParams("GF(256) coding supports at most 256 chunks")
    if not data:
        raise BadParams("cannot encode empty data")
    framed = struct.pack(">I", len(data)) + data
    chunk_len = -(-len(framed) // k)
    framed = framed.ljust(k * chunk_len, b"\x00")
    source = np.frombuffer(framed, dtype=np.uint8).reshape(k, chunk_len)
    chunks = [source[i].tobytes() for i in range(k)]
    for row in _encode_coeffs(k, n):
        acc = np.zeros(chunk_len, dtype=np.uint8)
        for c, vec in zip(row, source):
            if c:
                acc ^= _mul_const_vec(c, vec)
        chunks.append(acc.tobytes())
    return chunks


def ec_decode(chunks: list[tuple[int, bytes]], f: int, n: int) -> bytes:
    """Recover the original data from >= f+1 chunks given as (index, payload)."""
    k = f + 1
    if k > n:
        raise BadParams(f"reconstruction threshold f+1={k} exceeds chunk count n={n}")
    seen: dict[int, bytes] = {}
    for index, payload in chunks:
        if not 0 <= index < n:
            raise InconsistentChunks(f"chunk index {index} out of range [0, {n})")
        if index in seen:
            if seen[index] != payload:
                raise InconsistentChunks(f"conflicting payloads for chunk {index}")
            continue
        seen[index] = payload
    if len(seen) < k:
        raise InsufficientChunks(f"{len(seen)} distinct chunks, need {k}")
    use = sorted(seen.items())[:k]
    chunk_len = len(use[0][1])
    if any(len(p) != chunk_len for _, p in use):
        raise InconsistentChunks("chunk payloads differ in length")
    points = [index for index, _ in use]
    vecs = [np.frombuffer(p, dtype=np.uint8) for _, p in use]
    out = []
    for target in range(k):
        if target in seen and len(seen[target]) == chunk_len:
            out.append(np.frombuffer(seen[target], dtype=np.uint8))
            continue
        row = _lagrange_row(points, target)
        acc = np.zeros(chunk_len, dtype=np.uint8)
        for c, vec in zip(row, vecs):
            if c:
                acc ^= _mul_const_vec(c, vec)
        out.append(acc)
    framed = b"".join(v.tobytes() for v in out)
    (length,) = struct.unpack(">I", framed[:4])
    if length > len(framed) - 4:
        raise InconsistentChunks("declared length exceeds decoded payload")
    return framed[4 : 4 + length]


def chunk_length(data_len: int, f: int) -> int:
    """Payload bytes per chunk for a data string of data_len bytes."""
    return -(-(data_len + 4) // (f + 1))
