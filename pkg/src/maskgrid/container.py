"""Flat binary container for coding tensors, mask sets, and model weights.

Layout (all little-endian):

    offset  size        field
    0       4           magic b"MGT1"
    4       16          kind, ASCII, NUL-padded
    20      4           ndim (uint32)
    24      4 * ndim    dims (uint32 each)
    ...     8           span_deg (float64; 0 when not grid-shaped)
    ...     4           theta_count (uint32; 0 when not grid-shaped)
    ...     4           seed (uint32; 0 when not applicable)
    ...     4 * prod    payload, float32, C order

Payloads are 32-bit floats, so round-tripping float64 data quantizes it;
the format targets interchange, not lossless archival. Kind "params" is
the one special case: its dims are the three layer sizes (input, hidden,
output) and the payload is the flattened concatenation w1, b1, w2, b2.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .coding import CODING_KINDS, CodingTensor, MaskSet, SpatialGrid
from .errors import FormatError
from .estimator import EstimatorParams

MAGIC = b"MGT1"
_KIND_BYTES = 16


def _kind_bytes(kind: str) -> bytes:
    raw = kind.encode("ascii")
    if not raw or len(raw) > _KIND_BYTES:
        raise ValueError(f"kind must be 1..{_KIND_BYTES} ASCII bytes, got {kind!r}")
    return raw.ljust(_KIND_BYTES, b"\x00")


def write_array(path, kind: str, array: np.ndarray, span_deg: float = 0.0,
                theta_count: int = 0, seed: int = 0) -> None:
    """Write one array under the given kind tag."""
    arr = np.ascontiguousarray(array, dtype=np.float32)
    header = MAGIC + _kind_bytes(kind) + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<dII", float(span_deg), theta_count, seed)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def _parse(blob: bytes, name: str):
    if len(blob) < 4 + _KIND_BYTES + 4 or blob[:4] != MAGIC:
        raise FormatError(f"{name}: not a container file")
    kind = blob[4 : 4 + _KIND_BYTES].rstrip(b"\x00").decode("ascii", "replace")
    pos = 4 + _KIND_BYTES
    (ndim,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if ndim > 8 or len(blob) < pos + 4 * ndim + 16:
        raise FormatError(f"{name}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", blob, pos)
    pos += 4 * ndim
    span, theta, seed = struct.unpack_from("<dII", blob, pos)
    pos += 16
    if kind == "params" and len(dims) == 3:
        # Parameter files store layer sizes, not payload dims; the payload
        # is the concatenation of two weight matrices and two bias vectors.
        f_in, hidden, out = dims
        count = f_in * hidden + hidden + hidden * out + out
        dims = (count,)
    else:
        count = int(np.prod(dims)) if dims else 1
    payload = blob[pos:]
    if len(payload) != 4 * count:
        raise FormatError(f"{name}: payload holds {len(payload)} bytes, "
                          f"dims {dims} need {4 * count}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
    return kind, arr, span, int(theta), int(seed)


def read_array(path):
    """Read any container; returns (kind, float64 array, span, theta, seed).

    Raises:
        FormatError: wrong magic, truncated header, or payload size mismatch.
    """
    return _parse(Path(path).read_bytes(), str(path))


def save_coding(path, coding: CodingTensor) -> None:
    write_array(path, f"coding:{coding.kind}", coding.values,
                span_deg=coding.grid.span_deg,
                theta_count=coding.grid.theta_count)


def load_coding(path) -> CodingTensor:
    kind, arr, span, theta, _ = read_array(path)
    if not kind.startswith("coding:") or kind[7:] not in CODING_KINDS:
        raise FormatError(f"{path}: kind {kind!r} is not a coding tensor")
    if arr.ndim != 3 or arr.shape[2] != theta:
        raise FormatError(f"{path}: dims {arr.shape} do not match "
                          f"theta_count {theta}")
    return CodingTensor(arr, SpatialGrid(theta, span), kind[7:])


def save_masks(path, masks: MaskSet, span_deg: float = 0.0) -> None:
    write_array(path, "maskset", masks.values, span_deg=span_deg)


def load_masks(path) -> MaskSet:
    kind, arr, _, _, _ = read_array(path)
    if kind != "maskset":
        raise FormatError(f"{path}: kind {kind!r} is not a mask set")
    return MaskSet(np.clip(arr, 0.0, None))


def save_params(path, params: EstimatorParams) -> None:
    """Weights as four stacked payload blocks; dims carry the layer sizes.

    The header dims are (input_dim, hidden_dim, output_dim) rather than the
    flat payload length, which the reader reconstructs.
    """
    payload = np.concatenate([params.w1.ravel(), params.b1,
                              params.w2.ravel(), params.b2]).astype(np.float32)
    header = MAGIC + _kind_bytes("params") + struct.pack("<I", 3)
    header += struct.pack("<3I", params.input_dim, params.hidden_dim,
                          params.output_dim)
    header += struct.pack("<dII", 0.0, 0, params.seed)
    Path(path).write_bytes(header + payload.tobytes(order="C"))


def load_params(path) -> EstimatorParams:
    blob = Path(path).read_bytes()
    head = 4 + _KIND_BYTES
    if len(blob) < head + 4 + 12 + 16 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a container file")
    kind = blob[4:head].rstrip(b"\x00").decode("ascii", "replace")
    if kind != "params":
        raise FormatError(f"{path}: kind {kind!r} is not a parameter file")
    (ndim,) = struct.unpack_from("<I", blob, head)
    if ndim != 3:
        raise FormatError(f"{path}: parameter container must have 3 dims")
    f_in, hidden, out = struct.unpack_from("<3I", blob, head + 4)
    _, _, seed = struct.unpack_from("<dII", blob, head + 16)
    payload = blob[head + 32 :]
    expected = f_in * hidden + hidden + hidden * out + out
    if len(payload) != 4 * expected:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, "
                          f"layer sizes ({f_in}, {hidden}, {out}) need "
                          f"{4 * expected}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    pos = 0
    w1 = flat[pos : pos + f_in * hidden].reshape(f_in, hidden)
    pos += f_in * hidden
    b1 = flat[pos : pos + hidden]
    pos += hidden
    w2 = flat[pos : pos + hidden * out].reshape(hidden, out)
    pos += hidden * out
    b2 = flat[pos : pos + out]
    return EstimatorParams(w1, b1, w2, b2, seed)
