"""Binary PPM (P6, maxval 255) frames."""
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from aavit.errors import DimensionError, ParseError
from aavit.tensor import Precision, Tensor

_WHITESPACE = b" \t\n\r\v\f"


def _read_token(blob: bytes, offset: int) -> Tuple[bytes, int]:
    """Next header token, skipping whitespace and ``#`` comments."""
    while offset < len(blob):
        byte = blob[offset:offset + 1]
        if byte in _WHITESPACE:
            offset += 1
        elif byte == b"#":
            end = blob.find(b"\n", offset)
            offset = len(blob) if end < 0 else end + 1
        else:
            break
    start = offset
    while offset < len(blob) and blob[offset:offset + 1] not in _WHITESPACE + b"#":
        offset += 1
    return blob[start:offset], start


def decode_ppm(blob: bytes, source: Optional[str] = None) -> np.ndarray:
    """H x W x 3 uint8 array from P6 bytes."""
    magic, at = _read_token(blob, 0)
    if magic != b"P6":
        raise ParseError(f"expected magic P6, found {magic[:8]!r}", at, source)

    fields = []
    offset = at + len(magic)
    for name in ("width", "height", "maxval"):
        token, at = _read_token(blob, offset)
        if not token:
            raise ParseError(f"header ends before {name}", at, source)
        if not token.isdigit():
            raise ParseError(f"malformed {name} {token[:16]!r}", at, source)
        fields.append(int(token))
        offset = at + len(token)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ParseError(f"invalid size {width}x{height}", offset, source)
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}", at, source)
    if offset >= len(blob) or blob[offset:offset + 1] not in _WHITESPACE:
        raise ParseError("missing whitespace before pixel data", offset, source)

    offset += 1
    expected = width * height * 3
    payload = blob[offset:offset + expected]
    if len(payload) < expected:
        raise ParseError(
            f"truncated payload: {len(payload)} of {expected} bytes", offset + len(payload), source
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise DimensionError(f"PPM frames must be H x W x 3 uint8, got {pixels.shape} {pixels.dtype}")
    height, width, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (width, height) + np.ascontiguousarray(pixels).tobytes()


def read_ppm(path: Path) -> np.ndarray:
    path = Path(path)
    return decode_ppm(path.read_bytes(), source=str(path))


def write_ppm(path: Path, pixels: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(pixels))
    return path


def to_tensor(pixels: np.ndarray, precision: Precision = Precision.STANDARD) -> Tensor:
    """Scale bytes to [0, 1] as value / 255, channel-last."""
    return Tensor(pixels.astype(precision.dtype) / precision.dtype.type(255), precision=precision)


def load_image(path: Path, precision: Precision = Precision.STANDARD) -> Tensor:
    return to_tensor(read_ppm(path), precision)
