"""Grayscale pixel images and binary PGM (P5) I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PgmFormatError",
    "PixelImage",
    "round_half_away",
    "finalize_samples",
    "read_pgm",
    "write_pgm",
    "level_shift",
]

LEVEL_SHIFT = 128


class PgmFormatError(ValueError):
    """Raised for malformed, truncated or unsupported PGM content."""


def round_half_away(values):
    """Round to the nearest integer, ties away from zero."""
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


@dataclass(frozen=True)
class PixelImage:
    """Row-major grid of pixel samples with its valid range.

    ``samples`` has shape ``(height, width)``.  Samples may be real-valued
    and lie outside ``[x_min, x_max]`` until :func:`finalize_samples` is
    applied (e.g. raw inverse-DCT output).
    """

    samples: np.ndarray
    x_min: float = 0.0
    x_max: float = 255.0
    bit_depth: int = 8
    width: int = field(init=False)
    height: int = field(init=False)

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"samples must be a non-empty 2-D grid, got shape {arr.shape}")
        if self.x_min > self.x_max:
            raise ValueError("x_min must not exceed x_max")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "height", arr.shape[0])
        object.__setattr__(self, "width", arr.shape[1])

    @property
    def shape(self):
        return self.samples.shape

    def finalized(self):
        """Copy with samples clamped to the valid range and rounded."""
        return replace(self, samples=finalize_samples(self.samples, self.x_min, self.x_max))


def finalize_samples(samples, x_min=0.0, x_max=255.0):
    return np.clip(round_half_away(samples), x_min, x_max)


_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(content, count):
    tokens, pos = [], 0
    for _ in range(count):
        m = _HEADER_TOKEN.match(content, pos)
        if m is None:
            raise PgmFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def read_pgm(content: bytes) -> PixelImage:
    """Parse binary PGM content; comments in the header are skipped."""
    if not content.startswith(b"P5"):
        raise PgmFormatError("only binary PGM (P5) is supported")
    tokens, pos = _header_tokens(content, 4)
    if tokens[0] != b"P5":
        raise PgmFormatError("bad magic number")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmFormatError(f"non-integer header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise PgmFormatError("image dimensions must be positive")
    if not 0 < maxval <= 255:
        raise PgmFormatError(f"unsupported maxval {maxval} (8-bit only)")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(content) or not content[pos:pos + 1].isspace():
        raise PgmFormatError("missing whitespace after maxval")
    payload = content[pos + 1:]
    if len(payload) < width * height:
        raise PgmFormatError(
            f"truncated payload: expected {width * height} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8, count=width * height)
    return PixelImage(data.reshape(height, width).astype(float))


def write_pgm(img: PixelImage) -> bytes:
    """Serialize to P5 with maxval 255, clamping and rounding samples."""
    data = np.clip(round_half_away(img.samples), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + data.tobytes()


def level_shift(img: PixelImage, direction: str = "forward") -> PixelImage:
    """Subtract (forward) or add back (inverse) half of the 8-bit range."""
    if direction == "forward":
        return PixelImage(img.samples - LEVEL_SHIFT, x_min=-128.0, x_max=127.0,
                          bit_depth=img.bit_depth)
    if direction == "inverse":
        return PixelImage(img.samples + LEVEL_SHIFT, x_min=0.0, x_max=255.0,
                          bit_depth=img.bit_depth)
    raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
