"""Blockwise orthonormal 2-D DCT, zigzag scan and JPEG-style quantization."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .imagecore import PixelImage, round_half_away

__all__ = [
    "DctBasis",
    "QuantTable",
    "CoeffImage",
    "STANDARD_LUMINANCE",
    "forward_dct",
    "inverse_dct",
    "zigzag_order",
    "zigzag_index",
    "scale_quant_table",
    "load_quant_table",
    "quantize",
    "dequantize",
    "quant_error_bound",
]

# JPEG Annex K, Table K.1 (luminance), row-major.
STANDARD_LUMINANCE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
])


class DctBasis:
    """Basis weights ``A(i, j, k, l)`` of the orthonormal N x N 2-D DCT.

    ``tensor[i, j, k, l]`` is the weight of coefficient ``(k, l)`` in pixel
    ``(i, j)``; ``matrix`` is the same data as an ``N^2 x N^2`` array with
    row index ``i*N + j`` and column index ``k*N + l``, so a flattened block
    satisfies ``x = matrix @ y``.
    """

    def __init__(self, n: int = 8):
        if n < 1:
            raise ValueError("block size must be positive")
        self.n = n
        idx = np.arange(n)
        c = np.full(n, np.sqrt(2.0 / n))
        c[0] = np.sqrt(1.0 / n)
        # basis1d[i, k] = C(k) cos((i + 0.5) k pi / N)
        basis1d = c[None, :] * np.cos((idx[:, None] + 0.5) * idx[None, :] * np.pi / n)
        self.basis1d = basis1d
        self.tensor = np.einsum("ik,jl->ijkl", basis1d, basis1d)
        self.matrix = self.tensor.reshape(n * n, n * n)
        self.tensor.setflags(write=False)

    def __repr__(self):
        return f"DctBasis(n={self.n})"

    def forward_block(self, block):
        return self.basis1d.T @ block @ self.basis1d

    def inverse_block(self, coeffs):
        return self.basis1d @ coeffs @ self.basis1d.T


@lru_cache(maxsize=None)
def basis_for(n: int) -> DctBasis:
    return DctBasis(n)


@dataclass(frozen=True, eq=False)
class QuantTable:
    """N x N grid of positive integer quantization steps.

    Tables compare equal when their steps match; ``source`` only records
    where the steps came from.
    """

    steps: np.ndarray
    source: str = "explicit"

    def __post_init__(self):
        steps = np.asarray(self.steps)
        if steps.ndim != 2 or steps.shape[0] != steps.shape[1]:
            raise ValueError("quantization table must be square")
        if not np.all(steps == np.round(steps)) or np.any(steps < 1):
            raise ValueError("quantization steps must be integers >= 1")
        steps = steps.astype(np.int64)
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    def __eq__(self, other):
        if not isinstance(other, QuantTable):
            return NotImplemented
        return np.array_equal(self.steps, other.steps)

    def __hash__(self):
        return hash(self.steps.tobytes())

    @property
    def n(self):
        return self.steps.shape[0]

    @classmethod
    def standard(cls):
        return cls(STANDARD_LUMINANCE, "standard")


@dataclass(frozen=True)
class CoeffImage:
    """Per-block DCT coefficients of an image.

    ``coeffs`` has shape ``(block_rows, block_cols, N, N)`` and holds the
    (dequantized) real coefficient values.  When ``quant`` is set,
    ``quantized`` holds the integer levels and ``coeffs == quantized * Q``.
    ``x_min``/``x_max`` is the pixel range of the image the coefficients
    came from (``[-128, 127]`` after a level shift).
    """

    coeffs: np.ndarray
    quant: QuantTable | None = None
    quantized: np.ndarray | None = None
    x_min: float = 0.0
    x_max: float = 255.0
    block_rows: int = field(init=False)
    block_cols: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim != 4 or coeffs.shape[2] != coeffs.shape[3]:
            raise ValueError("coeffs must have shape (block_rows, block_cols, N, N)")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "block_rows", coeffs.shape[0])
        object.__setattr__(self, "block_cols", coeffs.shape[1])
        object.__setattr__(self, "n", coeffs.shape[2])
        if self.quant is not None and self.quant.n != self.n:
            raise ValueError("quantization table size does not match block size")
        if self.quantized is not None:
            if self.quant is None:
                raise ValueError("quantized levels given without a quantization table")
            q = np.array(self.quantized, dtype=np.int64)
            if q.shape != coeffs.shape:
                raise ValueError("quantized grid shape mismatch")
            if not np.array_equal(q * self.quant.steps, coeffs):
                raise ValueError("coeffs must equal quantized * Q exactly")
            q.setflags(write=False)
            object.__setattr__(self, "quantized", q)

    @property
    def height(self):
        return self.block_rows * self.n

    @property
    def width(self):
        return self.block_cols * self.n

    @property
    def dc(self):
        return self.coeffs[:, :, 0, 0]

    def with_coeffs(self, coeffs):
        """Same metadata, new real coefficients (quantized levels dropped)."""
        return CoeffImage(coeffs, quant=self.quant, x_min=self.x_min, x_max=self.x_max)


def _blocks(samples, n):
    h, w = samples.shape
    return samples.reshape(h // n, n, w // n, n).transpose(0, 2, 1, 3)


def _unblocks(blocks):
    br, bc, n, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(br * n, bc * n)


def forward_dct(img: PixelImage, basis: DctBasis | None = None) -> CoeffImage:
    """Transform each N x N block: ``y = A^T x``."""
    basis = basis or basis_for(8)
    n = basis.n
    if img.height % n or img.width % n:
        raise ValueError(f"image size {img.width}x{img.height} is not a multiple of {n}")
    blocks = _blocks(img.samples, n)
    coeffs = np.einsum("ik,abij,jl->abkl", basis.basis1d, blocks, basis.basis1d)
    return CoeffImage(coeffs, x_min=img.x_min, x_max=img.x_max)


def inverse_dct(coeffs: CoeffImage, basis: DctBasis | None = None) -> PixelImage:
    """Raw ``x = A y`` per block; no clamping or rounding."""
    basis = basis or basis_for(coeffs.n)
    if basis.n != coeffs.n:
        raise ValueError("basis size does not match coefficient blocks")
    blocks = np.einsum("ik,abkl,jl->abij", basis.basis1d, coeffs.coeffs, basis.basis1d)
    return PixelImage(_unblocks(blocks), x_min=coeffs.x_min, x_max=coeffs.x_max)


@lru_cache(maxsize=None)
def zigzag_order(n: int = 8):
    """Tuple of ``(k, l)`` positions in JPEG zigzag scan order."""
    order = []
    for s in range(2 * n - 1):
        diag = [(k, s - k) for k in range(max(0, s - n + 1), min(s, n - 1) + 1)]
        # odd anti-diagonals run top-right to bottom-left
        order.extend(diag if s % 2 else diag[::-1])
    return tuple(order)


def zigzag_index(u: int, n: int = 8):
    if not 0 <= u < n * n:
        raise IndexError(f"zigzag position {u} out of range for N={n}")
    return zigzag_order(n)[u]


def scale_quant_table(base: QuantTable, qf: int) -> QuantTable:
    """IJG quality scaling of a base table."""
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor must be in [1, 100], got {qf}")
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    steps = np.maximum(1, (base.steps * scale + 50) // 100)
    return QuantTable(steps, f"qf-scaled({qf})")


def load_quant_table(text: str, n: int = 8) -> QuantTable:
    """Parse ``n*n`` whitespace-separated integers in row-major order."""
    try:
        values = [int(tok) for tok in text.split()]
    except ValueError as exc:
        raise ValueError(f"quantization table file: {exc}") from None
    if len(values) != n * n:
        raise ValueError(f"quantization table needs {n * n} integers, got {len(values)}")
    return QuantTable(np.array(values).reshape(n, n), "explicit")


def quantize(coeffs: CoeffImage, quant: QuantTable) -> CoeffImage:
    levels = round_half_away(coeffs.coeffs / quant.steps).astype(np.int64)
    return dequantize(levels, quant, x_min=coeffs.x_min, x_max=coeffs.x_max)


def dequantize(quantized, quant: QuantTable, x_min=0.0, x_max=255.0) -> CoeffImage:
    quantized = np.asarray(quantized, dtype=np.int64)
    return CoeffImage(quantized * quant.steps, quant=quant, quantized=quantized,
                      x_min=x_min, x_max=x_max)


def quant_error_bound(quant: QuantTable, basis: DctBasis | None = None) -> np.ndarray:
    """Worst-case pixel error from quantization, ``sum |A(i,j,k,l)| Q(k,l) / 2``."""
    basis = basis or basis_for(quant.n)
    return np.einsum("ijkl,kl->ij", np.abs(basis.tensor), quant.steps / 2.0)
