import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dctsign.imagecore import PixelImage
from dctsign.transform import (
    STANDARD_LUMINANCE,
    CoeffImage,
    DctBasis,
    QuantTable,
    dequantize,
    forward_dct,
    inverse_dct,
    load_quant_table,
    quant_error_bound,
    quantize,
    scale_quant_table,
    zigzag_index,
    zigzag_order,
)

# natural-order index of each zigzag position, as tabulated by libjpeg
JPEG_NATURAL_ORDER = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
]


def reference_weight(i, j, k, l, n):
    c = lambda u: math.sqrt((1 if u == 0 else 2) / n)
    return (c(k) * c(l) * math.cos((i + 0.5) * k * math.pi / n)
            * math.cos((j + 0.5) * l * math.pi / n))


@pytest.mark.parametrize("n", [2, 4, 8])
def test_basis_matches_closed_form(n):
    basis = DctBasis(n)
    for i, j, k, l in np.ndindex(n, n, n, n):
        assert basis.tensor[i, j, k, l] == pytest.approx(reference_weight(i, j, k, l, n), abs=1e-14)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_matrix_orthonormal(n):
    m = DctBasis(n).matrix
    assert np.max(np.abs(m.T @ m - np.eye(n * n))) < 1e-12


def test_constant_block_has_only_dc():
    coeffs = forward_dct(PixelImage(np.full((8, 8), 37.0)))
    block = coeffs.coeffs[0, 0]
    assert block[0, 0] == pytest.approx(8 * 37.0)
    block = block.copy()
    block[0, 0] = 0
    assert np.max(np.abs(block)) < 1e-12


def test_scaled_basis_function_transforms_to_single_coefficient():
    basis = DctBasis(8)
    pixels = 3.5 * basis.tensor[:, :, 2, 3]
    y = forward_dct(PixelImage(pixels), basis).coeffs[0, 0]
    expected = np.zeros((8, 8))
    expected[2, 3] = 3.5
    assert np.max(np.abs(y - expected)) < 1e-9


def test_inverse_of_zero_is_zero():
    assert np.all(inverse_dct(CoeffImage(np.zeros((1, 2, 8, 8)))).samples == 0)


def test_inverse_of_dc_1024_is_constant_128():
    c = np.zeros((1, 1, 8, 8))
    c[0, 0, 0, 0] = 1024
    assert np.allclose(inverse_dct(CoeffImage(c)).samples, 128.0, atol=1e-12)


def test_forward_rejects_non_multiple_dimensions():
    with pytest.raises(ValueError):
        forward_dct(PixelImage(np.zeros((12, 16))))


def test_random_round_trip(rng):
    x = rng.uniform(0, 255, (16, 16))
    back = inverse_dct(forward_dct(PixelImage(x)))
    assert np.max(np.abs(back.samples - x)) < 1e-9


@given(arrays(np.float64, (8, 8), elements=st.floats(-300, 300)))
def test_parseval(block):
    y = forward_dct(PixelImage(block)).coeffs
    ex, ey = np.sum(block ** 2), np.sum(y ** 2)
    assert ey == pytest.approx(ex, rel=1e-6, abs=1e-9)


def test_zigzag_matches_jpeg_table():
    assert [k * 8 + l for k, l in zigzag_order(8)] == JPEG_NATURAL_ORDER


def test_zigzag_named_positions():
    assert zigzag_index(0) == (0, 0)
    assert zigzag_index(1) == (0, 1)
    assert zigzag_index(2) == (1, 0)
    assert zigzag_index(63) == (7, 7)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_zigzag_is_permutation(n):
    order = zigzag_order(n)
    assert sorted(order) == [(k, l) for k in range(n) for l in range(n)]


def test_zigzag_out_of_range():
    with pytest.raises(IndexError):
        zigzag_index(64)


def test_qf50_keeps_table():
    base = QuantTable.standard()
    assert np.array_equal(scale_quant_table(base, 50).steps, base.steps)


def test_qf100_gives_ones():
    assert np.all(scale_quant_table(QuantTable.standard(), 100).steps == 1)


def test_qf95_dc_step():
    assert scale_quant_table(QuantTable.standard(), 95).steps[0, 0] == 2


def test_qf_formula_against_direct_evaluation():
    base = QuantTable.standard()
    for qf in (1, 10, 25, 49, 75, 85, 99):
        scale = 5000 // qf if qf < 50 else 200 - 2 * qf
        for q, got in zip(base.steps.ravel(), scale_quant_table(base, qf).steps.ravel()):
            assert got == max(1, (int(q) * scale + 50) // 100)


@pytest.mark.parametrize("qf", [0, 101])
def test_qf_out_of_range(qf):
    with pytest.raises(ValueError):
        scale_quant_table(QuantTable.standard(), qf)


def test_standard_table_corner_values():
    assert STANDARD_LUMINANCE[0][0] == 16 and STANDARD_LUMINANCE[7][7] == 99
    assert STANDARD_LUMINANCE[0][7] == 61 and STANDARD_LUMINANCE[7][0] == 72


def test_quant_table_rejects_zero_step():
    with pytest.raises(ValueError):
        QuantTable(np.zeros((8, 8), dtype=int))


def test_load_quant_table():
    text = " ".join(str(v) for v in range(1, 65))
    table = load_quant_table(text)
    assert table.steps[1, 0] == 9 and table.steps[7, 7] == 64
    with pytest.raises(ValueError):
        load_quant_table("1 2 3")


def _single(value, step):
    c = np.zeros((1, 1, 8, 8))
    c[0, 0, 0, 0] = value
    q = np.ones((8, 8), dtype=int)
    q[0, 0] = step
    return CoeffImage(c), QuantTable(q)


@pytest.mark.parametrize("value, level, dequant", [(17, 1, 16), (-8, -1, -16), (0, 0, 0), (8, 1, 16)])
def test_quantize_examples(value, level, dequant):
    coeffs, table = _single(value, 16)
    out = quantize(coeffs, table)
    assert out.quantized[0, 0, 0, 0] == level
    assert out.coeffs[0, 0, 0, 0] == dequant


@given(arrays(np.int64, (1, 1, 8, 8), elements=st.integers(-500, 500)))
def test_quantize_dequantize_idempotent(levels):
    table = scale_quant_table(QuantTable.standard(), 75)
    deq = dequantize(levels, table)
    assert np.array_equal(quantize(deq, table).quantized, levels)


def test_coeff_image_checks_quantized_product():
    table = QuantTable(np.full((8, 8), 2))
    with pytest.raises(ValueError):
        CoeffImage(np.ones((1, 1, 8, 8)), quant=table, quantized=np.ones((1, 1, 8, 8), dtype=int))


def test_error_bound_with_step_two_is_row_mass():
    basis = DctBasis(8)
    eps = quant_error_bound(QuantTable(np.full((8, 8), 2)), basis)
    assert np.allclose(eps, np.abs(basis.tensor).sum(axis=(2, 3)), atol=1e-12)


def test_error_bound_standard_table_by_double_loop():
    eps = quant_error_bound(QuantTable.standard())
    for i, j in [(0, 0), (3, 5), (7, 7)]:
        total = 0.0
        for k in range(8):
            for l in range(8):
                total += abs(reference_weight(i, j, k, l, 8)) * STANDARD_LUMINANCE[k][l] / 2
        assert eps[i, j] == pytest.approx(total, abs=1e-9)


@pytest.mark.parametrize("qf", [10, 50, 95])
def test_error_bound_lower_limit(qf):
    table = scale_quant_table(QuantTable.standard(), qf)
    eps = quant_error_bound(table)
    assert np.all(eps >= table.steps.max() / 16 - 1e-12)
    assert np.all(eps > 0)
