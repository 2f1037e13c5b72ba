"""Which sign bits are unknown, and what values each unknown may take.

Covers plain sign-magnitude coding, JPEG-style category (two's-complement
like) magnitude coding, differential DC coding with prediction modes 0-3,
and the ``SBC1`` coefficient interchange file plus its truth sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .imagecore import PixelImage, level_shift
from .transform import (
    CoeffImage,
    DctBasis,
    QuantTable,
    forward_dct,
    quantize,
    zigzag_order,
)

__all__ = [
    "CoeffFormatError",
    "CodingConfig",
    "Unknown",
    "SignMask",
    "DiffChain",
    "encode_image",
    "sign_candidates_plain",
    "sign_candidates_category",
    "magnitude_category",
    "dc_predictors",
    "encode_dc_chain",
    "decode_dc_chain",
    "mask_signs",
    "apply_threshold",
    "write_coeff_file",
    "read_coeff_file",
    "write_truth_file",
    "read_truth_file",
]

MAGIC = "SBC1"
TRUTH_MAGIC = "SBT1"
# values this small are transform round-off of an exact zero and carry no sign
SIGNLESS = 1e-9


class CoeffFormatError(ValueError):
    """Raised for malformed or inconsistent coefficient files."""


@dataclass(frozen=True)
class CodingConfig:
    """How the coefficients were coded before sign bits were hidden."""

    level_shift: bool = False
    quant: QuantTable | None = None
    qf: int | None = None
    dc_prediction_mode: int = 0
    twos_complement: bool = False
    threshold: float = 0.0
    relax_x: bool = True
    relax_y: bool = False

    def __post_init__(self):
        if self.dc_prediction_mode not in (0, 1, 2, 3):
            raise ValueError("dc_prediction_mode must be 0, 1, 2 or 3")
        if self.twos_complement and self.quant is None:
            raise ValueError("two's-complement category coding needs a quantization table")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    @property
    def pixel_range(self):
        return (-128.0, 127.0) if self.level_shift else (0.0, 255.0)


@dataclass(frozen=True)
class Unknown:
    """One hidden sign: the value is either ``lo`` or ``hi``."""

    lo: float
    hi: float
    truth: float | None = None

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"candidate lo={self.lo} exceeds hi={self.hi}")

    @property
    def span(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class SignMask:
    """Unknown-sign positions of a coefficient image.

    Keys are ``(block_row, block_col, k, l)``.  Under differential DC coding
    the key with ``(k, l) == (0, 0)`` refers to that block's DC difference
    ``z`` rather than the DC coefficient.  ``forced_zero`` holds unknown
    positions that were zeroed by thresholding; ``zero_bound`` is the
    threshold they fell under, i.e. a bound on their true magnitude.
    """

    block_rows: int
    block_cols: int
    n: int
    unknowns: dict = field(default_factory=dict)
    forced_zero: frozenset = frozenset()
    zero_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "unknowns", dict(sorted(self.unknowns.items())))
        object.__setattr__(self, "forced_zero", frozenset(self.forced_zero))
        overlap = self.forced_zero.intersection(self.unknowns)
        if overlap:
            raise ValueError(f"positions both unknown and forced to zero: {sorted(overlap)[:3]}")

    def __len__(self):
        return len(self.unknowns)

    def __iter__(self):
        return iter(self.unknowns.items())

    def in_block(self, br, bc):
        return {key: u for key, u in self.unknowns.items() if key[:2] == (br, bc)}

    def hidden(self):
        """Every position whose value is not transmitted (unknown or zeroed)."""
        return set(self.unknowns) | set(self.forced_zero)

    def without_truth(self):
        return replace(self, unknowns={k: replace(u, truth=None) for k, u in self.unknowns.items()})


@dataclass(frozen=True)
class DiffChain:
    """DC differences ``z = DC - predictor`` for prediction modes 1-3.

    Mode 0 (absolute DC coding) carries no differences; ``z`` is ``None``.
    """

    mode: int
    z: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (0, 1, 2, 3):
            raise ValueError("DC prediction mode must be 0-3")
        if self.mode == 0:
            object.__setattr__(self, "z", None)
        else:
            z = np.array(self.z, dtype=float)
            if z.ndim != 2 or z.size == 0:
                raise ValueError("z must be a non-empty 2-D grid")
            z.setflags(write=False)
            object.__setattr__(self, "z", z)


def encode_image(img: PixelImage, cfg: CodingConfig, basis: DctBasis | None = None):
    """Level-shift, transform and quantize ``img`` per ``cfg``.

    Returns ``(coeffs, chain)`` holding the true (unmasked) data.
    """
    if cfg.level_shift:
        img = level_shift(img, "forward")
    coeffs = forward_dct(img, basis)
    if cfg.quant is not None:
        coeffs = quantize(coeffs, cfg.quant)
    chain = encode_dc_chain(coeffs.dc, cfg.dc_prediction_mode)
    return coeffs, chain


def sign_candidates_plain(abs_value):
    return (-abs(abs_value), abs(abs_value))


def magnitude_category(level: int):
    """JPEG magnitude code of a nonzero integer: ``(S, trailing bits)``.

    The leading code bit is 1 for positive values and 0 for negative ones;
    the remaining ``S - 1`` bits are returned as an integer.
    """
    level = int(level)
    if level == 0:
        raise ValueError("zero has no magnitude category")
    size = abs(level).bit_length()
    code = level if level > 0 else level + (1 << size) - 1
    return size, code & ((1 << (size - 1)) - 1)


def sign_candidates_category(size: int, bits: int):
    """Values sharing category ``size`` and trailing bits ``bits``.

    ``hi`` decodes the code with leading bit 1, ``lo`` the one with leading
    bit 0.
    """
    if size < 1:
        raise ValueError("category must be >= 1")
    if not 0 <= bits < (1 << (size - 1)):
        raise ValueError(f"trailing bits {bits} out of range for category {size}")
    hi = (1 << (size - 1)) + bits
    lo = bits - ((1 << size) - 1)
    return lo, hi


def dc_predictors(dcs, mode):
    """Predictor of every block's DC for prediction modes 1-3.

    First blocks of a chain predict 0.  Mode 1 restarts at each block row,
    mode 2 runs across rows in raster order, mode 3 averages the blocks
    above and to the left (using whichever exists on the borders).
    """
    dcs = np.asarray(dcs, dtype=float)
    pred = np.zeros_like(dcs)
    if mode == 1:
        pred[:, 1:] = dcs[:, :-1]
    elif mode == 2:
        flat = dcs.ravel()
        pred.ravel()[1:] = flat[:-1]
    elif mode == 3:
        pred[0, 1:] = dcs[0, :-1]
        pred[1:, 0] = dcs[:-1, 0]
        pred[1:, 1:] = (dcs[:-1, 1:] + dcs[1:, :-1]) / 2.0
    else:
        raise ValueError(f"no predictor for DC mode {mode}")
    return pred


def predictor_blocks(br, bc, mode, block_cols):
    """Blocks whose DCs form the predictor of block ``(br, bc)``."""
    if mode == 1:
        return [(br, bc - 1)] if bc > 0 else []
    if mode == 2:
        if bc > 0:
            return [(br, bc - 1)]
        return [(br - 1, block_cols - 1)] if br > 0 else []
    if mode == 3:
        return [b for b, ok in (((br - 1, bc), br > 0), ((br, bc - 1), bc > 0)) if ok]
    return []


def encode_dc_chain(dcs, mode: int) -> DiffChain:
    dcs = np.asarray(dcs, dtype=float)
    if dcs.size == 0:
        raise ValueError("empty DC grid")
    if mode == 0:
        return DiffChain(0)
    return DiffChain(mode, dcs - dc_predictors(dcs, mode))


def decode_dc_chain(chain: DiffChain, dcs=None):
    """Rebuild DCs from differences (mode 0 returns ``dcs`` unchanged)."""
    if chain.mode == 0:
        if dcs is None:
            raise ValueError("mode 0 carries no differences; pass the absolute DCs")
        return np.asarray(dcs, dtype=float)
    z = chain.z
    rows, cols = z.shape
    out = np.zeros_like(z)
    if chain.mode == 1:
        out = np.cumsum(z, axis=1)
    elif chain.mode == 2:
        out = np.cumsum(z.ravel()).reshape(z.shape)
    else:
        for r in range(rows):
            for c in range(cols):
                nb = predictor_blocks(r, c, 3, cols)
                pred = sum(out[b] for b in nb) / len(nb) if nb else 0.0
                out[r, c] = z[r, c] + pred
    return out


def _candidates(value, step, twos):
    if twos:
        level = value / step
        if level == np.round(level):
            lo, hi = sign_candidates_category(*magnitude_category(int(np.round(level))))
            return lo * step, hi * step
    return sign_candidates_plain(value)


def mask_signs(coeffs: CoeffImage, u: int, cfg: CodingConfig, chain: DiffChain | None = None,
               rng_seed=None) -> SignMask:
    """Hide the signs of the first ``u`` zigzag positions of every block.

    Zero values (up to round-off) have no sign and stay known.  Under
    differential DC coding position 0 hides the sign of ``z``.  Unknowns whose candidates are both
    smaller than ``cfg.threshold`` in magnitude are forced to zero.
    ``rng_seed`` is accepted for interface symmetry; masking is
    deterministic and consumes no randomness.
    """
    n = coeffs.n
    if not 1 <= u <= n * n:
        raise ValueError(f"U must be in [1, {n * n}], got {u}")
    if chain is None:
        chain = encode_dc_chain(coeffs.dc, cfg.dc_prediction_mode)
    if chain.mode != cfg.dc_prediction_mode:
        raise ValueError("chain mode differs from the coding configuration")
    steps = cfg.quant.steps if cfg.quant is not None else np.ones((n, n))
    twos = cfg.twos_complement and cfg.quant is not None
    unknowns = {}
    for br in range(coeffs.block_rows):
        for bc in range(coeffs.block_cols):
            for k, l in zigzag_order(n)[:u]:
                if (k, l) == (0, 0) and chain.mode != 0:
                    value = float(chain.z[br, bc])
                else:
                    value = float(coeffs.coeffs[br, bc, k, l])
                if abs(value) <= SIGNLESS:
                    continue
                lo, hi = _candidates(value, float(steps[k, l]), twos)
                unknowns[(br, bc, k, l)] = Unknown(float(lo), float(hi), value)
    mask = SignMask(coeffs.block_rows, coeffs.block_cols, n, unknowns)
    return apply_threshold(mask, cfg.threshold)


def apply_threshold(mask: SignMask, threshold: float) -> SignMask:
    """Move unknowns with ``max(|lo|, |hi|) < threshold`` to forced zeros."""
    if threshold <= 0:
        return mask
    keep, zeroed = {}, set(mask.forced_zero)
    for key, unk in mask.unknowns.items():
        if max(abs(unk.lo), abs(unk.hi)) < threshold:
            zeroed.add(key)
        else:
            keep[key] = unk
    return replace(mask, unknowns=keep, forced_zero=frozenset(zeroed),
                   zero_bound=max(mask.zero_bound, float(threshold)) if zeroed else 0.0)


def observed(coeffs: CoeffImage, mask: SignMask, chain: DiffChain):
    """Coefficients and differences as transmitted: hidden values set to 0.

    Under differential coding the absolute DCs are not transmitted either.
    """
    data = np.array(coeffs.coeffs)
    z = None if chain.mode == 0 else np.array(chain.z)
    for br, bc, k, l in mask.hidden():
        if (k, l) == (0, 0) and z is not None:
            z[br, bc] = 0.0
        else:
            data[br, bc, k, l] = 0.0
    if z is not None:
        data[:, :, 0, 0] = 0.0
    if coeffs.quant is not None:
        levels = np.round(data / coeffs.quant.steps).astype(np.int64)
        obs = CoeffImage(levels * coeffs.quant.steps, quant=coeffs.quant, quantized=levels,
                         x_min=coeffs.x_min, x_max=coeffs.x_max)
    else:
        obs = coeffs.with_coeffs(data)
    return obs, DiffChain(chain.mode, z)


def _fmt(value):
    return f"{float(value):.17g}"


def _cfg_line(cfg: CodingConfig):
    qf = "none" if cfg.qf is None else str(cfg.qf)
    return (f"cfg level_shift={int(cfg.level_shift)} qf={qf} dcpred={cfg.dc_prediction_mode} "
            f"twos={int(cfg.twos_complement)} T={_fmt(cfg.threshold)} "
            f"Rx={int(cfg.relax_x)} Ry={int(cfg.relax_y)}")


def write_coeff_file(coeffs: CoeffImage, mask: SignMask, chain: DiffChain,
                     cfg: CodingConfig) -> str:
    """Serialize to the line-oriented ``SBC1`` text format.

    Truth values are never written here; see :func:`write_truth_file`.
    A ``quant`` line with the 64 steps follows the ``cfg`` line whenever a
    quantization table is in use.
    """
    n = coeffs.n
    if (mask.block_rows, mask.block_cols, mask.n) != (coeffs.block_rows, coeffs.block_cols, n):
        raise ValueError("mask dimensions do not match coefficients")
    obs, obs_chain = observed(coeffs, mask, chain)
    lines = [MAGIC, f"dims {coeffs.width} {coeffs.height} {n}", _cfg_line(cfg)]
    if cfg.quant is not None:
        lines.append("quant " + " ".join(str(int(q)) for q in cfg.quant.steps.ravel()))
    for br in range(coeffs.block_rows):
        for bc in range(coeffs.block_cols):
            tokens = []
            for k, l in zigzag_order(n):
                key = (br, bc, k, l)
                if key in mask.unknowns:
                    unk = mask.unknowns[key]
                    tokens.append(f"u:{_fmt(unk.lo)}:{_fmt(unk.hi)}")
                elif key in mask.forced_zero:
                    tokens.append("z0")
                elif (k, l) == (0, 0) and chain.mode != 0:
                    tokens.append(f"k:{_fmt(obs_chain.z[br, bc])}")
                else:
                    tokens.append(f"k:{_fmt(obs.coeffs[br, bc, k, l])}")
            lines.append(" ".join(tokens))
    return "\n".join(lines) + "\n"


def _parse_cfg(line, quant):
    parts = line.split()
    if not parts or parts[0] != "cfg":
        raise CoeffFormatError("missing cfg line")
    try:
        kv = dict(p.split("=", 1) for p in parts[1:])
        qf = None if kv["qf"] == "none" else int(kv["qf"])
        return CodingConfig(
            level_shift=bool(int(kv["level_shift"])),
            quant=quant,
            qf=qf,
            dc_prediction_mode=int(kv["dcpred"]),
            twos_complement=bool(int(kv["twos"])),
            threshold=float(kv["T"]),
            relax_x=bool(int(kv["Rx"])),
            relax_y=bool(int(kv["Ry"])),
        )
    except (KeyError, ValueError) as exc:
        raise CoeffFormatError(f"bad cfg line: {exc}") from None


def read_coeff_file(content: str):
    """Parse ``SBC1`` text into ``(coeffs, mask, chain, cfg)``.

    Hidden positions read back as 0 in ``coeffs``; under differential DC
    coding the DC entries of ``coeffs`` are 0 and the transmitted
    differences live in ``chain``.
    """
    lines = content.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise CoeffFormatError("not an SBC1 coefficient file")
    try:
        tag, w, h, n = lines[1].split()
        width, height, n = int(w), int(h), int(n)
        assert tag == "dims"
    except (IndexError, ValueError, AssertionError):
        raise CoeffFormatError("bad dims line") from None
    if n < 1 or width <= 0 or height <= 0 or width % n or height % n:
        raise CoeffFormatError("dimensions must be positive multiples of the block size")
    body = 3
    quant = None
    if len(lines) > 3 and lines[3].startswith("quant"):
        try:
            steps = [int(t) for t in lines[3].split()[1:]]
            quant = QuantTable(np.array(steps).reshape(n, n), "explicit")
        except ValueError as exc:
            raise CoeffFormatError(f"bad quant line: {exc}") from None
        body = 4
    cfg = _parse_cfg(lines[2] if len(lines) > 2 else "", quant)
    if cfg.qf is not None and quant is not None:
        cfg = replace(cfg, quant=QuantTable(quant.steps, f"qf-scaled({cfg.qf})"))
    br_count, bc_count = height // n, width // n
    block_lines = [ln for ln in lines[body:] if ln.strip()]
    if len(block_lines) != br_count * bc_count:
        raise CoeffFormatError(
            f"expected {br_count * bc_count} block lines, got {len(block_lines)}")
    data = np.zeros((br_count, bc_count, n, n))
    z = np.zeros((br_count, bc_count))
    unknowns, zeroed = {}, set()
    order = zigzag_order(n)
    diff = cfg.dc_prediction_mode != 0
    for idx, line in enumerate(block_lines):
        br, bc = divmod(idx, bc_count)
        tokens = line.split()
        if len(tokens) != n * n:
            raise CoeffFormatError(f"block {idx}: expected {n * n} tokens, got {len(tokens)}")
        for (k, l), tok in zip(order, tokens):
            key = (br, bc, k, l)
            try:
                if tok == "z0":
                    zeroed.add(key)
                elif tok.startswith("u:"):
                    _, lo, hi = tok.split(":")
                    lo, hi = float(lo), float(hi)
                    if lo > hi:
                        raise CoeffFormatError(f"block {idx}: candidate lo {lo} > hi {hi}")
                    unknowns[key] = Unknown(lo, hi)
                elif tok.startswith("k:"):
                    value = float(tok[2:])
                    if (k, l) == (0, 0) and diff:
                        z[br, bc] = value
                    else:
                        data[br, bc, k, l] = value
                else:
                    raise CoeffFormatError(f"block {idx}: bad token {tok!r}")
            except ValueError as exc:
                if isinstance(exc, CoeffFormatError):
                    raise
                raise CoeffFormatError(f"block {idx}: bad token {tok!r}") from None
    x_min, x_max = cfg.pixel_range
    if quant is not None:
        levels = np.round(data / quant.steps).astype(np.int64)
        if not np.array_equal(levels * quant.steps, data):
            raise CoeffFormatError("known coefficients are not multiples of the quantization steps")
        coeffs = CoeffImage(data, quant=quant, quantized=levels, x_min=x_min, x_max=x_max)
    else:
        coeffs = CoeffImage(data, x_min=x_min, x_max=x_max)
    mask = SignMask(br_count, bc_count, n, unknowns, frozenset(zeroed),
                    cfg.threshold if zeroed else 0.0)
    chain = DiffChain(cfg.dc_prediction_mode, z if diff else None)
    return coeffs, mask, chain, cfg


def write_truth_file(mask: SignMask) -> str:
    """Sidecar with the true sign of each unknown: ``+`` (hi), ``-`` (lo), ``.``."""
    n = mask.n
    lines = [TRUTH_MAGIC, f"dims {mask.block_cols * n} {mask.block_rows * n} {n}"]
    for br in range(mask.block_rows):
        for bc in range(mask.block_cols):
            tokens = []
            for k, l in zigzag_order(n):
                unk = mask.unknowns.get((br, bc, k, l))
                if unk is None:
                    tokens.append(".")
                elif unk.truth is None:
                    raise ValueError(f"unknown at {(br, bc, k, l)} carries no truth value")
                else:
                    tokens.append("+" if unk.truth == unk.hi else "-")
            lines.append(" ".join(tokens))
    return "\n".join(lines) + "\n"


def read_truth_file(content: str, mask: SignMask) -> SignMask:
    """Attach truth values from a sidecar to ``mask``."""
    lines = [ln for ln in content.splitlines() if ln.strip()]
    n = mask.n
    if not lines or lines[0].strip() != TRUTH_MAGIC:
        raise CoeffFormatError("not an SBT1 truth file")
    if lines[1].split() != ["dims", str(mask.block_cols * n), str(mask.block_rows * n), str(n)]:
        raise CoeffFormatError("truth file dimensions do not match the mask")
    if len(lines) - 2 != mask.block_rows * mask.block_cols:
        raise CoeffFormatError("truth file block count mismatch")
    unknowns = dict(mask.unknowns)
    for idx, line in enumerate(lines[2:]):
        br, bc = divmod(idx, mask.block_cols)
        for (k, l), tok in zip(zigzag_order(n), line.split()):
            key = (br, bc, k, l)
            if key in unknowns:
                if tok not in "+-" or len(tok) != 1:
                    raise CoeffFormatError(f"block {idx}: expected sign token at {key}")
                unk = unknowns[key]
                unknowns[key] = replace(unk, truth=unk.hi if tok == "+" else unk.lo)
            elif tok != ".":
                raise CoeffFormatError(f"block {idx}: sign given for known position {key}")
    return replace(mask, unknowns=unknowns)
