"""End-to-end sign recovery: naive baselines, relaxed LP, hierarchical MILP."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codecmodel import (
    CodingConfig,
    DiffChain,
    SignMask,
    apply_threshold,
    decode_dc_chain,
)
from .imagecore import PixelImage, finalize_samples, level_shift
from .lpmodel import ModelScope, build_alignment_model, build_model
from .solver import DEFAULT_TIME_LIMIT, solve_lp, solve_milp
from .transform import CoeffImage, basis_for, inverse_dct

__all__ = [
    "METHODS",
    "ALIGNMENTS",
    "RecoveryConfig",
    "RecoveryResult",
    "RecoveryError",
    "assemble",
    "decode",
    "recover",
    "recover_naive",
    "recover_naive_lp",
    "recover_relaxed_lp",
    "recover_hier_milp",
]

log = logging.getLogger(__name__)

METHODS = ("naive-neg", "naive-pos", "naive-lp", "relaxed-lp", "hier-milp")
ALIGNMENTS = ("none", "global-milp", "block-lp", "region-lp")
ZERO_TOL = 1e-9


class RecoveryError(RuntimeError):
    """A solve needed by a recovery method produced no usable solution."""

    def __init__(self, message, status):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class RecoveryConfig:
    method: str = "relaxed-lp"
    threshold: float | None = None
    zero_sign_strategy: int = 1
    bernoulli_p: float = 0.5
    region_size: tuple = (32, 32)
    dependency_mode: int = 0
    alignment: str = "global-milp"
    milp_time_limit: float = DEFAULT_TIME_LIMIT
    seed: int = 0
    backend: str = "auto"
    jobs: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"unknown alignment {self.alignment!r}; valid: {', '.join(ALIGNMENTS)}")
        if self.zero_sign_strategy not in (1, 2, 3, 4):
            raise ValueError("zero_sign_strategy must be 1, 2, 3 or 4")
        if not 0.0 <= self.bernoulli_p <= 1.0:
            raise ValueError("bernoulli_p must lie in [0, 1]")
        if self.dependency_mode not in (0, 1, 2):
            raise ValueError("dependency_mode must be 0, 1 or 2")
        if self.milp_time_limit <= 0:
            raise ValueError("milp_time_limit must be positive")

    @property
    def effective_threshold(self):
        """T=5 for the relaxed LP, T=0 otherwise, unless set explicitly."""
        if self.threshold is not None:
            return self.threshold
        return 5.0 if self.method == "relaxed-lp" else 0.0


@dataclass
class RecoveryResult:
    image: PixelImage
    coeffs: np.ndarray
    choices: dict
    objective: float | None = None
    status: str = "optimal"
    stats: dict = field(default_factory=dict)


def _check_consistency(coeffs, mask, chain, cfg):
    if (mask.block_rows, mask.block_cols, mask.n) != (coeffs.block_rows, coeffs.block_cols, coeffs.n):
        raise ValueError("mask does not match the coefficient grid")
    if chain.mode != cfg.dc_prediction_mode:
        raise ValueError("chain mode differs from the coding configuration")


def assemble(coeffs: CoeffImage, mask: SignMask, chain: DiffChain, choices: dict) -> np.ndarray:
    """Full coefficient grid from transmitted data plus a value per unknown.

    ``choices`` maps unknown keys to values; forced-zero positions become 0
    and, under differential coding, DCs are rebuilt from the differences.
    """
    data = np.array(coeffs.coeffs)
    z = None if chain.mode == 0 else np.array(chain.z)
    for key in mask.forced_zero:
        if key[2:] == (0, 0) and z is not None:
            z[key[:2]] = 0.0
        else:
            data[key] = 0.0
    for key in mask.unknowns:
        value = choices[key]
        if key[2:] == (0, 0) and z is not None:
            z[key[:2]] = value
        else:
            data[key] = value
    if z is not None:
        data[:, :, 0, 0] = decode_dc_chain(DiffChain(chain.mode, z))
    return data


def decode(coeffs: CoeffImage, data: np.ndarray, cfg: CodingConfig) -> PixelImage:
    """Inverse DCT, undo the level shift, clamp and round."""
    raw = inverse_dct(coeffs.with_coeffs(data), basis_for(coeffs.n))
    if cfg.level_shift:
        raw = level_shift(raw, "inverse")
    return PixelImage(finalize_samples(raw.samples, 0.0, 255.0))


def _result(coeffs, data, cfg, choices, **kw):
    return RecoveryResult(decode(coeffs, data, cfg), data, choices, **kw)


def recover_naive(coeffs, mask, chain, cfg, variant="negative", threshold=0.0):
    """Every hidden sign set negative (``lo``) or positive (``hi``)."""
    _check_consistency(coeffs, mask, chain, cfg)
    if variant not in ("negative", "positive"):
        raise ValueError("variant must be 'negative' or 'positive'")
    mask = apply_threshold(mask, threshold)
    choices = {key: (u.lo if variant == "negative" else u.hi) for key, u in mask}
    return _result(coeffs, assemble(coeffs, mask, chain, choices), cfg, choices)


def _require(res, what):
    if not res.has_solution:
        raise RecoveryError(f"{what}: solver returned {res.status}", res.status)
    return res


def _relaxed_solution(coeffs, mask, chain, cfg, backend):
    model = build_model(coeffs, mask, chain, cfg, integrality="lp-relaxed")
    res = _require(solve_lp(model, backend=backend), "LP relaxation")
    return model, res


def recover_naive_lp(coeffs, mask, chain, cfg, threshold=0.0, backend="auto"):
    """Relaxed coefficient values used as they are (magnitudes not restored)."""
    _check_consistency(coeffs, mask, chain, cfg)
    mask = apply_threshold(mask, threshold)
    model, res = _relaxed_solution(coeffs, mask, chain, cfg, backend)
    data = model.block_coeffs(res.values)
    choices = {key: float(res.values[v]) for key, v in model.relaxed_vars.items()}
    return _result(coeffs, data, cfg, choices, objective=res.objective, status=res.status,
                   stats=res.stats)


def _pick_sign(unk, relaxed, strategy, p, rng):
    if relaxed > ZERO_TOL:
        return unk.hi
    if relaxed < -ZERO_TOL:
        return unk.lo
    if strategy == 1:
        return 0.0
    if strategy == 2:
        return unk.hi
    if strategy == 3:
        return unk.lo
    return unk.hi if rng.random() < p else unk.lo


def recover_relaxed_lp(coeffs, mask, chain, cfg, rcfg: RecoveryConfig | None = None):
    """LP relaxation, then the sign of each relaxed value picks a candidate."""
    rcfg = rcfg or RecoveryConfig("relaxed-lp")
    _check_consistency(coeffs, mask, chain, cfg)
    mask = apply_threshold(mask, rcfg.effective_threshold)
    model, res = _relaxed_solution(coeffs, mask, chain, cfg, rcfg.backend)
    rng = np.random.default_rng(rcfg.seed)
    choices = {}
    for key, unk in mask:
        relaxed = float(res.values[model.relaxed_vars[key]])
        choices[key] = _pick_sign(unk, relaxed, rcfg.zero_sign_strategy, rcfg.bernoulli_p, rng)
    data = assemble(coeffs, mask, chain, choices)
    return _result(coeffs, data, cfg, choices, objective=res.objective, status=res.status,
                   stats=res.stats)


# --------------------------------------------------------------------------
# hierarchical MILP

def _regions(coeffs, rcfg, cfg):
    rh, rw = rcfg.region_size
    n = coeffs.n
    H, W = coeffs.height, coeffs.width
    if rh % n or rw % n or rh <= 0 or rw <= 0:
        raise ValueError(f"region size {rh}x{rw} must be a positive multiple of {n}")
    if H % rh or W % rw:
        raise ValueError(f"region size {rh}x{rw} does not tile a {H}x{W} image")
    if (rcfg.dependency_mode in (1, 2) and cfg.dc_prediction_mode == 2
            and rh != n and rw != W):
        raise ValueError(
            "DC prediction mode 2 with dependency mode 1/2 needs regions one block row "
            f"high or as wide as the image (N x k*N or k*N x {W}), got {rh}x{rw}")
    return [(top, left, rh, rw) for top in range(0, H, rh) for left in range(0, W, rw)]


def _selector_choices(model, values, mask):
    out = {}
    for key, s in model.selectors.items():
        unk = mask.unknowns[key]
        out[key] = unk.hi if values[s] > 0.5 else unk.lo
    return out


def _solve_region(coeffs, mask, chain, cfg, rcfg, rect, dc_constants, boundary, drop):
    top, left, h, w = rect
    scope = ModelScope(top, left, h, w, boundary_pixels=boundary, dc_constants=dc_constants,
                       drop_external_links=drop)
    model = build_model(coeffs, mask, chain, cfg, scope, "milp")
    res = _require(solve_milp(model, rcfg.milp_time_limit, rcfg.seed, rcfg.backend),
                   f"region MILP at ({top}, {left})")
    return model, res


def recover_hier_milp(coeffs, mask, chain, cfg, rcfg: RecoveryConfig | None = None):
    """Regional MILPs, then a whole-image brightness alignment step.

    Dependency mode 0 drops prediction links that leave a region and lets
    regions solve independently; modes 1 and 2 solve regions in raster
    order, feeding already solved DCs (and, for mode 2, boundary pixels)
    into later regions as constants.
    """
    rcfg = rcfg or RecoveryConfig("hier-milp")
    _check_consistency(coeffs, mask, chain, cfg)
    mask = apply_threshold(mask, rcfg.effective_threshold)
    rects = _regions(coeffs, rcfg, cfg)
    n = coeffs.n
    stage1 = np.zeros_like(coeffs.coeffs)
    choices = {}
    stats = {"regions": [], "status": "optimal"}
    region_of_block = np.zeros((coeffs.block_rows, coeffs.block_cols), dtype=np.int64)
    for idx, (top, left, h, w) in enumerate(rects):
        region_of_block[top // n:(top + h) // n, left // n:(left + w) // n] = idx

    def absorb(rect, model, res):
        top, left, h, w = rect
        br, bc = top // n, left // n
        stage1[br:br + h // n, bc:bc + w // n] = model.block_coeffs(res.values)
        choices.update(_selector_choices(model, res.values, mask))
        stats["regions"].append({"rect": list(rect), "status": res.status,
                                 "objective": res.objective, **res.stats})
        if res.status != "optimal":
            stats["status"] = res.status

    sequential = rcfg.dependency_mode in (1, 2) and chain.mode != 0
    if rcfg.dependency_mode == 2 and not sequential:
        sequential = True
    if not sequential:
        drop = chain.mode != 0
        work = lambda rect: _solve_region(coeffs, mask, chain, cfg, rcfg, rect, None, None, drop)
        if rcfg.jobs > 1:
            with ThreadPoolExecutor(rcfg.jobs) as pool:
                solved = list(pool.map(work, rects))
        else:
            solved = [work(rect) for rect in rects]
        for rect, (model, res) in zip(rects, solved):
            absorb(rect, model, res)
    else:
        dc_constants = np.full((coeffs.block_rows, coeffs.block_cols), np.nan)
        boundary = np.full((coeffs.height, coeffs.width), np.nan)
        for rect in rects:
            use_boundary = boundary if rcfg.dependency_mode == 2 else None
            try:
                model, res = _solve_region(coeffs, mask, chain, cfg, rcfg, rect, dc_constants,
                                           use_boundary, False)
            except RecoveryError as err:
                if err.status != "infeasible":
                    raise
                # Earlier sign errors can make the substituted DC constants
                # incompatible with this region; solve it without the links.
                log.info("region %s infeasible with solved constants; dropping links", rect)
                stats.setdefault("fallbacks", []).append(list(rect))
                model, res = _solve_region(coeffs, mask, chain, cfg, rcfg, rect, None,
                                           use_boundary, True)
            absorb(rect, model, res)
            top, left, h, w = rect
            br, bc = top // n, left // n
            dc_constants[br:br + h // n, bc:bc + w // n] = stage1[br:br + h // n, bc:bc + w // n, 0, 0]
            boundary[top:top + h, left:left + w] = model.pixels(res.values)

    final = stage1
    objective = None
    if rcfg.alignment != "none":
        model = build_alignment_model(coeffs, mask, chain, cfg, stage1, rcfg.alignment,
                                      region_of_block=region_of_block, choices=choices)
        if model is not None:
            if rcfg.alignment == "global-milp":
                res = _require(solve_milp(model, rcfg.milp_time_limit, rcfg.seed, rcfg.backend),
                               "global alignment MILP")
                choices.update(_selector_choices(model, res.values, mask))
            else:
                res = _require(solve_lp(model, backend=rcfg.backend), "alignment LP")
            final = model.block_coeffs(res.values)
            objective = res.objective
            stats["alignment"] = {"status": res.status, "objective": res.objective, **res.stats}
            if res.status != "optimal":
                stats["status"] = res.status
    return _result(coeffs, final, cfg, choices, objective=objective, status=stats["status"],
                   stats=stats)


def recover(coeffs, mask, chain, cfg, rcfg: RecoveryConfig) -> RecoveryResult:
    """Dispatch on ``rcfg.method``."""
    t = rcfg.effective_threshold
    if rcfg.method == "naive-neg":
        return recover_naive(coeffs, mask, chain, cfg, "negative", t)
    if rcfg.method == "naive-pos":
        return recover_naive(coeffs, mask, chain, cfg, "positive", t)
    if rcfg.method == "naive-lp":
        return recover_naive_lp(coeffs, mask, chain, cfg, t, rcfg.backend)
    if rcfg.method == "relaxed-lp":
        return recover_relaxed_lp(coeffs, mask, chain, cfg, rcfg)
    return recover_hier_milp(coeffs, mask, chain, cfg, rcfg)
