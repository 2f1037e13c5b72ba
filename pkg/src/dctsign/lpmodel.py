"""Linear models of the sign recovery problem.

Every model has one continuous variable per pixel in scope, tied to the
block coefficients by ``x = A y``; unknown signs enter through selector
variables ``s`` with ``y = lo + s (hi - lo)`` (binary for the MILP, ``[0, 1]``
for the relaxation); the objective is the total variation over 4-neighbour
pixel pairs, linearized with one auxiliary ``h >= |x_p - x_q|`` per pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .codecmodel import CodingConfig, DiffChain, SignMask, predictor_blocks
from .transform import CoeffImage, basis_for, quant_error_bound

__all__ = [
    "LinearModel",
    "ModelScope",
    "ModelError",
    "build_model",
    "build_alignment_model",
    "pixel_bounds",
    "total_variation",
    "dump_model",
]

LE, EQ, GE = "<", "=", ">"


class ModelError(ValueError):
    """Raised when a scope or dependency cannot be modelled."""


@dataclass
class LinearModel:
    """Solver-neutral linear program ``min c'x`` over ``A x (<,=,>) rhs``.

    ``keys[j]`` is the semantic name of variable ``j`` (``("pixel", i, j)``,
    ``("coeff", br, bc, k, l)``, ``("sel", br, bc, k, l)``, ``("diff", br, bc)``,
    ``("aux", i, j, i2, j2)``, ...).  ``layout_var``/``layout_const`` give,
    for every block in scope, either the variable carrying coefficient
    ``(k, l)`` (``-1`` if constant) or its constant value.
    """

    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    keys: list
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    var_index: dict = field(default_factory=dict)
    selectors: dict = field(default_factory=dict)
    relaxed_vars: dict = field(default_factory=dict)
    layout_var: np.ndarray | None = None
    layout_const: np.ndarray | None = None
    block_origin: tuple = (0, 0)
    pixel_origin: tuple = (0, 0)
    scope_shape: tuple = (0, 0)
    unresolved: frozenset = frozenset()

    @classmethod
    def from_arrays(cls, c, A, sense, rhs, lb, ub, binary=None, keys=None):
        """Plain model from dense arrays (handy for small hand-written LPs)."""
        c = np.asarray(c, dtype=float)
        n = len(c)
        keys = keys or [("x", j) for j in range(n)]
        A = sp.csr_matrix(np.asarray(A, dtype=float).reshape(-1, n))
        binary = np.zeros(n, dtype=bool) if binary is None else np.asarray(binary, dtype=bool)
        return cls(lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float), binary=binary,
                   keys=list(keys), A=A, sense=np.asarray(sense, dtype="<U1"),
                   rhs=np.asarray(rhs, dtype=float), c=c,
                   var_index={k: j for j, k in enumerate(keys)})

    @property
    def num_vars(self):
        return len(self.lb)

    @property
    def num_constraints(self):
        return self.A.shape[0]

    @property
    def num_binary(self):
        return int(self.binary.sum())

    def row_bounds(self):
        lo = np.where(self.sense == LE, -np.inf, self.rhs)
        hi = np.where(self.sense == GE, np.inf, self.rhs)
        return lo, hi

    def objective(self, values):
        return float(self.c @ values)

    def max_violation(self, values):
        """Largest constraint or bound violation of ``values``."""
        values = np.asarray(values, dtype=float)
        act = self.A @ values
        lo, hi = self.row_bounds()
        viol = np.maximum(lo - act, act - hi)
        bnd = np.maximum(self.lb - values, values - self.ub)
        return float(max(viol.max(initial=0.0), bnd.max(initial=0.0)))

    def block_coeffs(self, values):
        """Coefficient grid of the scope's blocks under a solution."""
        safe = np.where(self.layout_var >= 0, self.layout_var, 0)
        return np.where(self.layout_var >= 0, np.asarray(values)[safe], self.layout_const)

    def pixels(self, values):
        h, w = self.scope_shape
        i0, j0 = self.pixel_origin
        ids = [self.var_index[("pixel", i, j)] for i in range(i0, i0 + h) for j in range(j0, j0 + w)]
        return np.asarray(values)[ids].reshape(h, w)

    def with_relaxation(self):
        """Copy with every binary variable relaxed to ``[0, 1]``."""
        return _replace_binary(self, np.zeros_like(self.binary))

    def with_bounds(self, overrides):
        """Copy with ``{var_id: (lb, ub)}`` bound overrides."""
        lb, ub = self.lb.copy(), self.ub.copy()
        for j, (lo, hi) in overrides.items():
            lb[j], ub[j] = lo, hi
        out = _replace_binary(self, self.binary)
        out.lb, out.ub = lb, ub
        return out


def _replace_binary(model, binary):
    return LinearModel(
        lb=model.lb, ub=model.ub, binary=binary, keys=model.keys, A=model.A,
        sense=model.sense, rhs=model.rhs, c=model.c, var_index=model.var_index,
        selectors=model.selectors, relaxed_vars=model.relaxed_vars,
        layout_var=model.layout_var, layout_const=model.layout_const,
        block_origin=model.block_origin, pixel_origin=model.pixel_origin,
        scope_shape=model.scope_shape, unresolved=model.unresolved)


@dataclass(frozen=True)
class ModelScope:
    """Block-aligned pixel rectangle plus what is known around it.

    ``boundary_pixels``: full-image array of already solved pixel values
    (NaN where unknown); pairs between the scope and such pixels join the
    objective.  ``dc_constants``: full block-grid array of already solved
    DCs (NaN where unknown), used for prediction links leaving the scope.
    ``drop_external_links``: silently drop prediction links leaving the
    scope instead.  ``fixed``: unknown keys pinned to a chosen value.
    """

    top: int = 0
    left: int = 0
    height: int | None = None
    width: int | None = None
    boundary_pixels: np.ndarray | None = None
    dc_constants: np.ndarray | None = None
    drop_external_links: bool = False
    fixed: dict = field(default_factory=dict)

    @classmethod
    def whole(cls, coeffs: CoeffImage, **kw):
        return cls(0, 0, coeffs.height, coeffs.width, **kw)

    def resolve(self, coeffs: CoeffImage):
        n = coeffs.n
        h = coeffs.height - self.top if self.height is None else self.height
        w = coeffs.width - self.left if self.width is None else self.width
        if any(v % n for v in (self.top, self.left, h, w)) or h <= 0 or w <= 0:
            raise ModelError(f"scope {self.top},{self.left} {h}x{w} is not block-aligned for N={n}")
        if self.top + h > coeffs.height or self.left + w > coeffs.width:
            raise ModelError("scope extends beyond the image")
        return self.top // n, self.left // n, h // n, w // n


class _Builder:
    def __init__(self):
        self.lb, self.ub, self.binary, self.keys = [], [], [], []
        self.index = {}
        self.rows, self.cols, self.vals = [], [], []
        self.sense, self.rhs = [], []

    def var(self, key, lb, ub, binary=False):
        if key in self.index:
            raise ModelError(f"duplicate variable {key}")
        j = len(self.lb)
        self.index[key] = j
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self.keys.append(key)
        return j

    def vars(self, keys, lb, ub):
        start = len(self.lb)
        count = len(keys)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        for offset, key in enumerate(keys):
            if key in self.index:
                raise ModelError(f"duplicate variable {key}")
            self.index[key] = start + offset
        self.keys.extend(keys)
        self.lb.extend(lb.tolist())
        self.ub.extend(ub.tolist())
        self.binary.extend([False] * count)
        return np.arange(start, start + count)

    def row(self, cols, vals, sense, rhs):
        r = len(self.rhs)
        self.rows.append(np.full(len(cols), r))
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))
        self.sense.append(sense)
        self.rhs.append(float(rhs))

    def rows_dense(self, cols, mat, sense, rhs):
        """Add ``len(rhs)`` rows sharing column list ``cols``."""
        mat = np.asarray(mat, dtype=float)
        r0 = len(self.rhs)
        m, k = mat.shape
        nz = mat != 0
        rr, cc = np.nonzero(nz)
        self.rows.append(r0 + rr)
        self.cols.append(np.asarray(cols, dtype=np.int64)[cc])
        self.vals.append(mat[nz])
        self.sense.extend([sense] * m)
        self.rhs.extend(np.asarray(rhs, dtype=float).tolist())

    def rows_pairs(self, cols_a, vals_a, cols_b, vals_b, sense, rhs):
        """Add rows each with (up to) two entries."""
        r0 = len(self.rhs)
        m = len(rhs)
        idx = np.arange(r0, r0 + m)
        self.rows.extend([idx, idx])
        self.cols.extend([np.asarray(cols_a, dtype=np.int64), np.asarray(cols_b, dtype=np.int64)])
        self.vals.extend([np.broadcast_to(np.asarray(vals_a, dtype=float), (m,)),
                          np.broadcast_to(np.asarray(vals_b, dtype=float), (m,))])
        self.sense.extend([sense] * m)
        self.rhs.extend(np.asarray(rhs, dtype=float).tolist())

    def model(self, **extra):
        n = len(self.lb)
        m = len(self.rhs)
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        A.sum_duplicates()
        A.eliminate_zeros()
        c = np.zeros(n)
        for j, key in enumerate(self.keys):
            if key[0] == "aux":
                c[j] = 1.0
        return LinearModel(
            lb=np.array(self.lb), ub=np.array(self.ub), binary=np.array(self.binary, dtype=bool),
            keys=self.keys, A=A, sense=np.array(self.sense, dtype="<U1"),
            rhs=np.array(self.rhs), c=c, var_index=self.index, **extra)


def pixel_bounds(coeffs: CoeffImage, cfg: CodingConfig):
    """Per-block-position pixel bounds, widened when quantization is relaxed."""
    n = coeffs.n
    lo = np.full((n, n), coeffs.x_min)
    hi = np.full((n, n), coeffs.x_max)
    if cfg.relax_x and cfg.quant is not None:
        eps = quant_error_bound(cfg.quant, basis_for(n)) + 1.0
        lo, hi = lo - eps, hi + eps
    return lo, hi


def _add_pixels(b, coeffs, cfg, top, left, h, w):
    n = coeffs.n
    plo, phi = pixel_bounds(coeffs, cfg)
    keys = [("pixel", i, j) for i in range(top, top + h) for j in range(left, left + w)]
    lo = np.tile(plo, (h // n, w // n)).ravel()
    hi = np.tile(phi, (h // n, w // n)).ravel()
    return b.vars(keys, lo, hi).reshape(h, w), (plo, phi)


def _add_objective(b, pix, top, left, boundary):
    h, w = pix.shape
    pairs = []
    if w > 1:
        pairs.append((pix[:, :-1].ravel(), pix[:, 1:].ravel(),
                      [(i, j, i, j + 1) for i in range(top, top + h) for j in range(left, left + w - 1)]))
    if h > 1:
        pairs.append((pix[:-1, :].ravel(), pix[1:, :].ravel(),
                      [(i, j, i + 1, j) for i in range(top, top + h - 1) for j in range(left, left + w)]))
    for p, q, names in pairs:
        hv = b.vars([("aux",) + t for t in names], 0.0, np.inf)
        m = len(names)
        zeros = np.zeros(m)
        # h - x_p + x_q >= 0 and h + x_p - x_q >= 0
        for sign in (1.0, -1.0):
            r0 = len(b.rhs)
            idx = np.arange(r0, r0 + m)
            b.rows.extend([idx, idx, idx])
            b.cols.extend([hv, p.astype(np.int64), q.astype(np.int64)])
            b.vals.extend([np.ones(m), np.full(m, -sign), np.full(m, sign)])
            b.sense.extend([GE] * m)
            b.rhs.extend(zeros.tolist())
    if boundary is None:
        return
    H, W = boundary.shape
    cross = []
    for i in range(top, top + h):
        for j, jo in ((left, left - 1), (left + w - 1, left + w)):
            if 0 <= jo < W and not np.isnan(boundary[i, jo]):
                cross.append((i, j, i, jo))
    for j in range(left, left + w):
        for i, io in ((top, top - 1), (top + h - 1, top + h)):
            if 0 <= io < H and not np.isnan(boundary[io, j]):
                cross.append((i, j, io, j))
    if not cross:
        return
    hv = b.vars([("aux",) + t for t in cross], 0.0, np.inf)
    xp = np.array([pix[i - top, j - left] for i, j, _, _ in cross])
    val = np.array([boundary[io, jo] for _, _, io, jo in cross])
    # h - x_p >= -v and h + x_p >= v
    b.rows_pairs(hv, 1.0, xp, -1.0, GE, -val)
    b.rows_pairs(hv, 1.0, xp, 1.0, GE, val)


def _dc_bounds(plo, phi, n):
    # a block's mean pixel is DC / N
    return n * plo.mean(), n * phi.mean()


def build_model(coeffs: CoeffImage, mask: SignMask, chain: DiffChain, cfg: CodingConfig,
                scope: ModelScope | None = None, integrality: str = "milp") -> LinearModel:
    """Model of the sign recovery problem restricted to ``scope``.

    ``coeffs`` holds the transmitted values: entries at hidden positions
    (and DCs under differential coding) are ignored.
    """
    if integrality not in ("milp", "lp-relaxed"):
        raise ValueError("integrality must be 'milp' or 'lp-relaxed'")
    scope = scope or ModelScope.whole(coeffs)
    br0, bc0, nbr, nbc = scope.resolve(coeffs)
    for key in scope.fixed:
        if key not in mask.unknowns:
            raise ModelError(f"fixed value given for {key}, which is not an unknown")
    binary = integrality == "milp"
    n = coeffs.n
    basis = basis_for(n)
    diff_mode = chain.mode
    relax_y = cfg.relax_y and cfg.quant is not None
    steps = cfg.quant.steps if cfg.quant is not None else None

    b = _Builder()
    top, left = br0 * n, bc0 * n
    pix, (plo, phi) = _add_pixels(b, coeffs, cfg, top, left, nbr * n, nbc * n)
    dc_lo, dc_hi = _dc_bounds(plo, phi, n)

    layout_var = np.full((nbr, nbc, n, n), -1, dtype=np.int64)
    layout_const = np.zeros((nbr, nbc, n, n))
    selectors, relaxed_vars = {}, {}
    unresolved = set()

    def unknown_var(key, var_key, unk):
        """Variable carrying an unknown's value, linked to its selector."""
        v = b.var(var_key, unk.lo, unk.hi)
        s = b.var(("sel",) + key, 0.0, 1.0, binary)
        b.row([v, s], [1.0, -unk.span], EQ, unk.lo)
        selectors[key] = s
        relaxed_vars[key] = v
        return v

    for lbr in range(nbr):
        for lbc in range(nbc):
            br, bc = br0 + lbr, bc0 + lbc
            for k in range(n):
                for l in range(n):
                    key = (br, bc, k, l)
                    is_dc = (k, l) == (0, 0)
                    if is_dc and diff_mode != 0:
                        continue
                    if key in mask.unknowns:
                        if key in scope.fixed:
                            layout_const[lbr, lbc, k, l] = scope.fixed[key]
                        else:
                            layout_var[lbr, lbc, k, l] = unknown_var(
                                key, ("coeff",) + key, mask.unknowns[key])
                    elif key in mask.forced_zero:
                        layout_const[lbr, lbc, k, l] = 0.0
                    elif relax_y:
                        y = coeffs.coeffs[br, bc, k, l]
                        half = steps[k, l] / 2.0
                        layout_var[lbr, lbc, k, l] = b.var(("coeff",) + key, y - half, y + half)
                    else:
                        layout_const[lbr, lbc, k, l] = coeffs.coeffs[br, bc, k, l]
            if diff_mode != 0:
                layout_var[lbr, lbc, 0, 0] = b.var(("coeff", br, bc, 0, 0), dc_lo, dc_hi)

    if diff_mode != 0:
        _add_dc_links(b, coeffs, mask, chain, scope, br0, bc0, nbr, nbc, layout_var,
                      selectors, relaxed_vars, unresolved, binary)

    _widen_for_zeroed(b, basis, pix, mask, diff_mode, br0, bc0, nbr, nbc)
    _add_block_rows(b, basis, pix, layout_var, layout_const)
    _add_objective(b, pix, top, left, scope.boundary_pixels)
    return b.model(selectors=selectors, relaxed_vars=relaxed_vars, layout_var=layout_var,
                   layout_const=layout_const, block_origin=(br0, bc0),
                   pixel_origin=(top, left), scope_shape=(nbr * n, nbc * n),
                   unresolved=frozenset(unresolved))


def _widen_for_zeroed(b, basis, pix, mask, diff_mode, br0, bc0, nbr, nbc):
    """Loosen pixel bounds by the most that thresholded coefficients can move them.

    A value zeroed by the threshold had magnitude below ``mask.zero_bound``,
    so dropping it moves pixel (i, j) by at most ``|A(i,j,k,l)| * bound``.
    Without this the true image may sit outside the model's pixel range and
    the model can become infeasible.  A zeroed DC difference shifts every
    later DC in its chain, so those are charged to all blocks at once.
    """
    bound = mask.zero_bound
    if not mask.forced_zero or bound <= 0:
        return
    n = basis.n
    weights = np.zeros((nbr, nbc, n, n))
    chain_zeroed = 0
    for br, bc, k, l in mask.forced_zero:
        if (k, l) == (0, 0) and diff_mode != 0:
            chain_zeroed += 1
        elif br0 <= br < br0 + nbr and bc0 <= bc < bc0 + nbc:
            weights[br - br0, bc - bc0, k, l] = 1.0
    slack = bound * np.einsum("ijkl,abkl->aibj", np.abs(basis.tensor), weights)
    slack = slack.reshape(nbr * n, nbc * n) + chain_zeroed * bound / n
    for var, extra in zip(pix.ravel(), slack.ravel()):
        b.lb[var] -= extra
        b.ub[var] += extra
    if diff_mode != 0:
        widen = n * float(slack.max())
        for lbr in range(nbr):
            for lbc in range(nbc):
                var = b.index[("coeff", br0 + lbr, bc0 + lbc, 0, 0)]
                b.lb[var] -= widen
                b.ub[var] += widen


def _add_dc_links(b, coeffs, mask, chain, scope, br0, bc0, nbr, nbc, layout_var,
                  selectors, relaxed_vars, unresolved, binary):
    """DC(b) - predictor(b) = z(b) for every block in scope."""
    mode = chain.mode
    for lbr in range(nbr):
        for lbc in range(nbc):
            br, bc = br0 + lbr, bc0 + lbc
            key = (br, bc, 0, 0)
            preds = predictor_blocks(br, bc, mode, coeffs.block_cols)
            weight = 1.0 / len(preds) if preds else 0.0
            cols, vals, const = [layout_var[lbr, lbc, 0, 0]], [1.0], 0.0
            dropped = False
            for pbr, pbc in preds:
                if br0 <= pbr < br0 + nbr and bc0 <= pbc < bc0 + nbc:
                    cols.append(layout_var[pbr - br0, pbc - bc0, 0, 0])
                    vals.append(-weight)
                elif scope.dc_constants is not None and not np.isnan(scope.dc_constants[pbr, pbc]):
                    const += weight * scope.dc_constants[pbr, pbc]
                elif scope.drop_external_links:
                    dropped = True
                    break
                else:
                    raise ModelError(
                        f"DC of block {(br, bc)} depends on block {(pbr, pbc)} outside the scope")
            if dropped:
                if key in mask.unknowns:
                    unresolved.add(key)
                continue
            if key in mask.unknowns:
                if key in scope.fixed:
                    z_const = scope.fixed[key]
                else:
                    unk = mask.unknowns[key]
                    zv = b.var(("diff", br, bc), unk.lo, unk.hi)
                    s = b.var(("sel",) + key, 0.0, 1.0, binary)
                    b.row([zv, s], [1.0, -unk.span], EQ, unk.lo)
                    selectors[key] = s
                    relaxed_vars[key] = zv
                    cols.append(zv)
                    vals.append(-1.0)
                    z_const = 0.0
            elif key in mask.forced_zero:
                z_const = 0.0
            else:
                z_const = float(chain.z[br, bc])
            b.row(cols, vals, EQ, z_const + const)


def _add_block_rows(b, basis, pix, layout_var, layout_const):
    """``x(i, j) - sum_var A y = sum_const A y`` for every block pixel."""
    nbr, nbc, n, _ = layout_var.shape
    mat = basis.matrix
    for lbr in range(nbr):
        for lbc in range(nbc):
            lv = layout_var[lbr, lbc].ravel()
            lc = layout_const[lbr, lbc].ravel()
            var_pos = np.nonzero(lv >= 0)[0]
            rhs = mat @ np.where(lv >= 0, 0.0, lc)
            px = pix[lbr * n:(lbr + 1) * n, lbc * n:(lbc + 1) * n].ravel()
            cols = np.concatenate([px, lv[var_pos]])
            coef = np.hstack([np.eye(n * n), -mat[:, var_pos]])
            b.rows_dense(cols, coef, EQ, rhs)


def build_alignment_model(coeffs: CoeffImage, mask: SignMask, chain: DiffChain,
                          cfg: CodingConfig, stage1: np.ndarray, strategy: str,
                          region_of_block: np.ndarray | None = None,
                          choices: dict | None = None) -> LinearModel | None:
    """Whole-image model re-optimizing block brightness after regional solves.

    ``stage1`` is the full coefficient grid from the regional solves and
    ``choices`` the chosen value of every resolved unknown.
    ``global-milp`` fixes every AC unknown at its stage-1 value and reopens
    the DC-related selectors (DC signs, or ``z`` signs under differential
    coding) as binaries.  ``block-lp`` frees one DC per block;
    ``region-lp`` adds one brightness offset per region.  The LP
    strategies keep the sum of DCs equal to stage 1, since a common shift
    of all blocks leaves the objective unchanged.  Returns ``None`` for
    ``region-lp`` with a single region (the offset is unidentifiable).
    """
    n = coeffs.n
    if strategy == "global-milp":
        fixed = {key: val for key, val in (choices or {}).items() if key[2:] != (0, 0)}
        for key in mask.unknowns:
            if key[2:] != (0, 0) and key not in fixed:
                fixed[key] = float(stage1[key])
        return build_model(coeffs, mask, chain, cfg, ModelScope.whole(coeffs, fixed=fixed), "milp")
    if strategy not in ("block-lp", "region-lp"):
        raise ValueError(f"unknown alignment strategy {strategy!r}")
    nbr, nbc = coeffs.block_rows, coeffs.block_cols
    if strategy == "region-lp":
        if region_of_block is None:
            raise ValueError("region-lp needs the region of every block")
        regions = np.unique(region_of_block)
        if len(regions) < 2:
            return None

    b = _Builder()
    pix, (plo, phi) = _add_pixels(b, coeffs, cfg, 0, 0, coeffs.height, coeffs.width)
    dc_lo, dc_hi = _dc_bounds(plo, phi, n)
    layout_var = np.full((nbr, nbc, n, n), -1, dtype=np.int64)
    layout_const = np.array(stage1, dtype=float)
    dc1 = layout_const[:, :, 0, 0]
    basis = basis_for(n)
    if strategy == "block-lp":
        keys = [("coeff", br, bc, 0, 0) for br in range(nbr) for bc in range(nbc)]
        ids = b.vars(keys, dc_lo, dc_hi).reshape(nbr, nbc)
        layout_var[:, :, 0, 0] = ids
        _add_block_rows(b, basis, pix, layout_var, layout_const)
        b.row(ids.ravel(), np.ones(ids.size), EQ, dc1.sum())
    else:
        span = n * (phi.max() - plo.min())
        offs = {r: b.var(("offset", int(r)), -span, span) for r in regions}
        # pixel rows: x - A00 * offset = A y1
        a00 = basis.matrix[:, 0]
        for br in range(nbr):
            for bc in range(nbc):
                px = pix[br * n:(br + 1) * n, bc * n:(bc + 1) * n].ravel()
                rhs = basis.matrix @ layout_const[br, bc].ravel()
                cols = np.concatenate([px, [offs[region_of_block[br, bc]]]])
                coef = np.hstack([np.eye(n * n), -a00[:, None]])
                b.rows_dense(cols, coef, EQ, rhs)
        counts = {r: int((region_of_block == r).sum()) for r in regions}
        b.row([offs[r] for r in regions], [counts[r] for r in regions], EQ, 0.0)
    _add_objective(b, pix, 0, 0, None)
    return b.model(layout_var=layout_var, layout_const=layout_const,
                   pixel_origin=(0, 0), scope_shape=(coeffs.height, coeffs.width))


def total_variation(samples):
    """Sum of absolute differences over 4-neighbour pixel pairs."""
    samples = np.asarray(samples, dtype=float)
    return float(np.abs(np.diff(samples, axis=0)).sum() + np.abs(np.diff(samples, axis=1)).sum())


def dump_model(model: LinearModel) -> str:
    """Line-oriented text dump: one variable or constraint per line."""
    lines = [f"model vars={model.num_vars} cons={model.num_constraints}"]
    for j, key in enumerate(model.keys):
        kind = "bin" if model.binary[j] else "cont"
        name = "_".join(str(p) for p in key)
        lines.append(f"var {j} {name} {model.lb[j]:.17g} {model.ub[j]:.17g} {kind} obj={model.c[j]:.17g}")
    A = model.A.tocsr()
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        terms = " ".join(f"{v:+.17g}*x{j}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        lines.append(f"con {r} {terms} {model.sense[r]} {model.rhs[r]:.17g}")
    return "\n".join(lines) + "\n"
