"""Charts, expression-defined tensor fields, and exterior calculus.

Fields hold one Expression per component; all differentiation happens at
evaluation time through jets, so a field evaluated at a point yields exact
component values, gradients and Hessians. Differential forms are stored on
strictly increasing multi-indices (antisymmetry is implicit; all residual
norms downstream are sup-norms over these components).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import expr
from .expr import Evaluator, Expression


class GeomError(Exception):
    pass


class ChartMismatch(GeomError):
    pass


class DegreeOverflow(GeomError):
    pass


@dataclass(frozen=True)
class ChartDomain:
    """A single coordinate chart with a sampling box."""

    dim: int
    names: tuple
    box: tuple  # ((lo, hi),) * dim

    def __post_init__(self):
        if self.dim < 1:
            raise GeomError("chart dimension must be >= 1")
        if len(self.names) != self.dim or len(set(self.names)) != self.dim:
            raise GeomError(f"need {self.dim} distinct coordinate names")
        if len(self.box) != self.dim:
            raise GeomError("box must have one interval per coordinate")
        for lo, hi in self.box:
            if lo > hi:
                raise GeomError("box intervals need lo <= hi")


def default_box(dim, narrow_coords=()):
    """[-1,1] per coordinate, [-0.5,0.5] for exponentially warped ones."""
    return tuple((-0.5, 0.5) if i in narrow_coords else (-1.0, 1.0)
                 for i in range(dim))


def chart(names, box=None, field_exprs=()):
    names = tuple(names)
    if box is None:
        narrow = set()
        for e in field_exprs:
            narrow |= expr.coords_under_exp(e)
        box = default_box(len(names), narrow)
    return ChartDomain(len(names), names, tuple(tuple(map(float, iv)) for iv in box))


def sample_points(domain: ChartDomain, n: int, seed: int) -> np.ndarray:
    """n deterministic uniform samples from the box; same inputs, same points."""
    if n < 1:
        raise GeomError("need at least one sample point")
    rng = np.random.default_rng(seed)
    lo = np.array([iv[0] for iv in domain.box])
    hi = np.array([iv[1] for iv in domain.box])
    return lo + (hi - lo) * rng.random((n, domain.dim))


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorField:
    chart: ChartDomain
    comps: tuple  # Expression per component


@dataclass(frozen=True)
class OneFormField:
    chart: ChartDomain
    comps: tuple


@dataclass(frozen=True)
class EndomorphismField:
    """(1,1) tensor; comps[i][j] is the i-th component of A(∂_j)."""

    chart: ChartDomain
    comps: tuple  # tuple of rows, each a tuple of Expressions


@dataclass(frozen=True)
class MetricField:
    """Symmetric (0,2) tensor, positive definite on the sampling box."""

    chart: ChartDomain
    comps: tuple

    def __post_init__(self):
        d = self.chart.dim
        for i in range(d):
            for j in range(d):
                if self.comps[i][j] != self.comps[j][i]:
                    raise GeomError("metric components must be symmetric")


def vector_field(chart_, comps):
    return VectorField(chart_, tuple(comps))


def one_form_field(chart_, comps):
    return OneFormField(chart_, tuple(comps))


def endo_field(chart_, comps):
    return EndomorphismField(chart_, tuple(tuple(row) for row in comps))


def metric_field(chart_, comps):
    return MetricField(chart_, tuple(tuple(row) for row in comps))


def same_chart(*fields):
    c0 = fields[0].chart
    for f in fields[1:]:
        if f.chart != c0:
            raise ChartMismatch("fields live on different charts")
    return c0


# Expression-level field algebra (builds new ASTs; needed wherever a derived
# field must itself be differentiated, e.g. brackets of phi-images).

def endo_apply_field(A: EndomorphismField, X: VectorField) -> VectorField:
    same_chart(A, X)
    d = A.chart.dim
    comps = [expr.add_many(expr.mul(A.comps[i][j], X.comps[j]) for j in range(d))
             for i in range(d)]
    return VectorField(A.chart, tuple(comps))


def endo_compose(A: EndomorphismField, B: EndomorphismField) -> EndomorphismField:
    same_chart(A, B)
    d = A.chart.dim
    comps = [[expr.add_many(expr.mul(A.comps[i][k], B.comps[k][j]) for k in range(d))
              for j in range(d)] for i in range(d)]
    return endo_field(A.chart, comps)


def oneform_apply_field(eta: OneFormField, X: VectorField) -> Expression:
    same_chart(eta, X)
    return expr.add_many(expr.mul(eta.comps[i], X.comps[i])
                         for i in range(eta.chart.dim))


def metric_pair_field(g: MetricField, X: VectorField, Y: VectorField) -> Expression:
    same_chart(g, X, Y)
    d = g.chart.dim
    return expr.add_many(expr.mul(expr.mul(g.comps[i][j], X.comps[i]), Y.comps[j])
                         for i in range(d) for j in range(d))


def scale_field(c, X: VectorField) -> VectorField:
    ce = c if isinstance(c, (expr.Const, expr.Coord, expr.Unary, expr.Binary)) else expr.const(c)
    return VectorField(X.chart, tuple(expr.mul(ce, cmp) for cmp in X.comps))


def add_fields(X: VectorField, Y: VectorField) -> VectorField:
    same_chart(X, Y)
    return VectorField(X.chart, tuple(expr.add(a, b) for a, b in zip(X.comps, Y.comps)))


def coordinate_field(chart_, i) -> VectorField:
    return VectorField(chart_, tuple(expr.const(1.0 if j == i else 0.0)
                                     for j in range(chart_.dim)))


# ---------------------------------------------------------------------------
# Batched field evaluation
# ---------------------------------------------------------------------------

def eval_scalar(ev: Evaluator, e: Expression, points):
    """(value, grad, hess) of a scalar expression, batched over points."""
    j = ev.jet(e, points)
    return np.asarray(j.value, dtype=float), j.grad, j.hess


def eval_vector(ev: Evaluator, X: VectorField, points):
    """Stacked jets: val[..., k], grad[..., k, m] = d_m X^k, hess[..., k, m, n]."""
    pts = np.asarray(points, dtype=float)
    d = X.chart.dim
    base = pts.shape[:-1]
    val = np.empty(base + (d,))
    grad = np.empty(base + (d, d))
    hess = np.empty(base + (d, d, d))
    for k, e in enumerate(X.comps):
        j = ev.jet(e, pts)
        val[..., k] = j.value
        grad[..., k, :] = j.grad
        hess[..., k, :, :] = j.hess
    return val, grad, hess


def eval_endo(ev: Evaluator, A: EndomorphismField, points):
    """val[..., i, j], grad[..., i, j, m], hess[..., i, j, m, n]."""
    pts = np.asarray(points, dtype=float)
    d = A.chart.dim
    base = pts.shape[:-1]
    val = np.empty(base + (d, d))
    grad = np.empty(base + (d, d, d))
    hess = np.empty(base + (d, d, d, d))
    for i in range(d):
        for j_, e in enumerate(A.comps[i]):
            j = ev.jet(e, pts)
            val[..., i, j_] = j.value
            grad[..., i, j_, :] = j.grad
            hess[..., i, j_, :, :] = j.hess
    return val, grad, hess


def eval_oneform(ev: Evaluator, eta: OneFormField, points):
    pts = np.asarray(points, dtype=float)
    d = eta.chart.dim
    base = pts.shape[:-1]
    val = np.empty(base + (d,))
    grad = np.empty(base + (d, d))
    hess = np.empty(base + (d, d, d))
    for k, e in enumerate(eta.comps):
        j = ev.jet(e, pts)
        val[..., k] = j.value
        grad[..., k, :] = j.grad
        hess[..., k, :, :] = j.hess
    return val, grad, hess


def eval_metric(ev: Evaluator, g: MetricField, points):
    """Symmetric evaluation: only i <= j components are walked."""
    pts = np.asarray(points, dtype=float)
    d = g.chart.dim
    base = pts.shape[:-1]
    val = np.empty(base + (d, d))
    grad = np.empty(base + (d, d, d))
    hess = np.empty(base + (d, d, d, d))
    for i in range(d):
        for j_ in range(i, d):
            j = ev.jet(g.comps[i][j_], pts)
            val[..., i, j_] = j.value
            grad[..., i, j_, :] = j.grad
            hess[..., i, j_, :, :] = j.hess
            if j_ != i:
                val[..., j_, i] = j.value
                grad[..., j_, i, :] = j.grad
                hess[..., j_, i, :, :] = j.hess
    return val, grad, hess


def lie_bracket(ev: Evaluator, X: VectorField, Y: VectorField, p) -> np.ndarray:
    """[X,Y]^k = X^i d_i Y^k - Y^i d_i X^k, derivatives from jets."""
    same_chart(X, Y)
    xv, xg, _ = eval_vector(ev, X, p)
    yv, yg, _ = eval_vector(ev, Y, p)
    return np.einsum("...i,...ki->...k", xv, yg) - np.einsum("...i,...ki->...k", yv, xg)


def lie_bracket_jet(ev: Evaluator, X: VectorField, Y: VectorField, p):
    """[X,Y] with first derivatives: (val[..., k], grad[..., k, n])."""
    same_chart(X, Y)
    xv, xg, xh = eval_vector(ev, X, p)
    yv, yg, yh = eval_vector(ev, Y, p)
    val = np.einsum("...i,...ki->...k", xv, yg) - np.einsum("...i,...ki->...k", yv, xg)
    grad = (np.einsum("...in,...ki->...kn", xg, yg)
            + np.einsum("...i,...kin->...kn", xv, yh)
            - np.einsum("...in,...ki->...kn", yg, xg)
            - np.einsum("...i,...kin->...kn", yv, xh))
    return val, grad


# ---------------------------------------------------------------------------
# Differential forms
# ---------------------------------------------------------------------------

def form_indices(dim, k):
    return list(combinations(range(dim), k))


@dataclass(frozen=True)
class KFormValue:
    """Pointwise k-form on strictly increasing multi-indices."""

    dim: int
    degree: int
    comps: np.ndarray  # length C(dim, degree)

    def index_of(self, idx):
        return form_indices(self.dim, self.degree).index(tuple(idx))

    def sup_norm(self):
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0


@dataclass(frozen=True)
class KFormField:
    """k-form field with Expression components on increasing multi-indices."""

    chart: ChartDomain
    degree: int
    comps: tuple  # Expressions, one per increasing multi-index

    def indices(self):
        return form_indices(self.chart.dim, self.degree)


def one_form_as_kform(eta: OneFormField) -> KFormField:
    return KFormField(eta.chart, 1, tuple(eta.comps))


def kform_from_components(chart_, degree, comp_map):
    """Build a k-form field from {multi-index tuple: Expression}."""
    idxs = form_indices(chart_.dim, degree)
    comps = [comp_map.get(idx, expr.ZERO) for idx in idxs]
    return KFormField(chart_, degree, tuple(comps))


def _perm_sign(seq):
    """Sign of the permutation sorting seq; 0 if repeated entries."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0, tuple(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign, tuple(sorted(seq))


def wedge_values(alpha: KFormValue, beta: KFormValue) -> KFormValue:
    """Alternating wedge with shuffle signs on increasing-index storage."""
    if alpha.dim != beta.dim:
        raise ChartMismatch("wedge of forms on different spaces")
    dim = alpha.dim
    k, l = alpha.degree, beta.degree
    if k + l > dim:
        raise DegreeOverflow(f"wedge degree {k}+{l} exceeds dimension {dim}")
    out_idx = form_indices(dim, k + l)
    pos = {idx: i for i, idx in enumerate(out_idx)}
    comps = np.zeros(len(out_idx))
    aidx = form_indices(dim, k)
    bidx = form_indices(dim, l)
    for ia, I in enumerate(aidx):
        if alpha.comps[ia] == 0.0:
            continue
        for ib, Jw in enumerate(bidx):
            sign, merged = _perm_sign(I + Jw)
            if sign == 0:
                continue
            comps[pos[merged]] += sign * alpha.comps[ia] * beta.comps[ib]
    return KFormValue(dim, k + l, comps)


def wedge_fields(alpha: KFormField, beta: KFormField) -> KFormField:
    """Expression-level wedge; components remain expressions."""
    same_chart(alpha, beta)
    dim = alpha.chart.dim
    k, l = alpha.degree, beta.degree
    if k + l > dim:
        raise DegreeOverflow(f"wedge degree {k}+{l} exceeds dimension {dim}")
    out_idx = form_indices(dim, k + l)
    pos = {idx: i for i, idx in enumerate(out_idx)}
    comps = [expr.ZERO] * len(out_idx)
    for ia, I in enumerate(form_indices(dim, k)):
        for ib, Jw in enumerate(form_indices(dim, l)):
            sign, merged = _perm_sign(I + Jw)
            if sign == 0:
                continue
            term = expr.mul(alpha.comps[ia], beta.comps[ib])
            if sign < 0:
                term = expr.neg(term)
            comps[pos[merged]] = expr.add(comps[pos[merged]], term)
    return KFormField(alpha.chart, k + l, tuple(comps))


def wedge_power_field(omega: KFormField, m: int) -> KFormField:
    out = omega
    for _ in range(m - 1):
        out = wedge_fields(out, omega)
    return out


def eval_form(ev: Evaluator, omega: KFormField, p):
    """(comps, grads, hesses) of the stored components at p."""
    pts = np.asarray(p, dtype=float)
    d = omega.chart.dim
    base = pts.shape[:-1]
    n = len(omega.comps)
    val = np.empty(base + (n,))
    grad = np.empty(base + (n, d))
    hess = np.empty(base + (n, d, d))
    for c, e in enumerate(omega.comps):
        j = ev.jet(e, pts)
        val[..., c] = j.value
        grad[..., c, :] = j.grad
        hess[..., c, :, :] = j.hess
    return val, grad, hess


def _d_from_grads(dim, k, grads):
    """Components of dω from component gradients.

    grads has shape (..., C(dim,k), dim); returns (..., C(dim,k+1)) with
    (dω)_{i0..ik} = sum_l (-1)^l ∂_{i_l} ω_{i0..î_l..ik}.
    """
    in_idx = form_indices(dim, k)
    in_pos = {idx: i for i, idx in enumerate(in_idx)}
    out_idx = form_indices(dim, k + 1)
    out = np.zeros(grads.shape[:-2] + (len(out_idx),))
    for o, I in enumerate(out_idx):
        acc = 0.0
        for l in range(k + 1):
            rest = I[:l] + I[l + 1:]
            acc = acc + (-1.0) ** l * grads[..., in_pos[rest], I[l]]
        out[..., o] = acc
    return out


def _d_from_grads_and_hess(dim, k, grads, hesses):
    """dω components together with their first derivatives."""
    val = _d_from_grads(dim, k, grads)
    in_idx = form_indices(dim, k)
    in_pos = {idx: i for i, idx in enumerate(in_idx)}
    out_idx = form_indices(dim, k + 1)
    grad = np.zeros(hesses.shape[:-3] + (len(out_idx), dim))
    for o, I in enumerate(out_idx):
        acc = 0.0
        for l in range(k + 1):
            rest = I[:l] + I[l + 1:]
            acc = acc + (-1.0) ** l * hesses[..., in_pos[rest], I[l], :]
        grad[..., o, :] = acc
    return val, grad


def exterior_derivative(ev: Evaluator, omega: KFormField, p) -> KFormValue:
    """dω at p (single point)."""
    if omega.degree >= omega.chart.dim:
        raise DegreeOverflow(
            f"d of a degree-{omega.degree} form on dim {omega.chart.dim}")
    _, grads, _ = eval_form(ev, omega, p)
    comps = _d_from_grads(omega.chart.dim, omega.degree, grads)
    return KFormValue(omega.chart.dim, omega.degree + 1, comps)


def exterior_derivative_jet(ev: Evaluator, omega: KFormField, p):
    """dω with component first derivatives (for d∘d and d^c pipelines)."""
    if omega.degree >= omega.chart.dim:
        raise DegreeOverflow(
            f"d of a degree-{omega.degree} form on dim {omega.chart.dim}")
    _, grads, hesses = eval_form(ev, omega, p)
    return _d_from_grads_and_hess(omega.chart.dim, omega.degree, grads, hesses)


def d_of_jet_form(dim, k, comps, grads) -> np.ndarray:
    """d applied to a numerically known k-form with known gradients."""
    if k >= dim:
        raise DegreeOverflow(f"d of a degree-{k} form on dim {dim}")
    return _d_from_grads(dim, k, grads)


def pair_form_vectors(omega: KFormValue, vectors) -> float:
    """omega(X_1, ..., X_k) for pointwise vector values."""
    k = omega.degree
    if len(vectors) != k:
        raise GeomError(f"degree-{k} form needs {k} vector arguments")
    if k == 0:
        return float(omega.comps[0])
    X = np.column_stack(vectors)  # X[:, c] = X_c
    total = 0.0
    for s, I in enumerate(form_indices(omega.dim, k)):
        w = omega.comps[s]
        if w == 0.0:
            continue
        total += w * np.linalg.det(X[list(I), :])
    return float(total)


def endo_pullback(A: np.ndarray, omega: KFormValue) -> KFormValue:
    """(A*ω)(X_1..X_k) = ω(A X_1, .., A X_k) via minor determinants."""
    dim, k = omega.dim, omega.degree
    if k == 0:
        return omega
    idxs = form_indices(dim, k)
    comps = np.zeros(len(idxs))
    for o, I in enumerate(idxs):
        total = 0.0
        cols = A[:, list(I)]
        for s, Jw in enumerate(idxs):
            w = omega.comps[s]
            if w == 0.0:
                continue
            minor = cols[list(Jw), :]
            total += w * np.linalg.det(minor)
        comps[o] = total
    return KFormValue(dim, k, comps)


def endo_pullback_jet(A: np.ndarray, Agrad: np.ndarray, k: int, comps, grads):
    """Pullback of a numeric k-form with gradients by A with gradients.

    A: (d, d); Agrad: (d, d, m) with Agrad[i,j,m] = d_m A[i,j].
    comps: (C,), grads: (C, d). Returns pulled (comps', grads').
    """
    d = A.shape[0]
    idxs = form_indices(d, k)
    out_v = np.zeros(len(idxs))
    out_g = np.zeros((len(idxs), d))
    for o, I in enumerate(idxs):
        cols = list(I)
        for s, Jw in enumerate(idxs):
            rows = list(Jw)
            M = A[np.ix_(rows, cols)]
            detM = np.linalg.det(M)
            out_v[o] += comps[s] * detM
            # ∂det: sum over rows with that row differentiated
            ddet = np.zeros(d)
            for r in range(len(rows)):
                Mr = M.copy()
                for m in range(d):
                    Mr[r, :] = Agrad[rows[r], cols, m]
                    ddet[m] += np.linalg.det(Mr)
                Mr[r, :] = M[r, :]
            out_g[o, :] += grads[s, :] * detM + comps[s] * ddet
    return out_v, out_g
