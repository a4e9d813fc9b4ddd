"""Levi-Civita connection and curvature, computed generically from a metric.

Everything in this module is derived from metric jets alone (values, first
and second derivatives of the metric components), so it serves as the
ground-truth oracle against which closed-form identities are tested.

Index conventions, batched over a leading points axis where present:
    g0[..., i, j]               metric
    g1[..., i, j, m] = d_m g_ij
    g2[..., i, j, m, n]
    gamma0[..., k, i, j]        Christoffel symbols, symmetric in (i, j)
    gamma1[..., k, i, j, m] = d_m Gamma^k_ij
    riem[..., l, k, i, j]       R(d_i, d_j) d_k = riem[l,k,i,j] d_l
"""

from __future__ import annotations

import numpy as np

from . import geom
from .expr import Evaluator
from .geom import EndomorphismField, MetricField, VectorField, same_chart


class RiemannError(Exception):
    pass


class SingularMetric(RiemannError):
    def __init__(self, point, smallest_eig):
        pt = tuple(float(x) for x in np.atleast_1d(point))
        super().__init__(
            f"metric not positive definite at {pt} (min eigenvalue {smallest_eig:.3e})")
        self.point = pt
        self.smallest_eig = float(smallest_eig)


class DependentPreferredVectors(RiemannError):
    pass


_EIG_FLOOR = 1e-12


class MetricData:
    """Metric, inverse and Christoffel jets at a batch of points."""

    def __init__(self, ev: Evaluator, g: MetricField, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        self.points = pts
        self.g0, self.g1, self.g2 = geom.eval_metric(ev, g, pts)
        eigs = np.linalg.eigvalsh(self.g0)
        worst = int(np.argmin(eigs[:, 0]))
        if eigs[worst, 0] <= _EIG_FLOOR:
            raise SingularMetric(pts[worst], eigs[worst, 0])
        self.ginv0 = np.linalg.inv(self.g0)
        # d(g^-1) = -g^-1 (dg) g^-1
        self.ginv1 = -np.einsum("pia,pabm,pbj->pijm", self.ginv0, self.g1, self.ginv0)
        # Koszul: T_lij = (d_i g_jl + d_j g_il - d_l g_ij) / 2
        T = 0.5 * (np.einsum("pjli->plij", self.g1)
                   + np.einsum("pilj->plij", self.g1)
                   - np.einsum("pijl->plij", self.g1))
        dT = 0.5 * (np.einsum("pjlim->plijm", self.g2)
                    + np.einsum("piljm->plijm", self.g2)
                    - np.einsum("pijlm->plijm", self.g2))
        self.gamma0 = np.einsum("pkl,plij->pkij", self.ginv0, T)
        self.gamma1 = (np.einsum("pklm,plij->pkijm", self.ginv1, T)
                       + np.einsum("pkl,plijm->pkijm", self.ginv0, dT))
        self._riem = None
        self._single = single

    @property
    def dim(self):
        return self.g0.shape[-1]

    @property
    def npts(self):
        return self.g0.shape[0]

    def riemann(self):
        """riem[p, l, k, i, j] so that R(d_i, d_j) d_k = riem[l,k,i,j] d_l."""
        if self._riem is None:
            G0, G1 = self.gamma0, self.gamma1
            dpart = (np.einsum("pljki->plkij", G1)
                     - np.einsum("plikj->plkij", G1))
            qpart = (np.einsum("plim,pmjk->plkij", G0, G0)
                     - np.einsum("pljm,pmik->plkij", G0, G0))
            self._riem = dpart + qpart
        return self._riem


def christoffel(ev: Evaluator, g: MetricField, p) -> np.ndarray:
    """Christoffel symbols gamma[k, i, j] at a single point p."""
    md = MetricData(ev, g, np.asarray(p, dtype=float))
    return md.gamma0[0]


def curvature_values(md: MetricData, i, X, Y, Z) -> np.ndarray:
    """R(X, Y) Z at point index i of md, for pointwise vector values."""
    riem = md.riemann()[i]
    return np.einsum("lkij,i,j,k->l", riem, X, Y, Z)


def covariant_derivative_vector(ev: Evaluator, g: MetricField, X: VectorField,
                                Y: VectorField, p) -> np.ndarray:
    """(nabla_X Y)^k = X^i (d_i Y^k + Gamma^k_ij Y^j) at a single point."""
    same_chart(g, X, Y)
    md = MetricData(ev, g, p)
    xv, _, _ = geom.eval_vector(ev, X, md.points)
    yv, yg, _ = geom.eval_vector(ev, Y, md.points)
    out = np.einsum("pi,pki->pk", xv, yg) + np.einsum("pi,pkij,pj->pk",
                                                      xv, md.gamma0, yv)
    return out[0]


def cov_vector_at(md: MetricData, i, Xval, Yval, Ygrad) -> np.ndarray:
    """nabla_X Y at point index i from pointwise data (X enters pointwise)."""
    return Ygrad @ Xval + np.einsum("kij,i,j->k", md.gamma0[i], Xval, Yval)


def cov_vector_jet(md: MetricData, i, Xval, Xgrad, Yval, Ygrad, Yhess):
    """nabla_X Y at point index i, with its first derivatives.

    Returns (W, dW) with W^k and dW[k, n] = d_n W^k; X, Y enter as
    (value, gradient[, Hessian]) data of vector fields at the point.
    """
    G0 = md.gamma0[i]
    G1 = md.gamma1[i]
    inner = Ygrad + np.einsum("kij,j->ki", G0, Yval)  # d_i Y^k + Gamma Y
    W = inner @ Xval
    dW = (np.einsum("in,ki->kn", Xgrad, inner)
          + np.einsum("i,kin->kn", Xval, Yhess)
          + np.einsum("i,kijn,j->kn", Xval, G1, Yval)
          + np.einsum("i,kij,jn->kn", Xval, G0, Ygrad))
    return W, dW


def nabla_endo_all(md: MetricData, Aval, Agrad, Ahess):
    """Covariant derivative of an endomorphism field in every direction.

    C0[p, i, j, m] = (nabla_{d_m} A)^i_j and C1[p, i, j, m, n] = d_n C0.
    A enters as batched (value, gradient, Hessian) arrays.
    """
    G0, G1 = md.gamma0, md.gamma1
    C0 = (Agrad
          + np.einsum("pimk,pkj->pijm", G0, Aval)
          - np.einsum("pik,pkmj->pijm", Aval, G0))
    C1 = (Ahess
          + np.einsum("pimkn,pkj->pijmn", G1, Aval)
          + np.einsum("pimk,pkjn->pijmn", G0, Agrad)
          - np.einsum("pikn,pkmj->pijmn", Agrad, G0)
          - np.einsum("pik,pkmjn->pijmn", Aval, G1))
    return C0, C1


def covariant_derivative_endo(ev: Evaluator, g: MetricField,
                              A: EndomorphismField, X: VectorField, p):
    """(nabla_X A) as a matrix in the chart basis, at a single point."""
    same_chart(g, A, X)
    md = MetricData(ev, g, p)
    av, ag, ah = geom.eval_endo(ev, A, md.points)
    xv, _, _ = geom.eval_vector(ev, X, md.points)
    C0, _ = nabla_endo_all(md, av, ag, ah)
    return np.einsum("pijm,pm->pij", C0, xv)[0]


def second_cov_endo_const(md: MetricData, i, C0, C1, U, V):
    """(nabla^2_{U,V} A) at point index i for pointwise vectors U, V.

    Uses the constant extension of V; the combination
    nabla_U (nabla_V A) - nabla_{nabla_U V} A is tensorial in both slots,
    so the extension does not matter.
    """
    G0 = md.gamma0[i]
    B0 = np.einsum("ijm,m->ij", C0, V)
    B1 = np.einsum("ijmn,m->ijn", C1, V)
    nUB = (np.einsum("ijn,n->ij", B1, U)
           + np.einsum("n,ink,kj->ij", U, G0, B0)
           - np.einsum("ik,n,knj->ij", B0, U, G0))
    W = np.einsum("knj,n,j->k", G0, U, V)  # nabla_U V for constant V
    return nUB - np.einsum("ijm,m->ij", C0, W)


def curvature(ev: Evaluator, g: MetricField, X: VectorField, Y: VectorField,
              Z: VectorField, p) -> np.ndarray:
    """R(X,Y)Z at p, assembled from Gamma and its derivatives."""
    same_chart(g, X, Y, Z)
    md = MetricData(ev, g, p)
    xv, _, _ = geom.eval_vector(ev, X, md.points)
    yv, _, _ = geom.eval_vector(ev, Y, md.points)
    zv, _, _ = geom.eval_vector(ev, Z, md.points)
    return curvature_values(md, 0, xv[0], yv[0], zv[0])


def curvature_via_definition(ev: Evaluator, g: MetricField, X: VectorField,
                             Y: VectorField, Z: VectorField, p) -> np.ndarray:
    """R(X,Y)Z from nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z.

    Cross-check of the tensor assembly; differentiates the derived field
    p -> (nabla_Y Z)_p through jets.
    """
    same_chart(g, X, Y, Z)
    md = MetricData(ev, g, p)
    xv, xg, xh = geom.eval_vector(ev, X, md.points)
    yv, yg, yh = geom.eval_vector(ev, Y, md.points)
    zv, zg, zh = geom.eval_vector(ev, Z, md.points)
    i = 0
    W_yz, dW_yz = cov_vector_jet(md, i, yv[i], yg[i], zv[i], zg[i], zh[i])
    W_xz, dW_xz = cov_vector_jet(md, i, xv[i], xg[i], zv[i], zg[i], zh[i])
    t1 = cov_vector_at(md, i, xv[i], W_yz, dW_yz)
    t2 = cov_vector_at(md, i, yv[i], W_xz, dW_xz)
    br = np.einsum("i,ki->k", xv[i], yg[i]) - np.einsum("i,ki->k", yv[i], xg[i])
    t3 = cov_vector_at(md, i, br, zv[i], zg[i])
    return t1 - t2 - t3


def second_covariant_derivative_endo(ev: Evaluator, g: MetricField,
                                     A: EndomorphismField, U: VectorField,
                                     V: VectorField, p) -> np.ndarray:
    """(nabla^2_{U,V} A) at p for vector-field arguments."""
    same_chart(g, A, U, V)
    md = MetricData(ev, g, p)
    av, ag, ah = geom.eval_endo(ev, A, md.points)
    uv, _, _ = geom.eval_vector(ev, U, md.points)
    vv, vg, _ = geom.eval_vector(ev, V, md.points)
    C0, C1 = nabla_endo_all(md, av, ag, ah)
    i = 0
    G0 = md.gamma0[i]
    # field extension of V: B = nabla_V A with gradient
    B0 = np.einsum("ijm,m->ij", C0[i], vv[i])
    B1 = (np.einsum("ijmn,m->ijn", C1[i], vv[i])
          + np.einsum("ijm,mn->ijn", C0[i], vg[i]))
    nUB = (np.einsum("ijn,n->ij", B1, uv[i])
           + np.einsum("n,ink,kj->ij", uv[i], G0, B0)
           - np.einsum("ik,n,knj->ij", B0, uv[i], G0))
    W = cov_vector_at(md, i, uv[i], vv[i], vg[i])
    return nUB - np.einsum("ijm,m->ij", C0[i], W)


def orthonormal_frame(g0: np.ndarray, preferred=(), pivot=1e-10):
    """Gram-Schmidt frame for the inner product g0, preferred vectors first.

    Preferred vectors are normalized then orthogonalized in order; the frame
    is completed from coordinate basis vectors in index order, skipping
    near-dependent candidates. Deterministic by construction.
    """
    d = g0.shape[0]
    frame = []

    def gdot(u, v):
        return float(u @ g0 @ v)

    for v in preferred:
        w = np.asarray(v, dtype=float).copy()
        for u in frame:
            w -= gdot(u, w) * u
        norm = np.sqrt(max(gdot(w, w), 0.0))
        if norm < pivot:
            raise DependentPreferredVectors(
                f"preferred vector {v} is g-dependent on the previous ones")
        frame.append(w / norm)
    for i in range(d):
        if len(frame) == d:
            break
        w = np.zeros(d)
        w[i] = 1.0
        for u in frame:
            w -= gdot(u, w) * u
        norm = np.sqrt(max(gdot(w, w), 0.0))
        if norm < pivot:
            continue
        frame.append(w / norm)
    if len(frame) != d:
        raise RiemannError("could not complete an orthonormal frame")
    return frame


def orthonormal_frame_within(g0: np.ndarray, candidates, pivot=1e-10):
    """Gram-Schmidt a candidate list only (no completion to full dimension).

    Near-dependent candidates are skipped with the same pivot rule as
    orthonormal_frame; used to orthonormalize block-spanning sets.
    """
    frame = []
    for v in candidates:
        w = np.asarray(v, dtype=float).copy()
        for u in frame:
            w -= float(u @ g0 @ w) * u
        norm = np.sqrt(max(float(w @ g0 @ w), 0.0))
        if norm < pivot:
            continue
        frame.append(w / norm)
    return frame


def frame_components(g0: np.ndarray, frame, vec: np.ndarray) -> np.ndarray:
    """Components of vec in a g0-orthonormal frame (= g-inner products)."""
    return np.array([float(vec @ g0 @ u) for u in frame])


def vector_residual_norm(g0: np.ndarray, frame, vec: np.ndarray) -> float:
    """Sup-norm of the frame components; bounds the g-operator norm pieces."""
    return float(np.max(np.abs(frame_components(g0, frame, vec))))


def endo_residual_norm(g0: np.ndarray, frame, M: np.ndarray) -> float:
    """Sup over frame vectors of the residual of M applied to them."""
    return max(vector_residual_norm(g0, frame, M @ u) for u in frame)
