"""Harmonicity of the product complex structure, and the astheno check.

The harmonicity criterion for an integrable J is [J, P] = nabla_{deltaJ} J,
with P the curvature contraction P X = (1/2) sum_i R(u_i, J u_i) X and
deltaJ = sum_i (nabla_{u_i} J)(u_i) over a G-orthonormal frame. The rough
Laplacian identity [J, nabla*nabla J] = 2 (nabla_{deltaJ} J - [J, P]) is
verified alongside as a consistency check (it is a theorem for integrable
J, independent of any closed form under test).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr, geom, riemann
from .contact import factor_for_class
from .expr import Evaluator
from .geom import KFormField, form_indices, kform_from_components
from .product import (
    DEFAULT_AB_GRID, ProductData, ProductHermitian, build_product,
    integrability_report, spanning_fields,
)
from .report import (
    CheckReport, FAIL_FACTOR, ResidualTracker, verdict_for,
)


class HarmonicError(Exception):
    pass


class NotIntegrable(HarmonicError):
    pass


HARMONIC = "harmonic"
NOT_HARMONIC = "not-harmonic"
INCONCLUSIVE_H = "inconclusive"


# ---------------------------------------------------------------------------
# Pointwise quantities
# ---------------------------------------------------------------------------

def codifferential_J(pd: ProductData, i):
    """deltaJ at point i: the frame sum and the named closed forms.

    Returns (frame_sum, {variant: value}).
    """
    C0, _ = pd.nabla_J()
    fr = pd.frame(i)
    total = np.zeros(pd.P.dim)
    for u in fr:
        nJ = np.einsum("ijm,m->ij", C0[i], u)
        total += nJ @ u
    P = pd.P
    a, b = P.a, P.b
    a1, b1 = float(pd.a1[i]), float(pd.b1[i])
    a2, b2 = float(pd.a2[i]), float(pd.b2[i])
    xi1, xi2 = pd.xi1v[i], pd.xi2v[i]
    n1, n2 = P.n1, P.n2
    reference = (2 * n1 * (a1 * xi1 - (a / b) * b1 * xi1 + (b1 / b) * xi2)
                 + 2 * n2 * (a2 * xi2 + b2 * xi1 + (a / b) * b2 * xi2))
    koszul = (2 * n1 * (a1 * xi1 + (b1 / b) * xi2)
              + 2 * n2 * (a2 * xi2 - (b2 / b) * xi1))
    return total, {"reference": reference, "koszul": koszul}


def nabla_deltaJ_J(pd: ProductData, i, delta=None):
    """(nabla_{deltaJ} J) at point i, from the frame-sum deltaJ."""
    if delta is None:
        delta, _ = codifferential_J(pd, i)
    C0, _ = pd.nabla_J()
    return np.einsum("ijm,m->ij", C0[i], delta)


def chern_ricci_P(pd: ProductData, i):
    """P = (1/2) sum_i R(u_i, J u_i) as a matrix, over the adapted frame."""
    riem = pd.md.riemann()[i]
    J0 = pd.Jv[i]
    out = np.zeros((pd.P.dim, pd.P.dim))
    for u in pd.frame(i):
        Ju = J0 @ u
        out += np.einsum("lkij,i,j->lk", riem, u, Ju)
    return 0.5 * out


def rough_laplacian_J(pd: ProductData, i):
    """Trace of the second covariant derivative of J over the frame."""
    C0, C1 = pd.nabla_J()
    out = np.zeros((pd.P.dim, pd.P.dim))
    for u in pd.frame(i):
        out += riemann.second_cov_endo_const(pd.md, i, C0[i], C1[i], u, u)
    return out


def commutator_condition_bracket(g0, phi0, frame_block, U):
    """2 [g(e_j, U) phi e_j - g(e_j, phi U) e_j] summed over the block frame."""
    out = np.zeros(len(U))
    phiU = phi0 @ U
    for e in frame_block:
        out += 2.0 * (float(e @ g0 @ U) * (phi0 @ e) - float(e @ g0 @ phiU) * e)
    return out


def sufficient_condition_tensors(pd: ProductData, i):
    """The two sufficient-condition tensors, scaled by 2 alpha_i beta_i,
    plus the per-factor commutator pieces [J, R(e, phi e)] computed
    generically."""
    g0 = pd.md.g0[i]
    J0 = pd.Jv[i]
    riem = pd.md.riemann()[i]
    _, e_blk, f_blk = pd.frame_slices(i)
    out = {}
    for (tag, blk, phiv, av, bv) in (
            ("factor1", e_blk, pd.phi1v[i], float(pd.a1[i]), float(pd.b1[i])),
            ("factor2", f_blk, pd.phi2v[i], float(pd.a2[i]), float(pd.b2[i]))):
        cond_max = 0.0
        comm_max = 0.0
        for U in blk:
            cond = av * bv * commutator_condition_bracket(g0, phiv, blk, U)
            cond_max = max(cond_max, float(np.max(np.abs(cond))) if len(cond) else 0.0)
            for e in blk:
                Re = np.einsum("lkij,i,j->lk", riem, e, phiv @ e)
                comm = J0 @ (Re @ U) - Re @ (J0 @ U)
                comm_max = max(comm_max, pd.residual_norm(i, comm))
        out[tag] = {"condition_max": cond_max, "commutator_max": comm_max}
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def harmonicity_report(ev: Evaluator, P: ProductHermitian, points, tol
                       ) -> CheckReport:
    """Aggregate harmonicity check per the commutator criterion.

    Verdict: harmonic if sup ||[J,P] - nabla_{deltaJ} J|| < tol at every
    sampled point; not-harmonic above the fail factor; inconclusive between.
    """
    pd = ProductData(ev, P, points)
    t_crit = ResidualTracker("[J,P] - nabla_deltaJ_J")
    t_delta = {"reference": ResidualTracker("deltaJ frame sum vs reference"),
               "koszul": ResidualTracker("deltaJ frame sum vs koszul")}
    t_ndj = ResidualTracker("nabla_deltaJ_J")
    t_p1 = ResidualTracker("[J,lap J] - 2(nabla_deltaJ J - [J,P])")
    t_cond = ResidualTracker("sufficient-condition tensors")
    # harmonicity only makes sense for a G-compatible almost complex
    # structure and an honest orthonormal frame; gate on both so a damaged
    # J can never report as harmonic
    t_gate = ResidualTracker("J^2/Hermitian/frame gate")

    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        g0 = pd.md.g0[i]
        fr = pd.frame(i)
        J0 = pd.Jv[i]
        eye = np.eye(pd.P.dim)
        gram = np.array([[u @ g0 @ v for v in fr] for u in fr])
        t_gate.update(max(float(np.max(np.abs(J0 @ J0 + eye))),
                          float(np.max(np.abs(J0.T @ g0 @ J0 - g0))),
                          float(np.max(np.abs(gram - eye)))), p)
        delta, variants = codifferential_J(pd, i)
        for name, val in variants.items():
            t_delta[name].update(
                riemann.vector_residual_norm(g0, fr, delta - val), p)
        ndj = nabla_deltaJ_J(pd, i, delta)
        t_ndj.update(riemann.endo_residual_norm(g0, fr, ndj), p)
        Pm = chern_ricci_P(pd, i)
        JP = J0 @ Pm - Pm @ J0
        t_crit.update(riemann.endo_residual_norm(g0, fr, JP - ndj), p)
        lap = rough_laplacian_J(pd, i)
        lhs = J0 @ lap - lap @ J0
        rhs = 2.0 * (ndj - JP)
        t_p1.update(riemann.endo_residual_norm(g0, fr, lhs - rhs), p)
        cond = sufficient_condition_tensors(pd, i)
        t_cond.update(max(cond["factor1"]["condition_max"],
                        cond["factor2"]["condition_max"]), p)

    crit = max(t_crit.max, t_gate.max)
    if crit < tol:
        verdict = HARMONIC
    elif crit > FAIL_FACTOR * tol:
        verdict = NOT_HARMONIC
    else:
        verdict = INCONCLUSIVE_H
    rep = CheckReport.from_trackers(
        "harmonicity", tol,
        [t_crit, t_gate, t_delta["reference"], t_delta["koszul"], t_ndj,
         t_p1, t_cond],
        verdict=verdict)
    rep.max_residual = crit  # the verdict-carrying quantity
    matched = sorted(k for k, t in t_delta.items() if t.max < tol)
    rep.details["deltaJ_variants"] = {k: t.max for k, t in t_delta.items()}
    rep.details["deltaJ_matched"] = matched
    rep.details["odd_dimension_note"] = (
        "factors are assumed odd-dimensional (2n+1) throughout")
    return rep


def codifferential_report(ev: Evaluator, P: ProductHermitian, points, tol
                          ) -> CheckReport:
    """deltaJ frame sum vs its closed-form variants, and nabla_{deltaJ} J."""
    pd = ProductData(ev, P, points)
    t_var = {"reference": ResidualTracker("frame sum vs reference"),
             "koszul": ResidualTracker("frame sum vs koszul")}
    t_ndj = ResidualTracker("nabla_deltaJ_J")
    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        g0 = pd.md.g0[i]
        fr = pd.frame(i)
        delta, variants = codifferential_J(pd, i)
        for name, val in variants.items():
            t_var[name].update(
                riemann.vector_residual_norm(g0, fr, delta - val), p)
        ndj = nabla_deltaJ_J(pd, i, delta)
        t_ndj.update(riemann.endo_residual_norm(g0, fr, ndj), p)
    best = min(t_var.values(), key=lambda t: t.max)
    rep = CheckReport.from_trackers("codifferential", tol, [best, t_ndj])
    rep.details["variants"] = {k: t.max for k, t in t_var.items()}
    rep.details["matched"] = sorted(k for k, t in t_var.items()
                                    if t.max < tol)
    return rep


def dirichlet_energy_density(pd: ProductData, i) -> float:
    """||nabla J||^2 = sum_i ||nabla_{u_i} J||^2_G over the adapted frame."""
    C0, _ = pd.nabla_J()
    g0 = pd.md.g0[i]
    fr = pd.frame(i)
    total = 0.0
    for u in fr:
        nJ = np.einsum("ijm,m->ij", C0[i], u)
        for v in fr:
            w = nJ @ v
            total += float(w @ g0 @ w)
    return total


def energy_report(ev: Evaluator, P: ProductHermitian, points, tol
                  ) -> CheckReport:
    """Pointwise energy density plus a box-quadrature energy estimate."""
    pd = ProductData(ev, P, points)
    dens = np.zeros(pd.points.shape[0])
    dets = np.zeros(pd.points.shape[0])
    for i in range(pd.points.shape[0]):
        dens[i] = dirichlet_energy_density(pd, i)
        dets[i] = float(np.sqrt(np.linalg.det(pd.md.g0[i])))
    vol = 1.0
    for lo, hi in P.chart.box:
        vol *= (hi - lo)
    estimate = float(np.mean(dens * dets) * vol)
    t = ResidualTracker("energy density")
    for i in range(pd.points.shape[0]):
        t.update(dens[i], pd.points[i])
    rep = CheckReport.from_trackers("energy", tol, [t], verdict="pass")
    rep.details["density_max"] = float(np.max(dens))
    rep.details["density_min"] = float(np.min(dens))
    rep.details["box_quadrature_estimate"] = estimate
    rep.details["box_volume"] = vol
    return rep


# ---------------------------------------------------------------------------
# Astheno check
# ---------------------------------------------------------------------------

def kahler_form_field(P: ProductHermitian) -> KFormField:
    """Omega(X, Y) = G(J X, Y) as an expression 2-form field."""
    d = P.dim
    comp = {}
    for i in range(d):
        for j in range(i + 1, d):
            comp[(i, j)] = expr.add_many(
                expr.mul(P.J.comps[k][i], P.G.comps[k][j]) for k in range(d))
    return kform_from_components(P.chart, 2, comp)


def _pullback_field(J: geom.EndomorphismField, omega: KFormField) -> KFormField:
    """Expression-level pullback (J* omega)_I = sum_K omega_K det(J[K, I])."""
    d = omega.chart.dim
    k = omega.degree
    idxs = omega.indices()
    from itertools import permutations
    out = []
    for I in idxs:
        total = expr.ZERO
        for s, K in enumerate(idxs):
            if omega.comps[s] == expr.ZERO:
                continue
            det = expr.ZERO
            for perm in permutations(range(k)):
                sign, _ = geom._perm_sign(perm)
                term = expr.ONE
                for r in range(k):
                    term = expr.mul(term, J.comps[K[perm[r]]][I[r]])
                det = expr.add(det, expr.neg(term) if sign < 0 else term)
            total = expr.add(total, expr.mul(omega.comps[s], det))
        out.append(total)
    return KFormField(omega.chart, k, tuple(out))


@dataclass
class AsthenoReport:
    m_complex: int
    max_residual: float
    mean_residual: float
    worst_point: tuple | None
    verdict: str

    def to_check(self, tol):
        return CheckReport("astheno", tol, self.max_residual,
                           self.mean_residual, self.worst_point, self.verdict,
                           details={"m_complex": self.m_complex})


def astheno_residual(ev: Evaluator, P: ProductHermitian, points, tol, *,
                     m_override=None, check_integrable=True) -> AsthenoReport:
    """sup-norm of d(d^c(Omega^(m-2))) with d^c = Jinv o d o J-pullback.

    m = 2 short-circuits to a pass with residual exactly zero. Requires an
    integrable J (the d^c identity presumes it).
    """
    m = m_override if m_override is not None else P.m_complex
    if m == 2:
        return AsthenoReport(2, 0.0, 0.0, None, "pass")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if check_integrable:
        smoke = pts[: min(8, pts.shape[0])]
        rep = integrability_report(ev, P, smoke, max(tol, 1e-6))
        if rep.verdict != "pass":
            raise NotIntegrable(
                f"Nijenhuis residual {rep.max_residual:.3e} at tol {tol}")
    omega = kahler_form_field(P)
    gamma = geom.wedge_power_field(omega, m - 2)
    jg = _pullback_field(P.J, gamma)  # J-pullback of gamma, expressions
    k1 = jg.degree + 1
    Jv, Jg, _ = geom.eval_endo(ev, P.J, pts)
    # batched form jets: the pullback components are large expressions, so
    # walk them once for all points
    _, grads, hesses = geom.eval_form(ev, jg, pts)
    t = ResidualTracker("dd^c")
    for i in range(pts.shape[0]):
        p = pts[i]
        # B = d(J* gamma), with first derivatives
        Bv, Bg = geom._d_from_grads_and_hess(P.dim, jg.degree, grads[i],
                                             hesses[i])
        # C = Jinv* B: pullback by J^{-1} = -J
        Cv, Cg = geom.endo_pullback_jet(-Jv[i], -Jg[i], k1, Bv, Bg)
        Dv = geom.d_of_jet_form(P.dim, k1, Cv, Cg)
        t.update_many(Dv, p)
    verdict = verdict_for(t.max, tol)
    return AsthenoReport(m, t.max, t.mean, t.worst_point, verdict)


def ddc_scalar(ev: Evaluator, P: ProductHermitian, f: expr.Expression, p):
    """d(d^c f) for a scalar: d^c f = -(df) o J; returns the 2-form comps."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    Jv, Jg, _ = geom.eval_endo(ev, P.J, pts)
    j = ev.jet(f, pts)
    d = P.dim
    out = []
    for i in range(pts.shape[0]):
        df = j.grad[i]
        ddf = j.hess[i]
        # rho_l = -(df o J)_l = -df_k J^k_l ; drho[l, n]
        rho_g = -(np.einsum("kn,kl->ln", ddf, Jv[i])
                  + np.einsum("k,kln->ln", df, Jg[i]))
        comps = np.array([rho_g[jj, ii] - rho_g[ii, jj]
                          for (ii, jj) in form_indices(d, 2)])
        # (d rho)_{ij} = d_i rho_j - d_j rho_i
        out.append(comps)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Frame-mixing invariance and the Table-1 suite
# ---------------------------------------------------------------------------

def mixed_frame(pd: ProductData, i, seed):
    """Adapted frame with a seeded orthogonal mixing inside each D-block."""
    fr, e_blk, f_blk = pd.frame_slices(i)
    rng = np.random.default_rng(seed)

    def mix(block):
        n = len(block)
        if n == 0:
            return []
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        M = np.stack(block, axis=1) @ q
        return [M[:, c] for c in range(n)]

    return [fr[0], fr[1]] + mix(e_blk) + mix(f_blk)


def delta_and_P_with_frame(pd: ProductData, i, frame):
    C0, _ = pd.nabla_J()
    riem = pd.md.riemann()[i]
    J0 = pd.Jv[i]
    delta = np.zeros(pd.P.dim)
    Pm = np.zeros((pd.P.dim, pd.P.dim))
    for u in frame:
        nJ = np.einsum("ijm,m->ij", C0[i], u)
        delta += nJ @ u
        Pm += 0.5 * np.einsum("lkij,i,j->lk", riem, u, J0 @ u)
    return delta, Pm


TABLE1_ROWS = (
    ("sasakian", "sasakian"),
    ("sasakian", "kenmotsu"),
    ("sasakian", "cosymplectic"),
    ("kenmotsu", "kenmotsu"),
    ("kenmotsu", "sasakian"),
    ("kenmotsu", "cosymplectic"),
    ("cosymplectic", "sasakian"),
    ("cosymplectic", "kenmotsu"),
    ("cosymplectic", "cosymplectic"),
)

_CLASS_LABEL = {
    "sasakian": ("alpha-Sasakian", 1, 0),
    "kenmotsu": ("beta-Kenmotsu", 0, 1),
    "cosymplectic": ("Cosymplectic", 0, 0),
}


def table1_suite(ev: Evaluator, tol, samples=64, seed=7,
                 ab_grid=DEFAULT_AB_GRID):
    """Harmonicity of all nine factor-class pairs over the (a, b) grid."""
    rows = []
    worst = 0.0
    for no, (k1, k2) in enumerate(TABLE1_ROWS, start=1):
        F1 = factor_for_class(k1)
        F2 = factor_for_class(k2)
        row_max = 0.0
        verdicts = []
        for (a, b) in ab_grid:
            P = build_product(F1, F2, a, b, validate=False)
            pts = geom.sample_points(P.chart, samples, seed)
            rep = harmonicity_report(ev, P, pts, tol)
            verdicts.append(rep.verdict)
            row_max = max(row_max, rep.max_residual)
        harmonic = all(v == HARMONIC for v in verdicts)
        l1, a1, b1 = _CLASS_LABEL[k1]
        l2, a2, b2 = _CLASS_LABEL[k2]
        rows.append({
            "no": no, "m1": l1, "m2": l2,
            "a1": a1, "a2": a2, "b1": b1, "b2": b2,
            "harmonicity": "Yes" if harmonic else "No",
            "max_residual": row_max,
            "ab_grid": [list(ab) for ab in ab_grid],
        })
        worst = max(worst, row_max)
    verdict = "pass" if all(r["harmonicity"] == "Yes" for r in rows) else "fail"
    rep = CheckReport("table1", tol, worst, worst, None, verdict,
                      details={"table1_rows": rows})
    return rep
