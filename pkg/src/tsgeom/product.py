"""The two-parameter Hermitian structure on a product of contact factors.

Given trans-Sasakian factors (M1, phi1, xi1, eta1, g1) and (M2, ...), the
pair (a, b) with b != 0 defines an almost complex structure J and metric G
on M1 x M2 mixing the two Reeb directions. This module assembles (J, G) as
expression fields on the product chart and verifies the closed-form
expressions for the product connection, for nabla J and for the curvature
against the generic Levi-Civita computation.

Each closed form is evaluated in named variants:
  "reference" - the identity exactly as transcribed, including its
                suspected slips (sub-variants cover flagged ambiguities);
  "koszul"    - the form rederived from the Koszul formula.
The generic computation is the oracle; reports record which variant it
confirms and never silently reconcile a divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr, geom, riemann
from .contact import TransSasakianFactor, validate_axioms
from .expr import Evaluator
from .geom import (
    ChartDomain, EndomorphismField, MetricField, VectorField,
    coordinate_field, endo_apply_field, endo_field, metric_field,
    vector_field,
)
from .report import CheckReport, ResidualTracker, verdict_for


class ProductError(Exception):
    pass


class ZeroB(ProductError):
    pass


class UnvalidatedFactor(ProductError):
    pass


def _shift_field_comps(comps, offset):
    return tuple(expr.shift_coords(e, offset) for e in comps)


@dataclass
class EmbeddedFactor:
    """A factor's fields re-indexed into the product chart."""

    index: int  # 1 or 2
    source: TransSasakianFactor
    offset: int
    dim: int
    phi: EndomorphismField  # product-chart endo, zero outside the block
    xi: VectorField
    eta: tuple  # expressions, length = product dim
    gblk: tuple  # product-dim matrix of expressions, factor metric block
    alpha: expr.Expression
    beta: expr.Expression

    @property
    def block(self):
        return slice(self.offset, self.offset + self.dim)


def _embed_factor(F: TransSasakianFactor, offset: int, total: int, idx: int
                  ) -> EmbeddedFactor:
    d = F.chart.dim
    Z = expr.ZERO

    def sh(e):
        return expr.shift_coords(e, offset)

    phi = [[Z] * total for _ in range(total)]
    gblk = [[Z] * total for _ in range(total)]
    for i in range(d):
        for j in range(d):
            phi[offset + i][offset + j] = sh(F.structure.phi.comps[i][j])
            gblk[offset + i][offset + j] = sh(F.structure.g.comps[i][j])
    xi = [Z] * total
    eta = [Z] * total
    for i in range(d):
        xi[offset + i] = sh(F.structure.xi.comps[i])
        eta[offset + i] = sh(F.structure.eta.comps[i])
    return EmbeddedFactor(
        index=idx, source=F, offset=offset, dim=d,
        phi=None, xi=None,  # filled by caller once the chart exists
        eta=tuple(eta), gblk=tuple(tuple(r) for r in gblk),
        alpha=sh(F.alpha), beta=sh(F.beta),
    ), tuple(r for r in phi), tuple(xi)


@dataclass
class ProductHermitian:
    f1: TransSasakianFactor
    f2: TransSasakianFactor
    a: float
    b: float
    lam: float  # a^2 + b^2 - 1
    chart: ChartDomain
    J: EndomorphismField
    G: MetricField
    e1: EmbeddedFactor
    e2: EmbeddedFactor
    tampered: bool = False

    @property
    def dim(self):
        return self.chart.dim

    @property
    def n1(self):
        return self.f1.n

    @property
    def n2(self):
        return self.f2.n

    @property
    def m_complex(self):
        return self.dim // 2

    def factor_point(self, idx, p):
        emb = self.e1 if idx == 1 else self.e2
        return np.asarray(p)[..., emb.block]


def build_product(f1: TransSasakianFactor, f2: TransSasakianFactor,
                  a: float, b: float, *, validate=True, ev=None,
                  broken_j=False) -> ProductHermitian:
    """Assemble (J, G) on the product chart from the factor structures.

    broken_j is a negative control: the Reeb-mixing coefficient b is doubled
    in the xi2-component rows of J only, which destroys J^2 = -Id.
    """
    if b == 0:
        raise ZeroB("the structure requires b != 0")
    if validate:
        evv = ev or expr.JET
        for F in (f1, f2):
            if F.klass == "unverified":
                raise UnvalidatedFactor(F.structure.name)
            smoke = geom.sample_points(F.chart, 8, seed=11)
            rep = validate_axioms(evv, F.structure, smoke, 1e-6)
            if rep.verdict != "pass":
                raise UnvalidatedFactor(
                    f"{F.structure.name}: axiom residual {rep.max_residual:.3e}")

    d1, d2 = f1.chart.dim, f2.chart.dim
    total = d1 + d2
    names = tuple(n + "1" for n in f1.chart.names) + tuple(
        n + "2" for n in f2.chart.names)
    box = f1.chart.box + f2.chart.box
    ch = ChartDomain(total, names, box)

    emb1, phi1_rows, xi1_comps = _embed_factor(f1, 0, total, 1)
    emb2, phi2_rows, xi2_comps = _embed_factor(f2, d1, total, 2)
    emb1.phi = endo_field(ch, phi1_rows)
    emb1.xi = vector_field(ch, xi1_comps)
    emb2.phi = endo_field(ch, phi2_rows)
    emb2.xi = vector_field(ch, xi2_comps)

    lam = a * a + b * b - 1.0
    b_xi2 = 2.0 * b if broken_j else b

    # J = phi1 + phi2 - [(a/b) eta1 + ((a^2+b^2)/b) eta2] (x) xi1
    #              + [(1/b) eta1 + (a/b) eta2] (x) xi2
    C = expr.const
    Jrows = [[expr.ZERO] * total for _ in range(total)]
    for i in range(total):
        for j in range(total):
            t = expr.add(emb1.phi.comps[i][j], emb2.phi.comps[i][j])
            t = expr.add(t, expr.mul(
                xi1_comps[i],
                expr.add(expr.mul(C(-a / b), emb1.eta[j]),
                         expr.mul(C(-(a * a + b * b) / b), emb2.eta[j]))))
            t = expr.add(t, expr.mul(
                xi2_comps[i],
                expr.add(expr.mul(C(1.0 / b_xi2), emb1.eta[j]),
                         expr.mul(C(a / b_xi2), emb2.eta[j]))))
            Jrows[i][j] = t
    J = endo_field(ch, Jrows)

    Grows = [[expr.ZERO] * total for _ in range(total)]
    for i in range(total):
        for j in range(i, total):
            t = expr.add(emb1.gblk[i][j], emb2.gblk[i][j])
            t = expr.add(t, expr.mul(C(lam), expr.mul(emb2.eta[i], emb2.eta[j])))
            t = expr.add(t, expr.mul(C(a), expr.add(
                expr.mul(emb1.eta[i], emb2.eta[j]),
                expr.mul(emb1.eta[j], emb2.eta[i]))))
            Grows[i][j] = t
            Grows[j][i] = t
    G = metric_field(ch, Grows)

    return ProductHermitian(f1=f1, f2=f2, a=a, b=b, lam=lam, chart=ch, J=J,
                            G=G, e1=emb1, e2=emb2, tampered=broken_j)


DEFAULT_AB_GRID = ((0.0, 1.0), (1.0, 1.0), (-2.0, 3.0), (0.5, -1.0))


# ---------------------------------------------------------------------------
# Pointwise product data
# ---------------------------------------------------------------------------

@dataclass
class SpanField:
    """A spanning argument: a product-chart field tied to its factor data."""

    label: str
    factor: int  # 1 or 2
    product_field: VectorField
    factor_field: VectorField  # on the factor chart
    is_reeb: bool = False
    in_d: bool = False


def spanning_fields(P: ProductHermitian, factor: int):
    """{xi_i} u {phi_i d_c}: Reeb plus D-spanning fields of one factor.

    Identically-zero phi-images (e.g. phi applied to the Reeb coordinate)
    are dropped; they add nothing to the span.
    """
    emb = P.e1 if factor == 1 else P.e2
    F = emb.source
    out = [SpanField(f"xi{factor}", factor, emb.xi, F.structure.xi,
                     is_reeb=True)]
    for c in range(F.chart.dim):
        ff = endo_apply_field(F.structure.phi, coordinate_field(F.chart, c))
        if all(cmp == expr.ZERO for cmp in ff.comps):
            continue
        pf = endo_apply_field(emb.phi, coordinate_field(P.chart, emb.offset + c))
        out.append(SpanField(f"phi{factor}(d{c})", factor, pf, ff, in_d=True))
    return out


class ProductData:
    """Batched jets of everything the product reports need."""

    def __init__(self, ev: Evaluator, P: ProductHermitian, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        self.ev = ev
        self.P = P
        self.points = pts
        self.md = riemann.MetricData(ev, P.G, pts)
        self.Jv, self.Jg, self.Jh = geom.eval_endo(ev, P.J, pts)
        self.phi1v, _, _ = geom.eval_endo(ev, P.e1.phi, pts)
        self.phi2v, _, _ = geom.eval_endo(ev, P.e2.phi, pts)
        self.xi1v, _, _ = geom.eval_vector(ev, P.e1.xi, pts)
        self.xi2v, _, _ = geom.eval_vector(ev, P.e2.xi, pts)
        eta1 = geom.one_form_field(P.chart, P.e1.eta)
        eta2 = geom.one_form_field(P.chart, P.e2.eta)
        self.eta1v, _, _ = geom.eval_oneform(ev, eta1, pts)
        self.eta2v, _, _ = geom.eval_oneform(ev, eta2, pts)
        g1f = geom.endo_field(P.chart, P.e1.gblk)
        g2f = geom.endo_field(P.chart, P.e2.gblk)
        self.g1v, _, _ = geom.eval_endo(ev, g1f, pts)
        self.g2v, _, _ = geom.eval_endo(ev, g2f, pts)
        self.a1 = self._scalar(P.e1.alpha)
        self.b1 = self._scalar(P.e1.beta)
        self.a2 = self._scalar(P.e2.alpha)
        self.b2 = self._scalar(P.e2.beta)
        # factor-chart metric data at the sliced points
        self.md1 = riemann.MetricData(ev, P.f1.structure.g,
                                      P.factor_point(1, pts))
        self.md2 = riemann.MetricData(ev, P.f2.structure.g,
                                      P.factor_point(2, pts))
        self._frames = {}
        self._CJ = None

    def _scalar(self, e):
        v = np.asarray(self.ev.value(e, self.points), dtype=float)
        return np.broadcast_to(v, (self.points.shape[0],))

    def nabla_J(self):
        """C0[p,i,j,m] = (nabla_{d_m} J)^i_j and its gradient C1."""
        if self._CJ is None:
            self._CJ = riemann.nabla_endo_all(self.md, self.Jv, self.Jg, self.Jh)
        return self._CJ

    def frame(self, i):
        """Adapted G-orthonormal frame {xi1, J xi1, e_j, f_k} at point i."""
        if i not in self._frames:
            g0 = self.md.g0[i]
            xi1 = self.xi1v[i]
            Jxi1 = self.Jv[i] @ xi1
            blocks = [xi1, Jxi1]
            for (emb, phiv) in ((self.P.e1, self.phi1v), (self.P.e2, self.phi2v)):
                cand = [phiv[i][:, emb.offset + c] for c in range(emb.dim)]
                sub = riemann.orthonormal_frame_within(g0, cand)
                blocks.extend(sub)
            self._frames[i] = blocks
        return self._frames[i]

    def frame_slices(self, i):
        fr = self.frame(i)
        n1 = 2 * self.P.n1
        e = fr[2:2 + n1]
        f = fr[2 + n1:]
        return fr, e, f

    def residual_norm(self, i, vec):
        return riemann.vector_residual_norm(self.md.g0[i], self.frame(i), vec)


# ---------------------------------------------------------------------------
# Closed-form variants: connection
# ---------------------------------------------------------------------------

def _factor_quantities(pd: ProductData, i, which):
    if which == 1:
        return (pd.phi1v[i], pd.xi1v[i], pd.eta1v[i], pd.g1v[i],
                float(pd.a1[i]), float(pd.b1[i]))
    return (pd.phi2v[i], pd.xi2v[i], pd.eta2v[i], pd.g2v[i],
            float(pd.a2[i]), float(pd.b2[i]))


def _factor_cov(pd: ProductData, i, which, X: SpanField, Y: SpanField):
    """Embedded factor covariant derivative nabla^i_X Y at point index i."""
    mdf = pd.md1 if which == 1 else pd.md2
    emb = pd.P.e1 if which == 1 else pd.P.e2
    fpts = pd.P.factor_point(which, pd.points)
    xv, _, _ = geom.eval_vector(pd.ev, X.factor_field, fpts)
    yv, yg, _ = geom.eval_vector(pd.ev, Y.factor_field, fpts)
    w = riemann.cov_vector_at(mdf, i, xv[i], yv[i], yg[i])
    out = np.zeros(pd.P.dim)
    out[emb.block] = w
    return out


def connection_variants(pd: ProductData, i, X: SpanField, Y: SpanField,
                        Xval, Yval):
    """Named closed forms for nabla_X Y, by (factor(X), factor(Y)) block."""
    P = pd.P
    a, b, lam = P.a, P.b, P.lam
    phi1, xi1, eta1, g1, a1, b1 = _factor_quantities(pd, i, 1)
    phi2, xi2, eta2, g2, a2, b2 = _factor_quantities(pd, i, 2)
    case = (X.factor, Y.factor)
    if case == (1, 1):
        base = _factor_cov(pd, i, 1, X, Y)
        B1 = b1 * float((phi1 @ Xval) @ g1 @ (phi1 @ Yval))
        return {
            "reference": base,
            "koszul": base + (a / b ** 2) * B1 * (-a * xi1 + xi2),
        }
    if case == (2, 2):
        base = _factor_cov(pd, i, 2, X, Y)
        eX = float(eta2 @ Xval)
        eY = float(eta2 @ Yval)
        B2 = b2 * float((phi2 @ Xval) @ g2 @ (phi2 @ Yval))
        ref = base - lam * (eX * (a2 * (phi2 @ Yval) + b2 * (phi2 @ (phi2 @ Yval)))
                            + eY * (a2 * (phi2 @ Xval) + b2 * (phi2 @ (phi2 @ Xval))))
        kos = (base
               - lam * a2 * (eX * (phi2 @ Yval) + eY * (phi2 @ Xval))
               + (B2 / b ** 2) * (a * xi1 + (b * b - 1.0) * xi2))
        return {"reference": ref, "koszul": kos}
    if case == (1, 2):
        eY = float(eta2 @ Yval)
        eX = float(eta1 @ Xval)
        ref = -a * (a1 * eY * (phi1 @ Xval) + a2 * eX * (phi2 @ Yval)
                    + b1 * eY * (phi1 @ (phi1 @ Xval))
                    + b2 * eX * (phi2 @ (phi2 @ Yval)))
        kos = -a * (a1 * eY * (phi1 @ Xval) + a2 * eX * (phi2 @ Yval))
        return {"reference": ref, "koszul": kos}
    # case (2, 1)
    eX = float(eta2 @ Xval)
    eY = float(eta1 @ Yval)
    ref = -a * (a1 * eX * (phi1 @ Yval) + a2 * eY * (phi2 @ Xval)
                + b1 * eX * (phi1 @ (phi1 @ Yval))
                + b2 * eY * (phi2 @ (phi2 @ Xval)))
    kos = -a * (a1 * eX * (phi1 @ Yval) + a2 * eY * (phi2 @ Xval))
    return {"reference": ref, "koszul": kos}


def nabla_j_variants(pd: ProductData, i, X: SpanField, Y: SpanField,
                     Xval, Yval):
    """Named closed forms for (nabla_X J) Y, by block case."""
    P = pd.P
    a, b, lam = P.a, P.b, P.lam
    ab2 = a * a + b * b
    phi1, xi1, eta1, g1, a1, b1 = _factor_quantities(pd, i, 1)
    phi2, xi2, eta2, g2, a2, b2 = _factor_quantities(pd, i, 2)
    case = (X.factor, Y.factor)
    if case == (1, 1):
        gXY = float(Xval @ g1 @ Yval)
        eX = float(eta1 @ Xval)
        eY = float(eta1 @ Yval)
        phiX = phi1 @ Xval
        phi2X = phi1 @ phiX
        PhiXY = float(Xval @ g1 @ (phi1 @ Yval))
        gpp = float(phiX @ g1 @ (phi1 @ Yval))
        gphiXY = float(phiX @ g1 @ Yval)
        common = (a1 * gXY * xi1 - a1 * eY * Xval
                  + b1 * gphiXY * xi1 - b1 * eY * phiX
                  - (a / b) * a1 * PhiXY * xi1 + (a1 / b) * PhiXY * xi2)
        ref_tail = (- (a / b) * b1 * gpp * xi1
                    - (a / b) * b1 * eY * Xval + (a / b) * b1 * eY * eX * xi1)
        ref = common + (b1 * b1 / b) * gpp * xi2 + ref_tail
        ref_single = common + (b1 / b) * gpp * xi2 + ref_tail
        kos = (common
               - (a * a / b ** 2) * b1 * PhiXY * xi1
               + (a / b ** 2) * b1 * PhiXY * xi2
               + (b1 / b) * gpp * xi2
               + (a / b) * b1 * eY * phi2X)
        return {"reference": ref, "reference_single_beta": ref_single,
                "koszul": kos}
    if case == (2, 2):
        gXY = float(Xval @ g2 @ Yval)
        eX = float(eta2 @ Xval)
        eY = float(eta2 @ Yval)
        phiX = phi2 @ Xval
        phi2X = phi2 @ phiX
        PhiXY = float(Xval @ g2 @ (phi2 @ Yval))
        gpp = float(phiX @ g2 @ (phi2 @ Yval))
        gphiXY = float(phiX @ g2 @ Yval)
        ref = (a2 * (gXY + lam * eX * eY) * xi2 - ab2 * a2 * eY * Xval
               + b2 * gphiXY * xi2 - ab2 * b2 * eY * phiX
               - (ab2 / b) * (a2 * PhiXY + b2 * gXY - b2 * eX * eY) * xi1
               + (a / b) * (a2 * PhiXY + b2 * gXY - b2 * eX * eY) * xi2)
        kos = (a2 * gXY * xi2 - a2 * eY * Xval
               + b2 * gphiXY * xi2 - b2 * eY * phiX
               + lam * a2 * eY * phi2X - (a / b) * b2 * eY * phi2X
               - (ab2 / b) * a2 * PhiXY * xi1 + (a / b) * a2 * PhiXY * xi2
               - (1.0 / b) * b2 * gpp * xi1
               + (a / b ** 2) * b2 * PhiXY * xi1
               + ((b * b - 1.0) / b ** 2) * b2 * PhiXY * xi2)
        return {"reference": ref, "koszul": kos}
    if case == (1, 2):
        eY = float(eta2 @ Yval)
        eX = float(eta1 @ Xval)
        phiX = phi1 @ Xval
        phi2X = phi1 @ phiX
        phi3X = phi1 @ phi2X
        ref = (a * a1 * eY * eX * xi1 - a * a1 * eY * Xval
               + b * a1 * eY * phiX - b * b1 * eY * Xval
               + b * b1 * eY * eX * xi1 + a * b1 * eY * phi3X)
        kos = eY * (b * a1 * phiX + a * a1 * phi2X + (ab2 / b) * b1 * phi2X)
        return {"reference": ref, "koszul": kos}
    # case (2, 1)
    eY = float(eta1 @ Yval)
    eX = float(eta2 @ Xval)
    phiX = phi2 @ Xval
    phi2X = phi2 @ phiX
    phi3X = phi2 @ phi2X
    ref_base = (a * a2 * (eY * eX * xi2 - eY * Xval) - b * a2 * eY * phiX
                + (ab2 / b) * b2 * phi2X + (a * a / b) * eY * b2 * phi2X)
    ref = ref_base + a * b1 * eY * phi3X
    ref_b2 = ref_base + a * b2 * eY * phi3X
    kos = eY * (-b * a2 * phiX + a * a2 * phi2X - (b2 / b) * phi2X)
    return {"reference": ref, "reference_beta2": ref_b2, "koszul": kos}


def curvature_variants(pd: ProductData, i, U: SpanField, V: SpanField,
                       Z: SpanField, Uval, Vval, Zval, factor_R):
    """Named closed forms for R(U,V)Z with U,V D-sections of one factor.

    factor_R(which, U, V, Z) supplies the embedded factor curvature.
    """
    P = pd.P
    a, b, lam = P.a, P.b, P.lam
    phi1, xi1, eta1, g1, a1, b1 = _factor_quantities(pd, i, 1)
    phi2, xi2, eta2, g2, a2, b2 = _factor_quantities(pd, i, 2)
    uf = U.factor
    if uf == 1:
        PhiUV = float(Uval @ g1 @ (phi1 @ Vval))
        if Z.factor == 1:
            base = factor_R(1, U, V, Z)
            eZ = float(eta1 @ Zval)
            ref = base
            kos = (base
                   - (2 * a * a1 * b1 / b ** 2) * PhiUV * eZ * (-a * xi1 + xi2)
                   - (a * a * b1 * b1 / b ** 2) * (
                       float((phi1 @ Vval) @ g1 @ (phi1 @ Zval)) * Uval
                       - float((phi1 @ Uval) @ g1 @ (phi1 @ Zval)) * Vval))
            return {"reference": ref, "koszul": kos}
        eZ = float(eta2 @ Zval)
        phi2Z = phi2 @ Zval
        ref = (-2 * a * a1 * a2 * PhiUV * phi2Z
               - 2 * a * b2 * a1 * PhiUV * (phi2 @ phi2Z))
        kos = (-2 * a * a1 * a2 * PhiUV * phi2Z
               + 2 * a * a1 * b1 * PhiUV * eZ * (
                   ((a * a + b * b) / b ** 2) * xi1 - (a / b ** 2) * xi2))
        return {"reference": ref, "koszul": kos}
    # U, V in factor 2
    PhiUV = float(Uval @ g2 @ (phi2 @ Vval))
    if Z.factor == 1:
        eZ = float(eta1 @ Zval)
        phi1Z = phi1 @ Zval
        ref = (-2 * a * a1 * a2 * PhiUV * phi1Z
               - 2 * a * a2 * b1 * PhiUV * (phi1 @ phi1Z))
        kos = (-2 * a * a1 * a2 * PhiUV * phi1Z
               + 2 * a * a2 * b2 * PhiUV * eZ * (
                   -(a / b ** 2) * xi1 + (1.0 / b ** 2) * xi2))
        return {"reference": ref, "koszul": kos}
    base = factor_R(2, U, V, Z)
    eZ = float(eta2 @ Zval)
    phiU = phi2 @ Uval
    phiV = phi2 @ Vval
    phiZ = phi2 @ Zval
    PhiVZ = float(Vval @ g2 @ phiZ)
    PhiUZ = float(Uval @ g2 @ phiZ)
    gppVZ = float(phiV @ g2 @ phiZ)
    gppUZ = float(phiU @ g2 @ phiZ)
    ref = base + lam * (
        PhiVZ * (a2 * phiU + b2 * (phi2 @ phiU))
        - PhiUZ * (a2 * phiV + b2 * (phi2 @ phiV))
        - 2 * a2 * PhiUV * (a2 * phiZ + b2 * (phi2 @ phiZ)))
    kos = (base
           + lam * a2 * a2 * (PhiVZ * phiU - PhiUZ * phiV - 2 * PhiUV * phiZ)
           + ((b * b - 1.0) / b ** 2) * b2 * b2 * (gppVZ * Uval - gppUZ * Vval)
           + 2 * a2 * b2 * PhiUV * eZ * (
               -(a * (a * a + b * b) / b ** 2) * xi1 + (a * a / b ** 2) * xi2))
    return {"reference": ref, "koszul": kos}


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _variant_trackers(names):
    return {n: ResidualTracker(n) for n in names}


def _report_with_variants(name, tol, per_family):
    """Assemble a report where each family carries per-variant residuals.

    Family verdict: its best variant must be within tolerance. The matched
    variant (and every divergent one) is recorded.
    """
    trackers = []
    details = {}
    for fam_name, variants in per_family.items():
        best_name = min(variants, key=lambda k: variants[k].max)
        best = variants[best_name]
        summary = ResidualTracker(fam_name)
        summary.count = best.count
        summary.total = best.total
        summary.max = best.max
        summary.worst_point = best.worst_point
        trackers.append(summary)
        matched = sorted(k for k, t in variants.items() if t.max < tol)
        details[fam_name] = {
            "variants": {k: t.max for k, t in variants.items()},
            "matched": matched,
        }
    rep = CheckReport.from_trackers(name, tol, trackers)
    rep.details["variant_adjudication"] = details
    return rep


def connection_closed_form_report(ev: Evaluator, P: ProductHermitian,
                                  points, tol) -> CheckReport:
    """Product Levi-Civita connection vs the block closed forms.

    Covers the four block cases over spanning arguments plus the four
    Reeb-pair identities nabla_{xi_i} xi_j = 0 (checked generically).
    """
    pd = ProductData(ev, P, points)
    span1 = spanning_fields(P, 1)
    span2 = spanning_fields(P, 2)
    cases = {
        "nabla_X1_Y1": [(X, Y) for X in span1 for Y in span1],
        "nabla_X2_Y2": [(X, Y) for X in span2 for Y in span2],
        "nabla_X1_Y2": [(X, Y) for X in span1 for Y in span2],
        "nabla_X2_Y1": [(X, Y) for X in span2 for Y in span1],
    }
    per_family = {k: _variant_trackers(["reference", "koszul"])
                  for k in cases}
    t_reeb = ResidualTracker("nabla_xi_xi_zero")

    jets = {}

    def field_vals(S: SpanField):
        if id(S) not in jets:
            jets[id(S)] = geom.eval_vector(ev, S.product_field, pd.points)
        return jets[id(S)]

    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        for fam, pairs in cases.items():
            for (X, Y) in pairs:
                xv, _, _ = field_vals(X)
                yv, yg, _ = field_vals(Y)
                generic = riemann.cov_vector_at(pd.md, i, xv[i], yv[i], yg[i])
                variants = connection_variants(pd, i, X, Y, xv[i], yv[i])
                for vn, val in variants.items():
                    per_family[fam][vn].update(
                        pd.residual_norm(i, generic - val), p)
        for X in (span1[0], span2[0]):
            for Y in (span1[0], span2[0]):
                xv, _, _ = field_vals(X)
                yv, yg, _ = field_vals(Y)
                generic = riemann.cov_vector_at(pd.md, i, xv[i], yv[i], yg[i])
                t_reeb.update(pd.residual_norm(i, generic), p)

    rep = _report_with_variants("connection_closed_forms", tol, per_family)
    rep.details["families"]["nabla_xi_xi_zero"] = t_reeb.summary()
    if t_reeb.max >= tol:
        rep.verdict = verdict_for(max(rep.max_residual, t_reeb.max), tol)
        rep.max_residual = max(rep.max_residual, t_reeb.max)
    return rep


def nabla_J_report(ev: Evaluator, P: ProductHermitian, points, tol
                   ) -> CheckReport:
    """(nabla_X J) Y vs the four block closed forms; nabla_{xi_i} J = 0."""
    pd = ProductData(ev, P, points)
    span1 = spanning_fields(P, 1)
    span2 = spanning_fields(P, 2)
    C0, _ = pd.nabla_J()
    cases = {
        "nabla_J_X1_Y1": ([(X, Y) for X in span1 for Y in span1],
                          ["reference", "reference_single_beta", "koszul"]),
        "nabla_J_X2_Y2": ([(X, Y) for X in span2 for Y in span2],
                          ["reference", "koszul"]),
        "nabla_J_X1_Y2": ([(X, Y) for X in span1 for Y in span2],
                          ["reference", "koszul"]),
        "nabla_J_X2_Y1": ([(X, Y) for X in span2 for Y in span1],
                          ["reference", "reference_beta2", "koszul"]),
    }
    per_family = {k: _variant_trackers(v[1]) for k, v in cases.items()}
    t_reeb = ResidualTracker("nabla_xiJ_zero")

    jets = {}

    def field_vals(S: SpanField):
        if id(S) not in jets:
            jets[id(S)] = geom.eval_vector(ev, S.product_field, pd.points)
        return jets[id(S)]

    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        for fam, (pairs, _) in cases.items():
            for (X, Y) in pairs:
                xv, _, _ = field_vals(X)
                yv, _, _ = field_vals(Y)
                nJ = np.einsum("ijm,m->ij", C0[i], xv[i])
                generic = nJ @ yv[i]
                variants = nabla_j_variants(pd, i, X, Y, xv[i], yv[i])
                for vn, val in variants.items():
                    per_family[fam][vn].update(
                        pd.residual_norm(i, generic - val), p)
        for S in (span1[0], span2[0]):
            xv, _, _ = field_vals(S)
            nJ = np.einsum("ijm,m->ij", C0[i], xv[i])
            t_reeb.update(riemann.endo_residual_norm(pd.md.g0[i], pd.frame(i), nJ), p)

    rep = _report_with_variants("nabla_J_closed_forms", tol, per_family)
    rep.details["families"]["nabla_xiJ_zero"] = t_reeb.summary()
    if t_reeb.max >= tol:
        rep.max_residual = max(rep.max_residual, t_reeb.max)
        rep.verdict = verdict_for(rep.max_residual, tol)
    return rep


def curvature_closed_form_report(ev: Evaluator, P: ProductHermitian, points,
                                 tol) -> CheckReport:
    """Generic curvature of G vs the closed forms, including the Reeb rows."""
    pd = ProductData(ev, P, points)
    span1 = spanning_fields(P, 1)
    span2 = spanning_fields(P, 2)
    d1span = [S for S in span1 if S.in_d]
    d2span = [S for S in span2 if S.in_d]
    allspan = span1 + span2
    riem = pd.md.riemann()

    jets = {}
    fvals = {}

    def field_vals(S: SpanField):
        if id(S) not in jets:
            jets[id(S)] = geom.eval_vector(ev, S.product_field, pd.points)
        return jets[id(S)]

    def factor_vals(S: SpanField):
        if id(S) not in fvals:
            fpts = pd.P.factor_point(S.factor, pd.points)
            fvals[id(S)] = geom.eval_vector(ev, S.factor_field, fpts)[0]
        return fvals[id(S)]

    def factor_R(pd_, i):
        def inner(which, U, V, Z):
            mdf = pd_.md1 if which == 1 else pd_.md2
            emb = pd_.P.e1 if which == 1 else pd_.P.e2
            w = riemann.curvature_values(mdf, i, factor_vals(U)[i],
                                         factor_vals(V)[i], factor_vals(Z)[i])
            out = np.zeros(pd_.P.dim)
            out[emb.block] = w
            return out
        return inner

    # batched brackets for the printed Reeb-row form
    br_cache = {}
    for dspn in (d1span, d2span):
        for U in dspn:
            for V in dspn:
                br_cache[(id(U), id(V))] = geom.lie_bracket(
                    ev, U.product_field, V.product_field, pd.points)

    # diagonal pairs (U, U) are kept: the generic side vanishes there by
    # antisymmetry, which exposes symmetric transcription defects that
    # orthogonal off-diagonal pairs cannot see
    fam_defs = {
        "R_U1V1_Z1": [(U, V, Z) for U in d1span for V in d1span
                      for Z in span1],
        "R_U1V1_Z2": [(U, V, Z) for U in d1span for V in d1span
                      for Z in span2],
        "R_U2V2_Z1": [(U, V, Z) for U in d2span for V in d2span
                      for Z in span1],
        "R_U2V2_Z2": [(U, V, Z) for U in d2span for V in d2span
                      for Z in span2],
    }
    per_family = {k: _variant_trackers(["reference", "koszul"])
                  for k in fam_defs}
    t_mix = ResidualTracker("R_xi1_xi2_zero")
    reeb_particulars = {
        "R_U1V1_xi1": _variant_trackers(["reference", "koszul"]),
        "R_U1V1_xi2_zero": _variant_trackers(["reference", "koszul"]),
        "R_U2V2_xi1_zero": _variant_trackers(["reference", "koszul"]),
        "R_U2V2_xi2": _variant_trackers(["reference", "koszul"]),
    }

    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        fR = factor_R(pd, i)
        for fam, triples in fam_defs.items():
            for (U, V, Z) in triples:
                uv, _, _ = field_vals(U)
                vv, _, _ = field_vals(V)
                zv, _, _ = field_vals(Z)
                generic = np.einsum("lkij,i,j,k->l", riem[i], uv[i], vv[i],
                                    zv[i])
                variants = curvature_variants(pd, i, U, V, Z, uv[i], vv[i],
                                              zv[i], fR)
                for vn, val in variants.items():
                    per_family[fam][vn].update(
                        pd.residual_norm(i, generic - val), p)
        # R(xi1, xi2) annihilates everything
        x1 = pd.xi1v[i]
        x2 = pd.xi2v[i]
        for Z in allspan:
            zv, _, _ = field_vals(Z)
            val = np.einsum("lkij,i,j,k->l", riem[i], x1, x2, zv[i])
            t_mix.update(pd.residual_norm(i, val), p)
        # Reeb rows of the block families, with their printed shortcuts
        phi1, xi1, eta1, g1, a1, b1 = _factor_quantities(pd, i, 1)
        phi2, xi2, eta2, g2, a2, b2 = _factor_quantities(pd, i, 2)
        for (dspn, xiS, other_xi, fam_a, fam_b, which) in (
                (d1span, span1[0], span2[0], "R_U1V1_xi1", "R_U1V1_xi2_zero", 1),
                (d2span, span2[0], span1[0], "R_U2V2_xi2", "R_U2V2_xi1_zero", 2)):
            for U in dspn:
                for V in dspn:
                    uv, _, _ = field_vals(U)
                    vv, _, _ = field_vals(V)
                    # own-Reeb row
                    Zv = pd.xi1v[i] if which == 1 else pd.xi2v[i]
                    generic = np.einsum("lkij,i,j,k->l", riem[i], uv[i],
                                        vv[i], Zv)
                    varmap = curvature_variants(pd, i, U, V, xiS, uv[i],
                                                vv[i], Zv, fR)
                    if which == 1:
                        br = br_cache[(id(U), id(V))][i]
                        printed = -b1 * float(eta1 @ br) * xi1
                        varmap = {"reference": printed,
                                  "koszul": varmap["koszul"]}
                    else:
                        gpp2 = float((phi2 @ uv[i]) @ g2
                                     @ (phi2 @ (phi2 @ vv[i])))
                        gpp3 = float((phi2 @ uv[i]) @ g2
                                     @ (phi2 @ (phi2 @ (phi2 @ vv[i]))))
                        base = fR(2, U, V, xiS)
                        printed = base + P.lam * (
                            2 * a2 * b2 * gpp2 - 2 * b2 * b2 * gpp3) * xi2
                        varmap = {"reference": printed,
                                  "koszul": varmap["koszul"]}
                    for vn, val in varmap.items():
                        reeb_particulars[fam_a][vn].update(
                            pd.residual_norm(i, generic - val), p)
                    # other-Reeb row: printed claims zero
                    Zv2 = pd.xi2v[i] if which == 1 else pd.xi1v[i]
                    generic2 = np.einsum("lkij,i,j,k->l", riem[i], uv[i],
                                         vv[i], Zv2)
                    varmap2 = curvature_variants(pd, i, U, V, other_xi,
                                                 uv[i], vv[i], Zv2, fR)
                    for vn, val in (("reference", np.zeros(P.dim)),
                                    ("koszul", varmap2["koszul"])):
                        reeb_particulars[fam_b][vn].update(
                            pd.residual_norm(i, generic2 - val), p)

    per_family.update(reeb_particulars)
    rep = _report_with_variants("curvature_closed_forms", tol, per_family)
    rep.details["families"]["R_xi1_xi2_zero"] = t_mix.summary()
    if t_mix.max >= tol:
        rep.max_residual = max(rep.max_residual, t_mix.max)
        rep.verdict = verdict_for(rep.max_residual, tol)
    return rep


def integrability_report(ev: Evaluator, P: ProductHermitian, points, tol
                         ) -> CheckReport:
    """Nijenhuis tensor of J over coordinate-basis pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    d = P.dim
    Jcols = [endo_apply_field(P.J, coordinate_field(P.chart, j))
             for j in range(d)]
    Jv, _, _ = geom.eval_endo(ev, P.J, pts)
    t = ResidualTracker("nijenhuis")
    md = riemann.MetricData(ev, P.G, pts)
    # [J d_i, J d_j] brackets batched; [J d_i, d_j] reduces to -d_j(J d_i)
    brJJ = {}
    for i_ in range(d):
        for j_ in range(i_ + 1, d):
            brJJ[(i_, j_)] = geom.lie_bracket(ev, Jcols[i_], Jcols[j_], pts)
    jac = [geom.eval_vector(ev, Jcols[i_], pts)[1] for i_ in range(d)]
    for ip in range(pts.shape[0]):
        p = pts[ip]
        J0 = Jv[ip]
        frame = riemann.orthonormal_frame(md.g0[ip])
        for i_ in range(d):
            for j_ in range(i_ + 1, d):
                # [d_i, d_j] = 0 on a chart
                bJJ = brJJ[(i_, j_)][ip]
                # [J d_i, d_j]^k = - d_j (J d_i)^k ; [d_i, J d_j]^k = d_i (J d_j)^k
                bJi_dj = -jac[i_][ip][:, j_]
                bdi_Jj = jac[j_][ip][:, i_]
                N = bJJ - J0 @ bJi_dj - J0 @ bdi_Jj
                t.update(riemann.vector_residual_norm(md.g0[ip], frame, N), p)
    verdict = "pass" if t.max < tol else verdict_for(t.max, tol)
    rep = CheckReport.from_trackers("integrability", tol, [t], verdict=verdict)
    rep.details["integrable"] = bool(t.max < tol)
    return rep


def product_invariants_report(ev: Evaluator, P: ProductHermitian, points,
                              tol) -> CheckReport:
    """J^2 = -Id, G-Hermitian J, positive definiteness, block pairing."""
    pd = ProductData(ev, P, points)
    t_j2 = ResidualTracker("J^2 + Id")
    t_herm = ResidualTracker("G(J.,J.) - G")
    t_pos = ResidualTracker("negative eigenvalue margin")
    t_blk = ResidualTracker("cross-block pairing vs a*eta1*eta2")
    eye = np.eye(P.dim)
    for i in range(pd.points.shape[0]):
        p = pd.points[i]
        J0 = pd.Jv[i]
        g0 = pd.md.g0[i]
        t_j2.update_many(J0 @ J0 + eye, p)
        t_herm.update_many(J0.T @ g0 @ J0 - g0, p)
        eig = float(np.min(np.linalg.eigvalsh(g0)))
        t_pos.update(0.0 if eig > 0 else abs(eig), p)
        cross = g0[P.e1.block, P.e2.block]
        expected = P.a * np.outer(pd.eta1v[i][P.e1.block],
                                  pd.eta2v[i][P.e2.block])
        t_blk.update_many(cross - expected, p)
    return CheckReport.from_trackers(
        "product_invariants", tol, [t_j2, t_herm, t_pos, t_blk])
