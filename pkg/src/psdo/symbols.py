"""Symbol hierarchy on the model geometries.

Three layers: interior symbols a(x, xi, v) on the smooth stratum,
operator-valued edge symbols built from cone families P(x, r, w, eta, p),
and conormal symbols P(0,0,0,0,p) on the weight line. The checks in this
module are the desk versions of the structural conditions the calculus
imposes: degree-0 homogeneity in (xi, v), twisted homogeneity under the
weighted dilation group, and compatibility of the two principal symbols
where strata meet.

Coordinate changes act by pushforward. On the interior this is the exact
substitution (x, xi) -> (f(x), xi / f'(x)); on the edge fiber it is
conjugation by a measure-corrected discrete pullback along the base
diffeomorphism. Fiber values of circle-base families are always reported
in the nodal basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from psdo.geometry import Circle, Cone, DilationAction, Geometry, Point
from psdo.quantize import DiscretizedOperator, op_mellin
from psdo.symexpr import (
    Call,
    Const,
    Node,
    Var,
    add,
    diff,
    evaluate,
    mul,
    parse,
    shape_of,
    substitute,
    variables_of,
)

__all__ = [
    "SymbolError",
    "InteriorSymbol",
    "ConeSymbolFamily",
    "EdgeSymbol",
    "ConormalSymbol",
    "SymbolTuple",
    "HomogeneityReport",
    "TwistedHomogeneityReport",
    "SmoothnessReport",
    "CompatReport",
    "check_homogeneity",
    "check_family_smoothness",
    "check_twisted_homogeneity",
    "edge_symbol",
    "conormal",
    "compat_check",
    "pushforward_interior",
    "pushforward_edge",
    "circle_inverse",
    "base_pullback",
]


class SymbolError(ValueError):
    pass


ExprLike = Union[Node, str]

# x -> (L, R): left/right fiber conjugation matrices in the nodal basis
FiberConjugation = Callable[[float], tuple[np.ndarray, np.ndarray]]

_INTERIOR_VARS = frozenset({"x", "xi", "v", "r"})
_FAMILY_VARS = frozenset({"x", "r", "w", "eta", "p", "t", "v"})
_FAMILY_SCALARS = ("x", "r", "w", "eta", "p")


def _as_node(expr: ExprLike) -> Node:
    return parse(expr) if isinstance(expr, str) else expr


# ---------------------------------------------------------------------------
# Interior symbols


@dataclass(frozen=True)
class InteriorSymbol:
    """Symbol a(x, xi, v) on the smooth stratum, degree-0 positively
    homogeneous in (xi, v) jointly for |(xi, v)| >= R0.

    An r slot is permitted so that interior symbols on cone and edge
    geometries can vanish toward the singular stratum.
    """

    expr: Node
    q: int = 1
    R0: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "expr", _as_node(self.expr))
        got = shape_of(self.expr)
        if got != self.q:
            raise SymbolError(f"expression has fiber dim {got}, symbol declares {self.q}")
        if not self.R0 > 0:
            raise SymbolError("homogeneity radius R0 must be positive")
        extra = variables_of(self.expr) - _INTERIOR_VARS
        if extra:
            raise SymbolError(f"interior symbol uses non-interior variables {sorted(extra)}")

    def value(self, x, xi, v=0.0, r=0.0) -> np.ndarray:
        return evaluate(self.expr, {"x": x, "xi": xi, "v": v, "r": r})


@dataclass(frozen=True)
class HomogeneityReport:
    max_violation: float
    tol: float
    passed: bool
    worst_point: tuple[float, float, float, float]  # (x, xi, v, lam)


def check_homogeneity(
    a: InteriorSymbol,
    n_x: int = 8,
    n_dirs: int = 8,
    radii: Sequence[float] = (1.0, 2.0, 4.0),
    lambdas: Sequence[float] = (2.0, 4.0),
    tol: float = 1e-9,
) -> HomogeneityReport:
    """Sampled check of a(x, lam xi, lam v) = a(x, xi, v) outside R0.

    Base points run over |(xi, v)| in R0 * radii along n_dirs equally
    spaced directions (the default 8 keeps the axes and diagonals, so a
    chi(xi)-type profile is probed no closer to its transition region
    than R0 / sqrt(2)). Violations are relative to max(1, |a|).
    """
    xs = 2.0 * np.pi * np.arange(n_x) / n_x
    thetas = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    r_samples = (0.0, 0.7, 2.5) if "r" in variables_of(a.expr) else (0.0,)
    worst = 0.0
    worst_pt = (0.0, 0.0, 0.0, 0.0)
    for rho_fac in radii:
        rho = a.R0 * rho_fac
        for th in thetas:
            xi0, v0 = rho * np.cos(th), rho * np.sin(th)
            for r0 in r_samples:
                base = a.value(xs, xi0, v0, r=r0)
                scale = np.maximum(1.0, np.max(np.abs(base)))
                for lam in lambdas:
                    dilated = a.value(xs, lam * xi0, lam * v0, r=r0)
                    viol = float(np.max(np.abs(dilated - base)) / scale)
                    if viol > worst:
                        worst = viol
                        worst_pt = (float(xs[0]), float(xi0), float(v0), float(lam))
    return HomogeneityReport(worst, tol, worst <= tol, worst_pt)


# ---------------------------------------------------------------------------
# Cone families


@dataclass
class ConeSymbolFamily:
    """Family P(x, r, w, eta, p) valued in operators on the cone base.

    For a Point base the value at bound scalars is a q x q matrix. For a
    Circle base the family acts diagonally in base Fourier modes, with
    the mode index bound to the variable t; values are reported in the
    nodal basis. Full (non-diagonal) matrix families arise only through
    pushforward_edge and are carried by the `conj` hook, a map
    x -> (L, R) applied as L @ value @ R.

    The family is constant in (x, r) for r >= R1 and for x outside the
    declared window; quantization enforces this softly at the window
    ends.
    """

    expr: Node
    base: Geometry = field(default_factory=Point)
    q: int = 1
    R1: float = 1e3
    x_window: float = float(np.pi)
    conj: Optional[FiberConjugation] = field(default=None, compare=False, repr=False)
    _derivs: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def __post_init__(self):
        self.expr = _as_node(self.expr)
        if not isinstance(self.base, (Point, Circle)):
            raise SymbolError(f"cone base must be Point or Circle, got {type(self.base).__name__}")
        got = shape_of(self.expr)
        if got != self.q:
            raise SymbolError(f"expression has fiber dim {got}, family declares {self.q}")
        used = variables_of(self.expr)
        extra = used - _FAMILY_VARS
        if extra:
            raise SymbolError(f"cone family uses unknown variables {sorted(extra)}")
        if "t" in used and not isinstance(self.base, Circle):
            raise SymbolError("mode variable t requires a Circle base")
        if isinstance(self.base, Circle) and self.q != 1:
            raise SymbolError("circle-base families are scalar (q = 1) per fiber mode")

    @property
    def fiber_dim(self) -> int:
        if isinstance(self.base, Circle):
            return self.base.n_x * self.q
        return self.q

    def derivative(self, var: str) -> Node:
        if var not in _FAMILY_SCALARS:
            raise SymbolError(f"no stored derivative in {var}")
        if var not in self._derivs:
            self._derivs[var] = diff(self.expr, var)
        return self._derivs[var]

    def _bindings(self, x, r, w, eta, p, v) -> dict:
        b = {"x": x, "r": r, "w": w, "eta": eta, "p": p, "v": v}
        if isinstance(self.base, Circle):
            b["t"] = self.base.modes.astype(float)
        else:
            b["t"] = 0.0
        return b

    def value(self, p, w=0.0, eta=0.0, r=0.0, x=0.0, v=0.0) -> np.ndarray:
        """Fiber matrix at bound scalar arguments (nodal basis)."""
        if isinstance(self.base, Point):
            m = evaluate(self.expr, self._bindings(x, r, w, eta, p, v))
            m = np.asarray(m, dtype=complex).reshape(self.q, self.q)
        else:
            modes = self.base.modes.astype(float)
            vals = evaluate(self.expr, self._bindings(x, r, w, eta, p, v))
            d = np.broadcast_to(vals.reshape(-1), modes.shape).astype(complex)
            n = self.base.n_x
            om = self.base.x
            iFw = np.exp(1j * np.outer(om, modes))
            Fw = np.exp(-1j * np.outer(modes, om)) / n
            m = iFw @ np.diag(d) @ Fw
        if self.conj is not None:
            L, R = self.conj(float(x))
            m = L @ m @ R
        return m


@dataclass(frozen=True)
class SmoothnessReport:
    errors: dict
    max_error: float
    tol: float
    passed: bool


def check_family_smoothness(
    P: ConeSymbolFamily,
    seed: int = 0,
    n_samples: int = 12,
    h: float = 1e-5,
    tol: float = 1e-7,
) -> SmoothnessReport:
    """Finite-difference consistency of the stored symbolic derivatives.

    Central differences at seeded sample points, per scalar argument the
    family actually uses; errors are relative to max(1, |derivative|).
    """
    rng = np.random.default_rng(seed)
    used = variables_of(P.expr) & set(_FAMILY_SCALARS)
    errors: dict[str, float] = {}
    worst = 0.0
    modes = P.base.modes.astype(float) if isinstance(P.base, Circle) else np.array([0.0])
    for var in sorted(used):
        err = 0.0
        d_expr = P.derivative(var)
        for _ in range(n_samples):
            pt = {
                "x": rng.uniform(-2.0, 2.0),
                "r": rng.uniform(0.1, 3.0),
                "w": rng.uniform(-2.0, 2.0),
                "eta": rng.uniform(-2.0, 2.0),
                "p": rng.uniform(-4.0, 4.0),
                "v": rng.uniform(-2.0, 2.0),
            }
            pt["t"] = modes
            exact = evaluate(d_expr, pt)
            up, dn = dict(pt), dict(pt)
            up[var] = pt[var] + h
            dn[var] = pt[var] - h
            fd = (evaluate(P.expr, up) - evaluate(P.expr, dn)) / (2.0 * h)
            scale = max(1.0, float(np.max(np.abs(exact))))
            err = max(err, float(np.max(np.abs(fd - exact))) / scale)
        errors[var] = err
        worst = max(worst, err)
    return SmoothnessReport(errors, worst, tol, worst <= tol)


# ---------------------------------------------------------------------------
# Edge symbols


@dataclass
class EdgeSymbol:
    """The operator-valued symbol of an edge family: the generating cone
    family frozen at (x, r) -> (x, 0), realized at each (x, xi, v) as a
    matrix on the discretized cone through the Mellin calculus with the
    substituted arguments w = r v, eta = r xi kept live."""

    family: ConeSymbolFamily
    cone: Cone

    def __post_init__(self):
        fam_base, cone_base = self.family.base, self.cone.base
        if type(fam_base) is not type(cone_base):
            raise SymbolError("family base and cone base disagree")
        if isinstance(fam_base, Circle) and fam_base.n_x != cone_base.n_x:
            raise SymbolError("family base and cone base disagree on grid size")
        if self.cone.q != self.family.q:
            raise SymbolError("fiber dimension mismatch between family and cone")

    def at(self, x: float = 0.0, xi: float = 0.0, v: float = 0.0) -> DiscretizedOperator:
        op = op_mellin(self.cone, self.family.expr, v=v, xi=xi, x_value=x, freeze_r=True)
        if self.family.conj is None:
            return op
        L, R = self.family.conj(float(x))
        blocks = op.matrix.shape[0] // L.shape[0]
        Lb = np.kron(np.eye(blocks), L)
        Rb = np.kron(np.eye(blocks), R)
        return DiscretizedOperator(op.geometry, op.v, Lb @ op.matrix @ Rb, op.interior)


def edge_symbol(P: ConeSymbolFamily, x: float, xi: float, v: float, g: Cone) -> DiscretizedOperator:
    return EdgeSymbol(P, g).at(x=x, xi=xi, v=v)


@dataclass(frozen=True)
class TwistedHomogeneityReport:
    ks: tuple[int, ...]
    lambdas: tuple[float, ...]
    violations: tuple[float, ...]
    max_violation: float
    tol: float
    passed: bool


def check_twisted_homogeneity(
    sigma: EdgeSymbol,
    xi: float = 1.0,
    v: float = 1.0,
    x: float = 0.0,
    ks: Sequence[int] = tuple(range(1, 9)),
    tol: float = 1e-10,
) -> TwistedHomogeneityReport:
    """sigma(lam xi, lam v) = kappa_lam sigma(xi, v) kappa_lam^{-1} for
    grid-admissible lam = exp(k h_t), as a matrix identity."""
    if sigma.cone.boundary != "periodic":
        raise SymbolError("twisted homogeneity needs a periodic cone grid")
    base_m = sigma.at(x=x, xi=xi, v=v).matrix
    lams, viols = [], []
    for k in ks:
        act = DilationAction(sigma.cone, int(k))
        inv = DilationAction(sigma.cone, -int(k))
        lam = act.lam
        dilated = sigma.at(x=x, xi=lam * xi, v=lam * v).matrix
        conj = act.flat_matrix() @ base_m @ inv.flat_matrix()
        denom = max(1.0, float(np.linalg.norm(dilated, 2)))
        viols.append(float(np.linalg.norm(dilated - conj, 2)) / denom)
        lams.append(lam)
    worst = max(viols)
    return TwistedHomogeneityReport(
        tuple(int(k) for k in ks), tuple(lams), tuple(viols), worst, tol, worst <= tol
    )


# ---------------------------------------------------------------------------
# Conormal symbols


@dataclass
class ConormalSymbol:
    """The boundary family p -> P(0, 0, 0, 0, p) on the weight line.

    Circle-base values are nodal matrices; a conjugation pair inherited
    from a pushforward is applied as L @ value @ R.
    """

    expr: Node
    base: Geometry = field(default_factory=Point)
    q: int = 1
    conj: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.expr = _as_node(self.expr)

    @property
    def fiber_dim(self) -> int:
        if isinstance(self.base, Circle):
            return self.base.n_x * self.q
        return self.q

    def value(self, p: float) -> np.ndarray:
        if isinstance(self.base, Point):
            m = np.asarray(evaluate(self.expr, {"p": p, "t": 0.0}), dtype=complex)
            m = m.reshape(self.q, self.q)
        else:
            modes = self.base.modes.astype(float)
            vals = evaluate(self.expr, {"p": p, "t": modes})
            d = np.broadcast_to(vals.reshape(-1), modes.shape).astype(complex)
            n = self.base.n_x
            iFw = np.exp(1j * np.outer(self.base.x, modes))
            Fw = np.exp(-1j * np.outer(modes, self.base.x)) / n
            m = iFw @ np.diag(d) @ Fw
        if self.conj is not None:
            L, R = self.conj
            m = L @ m @ R
        return m

    def min_singular(self, ps: Sequence[float]) -> np.ndarray:
        return np.array([np.linalg.svd(self.value(p), compute_uv=False)[-1] for p in ps])

    def modulus_of_continuity(self, p_max: float = 32.0, n: int = 129, h: float = 1e-3) -> float:
        """max_p |value(p + h) - value(p)| over a uniform sample grid."""
        ps = np.linspace(-p_max, p_max, n)
        return max(
            float(np.linalg.norm(self.value(p + h) - self.value(p), 2)) for p in ps
        )

    def limit_drift(self, p_large: float = 1e6, factor: float = 1e3) -> float:
        """Distance between values at +-p_large and +-p_large*factor;
        small drift certifies convergence to the frozen limits."""
        return max(
            float(np.linalg.norm(self.value(s * p_large * factor) - self.value(s * p_large), 2))
            for s in (1.0, -1.0)
        )


def conormal(P: ConeSymbolFamily) -> ConormalSymbol:
    """Freeze x = r = w = eta = 0 and keep the p-family."""
    zero = Const(0.0)
    expr0 = substitute(P.expr, {"x": zero, "r": zero, "w": zero, "eta": zero, "v": zero})
    pair = P.conj(0.0) if P.conj is not None else None
    return ConormalSymbol(expr0, base=P.base, q=P.q, conj=pair)


# ---------------------------------------------------------------------------
# Symbol tuples and compatibility


@dataclass
class SymbolTuple:
    """Principal symbol data of an edge-degenerate operator: interior
    part sigma0 and edge part sigma1, with the tolerance at which the
    compatibility condition is enforced."""

    sigma0: InteriorSymbol
    sigma1: EdgeSymbol
    tol: float = 1e-8

    def __post_init__(self):
        if self.sigma0.q != self.sigma1.family.q:
            raise SymbolError("interior and edge symbols disagree on fiber dimension")


@dataclass(frozen=True)
class CompatReport:
    mismatch: float
    tol: float
    passed: bool


def compat_check(
    t: SymbolTuple,
    lam_large: float = 1e6,
    n_x: int = 8,
    n_dirs: int = 8,
) -> CompatReport:
    """Compatibility of the two principal symbols where strata meet.

    The interior symbol is compared, on the equator p = 0 of the large
    (w, eta, p)-sphere, against the generating family evaluated at the
    scaled arguments w = lam d_v, eta = lam d_xi with r frozen to 0: by
    degree-0 homogeneity both sides are radial limits and lam = 1e6
    reaches them to well under the default tolerance.
    """
    fam = t.sigma1.family
    xs = 2.0 * np.pi * np.arange(n_x) / n_x
    thetas = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    fiber = fam.fiber_dim
    worst = 0.0
    for x0 in xs:
        for th in thetas:
            d_xi, d_v = np.cos(th), np.sin(th)
            a0 = t.sigma0.value(x0, lam_large * d_xi, lam_large * d_v, r=0.0)
            a0 = np.asarray(a0, dtype=complex).reshape(t.sigma0.q, t.sigma0.q)
            if isinstance(fam.base, Circle):
                a0_f = np.kron(np.eye(fam.base.n_x), a0)
            else:
                a0_f = a0
            pv = fam.value(p=0.0, w=lam_large * d_v, eta=lam_large * d_xi, r=0.0, x=x0)
            pv = pv.reshape(fiber, fiber)
            worst = max(worst, float(np.linalg.norm(pv - a0_f, 2)))
    return CompatReport(worst, t.tol, worst <= t.tol)


# ---------------------------------------------------------------------------
# Pushforward along coordinate changes


def _check_diffeo(f: Node, df: Node, n_nodes: int = 64) -> np.ndarray:
    xs = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    dvals = evaluate(df, {"x": xs}).reshape(-1)
    if float(np.max(np.abs(dvals.imag))) > 1e-10 * max(1.0, float(np.max(np.abs(dvals)))):
        raise SymbolError("diffeomorphism derivative is not real on the circle")
    dreal = dvals.real
    if float(np.min(np.abs(dreal))) < 1e-8:
        raise SymbolError("diffeomorphism derivative vanishes at a sample node")
    return dreal


def circle_inverse(f: ExprLike, df: Optional[ExprLike] = None, n: int = 256) -> Node:
    """Closed-form inverse of a circle diffeomorphism.

    f lifts to the line as x + (periodic), so f^{-1} - id is periodic
    and smooth; it is recovered by Newton's method on n grid nodes and
    returned as a trigonometric-polynomial AST (coefficients below
    1e-14 of the sup are dropped, which keeps the tree small: analytic
    diffeomorphisms have exponentially decaying coefficients). Rigid
    rotations come back exact as x - c.
    """
    f = _as_node(f)
    df_n = diff(f, "x") if df is None else _as_node(df)
    _check_diffeo(f, df_n)
    y = 2.0 * np.pi * np.arange(n) / n
    x = y.copy()
    for _ in range(60):
        fx = evaluate(f, {"x": x}).reshape(-1).real
        dfx = evaluate(df_n, {"x": x}).reshape(-1).real
        step = (fx - y) / dfx
        x = x - step
        if float(np.max(np.abs(step))) < 1e-15:
            break
    h = x - y
    c = np.fft.fft(h) / n
    keep = 1e-14 * max(1.0, float(np.max(np.abs(h))))
    expr: Node = Var("x")
    if abs(c[0]) > keep:
        expr = add(expr, Const(complex(c[0].real)))
    for k in range(1, n // 2 + 1):
        ck = c[k]
        if abs(ck) <= keep:
            continue
        # h real: c_{-k} = conj(c_k), pair sums to 2 Re(c_k e^{iky})
        a_k = 2.0 * ck.real if k < n // 2 else ck.real
        b_k = -2.0 * ck.imag if k < n // 2 else 0.0
        arg = mul(Const(float(k)), Var("x"))
        if a_k != 0.0:
            expr = add(expr, mul(Const(a_k), Call("cos", arg)))
        if b_k != 0.0:
            expr = add(expr, mul(Const(b_k), Call("sin", arg)))
    return expr


def pushforward_interior(
    a: InteriorSymbol,
    f: ExprLike,
    df: Optional[ExprLike] = None,
    f_inv: Optional[ExprLike] = None,
    tol: float = 1e-10,
) -> InteriorSymbol:
    """Pushforward of an interior symbol along a circle diffeomorphism.

    The cotangent map sends (x, xi) to (f(x), xi / f'(x)), so the
    pushed-forward symbol is a'(y, eta, v) = a(f^{-1}(y),
    eta f'(f^{-1}(y)), v). When f_inv is not supplied it is constructed
    by circle_inverse; the construction is verified against f on grid
    samples and rejected honestly when it fails.
    """
    f = _as_node(f)
    df_n = diff(f, "x") if df is None else _as_node(df)
    dreal = _check_diffeo(f, df_n)
    f_inv = circle_inverse(f, df_n) if f_inv is None else _as_node(f_inv)
    xs = 2.0 * np.pi * np.arange(64) / 64
    round_trip = evaluate(substitute(f, {"x": f_inv}), {"x": xs}).reshape(-1)
    err = float(np.max(np.abs(round_trip - xs)))
    if err > tol * max(1.0, float(np.max(np.abs(xs)))):
        raise SymbolError(
            f"inverse construction failed (f(f_inv(x)) off by {err:.2e}); supply f_inv explicitly"
        )
    df_at_inv = substitute(df_n, {"x": f_inv})
    b = substitute(a.expr, {"x": f_inv, "xi": mul(Var("xi"), df_at_inv)})
    r0 = a.R0 / min(1.0, float(np.min(dreal)))
    return InteriorSymbol(b, a.q, r0)


def base_pullback(
    circle: Circle,
    g: ExprLike,
    dg: Optional[ExprLike] = None,
    polar: bool = True,
) -> np.ndarray:
    """Discrete pullback u -> sqrt(g') u(g(omega)) on the base circle.

    The raw matrix (trig interpolation at the warped nodes, weighted by
    the half-density factor) aliases above Nyquist and is exponentially
    ill-conditioned, so by default the returned matrix is its polar
    unitary factor: exactly the raw matrix for rigid rotations, equal to
    it on low modes to O(1/N), and safe to conjugate by. Pass
    polar=False for the raw interpolation matrix.
    """
    g = _as_node(g)
    dg_n = diff(g, "x") if dg is None else _as_node(dg)
    om = circle.x
    gvals = np.broadcast_to(evaluate(g, {"x": om}).reshape(-1), om.shape)
    dvals = np.broadcast_to(evaluate(dg_n, {"x": om}).reshape(-1), om.shape)
    if float(np.max(np.abs(gvals.imag))) > 1e-10 or float(np.max(np.abs(dvals.imag))) > 1e-10:
        raise SymbolError("base diffeomorphism must be real on the circle")
    dreal = dvals.real
    if float(np.min(dreal)) <= 0.0:
        raise SymbolError("base diffeomorphism is not bijective on the grid (Jacobian sign change)")
    modes = circle.modes.astype(float)
    F = np.fft.fft(np.eye(circle.n_x), axis=0) / circle.n_x
    E = np.exp(1j * np.outer(gvals.real, modes))
    raw = np.diag(np.sqrt(dreal)) @ E @ F
    if not polar:
        return raw
    U, _, Vh = np.linalg.svd(raw)
    return U @ Vh


def pushforward_edge(
    P: ConeSymbolFamily,
    g: ExprLike,
    dg: Optional[ExprLike] = None,
) -> ConeSymbolFamily:
    """Pushforward of a circle-base cone family along a base
    diffeomorphism: conjugation of the fiber values by the unitary
    discrete pullback. The diffeomorphism is constant along the edge."""
    if not isinstance(P.base, Circle):
        raise SymbolError("pushforward_edge needs a Circle base")
    Q = base_pullback(P.base, g, dg, polar=True)
    Qh = Q.conj().T
    old = P.conj

    def conj(x: float) -> tuple[np.ndarray, np.ndarray]:
        if old is None:
            return Qh, Q
        L, R = old(x)
        return Qh @ L, R @ Q

    return replace(P, conj=conj)
