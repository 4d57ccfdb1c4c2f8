"""Ellipticity verdicts, finite-section Fredholm data, winding-number
oracle, tuple quantization, and large-parameter invertibility scans.

Fredholm and index work runs on interval-mode cone grids: the periodic
cylinder makes every Mellin multiplier invertible-or-nothing, while the
two interval ends model the r -> 0 conormal data and the r -> infinity
interior data. Finite sections of Fredholm operators grow spurious
near-kernels from the cut, so near-null vectors are attributed per
singular pair: a vector localized in the seam collars (outer 10% of
interval nodes, or of Fourier modes around Nyquist on periodic axes) is
a cut artifact and does not count. Counts must stabilize across two
refinements with a spectral gap ratio of at least 100, otherwise the
report is marked indeterminate rather than guessed.

The index sign convention is pinned against the quantization rather
than assumed: for the Mellin calculus as built, a determinate
finite-section index equals +1 times the winding of the tip conormal
symbol traversed from -p_max to +p_max. The pin comes from the Cayley
factor (p - i)/(p + i), winding +1, whose quantized interpolation to
the identity carries one genuine tip-concentrated kernel vector and no
genuine cokernel; adjoints flip both signs consistently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from psdo.geometry import Circle, Cone, Edge, Geometry, Point, collar_cutoff
from psdo.quantize import DiscretizedOperator, _restrict_t_axis, op_edge, quantize
from psdo.symbols import (
    ConeSymbolFamily,
    ConormalSymbol,
    EdgeSymbol,
    InteriorSymbol,
    SymbolTuple,
    compat_check,
    conormal,
)
from psdo.symexpr import Const, Node, Var, evaluate, mul, parse, sub, substitute, variables_of

__all__ = [
    "FredholmError",
    "EllipticityReport",
    "check_elliptic",
    "SectionStats",
    "FredholmReport",
    "finite_section",
    "WindingReport",
    "winding_oracle",
    "extract_tuple",
    "quantize_tuple",
    "LargeParameterReport",
    "large_parameter_scan",
]


class FredholmError(ValueError):
    pass


ExprLike = Union[Node, str]


def _as_node(expr: ExprLike) -> Node:
    return parse(expr) if isinstance(expr, str) else expr


# ---------------------------------------------------------------------------
# Ellipticity


@dataclass(frozen=True)
class EllipticityReport:
    """Two-condition ellipticity verdict for a symbol tuple.

    interior_min is the smallest singular value of sigma0 over sampled
    (x, sphere direction) pairs at the homogeneity radius; the conormal
    profile scans the weight line including p = 0 and the large-|p|
    limits. overall is the conjunction of the two conditions.
    """

    interior_min: float
    conormal_min: float
    large_p_min: float
    large_p_drift: float
    floor: float
    interior_pass: bool
    conormal_pass: bool
    large_p_pass: bool
    overall: bool
    compat_mismatch: float
    p_values: np.ndarray = field(repr=False)
    conormal_profile: np.ndarray = field(repr=False)


def check_elliptic(
    t: SymbolTuple,
    n_x: int = 64,
    n_sphere: int = 32,
    p_max: float = 64.0,
    n_p: int = 513,
    floor: float = 1e-6,
    lam: float = 1e6,
    drift_tol: float = 1e-5,
) -> EllipticityReport:
    """Ellipticity of a compatible tuple: interior invertibility on the
    (xi, v)-sphere and conormal invertibility on the whole weight line.

    The p-grid has odd cardinality so p = 0 is always sampled (a zero at
    the origin is the canonical failure). Compatibility failure warns
    but the scan still runs.
    """
    comp = compat_check(t)
    if not comp.passed:
        warnings.warn(
            f"symbol tuple fails compatibility at {comp.mismatch:.3e}; ellipticity scan may be meaningless",
            stacklevel=2,
        )
    xs = 2.0 * np.pi * np.arange(n_x) / n_x
    thetas = 2.0 * np.pi * np.arange(n_sphere) / n_sphere
    q = t.sigma0.q
    interior_min = math.inf
    for x0 in xs:
        for th in thetas:
            a = t.sigma0.value(x0, lam * np.cos(th), lam * np.sin(th), r=0.0)
            a = np.asarray(a, dtype=complex).reshape(q, q)
            interior_min = min(interior_min, float(np.linalg.svd(a, compute_uv=False)[-1]))
    con = conormal(t.sigma1.family)
    ps = np.linspace(-p_max, p_max, n_p)
    profile = con.min_singular(ps)
    conormal_min = float(np.min(profile))
    large_ps = [s * p_max * f for s in (1.0, -1.0) for f in (8.0, 64.0, 512.0)]
    large_p_min = float(np.min(con.min_singular(large_ps)))
    drift = con.limit_drift()
    interior_pass = interior_min >= floor
    large_p_pass = large_p_min >= floor and drift <= drift_tol
    conormal_pass = conormal_min >= floor and large_p_pass
    return EllipticityReport(
        interior_min=interior_min,
        conormal_min=conormal_min,
        large_p_min=large_p_min,
        large_p_drift=drift,
        floor=floor,
        interior_pass=interior_pass,
        conormal_pass=conormal_pass,
        large_p_pass=large_p_pass,
        overall=interior_pass and conormal_pass,
        compat_mismatch=comp.mismatch,
        p_values=ps,
        conormal_profile=profile,
    )


# ---------------------------------------------------------------------------
# Finite sections


@dataclass(frozen=True)
class SectionStats:
    size: int
    dim: int
    sigma_max: float
    tau: float
    smallest: tuple[float, ...]
    gap_ratio: float
    kernel: int
    cokernel: int
    index: int
    artifacts: int


@dataclass(frozen=True)
class FredholmReport:
    sizes: tuple[int, ...]
    stats: tuple[SectionStats, ...]
    determinate: bool
    indeterminate: bool
    kernel: Optional[int]
    cokernel: Optional[int]
    index: Optional[int]
    convention: str = (
        "index = kernel - cokernel; cross-check: index = +winding of the tip "
        "symbol, p traversed from -p_max to +p_max"
    )

    def rows(self) -> list[tuple[int, int, int, int]]:
        """(size, kernel, cokernel, index) table."""
        return [(s.size, s.kernel, s.cokernel, s.index) for s in self.stats]


def _collar_fraction(vec: np.ndarray, A: DiscretizedOperator, frac: float = 0.1) -> float:
    """Mass fraction of a near-null vector in the cut-sensitive region."""
    g = A.geometry
    total = float(np.vdot(vec, vec).real)
    if total <= 0.0:
        return 0.0
    if isinstance(g, (Cone, Edge)):
        cone = g if isinstance(g, Cone) else g.cone
        pre = g.circle.n_x if isinstance(g, Edge) else 1
        n_t = cone.n_t - 1 if A.interior else cone.n_t
        post = vec.size // (pre * n_t)
        m = max(1, math.ceil(frac * n_t))
        slab = vec.reshape(pre, n_t, post)
        mass = float(np.sum(np.abs(slab[:, :m, :]) ** 2 + np.abs(slab[:, -m:, :]) ** 2))
        return mass / total
    # circle: artifacts live near the Nyquist seam in mode space
    n = g.n_x
    coeffs = np.fft.fft(vec.reshape(n, g.q), axis=0)
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    seam = k >= (1.0 - frac) * (n / 2.0)
    mass = float(np.sum(np.abs(coeffs[seam, :]) ** 2))
    return mass / float(np.sum(np.abs(coeffs) ** 2))


def finite_section(
    build: Callable[[int], DiscretizedOperator],
    sizes: Sequence[int] = (64, 128, 256),
    tau_coef: float = 1e-6,
    gap_min: float = 100.0,
    collar_frac: float = 0.1,
) -> FredholmReport:
    """Kernel/cokernel/index of a refinement ladder of finite sections.

    build(size) assembles the operator at one ladder rung. Near-null
    singular pairs below tau = tau_coef * sigma_max are attributed:
    the right vector, when genuine, counts toward the kernel, the left
    vector toward the cokernel; collar-localized vectors are cut
    artifacts and count toward neither. Determinate iff the last two
    rungs agree in counts and both show gap ratio >= gap_min.
    """
    if len(sizes) < 2:
        raise FredholmError("finite-section ladder needs at least two sizes")
    stats = []
    for size in sizes:
        A = build(int(size))
        U, s, Vh = np.linalg.svd(A.matrix)
        dim = s.size
        sigma_max = float(s[0]) if dim else 0.0
        tau = tau_coef * sigma_max
        count = int(np.sum(s <= tau))
        if count:
            kept = s[dim - count - 1] if count < dim else sigma_max
            dropped = max(float(s[dim - count]), 1e-300)
            gap = float(kept) / dropped
        else:
            gap = float(s[-1]) / max(tau, 1e-300)
        kernel = cokernel = artifacts = 0
        for i in range(dim - count, dim):
            v_genuine = _collar_fraction(np.conj(Vh[i]), A, collar_frac) < 0.5
            u_genuine = _collar_fraction(U[:, i], A, collar_frac) < 0.5
            kernel += int(v_genuine)
            cokernel += int(u_genuine)
            artifacts += int(not v_genuine) + int(not u_genuine)
        stats.append(
            SectionStats(
                size=int(size),
                dim=dim,
                sigma_max=sigma_max,
                tau=tau,
                smallest=tuple(float(x) for x in s[-8:][::-1]),
                gap_ratio=gap,
                kernel=kernel,
                cokernel=cokernel,
                index=kernel - cokernel,
                artifacts=artifacts,
            )
        )
    last, prev = stats[-1], stats[-2]
    determinate = (
        last.gap_ratio >= gap_min
        and prev.gap_ratio >= gap_min
        and (last.kernel, last.cokernel) == (prev.kernel, prev.cokernel)
    )
    return FredholmReport(
        sizes=tuple(int(s) for s in sizes),
        stats=tuple(stats),
        determinate=determinate,
        indeterminate=not determinate,
        kernel=last.kernel if determinate else None,
        cokernel=last.cokernel if determinate else None,
        index=last.index if determinate else None,
    )


# ---------------------------------------------------------------------------
# Winding oracle


@dataclass(frozen=True)
class WindingReport:
    winding: int
    residual: float
    min_abs: float
    closure_gap: float
    orientation: str = "p traversed from -p_max to +p_max"
    index_convention: str = "index = +winding (pinned against the Mellin quantization)"


def winding_oracle(
    g: Union[ConormalSymbol, Node, str, Callable[[float], complex]],
    p_max: float = 1e6,
    n: int = 4097,
    min_abs: float = 1e-6,
    closure_tol: float = 1e-3,
) -> WindingReport:
    """Accumulated argument change of det g(p) along the weight line,
    in units of 2 pi.

    The grid is tangent-spaced (p = tan u) so steps stay small near
    p = 0 and the endpoints reach far enough for the contour to close;
    n must stay odd so p = 0 itself is sampled and zero crossings at
    the origin are seen directly.
    Scalar symbols are used directly; matrix conormal symbols through
    their determinant.
    """
    if isinstance(g, ConormalSymbol):
        f = lambda p: complex(np.linalg.det(g.value(p)))
    elif isinstance(g, (Node, str)):
        expr = _as_node(g)
        f = lambda p: complex(np.asarray(evaluate(expr, {"p": p, "t": 0.0})).reshape(-1)[0])
    else:
        f = g
    u_max = math.atan(p_max)
    us = np.linspace(-u_max, u_max, n)
    vals = np.array([f(float(np.tan(u))) for u in us])
    amin = float(np.min(np.abs(vals)))
    if amin < min_abs:
        raise FredholmError(f"symbol passes through zero on the weight line (min |g| = {amin:.3e})")
    closure = float(np.abs(vals[-1] - vals[0])) / max(1.0, float(np.abs(vals[0])))
    if closure > closure_tol:
        raise FredholmError(f"contour does not close: |g(+p_max) - g(-p_max)| = {closure:.3e}")
    steps = np.angle(vals[1:] / vals[:-1])
    total = float(np.sum(steps)) / (2.0 * np.pi)
    w = int(round(total))
    residual = abs(total - w)
    if residual > 0.1:
        raise FredholmError(f"winding number is not integral (residual {residual:.3f})")
    return WindingReport(winding=w, residual=residual, min_abs=amin, closure_gap=closure)


# ---------------------------------------------------------------------------
# Tuple quantization


def extract_tuple(
    sigma: Union[EdgeSymbol, ConeSymbolFamily],
    cone: Optional[Cone] = None,
    tol: float = 1e-8,
) -> SymbolTuple:
    """Read the principal symbol tuple off a generating family.

    The interior symbol is the family at the edge equator: r and p
    frozen to 0 with the fiber arguments renamed to the interior
    covariables (w -> v, eta -> xi). Compatibility then holds exactly,
    so extract-then-quantize round trips stay inside the ideal.
    """
    if isinstance(sigma, EdgeSymbol):
        fam, cone = sigma.family, sigma.cone
    else:
        fam = sigma
        if cone is None:
            raise FredholmError("extract_tuple needs the cone grid when given a bare family")
    if fam.conj is not None:
        raise FredholmError("pushforward-conjugated families have no expression-level tuple")
    if not isinstance(fam.base, Point):
        raise FredholmError("tuple extraction supports point-base cone fibers only")
    zero = Const(0.0)
    s0 = substitute(fam.expr, {"r": zero, "p": zero, "w": Var("v"), "eta": Var("xi")})
    sigma0 = InteriorSymbol(s0, q=fam.q, R0=fam.R1)
    return SymbolTuple(sigma0, EdgeSymbol(fam, cone), tol=tol)


def _op_interior_on_edge(g: Edge, expr: Node, v: float) -> np.ndarray:
    """Quantize an interior symbol a(x, xi, v, r) on the edge grid:
    Kohn-Nirenberg along x, multiplication across the cone fiber."""
    circ, cone = g.circle, g.cone
    n, n_t, q = circ.n_x, cone.n_t, g.q
    k = circ.modes.astype(float)
    bindings = {
        "x": circ.x[:, None, None],
        "xi": k[None, :, None],
        "r": cone.r[None, None, :],
        "v": v,
    }
    S = evaluate(expr, bindings)
    S = np.broadcast_to(S, (n, n, n_t, q, q))
    E = np.exp(1j * np.outer(circ.x, k))
    F = np.fft.fft(np.eye(n), axis=0) / n
    M = np.einsum("jk,jktab,kl->tjalb", E, S, F, optimize=True)  # (t, j, a, l, b)
    full = np.zeros((n, n_t, q, n, n_t, q), dtype=complex)
    idx = np.arange(n_t)
    full[:, idx, :, :, idx, :] = M
    return full.reshape(g.dim_total, g.dim_total)


def quantize_tuple(
    t: SymbolTuple,
    g: Edge,
    v: float = 0.0,
    r1: float = 1.0,
) -> DiscretizedOperator:
    """Edge operator with principal symbol tuple t, by the two-step
    construction: quantize the generating family, then correct the
    interior part inside a collar by the difference between sigma0 and
    the interior content the family already carries at p = 0.

    The correction vanishes identically for tuples read off a family by
    extract_tuple at the equator, in the high-frequency regime; what
    remains is ideal-sized and reported through the round-trip checks.
    """
    if not isinstance(g, Edge):
        raise FredholmError("quantize_tuple targets edge geometries")
    comp = compat_check(t)
    if not comp.passed:
        raise FredholmError(
            f"tuple incompatible: equator mismatch {comp.mismatch:.3e} exceeds tolerance {t.tol:.1e}"
        )
    fam = t.sigma1.family
    if fam.conj is not None:
        raise FredholmError("pushforward-conjugated families have no direct quantization")
    if not isinstance(fam.base, Point):
        raise FredholmError("tuple quantization supports point-base cone fibers only")
    if g.cone != t.sigma1.cone:
        raise FredholmError("edge geometry carries a different cone grid than the tuple")
    A = op_edge(g, fam.expr, v=v)
    r_var = Var("r")
    carried = substitute(
        fam.expr,
        {"w": mul(r_var, Var("v")), "eta": mul(r_var, Var("xi")), "p": Const(0.0)},
    )
    correction = sub(t.sigma0.expr, carried)
    C = _op_interior_on_edge(g, correction, v)
    phi = np.broadcast_to(
        collar_cutoff(g, r1)[None, :, None], (g.circle.n_x, g.cone.n_t, g.q)
    )
    if A.interior:
        C = _restrict_t_axis(C, g)
        phi = phi[:, 1:, :]
    phi = phi.reshape(-1)
    M = A.matrix + (phi[:, None] * C) * phi[None, :]
    return DiscretizedOperator(g, v, M, A.interior)


# ---------------------------------------------------------------------------
# Large-parameter invertibility


@dataclass(frozen=True)
class LargeParameterReport:
    v_values: tuple[float, ...]
    s_min: tuple[float, ...]
    sphere_min: Optional[float]
    elliptic_with_parameter: Optional[bool]
    lower_bound: float
    jitter: float
    passed: bool


def large_parameter_scan(
    g: Geometry,
    expr: ExprLike,
    v_values: Sequence[float] = (8.0, 16.0, 32.0, 64.0),
    lower_bound: float = 1e-3,
    jitter: float = 0.10,
    n_sphere: int = 32,
    lam: float = 1e6,
    floor: float = 1e-6,
) -> LargeParameterReport:
    """Invertibility for large |v|: the smallest singular value along
    the parameter ladder must sit above lower_bound and be
    non-decreasing within the jitter.

    When the symbol is an interior one (x, xi, v), joint parameter
    ellipticity is verified first on the (xi, v)-sphere and recorded;
    families in other variables skip that precheck. Never raises: the
    verdict is the report.
    """
    expr = _as_node(expr)
    sphere_min: Optional[float] = None
    ewp: Optional[bool] = None
    if variables_of(expr) <= {"x", "xi", "v"}:
        xs = 2.0 * np.pi * np.arange(16) / 16
        thetas = 2.0 * np.pi * np.arange(n_sphere) / n_sphere
        worst = math.inf
        for x0 in xs:
            for th in thetas:
                val = evaluate(
                    expr, {"x": x0, "xi": lam * np.cos(th), "v": lam * np.sin(th)}
                )
                m = np.asarray(val, dtype=complex)
                m = m.reshape(1, 1) if m.ndim == 0 else m.reshape(m.shape[-1], m.shape[-1])
                worst = min(worst, float(np.linalg.svd(m, compute_uv=False)[-1]))
        sphere_min = worst
        ewp = worst >= floor
    s_min = []
    for u in v_values:
        A = quantize(g, expr, v=float(u))
        s_min.append(float(A.singular_values()[-1]))
    ok_low = all(s >= lower_bound for s in s_min)
    ok_mono = all(s_min[i + 1] >= (1.0 - jitter) * s_min[i] for i in range(len(s_min) - 1))
    return LargeParameterReport(
        v_values=tuple(float(u) for u in v_values),
        s_min=tuple(s_min),
        sphere_min=sphere_min,
        elliptic_with_parameter=ewp,
        lower_bound=lower_bound,
        jitter=jitter,
        passed=ok_low and ok_mono and (ewp is not False),
    )
