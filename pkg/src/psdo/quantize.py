"""Quantization of symbols to dense matrices.

Kohn-Nirenberg convention throughout: the symbol is evaluated at the
output point, (A u)(x_j) = sum_k exp(i k x_j) a(x_j, k, v) u_hat(k).
On cone windows the same scheme runs in the cylinder coordinate t with
the Mellin covariable p_k = pi k / T; matrices are always expressed in
the flat (weighted) representation, so spectral norms and SVDs need no
further weighting. Interval-mode cones assemble periodically and then
restrict to the interior nodes.

Variable bindings used by every quantizer: x and xi on the circle axis,
r = exp(-t), w = v*r, eta = xi*r on cone axes, p the Mellin covariable,
v the edge parameter, t the base Fourier mode on circle-base cones
(0 on point-base ones).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from psdo.geometry import (
    Circle,
    Cone,
    Edge,
    Geometry,
    GeometryError,
    GridFunction,
    Point,
)
from psdo.symexpr import Node, evaluate, shape_of, variables_of


class QuantizeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Operator container


@dataclass
class DiscretizedOperator:
    """Dense matrix in the flat representation of a geometry.

    v is the edge-parameter value the operator was assembled at (None
    for parameter-independent constructions). For interval-mode cones
    the matrix is the interior-node restriction; `interior` marks this.
    """

    geometry: Geometry
    v: Optional[float]
    matrix: np.ndarray
    interior: bool = False
    _norm: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        n = self.matrix.shape[0]
        if self.matrix.ndim != 2 or self.matrix.shape[1] != n:
            raise QuantizeError(f"operator matrix must be square, got {self.matrix.shape}")
        want = interior_dim(self.geometry) if self.interior else self.geometry.dim_total
        if n != want:
            raise QuantizeError(f"matrix dimension {n} != geometry dimension {want}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        if self._norm is None:
            self._norm = float(np.linalg.norm(self.matrix, 2))
        return self._norm

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def adjoint(self) -> "DiscretizedOperator":
        return DiscretizedOperator(self.geometry, self.v, self.matrix.conj().T, self.interior)

    def apply(self, u: GridFunction) -> GridFunction:
        if self.interior:
            raise QuantizeError("interior-restricted operators act on flat interior vectors only")
        return GridFunction.from_flat(self.geometry, self.matrix @ u.flat())

    def compose(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
        self._check_compatible(other)
        return DiscretizedOperator(self.geometry, self.v, self.matrix @ other.matrix, self.interior)

    def __matmul__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
        return self.compose(other)

    def __add__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
        self._check_compatible(other)
        return DiscretizedOperator(self.geometry, self.v, self.matrix + other.matrix, self.interior)

    def __sub__(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
        self._check_compatible(other)
        return DiscretizedOperator(self.geometry, self.v, self.matrix - other.matrix, self.interior)

    def scaled(self, c: complex) -> "DiscretizedOperator":
        return DiscretizedOperator(self.geometry, self.v, c * self.matrix, self.interior)

    def _check_compatible(self, other: "DiscretizedOperator") -> None:
        if self.geometry != other.geometry or self.interior != other.interior:
            raise QuantizeError("operators live on different geometries")


def interior_dim(g: Geometry) -> int:
    """Flat dimension after interval-mode interior restriction."""
    if isinstance(g, Cone):
        per_t = g.dim_total // g.n_t
        return (g.n_t - 1) * per_t
    if isinstance(g, Edge):
        per_t = g.dim_total // g.cone.n_t
        return (g.cone.n_t - 1) * per_t
    return g.dim_total


def identity_operator(g: Geometry, v: Optional[float] = None, interior: bool = False) -> DiscretizedOperator:
    n = interior_dim(g) if interior else g.dim_total
    return DiscretizedOperator(g, v, np.eye(n, dtype=complex), interior)


def _restrict_t_axis(matrix: np.ndarray, g: Union[Cone, Edge]) -> np.ndarray:
    """Principal submatrix on interior t nodes (drops the seam node t_0)."""
    cone = g if isinstance(g, Cone) else g.cone
    n_t = cone.n_t
    pre = 1
    if isinstance(g, Edge):
        pre = g.circle.n_x
    post = g.dim_total // (pre * n_t)
    n = g.dim_total
    keep = np.arange(n).reshape(pre, n_t, post)[:, 1:, :].reshape(-1)
    return matrix[np.ix_(keep, keep)]


# ---------------------------------------------------------------------------
# Circle quantization


def _dft_matrix(n: int) -> np.ndarray:
    """F[k, j] = exp(-i k x_j)/n, modes in FFT order."""
    return np.fft.fft(np.eye(n), axis=0) / n


def op_circle(g: Circle, expr: Node, v: Optional[float] = None) -> DiscretizedOperator:
    """Kohn-Nirenberg quantization of a(x, xi, v) on the circle."""
    q = shape_of(expr)
    if q != g.q:
        raise QuantizeError(f"symbol shape {q} != geometry fiber {g.q}")
    n = g.n_x
    k = g.modes.astype(float)
    bindings = {"x": g.x[:, None], "xi": k[None, :]}
    if v is not None:
        bindings["v"] = v
    used = variables_of(expr)
    if "v" in used and v is None:
        raise QuantizeError("symbol depends on v but no parameter value was given")
    S = evaluate(expr, bindings)  # (n, n, q, q) after broadcast
    S = np.broadcast_to(S, (n, n, q, q))
    E = np.exp(1j * g.x[:, None] * k[None, :])
    F = _dft_matrix(n)
    A = np.einsum("jk,jkab,kl->jalb", E, S, F, optimize=True).reshape(n * q, n * q)
    return DiscretizedOperator(g, v, A)


# ---------------------------------------------------------------------------
# Mellin quantization on a cone window


def _cone_bindings(
    cone: Cone,
    v: float,
    xi: float,
    x_value: float,
    freeze_r: bool,
    t_shape: tuple[int, ...],
    p_shape: tuple[int, ...],
    mu: Optional[np.ndarray] = None,
) -> dict:
    r = cone.r.reshape(t_shape)
    b = {
        "r": np.zeros_like(r) if freeze_r else r,
        "w": v * r,
        "eta": xi * r,
        "p": cone.p.reshape(p_shape),
        "v": v,
        "x": x_value,
        "t": 0.0 if mu is None else mu,
    }
    return b


def _kn_t_block(cone: Cone, S: np.ndarray) -> np.ndarray:
    """KN assembly along the t axis. S has axes (t, p, q, q); returns
    the (n_t*q) x (n_t*q) matrix."""
    n_t, q = cone.n_t, S.shape[-1]
    E = np.exp(1j * cone.t[:, None] * cone.p[None, :])
    F = np.exp(-1j * cone.p[:, None] * cone.t[None, :]) / n_t
    return np.einsum("jk,jkab,kl->jalb", E, S, F, optimize=True).reshape(n_t * q, n_t * q)


def op_mellin(
    g: Cone,
    expr: Node,
    v: float = 0.0,
    xi: float = 0.0,
    x_value: float = 0.0,
    freeze_r: bool = False,
) -> DiscretizedOperator:
    """Mellin quantization of a cone family P(x, r, w, eta, p) on the window.

    Substitutions: r -> exp(-t) on the grid (or 0 with freeze_r, keeping
    w = v r and eta = xi r live), p -> the Mellin covariable. On a
    circle-base cone the family acts diagonally in base Fourier modes,
    with the mode index bound to the variable t; the result is
    conjugated back to nodal representation by the base DFT.

    Interval-mode cones assemble periodically and restrict to interior
    nodes; the support policy is enforced softly by checking that the
    family is nearly constant in r at the two window ends.
    """
    q = shape_of(expr)
    if q != g.q:
        raise QuantizeError(f"symbol shape {q} != geometry fiber {g.q}")
    n_t = g.n_t
    if isinstance(g.base, Point):
        b = _cone_bindings(g, v, xi, x_value, freeze_r, (n_t, 1), (1, n_t))
        S = np.broadcast_to(evaluate(expr, b), (n_t, n_t, q, q))
        A = _kn_t_block(g, S)
    else:
        n_w = g.base.n_x
        mu = g.base.modes.astype(float).reshape(1, 1, n_w)
        b = _cone_bindings(g, v, xi, x_value, freeze_r, (n_t, 1, 1), (1, n_t, 1), mu=mu)
        S = np.broadcast_to(evaluate(expr, b), (n_t, n_t, n_w, q, q))
        E = np.exp(1j * g.t[:, None] * g.p[None, :])
        F = np.exp(-1j * g.p[:, None] * g.t[None, :]) / n_t
        # per-mode t blocks
        blocks = np.einsum("jk,jkmab,kl->mjalb", E, S, F, optimize=True)
        iFw = np.exp(1j * g.base.modes[None, :].astype(float) * g.base.x[:, None])  # (l, mu)
        Fw = np.exp(-1j * g.base.modes[:, None].astype(float) * g.base.x[None, :]) / n_w  # (mu, l')
        A = np.einsum("lm,mjase,mn->jlasne", iFw, blocks, Fw, optimize=True)
        d = n_t * n_w * q
        A = A.reshape(d, d)
    if g.boundary == "interval":
        _check_support_policy(g, expr, v, xi, x_value, freeze_r)
        A = _restrict_t_axis(A, g)
        return DiscretizedOperator(g, v, A, interior=True)
    return DiscretizedOperator(g, v, A)


def _check_support_policy(g: Cone, expr: Node, v: float, xi: float, x_value: float, freeze_r: bool) -> None:
    """Interval mode requires near-constancy in r at both window ends.

    Compares the family values at the two outermost r nodes of each end;
    variation beyond 1e-2 (relative to the family sup) means the support
    touches the boundary without being constant there.
    """
    if "r" not in variables_of(expr) and "w" not in variables_of(expr) and "eta" not in variables_of(expr):
        return
    n_t = g.n_t
    idx_pairs = [(0, 1), (n_t - 1, n_t - 2)]
    mu = None
    if isinstance(g.base, Circle):
        mu = g.base.modes.astype(float).reshape(1, -1)
    vals = []
    for i, _ in idx_pairs:
        r_i = g.r[i]
        b = {
            "r": 0.0 if freeze_r else r_i,
            "w": v * r_i,
            "eta": xi * r_i,
            "p": g.p.reshape(-1, 1) if mu is None else g.p.reshape(-1, 1, 1),
            "v": v,
            "x": x_value,
            "t": 0.0 if mu is None else mu,
        }
        vals.append(evaluate(expr, b))
    sup = max(float(np.max(np.abs(v_))) for v_ in vals) or 1.0
    for (i, j), ref in zip(idx_pairs, vals):
        r_j = g.r[j]
        b = {
            "r": 0.0 if freeze_r else r_j,
            "w": v * r_j,
            "eta": xi * r_j,
            "p": g.p.reshape(-1, 1) if mu is None else g.p.reshape(-1, 1, 1),
            "v": v,
            "x": x_value,
            "t": 0.0 if mu is None else mu,
        }
        other = evaluate(expr, b)
        if float(np.max(np.abs(other - ref))) > 1e-2 * sup:
            raise QuantizeError(
                "interval mode: family is not constant in r near the window boundary (support policy)"
            )


# ---------------------------------------------------------------------------
# Edge quantization


def op_edge(g: Edge, expr: Node, v: float = 0.0, freeze_r: bool = False) -> DiscretizedOperator:
    """Quantize an edge family: one cone fiber per edge Fourier mode
    xi_k (with eta = r xi_k, w = r v), mixed along x by KN quantization.

    x-independent families produce block-circulant operators that are
    exactly block diagonal in edge modes.
    """
    q = shape_of(expr)
    if q != g.q:
        raise QuantizeError(f"symbol shape {q} != geometry fiber {g.q}")
    cone, circ = g.cone, g.circle
    n_x = circ.n_x
    xi = circ.modes.astype(float)
    fiber_dim = cone.dim_total
    used = variables_of(expr)
    if "x" not in used:
        # fiber per mode, block circulant
        blocks = np.empty((n_x, fiber_dim, fiber_dim), dtype=complex)
        for idx, xi_k in enumerate(xi):
            blocks[idx] = _periodic_mellin_matrix(cone, expr, v, xi_k, 0.0, freeze_r)
        E = np.exp(1j * circ.x[:, None] * xi[None, :])
        F = _dft_matrix(n_x)
        A = np.einsum("jk,kab,kl->jalb", E, blocks, F, optimize=True)
        A = A.reshape(n_x * fiber_dim, n_x * fiber_dim)
    else:
        # x-dependent: fiber per (output x, mode) pair
        blocks = np.empty((n_x, n_x, fiber_dim, fiber_dim), dtype=complex)
        for j in range(n_x):
            for idx, xi_k in enumerate(xi):
                blocks[j, idx] = _periodic_mellin_matrix(cone, expr, v, xi_k, circ.x[j], freeze_r)
        E = np.exp(1j * circ.x[:, None] * xi[None, :])
        F = _dft_matrix(n_x)
        A = np.einsum("jk,jkab,kl->jalb", E, blocks, F, optimize=True)
        A = A.reshape(n_x * fiber_dim, n_x * fiber_dim)
    if cone.boundary == "interval":
        A_full = A
        A = _restrict_t_axis(A_full, g)
        return DiscretizedOperator(g, v, A, interior=True)
    return DiscretizedOperator(g, v, A)


def _periodic_mellin_matrix(
    cone: Cone, expr: Node, v: float, xi: float, x_value: float, freeze_r: bool
) -> np.ndarray:
    """Periodic-assembly fiber matrix regardless of the cone's boundary mode."""
    if cone.boundary == "periodic":
        return op_mellin(cone, expr, v=v, xi=xi, x_value=x_value, freeze_r=freeze_r).matrix
    periodic = Cone(base=cone.base, T=cone.T, n_t=cone.n_t, boundary="periodic", q=cone.q)
    return op_mellin(periodic, expr, v=v, xi=xi, x_value=x_value, freeze_r=freeze_r).matrix


def quantize(g: Geometry, expr: Node, v: Optional[float] = None, freeze_r: bool = False) -> DiscretizedOperator:
    """Geometry-dispatching quantizer."""
    if isinstance(g, Circle):
        return op_circle(g, expr, v)
    if isinstance(g, Cone):
        return op_mellin(g, expr, v=0.0 if v is None else v, freeze_r=freeze_r)
    if isinstance(g, Edge):
        return op_edge(g, expr, v=0.0 if v is None else v, freeze_r=freeze_r)
    raise GeometryError(f"cannot quantize on {type(g).__name__}")


# ---------------------------------------------------------------------------
# Parameter-dependent families


def dyadic_ladder(k_max: int = 6, include_zero: bool = True, signed: bool = True) -> tuple[float, ...]:
    vals = [2.0**k for k in range(k_max + 1)]
    if signed:
        vals = sorted(set([-u for u in vals] + vals))
    if include_zero:
        vals = sorted(set(vals + [0.0]))
    return tuple(vals)


@dataclass
class OperatorFamily:
    """A symbol quantized along a ladder of edge-parameter values."""

    geometry: Geometry
    v_values: tuple[float, ...]
    operators: tuple[DiscretizedOperator, ...]

    @classmethod
    def from_expr(
        cls,
        g: Geometry,
        expr: Node,
        v_values: Optional[Sequence[float]] = None,
        freeze_r: bool = False,
    ) -> "OperatorFamily":
        if v_values is None:
            v_values = dyadic_ladder()
        ops = tuple(quantize(g, expr, v=v, freeze_r=freeze_r) for v in v_values)
        return cls(g, tuple(float(v) for v in v_values), ops)

    def family_norm(self) -> float:
        return max(op.norm() for op in self.operators)

    def __len__(self) -> int:
        return len(self.operators)

    def __getitem__(self, i: int) -> DiscretizedOperator:
        return self.operators[i]


@dataclass
class NegligibleVerdict:
    """Result of testing sup_v ||D(v)|| (1+|v|)^N <= tau on a sample ladder."""

    order: int
    tau: float
    v_values: tuple[float, ...]
    norms: tuple[float, ...]
    weighted: tuple[float, ...]
    sup_weighted: float
    accepted: bool


def negligible_test(
    build: Union[OperatorFamily, Callable[[float], DiscretizedOperator]],
    order: int = 4,
    tau: float = 50.0,
    v_values: Optional[Sequence[float]] = None,
) -> NegligibleVerdict:
    """Decide whether a parameter family decays like (1+|v|)^-order.

    `build` is either an OperatorFamily or a callable v -> operator.
    At least three parameter samples are required.
    """
    if isinstance(build, OperatorFamily):
        vs = build.v_values
        norms = tuple(op.norm() for op in build.operators)
    else:
        vs = tuple(float(u) for u in (v_values if v_values is not None else dyadic_ladder()))
        norms = tuple(build(u).norm() for u in vs)
    if len(vs) < 3:
        raise QuantizeError("negligibility needs at least 3 parameter samples")
    weighted = tuple(nm * (1.0 + abs(u)) ** order for u, nm in zip(vs, norms))
    sup_w = max(weighted)
    return NegligibleVerdict(
        order=order,
        tau=tau,
        v_values=vs,
        norms=norms,
        weighted=weighted,
        sup_weighted=sup_w,
        accepted=bool(sup_w <= tau),
    )
