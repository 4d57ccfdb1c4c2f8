"""Model geometries and the grid-level unitaries acting on them.

Three geometries: a periodic circle, a model cone over a point or circle
base carried on a log-radial cylinder window [-T, T], and an edge (a
circle of cone fibers). Grid functions on a cone are stored as natural
samples u(r_j); the flat representation rescales by r^((n+1)/2) so that
the weighted norm on the cone becomes the uniform-weight norm on the
cylinder. All operator matrices in this package act on the flat
representation, which is what makes plain SVDs meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

DEFAULT_T = 6.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    """Zero-dimensional cone base."""

    @property
    def dim(self) -> int:
        return 0

    @property
    def n_nodes(self) -> int:
        return 1


@dataclass(frozen=True)
class Circle:
    """Periodic grid on [0, 2pi) with n_x nodes and fiber dimension q."""

    n_x: int
    q: int = 1

    def __post_init__(self):
        _check_grid_size("circle", self.n_x)
        _check_q(self.q)

    @property
    def dim(self) -> int:
        return 1

    @property
    def h_x(self) -> float:
        return 2.0 * np.pi / self.n_x

    @cached_property
    def x(self) -> np.ndarray:
        return self.h_x * np.arange(self.n_x)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer Fourier modes in FFT order: 0..N/2-1, -N/2..-1."""
        return np.fft.fftfreq(self.n_x, d=1.0 / self.n_x).astype(int)

    @property
    def n_nodes(self) -> int:
        return self.n_x

    @property
    def axes_shape(self) -> tuple[int, ...]:
        return (self.n_x,)

    @property
    def node_weight(self) -> float:
        return self.h_x

    @cached_property
    def w_diag(self) -> np.ndarray:
        return np.ones(self.n_x)

    @property
    def dim_total(self) -> int:
        return self.n_x * self.q


@dataclass(frozen=True)
class Cone:
    """Model cone over a point or circle base.

    Carried on the cylinder grid t_j = -T + j h_t, h_t = 2T/n_t, with
    r = exp(-t); r -> 0 is the t -> +T end. boundary selects how
    operators treat the window: 'periodic' wraps, 'interval' restricts
    assembled matrices to the interior nodes (all but t_0 = -T).
    """

    base: Union[Point, Circle]
    T: float = DEFAULT_T
    n_t: int = 64
    boundary: str = "periodic"
    q: int = 1

    def __post_init__(self):
        if not isinstance(self.base, (Point, Circle)):
            raise GeometryError(f"cone base must be Point or Circle, got {type(self.base).__name__}")
        if self.T <= 0:
            raise GeometryError(f"cone window T must be positive, got {self.T}")
        _check_grid_size("cone", self.n_t)
        if self.boundary not in ("periodic", "interval"):
            raise GeometryError(f"boundary must be 'periodic' or 'interval', got {self.boundary!r}")
        _check_q(self.q)
        if isinstance(self.base, Circle) and self.base.q != 1:
            raise GeometryError("cone base circle carries no fiber; set q on the cone")

    @property
    def n(self) -> int:
        """Base dimension."""
        return self.base.dim

    @property
    def weight_exponent(self) -> float:
        return 0.5 * (self.n + 1)

    @property
    def h_t(self) -> float:
        return 2.0 * self.T / self.n_t

    @cached_property
    def t(self) -> np.ndarray:
        return -self.T + self.h_t * np.arange(self.n_t)

    @cached_property
    def r(self) -> np.ndarray:
        return np.exp(-self.t)

    @cached_property
    def p(self) -> np.ndarray:
        """Mellin-line covariable grid p_k = pi k / T, FFT mode order."""
        return (np.pi / self.T) * np.fft.fftfreq(self.n_t, d=1.0 / self.n_t)

    @cached_property
    def omega(self) -> np.ndarray:
        if not isinstance(self.base, Circle):
            raise GeometryError("point-base cone has no omega axis")
        return self.base.x

    @property
    def axes_shape(self) -> tuple[int, ...]:
        if isinstance(self.base, Circle):
            return (self.n_t, self.base.n_x)
        return (self.n_t,)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.axes_shape))

    @property
    def node_weight(self) -> float:
        w = self.h_t
        if isinstance(self.base, Circle):
            w *= self.base.h_x
        return w

    @cached_property
    def w_diag(self) -> np.ndarray:
        """Flat-representation scaling r^((n+1)/2) per grid point."""
        d = self.r**self.weight_exponent
        if isinstance(self.base, Circle):
            d = np.broadcast_to(d[:, None], self.axes_shape).copy()
        return d

    @cached_property
    def interior_idx(self) -> np.ndarray:
        """Interval-mode interior t-node indices (the seam node t_0 = -T dropped)."""
        return np.arange(1, self.n_t)

    @property
    def dim_total(self) -> int:
        return self.n_nodes * self.q


@dataclass(frozen=True)
class Edge:
    """Circle of cone fibers; x along the edge, (t[, omega]) in the fiber."""

    circle: Circle
    cone: Cone

    def __post_init__(self):
        if self.circle.q != self.cone.q:
            raise GeometryError(f"edge fiber dimensions disagree: circle q={self.circle.q}, cone q={self.cone.q}")

    @property
    def q(self) -> int:
        return self.cone.q

    @property
    def n(self) -> int:
        return self.cone.n

    @property
    def axes_shape(self) -> tuple[int, ...]:
        return self.circle.axes_shape + self.cone.axes_shape

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.axes_shape))

    @property
    def node_weight(self) -> float:
        return self.circle.node_weight * self.cone.node_weight

    @cached_property
    def w_diag(self) -> np.ndarray:
        return np.broadcast_to(self.cone.w_diag, self.axes_shape).copy()

    @property
    def dim_total(self) -> int:
        return self.n_nodes * self.q


Geometry = Union[Circle, Cone, Edge]


def _check_grid_size(kind: str, n: int) -> None:
    if n % 2 != 0:
        raise GeometryError(f"{kind} grid size must be even, got {n}")
    if n < 8:
        raise GeometryError(f"{kind} grid size must be at least 8, got {n}")


def _check_q(q: int) -> None:
    if q < 1:
        raise GeometryError(f"fiber dimension q must be >= 1, got {q}")


def build_geometry(desc: dict) -> Geometry:
    """Build a geometry from a plain descriptor dict (the CLI config and
    container format share this schema).

    kinds: {"kind": "circle", "n_x": 64, "q": 1}
           {"kind": "cone", "base": {"kind": "point"} | {"kind": "circle", "n_x": 16},
            "T": 6.0, "n_t": 64, "boundary": "periodic", "q": 1}
           {"kind": "edge", "n_x": 16, "cone": {...cone fields...}}
    """
    if not isinstance(desc, dict) or "kind" not in desc:
        raise GeometryError("geometry descriptor must be a dict with a 'kind'")
    kind = desc["kind"]
    if kind == "circle":
        return Circle(n_x=int(desc["n_x"]), q=int(desc.get("q", 1)))
    if kind == "point":
        return Point()
    if kind == "cone":
        base_desc = desc.get("base", {"kind": "point"})
        base = build_geometry(base_desc)
        if isinstance(base, Cone):
            raise GeometryError("cone base must be a point or circle")
        return Cone(
            base=base,
            T=float(desc.get("T", DEFAULT_T)),
            n_t=int(desc.get("n_t", 64)),
            boundary=desc.get("boundary", "periodic"),
            q=int(desc.get("q", 1)),
        )
    if kind == "edge":
        cone = build_geometry({**desc["cone"], "kind": "cone"})
        circle = Circle(n_x=int(desc["n_x"]), q=cone.q)
        return Edge(circle=circle, cone=cone)
    raise GeometryError(f"unknown geometry kind {kind!r}")


def describe_geometry(g: Geometry) -> dict:
    """Inverse of build_geometry, up to defaulted fields."""
    if isinstance(g, Circle):
        return {"kind": "circle", "n_x": g.n_x, "q": g.q}
    if isinstance(g, Cone):
        base = {"kind": "point"} if isinstance(g.base, Point) else {"kind": "circle", "n_x": g.base.n_x}
        return {"kind": "cone", "base": base, "T": g.T, "n_t": g.n_t, "boundary": g.boundary, "q": g.q}
    if isinstance(g, Edge):
        c = describe_geometry(g.cone)
        c.pop("kind")
        return {"kind": "edge", "n_x": g.circle.n_x, "cone": c}
    raise GeometryError(f"not a geometry: {g!r}")


# ---------------------------------------------------------------------------
# Grid functions


@dataclass
class GridFunction:
    """Natural samples on a geometry: values shaped axes_shape + (q,)."""

    geometry: Geometry
    values: np.ndarray

    def __post_init__(self):
        want = self.geometry.axes_shape + (self.geometry.q,)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != want:
            raise GeometryError(f"grid function shape {self.values.shape} != expected {want}")

    @classmethod
    def zeros(cls, g: Geometry) -> "GridFunction":
        return cls(g, np.zeros(g.axes_shape + (g.q,), dtype=complex))

    @classmethod
    def from_flat(cls, g: Geometry, flat: np.ndarray) -> "GridFunction":
        flat = np.asarray(flat, dtype=complex).reshape(g.axes_shape + (g.q,))
        w = _full_w_diag(g)
        return cls(g, flat / w[..., None])

    def flat(self) -> np.ndarray:
        """Flat representation vector: r^((n+1)/2)-scaled samples, C-order."""
        w = _full_w_diag(self.geometry)
        return (self.values * w[..., None]).reshape(-1)

    def norm(self) -> float:
        return float(np.sqrt(self.geometry.node_weight) * np.linalg.norm(self.flat()))

    def inner(self, other: "GridFunction") -> complex:
        return complex(self.geometry.node_weight * np.vdot(self.flat(), other.flat()))


def _full_w_diag(g: Geometry) -> np.ndarray:
    if isinstance(g, Circle):
        return np.ones(g.axes_shape)
    return g.w_diag


# ---------------------------------------------------------------------------
# Discrete Fourier transforms (normalized so that dft(1) has mode-0
# coefficient 1) and the Mellin-line variant on the t axis.


def circle_dft(values: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    """u_hat(k) = (1/N) sum_j u_j exp(-i k x_j), modes in FFT order."""
    return np.fft.fft(values, axis=axis) / n


def circle_idft(coeffs: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    return np.fft.ifft(coeffs, axis=axis) * n


def cone_tdft(values: np.ndarray, cone: Cone, axis: int = 0) -> np.ndarray:
    """f_hat(p_k) = (1/N) sum_j f_j exp(-i p_k t_j) on the window grid.

    p_k t_j = -pi k + 2 pi k j / N, so this is an FFT with an alternating
    phase twist.
    """
    k = np.fft.fftfreq(cone.n_t, d=1.0 / cone.n_t)
    phase = np.exp(1j * np.pi * k)
    shape = [1] * values.ndim
    shape[axis] = cone.n_t
    return np.fft.fft(values, axis=axis) / cone.n_t * phase.reshape(shape)


def cone_tidft(coeffs: np.ndarray, cone: Cone, axis: int = 0) -> np.ndarray:
    k = np.fft.fftfreq(cone.n_t, d=1.0 / cone.n_t)
    phase = np.exp(-1j * np.pi * k)
    shape = [1] * coeffs.ndim
    shape[axis] = cone.n_t
    return np.fft.ifft(coeffs * phase.reshape(shape), axis=axis) * cone.n_t


# ---------------------------------------------------------------------------
# Translations and dilations


def translation_matrix(n: int, steps: int) -> np.ndarray:
    """Circular shift by `steps` grid nodes: (T u)_j = u_{j-steps}."""
    return np.roll(np.eye(n), steps, axis=0)


@dataclass(frozen=True)
class DilationAction:
    """Grid-admissible dilation kappa_lambda, lambda = exp(k h_t).

    Acts on the cone axis as a circular t-shift by k nodes; in the
    natural representation the samples additionally pick up the factor
    lambda^((n+1)/2). Exactly unitary for the weighted inner product,
    exact group law.
    """

    geometry: Union[Cone, Edge]
    k: int

    def __post_init__(self):
        if not isinstance(self.geometry, (Cone, Edge)):
            raise GeometryError("dilations act on cone or edge geometries")

    @property
    def cone(self) -> Cone:
        return self.geometry if isinstance(self.geometry, Cone) else self.geometry.cone

    @property
    def lam(self) -> float:
        return float(np.exp(self.k * self.cone.h_t))

    @property
    def t_axis(self) -> int:
        return 0 if isinstance(self.geometry, Cone) else 1

    def apply(self, u: GridFunction) -> GridFunction:
        """Conjugated shift W^{-1} S_k W on natural samples.

        Off the periodic seam this is exactly lambda^((n+1)/2) u(lambda r);
        at the seam the periodic continuation takes over, which is what
        keeps the action exactly unitary and the group law exact.
        """
        if u.geometry != self.geometry:
            raise GeometryError("dilation applied to a function on a different geometry")
        w = _full_w_diag(self.geometry)[..., None]
        rolled = np.roll(u.values * w, self.k, axis=self.t_axis)
        return GridFunction(self.geometry, rolled / w)

    def flat_matrix(self) -> np.ndarray:
        """Matrix of kappa on flat-representation vectors (pure shift)."""
        g = self.geometry
        shift = translation_matrix(self.cone.n_t, self.k)
        blocks = [shift]
        if isinstance(self.cone.base, Circle):
            blocks.append(np.eye(self.cone.base.n_x))
        if isinstance(g, Edge):
            blocks = [np.eye(g.circle.n_x)] + blocks
        if g.q > 1:
            blocks.append(np.eye(g.q))
        out = blocks[0]
        for b in blocks[1:]:
            out = np.kron(out, b)
        return out

    def check_relations(self, other_k: int = 3) -> dict[str, float]:
        """Residuals of the dilation-group relations on this grid.

        group_law and unitarity are exact permutation identities; the
        Mellin generator commutes exactly (both are circulant in t). The
        radial homogeneity relation kappa r kappa^{-1} = lambda^{-1} r
        holds off the k wrapped seam nodes only, and is reported on that
        domain.
        """
        ka = self.flat_matrix()
        kb = DilationAction(self.geometry, other_k).flat_matrix()
        kab = DilationAction(self.geometry, self.k + other_k).flat_matrix()
        group = float(np.max(np.abs(ka @ kb - kab)))
        unit = float(np.max(np.abs(ka @ ka.conj().T - np.eye(ka.shape[0]))))
        c = self.cone
        # Mellin generator as a t-circulant in flat representation
        gen = np.fft.ifft(c.p[:, None] * np.fft.fft(np.eye(c.n_t), axis=0), axis=0)
        shift = translation_matrix(c.n_t, self.k)
        mellin = float(np.max(np.abs(shift @ gen - gen @ shift)))
        # radial homogeneity off the wrapped nodes
        r_op = np.diag(c.r)
        conj_r = shift @ r_op @ shift.conj().T
        js = np.arange(c.n_t)
        off_seam = (js - self.k >= 0) & (js - self.k < c.n_t)
        resid = np.abs(conj_r - self.lam * r_op)
        radial = float(np.max(resid[np.ix_(off_seam, off_seam)])) if off_seam.any() else 0.0
        rel = radial / (self.lam * float(np.max(c.r)))
        return {
            "group_law": group,
            "unitarity": unit,
            "mellin_commutation": mellin,
            "radial_homogeneity_offseam": rel,
        }


# ---------------------------------------------------------------------------
# Cutoff families


def plateau_profile(d: np.ndarray, a: float, b: float) -> np.ndarray:
    """1 for d <= a, 0 for d >= b, exp(1 - 1/(1-u^2)) in between (u = (d-a)/(b-a))."""
    if not b > a:
        raise GeometryError(f"profile needs b > a, got a={a}, b={b}")
    d = np.asarray(d, dtype=float)
    u = (d - a) / (b - a)
    out = np.zeros_like(d)
    out[u <= 0.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        out[mid] = np.exp(1.0 - 1.0 / (1.0 - u[mid] ** 2))
    return out


@dataclass
class CutoffFamily:
    """Nested dyadic cutoffs on an x or t axis: phi_i phi_{i+1} = phi_{i+1} exactly."""

    geometry: Geometry
    axis_name: str  # 'x' or 't'
    center: float
    scales: tuple[float, ...]
    values: np.ndarray  # (len(scales), axis length)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[i]

    def __len__(self) -> int:
        return len(self.scales)


def _axis_coords(g: Geometry, axis_name: str) -> tuple[np.ndarray, float, bool]:
    """Returns (coords, grid step, periodic flag) for the named axis."""
    if axis_name == "x":
        circ = g if isinstance(g, Circle) else g.circle if isinstance(g, Edge) else None
        if circ is None:
            raise GeometryError("geometry has no x axis")
        return circ.x, circ.h_x, True
    if axis_name == "t":
        cone = g if isinstance(g, Cone) else g.cone if isinstance(g, Edge) else None
        if cone is None:
            raise GeometryError("geometry has no t axis")
        return cone.t, cone.h_t, False
    raise GeometryError(f"unknown axis {axis_name!r}")


def cutoff_family(
    g: Geometry,
    center: float,
    n_scales: int,
    base_scale: float | None = None,
    axis_name: str | None = None,
) -> CutoffFamily:
    """Dyadic family phi_i supported in |d| <= s_i, s_i = base_scale / 2^i,
    plateau exactly 1 on |d| <= s_i/2. Smallest scale must be >= 3 grid steps.
    """
    if axis_name is None:
        axis_name = "x" if isinstance(g, (Circle, Edge)) else "t"
    coords, h, periodic = _axis_coords(g, axis_name)
    if base_scale is None:
        span = 2.0 * np.pi if periodic else coords[-1] - coords[0]
        base_scale = span / 4.0
    scales = tuple(base_scale / 2.0**i for i in range(n_scales))
    if scales[-1] < 3.0 * h:
        raise GeometryError(f"smallest cutoff scale {scales[-1]:.3g} is below 3 grid steps ({3*h:.3g})")
    d = np.abs(coords - center)
    if periodic:
        d = np.minimum(d, 2.0 * np.pi - d)
    rows = [plateau_profile(d, s / 2.0, s) for s in scales]
    return CutoffFamily(g, axis_name, center, scales, np.array(rows))


def collar_cutoff(g: Union[Cone, Edge], r1: float) -> np.ndarray:
    """phi(r) on the t axis: 1 for r <= r1/2 (near the tip), 0 for r >= r1."""
    cone = g if isinstance(g, Cone) else g.cone
    if r1 <= 0:
        raise GeometryError("collar radius must be positive")
    d = np.log(cone.r)  # = -t, increases toward the far end
    return plateau_profile(d, np.log(r1 / 2.0), np.log(r1))
