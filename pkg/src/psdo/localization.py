"""Desk-scale verification of the abstract localization principle:
local norms along shrinking cutoffs, continuity of center-indexed
operator families, gluing through partitions of unity, the partition
norm bound, and the cross-tabulation of local invertibility proxies
against global finite-section verdicts.

Restricted norms follow the column convention: ||B||_Q is the norm of B
applied to vectors supported in the node set Q. Continuity auto-fit
keeps the fitted neighborhoods a cover of the axis (a partition of
unity subordinate to them must exist), so it searches the smallest
dyadic radius at or above the cover floor; families that need finer
center sets at small eps fail honestly instead of passing vacuously.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from psdo.calculus import _axis_layout
from psdo.fredholm import FredholmReport, finite_section
from psdo.geometry import (
    Circle,
    Cone,
    CutoffFamily,
    Edge,
    Geometry,
    cutoff_family,
    plateau_profile,
)
from psdo.quantize import DiscretizedOperator, op_mellin
from psdo.symbols import EdgeSymbol, SymbolTuple
from psdo.symexpr import Const, Node, substitute

__all__ = [
    "LocalizationError",
    "LocalFamily",
    "PartitionOfUnity",
    "partition_of_unity",
    "LocalNormReport",
    "local_norm",
    "ContinuityReport",
    "continuity_check",
    "glue",
    "PartitionBoundReport",
    "partition_bound_check",
    "FredholmVsLocalReport",
    "fredholm_vs_local",
]


class LocalizationError(ValueError):
    pass


def _axis_info(g: Geometry, axis: str) -> tuple[np.ndarray, float, bool]:
    if axis == "x":
        circ = g if isinstance(g, Circle) else g.circle if isinstance(g, Edge) else None
        if circ is None:
            raise LocalizationError("geometry has no x axis")
        return circ.x, circ.h_x, True
    if axis == "t":
        cone = g if isinstance(g, Cone) else g.cone if isinstance(g, Edge) else None
        if cone is None:
            raise LocalizationError("geometry has no t axis")
        return cone.t, cone.h_t, False
    raise LocalizationError(f"unknown axis {axis!r}")


def _distance(coords: np.ndarray, center: float, periodic: bool) -> np.ndarray:
    d = np.abs(coords - center)
    return np.minimum(d, 2.0 * np.pi - d) if periodic else d


def _flat_multiplier(g: Geometry, axis: str, values: np.ndarray) -> np.ndarray:
    """Per-node axis values broadcast to the flat-representation diagonal."""
    pre, n, post, _, _ = _axis_layout(g, axis)
    return np.broadcast_to(np.asarray(values)[None, :, None], (pre, n, post)).reshape(-1)


def _default_axis(g: Geometry) -> str:
    return "t" if isinstance(g, Cone) else "x"


# ---------------------------------------------------------------------------
# Families and partitions


@dataclass(frozen=True)
class LocalFamily:
    """Finite center set with one representative operator per center.

    radii, when provided, maps each working eps to per-center
    neighborhood radii U(eps, x_i); continuity_check can also fit
    radii itself.
    """

    geometry: Geometry
    centers: tuple[float, ...]
    operators: tuple[DiscretizedOperator, ...]
    axis: str = "x"
    radii: Optional[Mapping[float, tuple[float, ...]]] = None

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        object.__setattr__(self, "operators", tuple(self.operators))
        if len(self.centers) != len(self.operators):
            raise LocalizationError("one representative operator per center")
        if len(self.centers) == 0:
            raise LocalizationError("a local family needs at least one center")
        dim = self.operators[0].dim
        for op in self.operators:
            if op.geometry is not self.geometry and op.dim != dim:
                raise LocalizationError("representatives must share the geometry")
        _axis_info(self.geometry, self.axis)

    def __len__(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Nonnegative node functions summing to one, each supported within
    the stated radius of its center."""

    geometry: Geometry
    axis: str
    centers: tuple[float, ...]
    radii: tuple[float, ...]
    eps: float
    functions: np.ndarray = field(repr=False)

    def __post_init__(self):
        coords, _, periodic = _axis_info(self.geometry, self.axis)
        f = np.asarray(self.functions, dtype=float)
        if f.shape != (len(self.centers), coords.size):
            raise LocalizationError("partition shape mismatch")
        if float(f.min()) < -1e-15:
            raise LocalizationError("partition functions must be nonnegative")
        total = f.sum(axis=0)
        if float(np.max(np.abs(total - 1.0))) > 1e-12:
            raise LocalizationError("partition functions must sum to 1 at every node")
        for i, (c, r) in enumerate(zip(self.centers, self.radii)):
            outside = _distance(coords, c, periodic) >= r
            if np.any(f[i][outside] > 0.0):
                raise LocalizationError(
                    f"function {i} is not subordinate to its radius-{r:g} neighborhood"
                )


def partition_of_unity(
    g: Geometry,
    centers: Sequence[float],
    eps: float,
    radii: Optional[Sequence[float]] = None,
    axis: Optional[str] = None,
) -> PartitionOfUnity:
    """Normalized plateau bumps at the centers.

    Default radii are 1.05 times the cover floor (the largest distance
    from any node to its nearest center, doubled so plateaus overlap),
    uniform across centers.
    """
    axis = axis or _default_axis(g)
    coords, _, periodic = _axis_info(g, axis)
    cs = tuple(float(c) for c in centers)
    dists = np.stack([_distance(coords, c, periodic) for c in cs])
    if radii is None:
        floor = 2.0 * float(dists.min(axis=0).max())
        rs = tuple(1.05 * floor for _ in cs)
    else:
        rs = tuple(float(r) for r in radii)
        if len(rs) != len(cs):
            raise LocalizationError("one radius per center")
    bumps = np.stack([plateau_profile(d, r / 2.0, r) for d, r in zip(dists, rs)])
    total = bumps.sum(axis=0)
    if float(total.min()) <= 0.0:
        raise LocalizationError("neighborhoods do not cover the axis; enlarge radii")
    return PartitionOfUnity(g, axis, cs, rs, float(eps), bumps / total)


# ---------------------------------------------------------------------------
# Local norms


@dataclass(frozen=True)
class LocalNormReport:
    center: float
    scales: tuple[float, ...]
    norms: tuple[float, ...]
    conorms: tuple[float, ...]
    limit: float
    in_ideal: bool
    tol: float


def local_norm(
    A: DiscretizedOperator,
    x: float,
    ladder: Optional[CutoffFamily] = None,
    n_scales: Optional[int] = None,
    tol: float = 1e-3,
) -> LocalNormReport:
    """||A phi_s|| along a shrinking cutoff ladder at x; membership in
    the local ideal J_x is judged by the final value. The mirrored
    ||phi_s A|| sequence is carried for audit, not judged.

    Without an explicit ladder or depth, the ladder descends dyadically
    from a quarter of the axis span to the finest grid-resolvable scale.
    """
    g = A.geometry
    if ladder is None:
        if n_scales is None:
            axis = _default_axis(g)
            coords, h, periodic = _axis_info(g, axis)
            span = 2.0 * np.pi if periodic else float(coords[-1] - coords[0])
            n_scales = max(2, int(np.floor(np.log2(span / 4.0 / (3.0 * h)))) + 1)
        ladder = cutoff_family(g, x, n_scales, axis_name=_default_axis(g))
    elif abs(ladder.center - x) > 1e-12:
        raise LocalizationError("ladder must be centered at x")
    norms, conorms = [], []
    for i in range(len(ladder)):
        d = _flat_multiplier(g, ladder.axis_name, ladder[i])
        norms.append(float(np.linalg.norm(A.matrix * d[None, :], 2)))
        conorms.append(float(np.linalg.norm(d[:, None] * A.matrix, 2)))
    limit = norms[-1]
    return LocalNormReport(
        float(x), ladder.scales, tuple(norms), tuple(conorms), limit, limit <= tol, tol
    )


# ---------------------------------------------------------------------------
# Continuity and gluing


@dataclass(frozen=True)
class ContinuityReport:
    eps_ladder: tuple[float, ...]
    radii: dict
    witnesses: dict = field(repr=False)
    per_eps: dict
    passed: bool


def _pair_witnesses(
    F: LocalFamily, rs: Sequence[float]
) -> np.ndarray:
    """Matrix of ||A_i - A_j|| restricted to columns in the overlap of
    the two neighborhoods; zero when the overlap is empty."""
    coords, _, periodic = _axis_info(F.geometry, F.axis)
    masks = [
        _distance(coords, c, periodic) < r for c, r in zip(F.centers, rs)
    ]
    m = len(F)
    W = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            overlap = masks[i] & masks[j]
            if not np.any(overlap):
                continue
            cols = _flat_multiplier(F.geometry, F.axis, overlap.astype(float)) > 0.0
            D = F.operators[i].matrix - F.operators[j].matrix
            W[i, j] = W[j, i] = float(np.linalg.norm(D[:, cols], 2))
    return W


def continuity_check(
    F: LocalFamily,
    eps_ladder: Sequence[float] = (0.5, 0.25, 0.125),
    radii: Optional[Mapping[float, Sequence[float]]] = None,
) -> ContinuityReport:
    """Per-eps verdict on the continuity condition: all pairwise
    restricted norms over neighborhood overlaps stay <= eps.

    Radii come from the argument, then the family, and are otherwise
    auto-fitted. Witnesses only grow with the radius (larger overlaps,
    larger column sets), so the smallest radii satisfying the bound,
    whenever any do, are the smallest that keep the neighborhoods a
    cover; auto-fit evaluates exactly there.
    """
    coords, _, periodic = _axis_info(F.geometry, F.axis)
    provided = radii if radii is not None else F.radii
    dists = np.stack([_distance(coords, c, periodic) for c in F.centers])
    cover_floor = 2.0 * float(dists.min(axis=0).max())
    fitted: dict = {}
    witnesses: dict = {}
    per_eps: dict = {}
    for eps in eps_ladder:
        eps = float(eps)
        if provided is not None and eps in provided:
            rs = tuple(float(r) for r in provided[eps])
        else:
            rs = tuple(1.02 * cover_floor for _ in F.centers)
        W = _pair_witnesses(F, rs)
        fitted[eps] = rs
        witnesses[eps] = W
        per_eps[eps] = bool(W.max() <= eps)
    return ContinuityReport(
        tuple(float(e) for e in eps_ladder),
        fitted,
        witnesses,
        per_eps,
        all(per_eps.values()),
    )


def glue(F: LocalFamily, P: PartitionOfUnity) -> DiscretizedOperator:
    """Sum phi_i A_i over the centers.

    Precondition: the family is P.eps-continuous on the partition's own
    neighborhoods; the glued operator then reproduces each local
    representative near its center up to 2 eps.
    """
    if P.centers != F.centers or P.axis != F.axis:
        raise LocalizationError("partition and family disagree on centers or axis")
    W = _pair_witnesses(F, P.radii)
    if W.max() > P.eps:
        raise LocalizationError(
            f"family is not {P.eps:g}-continuous on the partition neighborhoods "
            f"(worst witness {W.max():.3g})"
        )
    M = np.zeros_like(F.operators[0].matrix)
    for i, op in enumerate(F.operators):
        d = _flat_multiplier(F.geometry, F.axis, P.functions[i])
        M = M + d[:, None] * op.matrix
    first = F.operators[0]
    return DiscretizedOperator(F.geometry, first.v, M, interior=first.interior)


# ---------------------------------------------------------------------------
# Partition norm bound


@dataclass(frozen=True)
class PartitionBoundReport:
    lhs: float
    cover_max: float
    restricted_norms: tuple[float, ...]
    bound: float
    slack: float
    passed: bool
    tol: float


def partition_bound_check(
    fs: Sequence[np.ndarray],
    As: Sequence[DiscretizedOperator],
    axis: Optional[str] = None,
    tol: float = 1e-12,
) -> PartitionBoundReport:
    """Check ||sum f_j A_j|| <= [max_x sum f_j(x)] max_j ||A_j||_{supp f_j}.

    The bound is not a theorem for arbitrary matrices; the report states
    the verdict and the slack, nothing more.
    """
    if len(fs) != len(As) or len(fs) == 0:
        raise LocalizationError("need matching nonempty function and operator lists")
    g = As[0].geometry
    axis = axis or _default_axis(g)
    coords, _, _ = _axis_info(g, axis)
    stacked = np.stack([np.asarray(f, dtype=float) for f in fs])
    if stacked.shape[1] != coords.size:
        raise LocalizationError("functions must be per-node on the chosen axis")
    if float(stacked.min()) < 0.0:
        raise LocalizationError("negative f encountered")
    total = np.zeros_like(As[0].matrix)
    restricted = []
    for f, op in zip(stacked, As):
        d = _flat_multiplier(g, axis, f)
        total = total + d[:, None] * op.matrix
        cols = _flat_multiplier(g, axis, (f > 0.0).astype(float)) > 0.0
        restricted.append(
            float(np.linalg.norm(op.matrix[:, cols], 2)) if np.any(cols) else 0.0
        )
    lhs = float(np.linalg.norm(total, 2))
    cover_max = float(stacked.sum(axis=0).max())
    bound = cover_max * max(restricted)
    slack = bound - lhs
    return PartitionBoundReport(
        lhs, cover_max, tuple(restricted), bound, slack, bool(slack >= -tol), tol
    )


# ---------------------------------------------------------------------------
# Local proxies vs global sections


@dataclass(frozen=True)
class FredholmVsLocalReport:
    centers: tuple
    local_smin: tuple[float, ...]
    floor: float
    local_pass: bool
    global_report: FredholmReport = field(repr=False)
    global_ok: bool = False
    agree: bool = False
    note: str = ""


def fredholm_vs_local(
    t: SymbolTuple,
    centers: Sequence[Union[str, float]] = ("tip", 0.0),
    sizes: Sequence[int] = (128, 256),
    floor: float = 1e-3,
    tau_coef: float = 1e-4,
    h_t: float = 0.1875,
) -> FredholmVsLocalReport:
    """Cross-tabulate per-center invertibility proxies against the
    global finite-section verdict.

    Each center freezes the cone family's coefficients: 'tip' keeps
    r -> 0 with the wedge slots alive, a float t_c pins r = exp(-t_c).
    The proxy is the smallest singular value of the frozen operator on
    the interval grid; the global side sections the full family on the
    growing-window ladder. Agreement means: all proxies clear the floor
    exactly when the sections are determinate with zero kernel and
    cokernel.
    """
    sig = t.sigma1
    if not isinstance(sig, EdgeSymbol):
        raise LocalizationError("tuple must carry an edge symbol family")
    expr = sig.family.expr

    def build(n_t: int) -> DiscretizedOperator:
        T = h_t * n_t / 2.0
        cone = Cone(sig.cone.base, T=T, n_t=n_t, boundary="interval", q=sig.cone.q)
        return op_mellin(cone, expr)

    probe_cone = Cone(
        sig.cone.base, T=h_t * max(sizes) / 2.0, n_t=max(sizes),
        boundary="interval", q=sig.cone.q,
    )
    smins = []
    for c in centers:
        if c == "tip":
            frozen = op_mellin(probe_cone, expr, freeze_r=True)
        else:
            pinned = substitute(expr, {"r": Const(float(np.exp(-float(c))))})
            frozen = op_mellin(probe_cone, pinned)
        smins.append(float(frozen.singular_values()[-1]))
    local_pass = all(s >= floor for s in smins)
    rep = finite_section(build, sizes=tuple(sizes), tau_coef=tau_coef)
    global_ok = bool(rep.determinate and rep.kernel == 0 and rep.cokernel == 0)
    agree = local_pass == global_ok
    note = "" if agree else (
        "section_vs_symbol: per-center proxies and finite sections disagree; "
        "reported, not reconciled"
    )
    return FredholmVsLocalReport(
        tuple(centers), tuple(smins), floor, local_pass, rep, global_ok, agree, note
    )
