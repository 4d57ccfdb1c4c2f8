"""Localization tests: partitions of unity, local norms, eps-continuity,
gluing, the partition norm bound, and the local-vs-global Fredholm
cross-tabulation.

The gluing ladder uses one fixed stock operator, 2 + 0.2 sin(x) chi(xi)
on a 64-node circle, with frozen-coefficient representatives at
equispaced centers. Center counts double as eps halves, so the measured
continuity witnesses (0.28, 0.15, 0.08) track eps while staying under
the gate at every rung.
"""

import numpy as np
import pytest

from psdo.calculus import DiscretizedOperator
from psdo.fredholm import extract_tuple
from psdo.geometry import Circle, Cone, Point
from psdo.localization import (
    LocalFamily,
    LocalizationError,
    continuity_check,
    fredholm_vs_local,
    glue,
    local_norm,
    partition_bound_check,
    partition_of_unity,
)
from psdo.quantize import op_circle
from psdo.symbols import ConeSymbolFamily
from psdo.symexpr import Const, parse, substitute

STOCK = "2 + 0.2 * sin(x) * chi(xi)"
CENTER_COUNTS = {0.5: 8, 0.25: 16, 0.125: 32}


@pytest.fixture(scope="module")
def g64():
    return Circle(64)


def frozen_family(g, n_c, expr=None):
    expr = parse(STOCK) if expr is None else expr
    centers = [2.0 * np.pi * i / n_c for i in range(n_c)]
    ops = [op_circle(g, substitute(expr, {"x": Const(c)})) for c in centers]
    return LocalFamily(g, centers, ops)


def outlier_family(g):
    F = frozen_family(g, 8)
    ops = list(F.operators)
    ops[3] = DiscretizedOperator(
        g, ops[3].v, ops[3].matrix + np.eye(g.n_x), interior=ops[3].interior
    )
    return LocalFamily(g, F.centers, ops)


# ---------------------------------------------------------------------------
# Partitions of unity


def test_partition_sums_to_one_and_is_subordinate(g64):
    centers = [2.0 * np.pi * i / 8 for i in range(8)]
    P = partition_of_unity(g64, centers, eps=0.5)
    total = P.functions.sum(axis=0)
    assert np.max(np.abs(total - 1.0)) <= 1e-12
    assert P.functions.min() >= -1e-15
    for f, c, r in zip(P.functions, P.centers, P.radii):
        d = np.abs(np.angle(np.exp(1j * (g64.x - c))))
        assert np.all(f[d >= r] == 0.0)


def test_partition_needs_covering_radii(g64):
    centers = [0.0, np.pi]
    with pytest.raises(LocalizationError, match="cover"):
        partition_of_unity(g64, centers, eps=0.5, radii=(0.1, 0.1))


def test_partition_radii_length_checked(g64):
    with pytest.raises(LocalizationError, match="one radius"):
        partition_of_unity(g64, [0.0, np.pi], eps=0.5, radii=(1.0,))


def test_local_family_validates_lengths(g64):
    A = op_circle(g64, parse("1"))
    with pytest.raises(LocalizationError, match="one representative"):
        LocalFamily(g64, [0.0, 1.0], [A])
    with pytest.raises(LocalizationError, match="at least one"):
        LocalFamily(g64, [], [])


# ---------------------------------------------------------------------------
# Local norms


def test_local_norm_zero_and_identity(g64):
    Z = op_circle(g64, parse("0"))
    rz = local_norm(Z, 0.0)
    assert rz.limit == 0.0
    assert rz.in_ideal

    I = op_circle(g64, parse("1"))
    ri = local_norm(I, 0.0)
    assert all(abs(v - 1.0) <= 1e-12 for v in ri.norms)
    assert not ri.in_ideal


def test_local_norm_vanishing_multiplier_decays():
    # (1 - cos x)^2 vanishes to fourth order at x = 0; each halving of
    # the cutoff scale should cut the local norm by better than 10x.
    g = Circle(128)
    A = op_circle(g, parse("(1 - cos(x))^2"))
    rep = local_norm(A, 0.0)
    assert len(rep.norms) == 4
    want = (2.767930e-01, 2.039967e-02, 1.328546e-03, 8.394016e-05)
    for got, ref in zip(rep.norms, want):
        assert abs(got - ref) <= 1e-4 * max(ref, 1e-6)
    for a, b in zip(rep.norms, rep.norms[1:]):
        assert b <= a / 10.0
    assert rep.in_ideal


def test_local_norm_rejects_offcenter_ladder(g64):
    from psdo.geometry import cutoff_family

    A = op_circle(g64, parse("1"))
    ladder = cutoff_family(g64, center=1.0, n_scales=2)
    with pytest.raises(LocalizationError, match="centered"):
        local_norm(A, 0.0, ladder=ladder)


# ---------------------------------------------------------------------------
# eps-continuity


def test_continuity_constant_family_passes_every_eps(g64):
    A = op_circle(g64, parse("3"))
    F = LocalFamily(g64, [2.0 * np.pi * i / 8 for i in range(8)], [A] * 8)
    rep = continuity_check(F, eps_ladder=(0.5, 0.25, 0.125))
    assert rep.passed
    for eps in rep.eps_ladder:
        assert rep.witnesses[eps].max() == 0.0


def test_continuity_frozen_family_autofit(g64):
    F = frozen_family(g64, 16)
    rep = continuity_check(F, eps_ladder=(0.25,))
    r = rep.radii[0.25][0]
    assert abs(r - 0.4006) <= 2e-3
    assert rep.witnesses[0.25].max() <= 0.16
    assert rep.passed


def test_continuity_flags_outlier_representative(g64):
    F = outlier_family(g64)
    rep = continuity_check(F, eps_ladder=(0.5,), radii={0.5: (1.7,) * 8})
    assert not rep.passed
    assert rep.witnesses[0.5].max() >= 1.0


# ---------------------------------------------------------------------------
# Gluing


def test_glue_constant_family_is_exact(g64):
    A = op_circle(g64, parse("3"))
    F = LocalFamily(g64, [2.0 * np.pi * i / 8 for i in range(8)], [A] * 8)
    P = partition_of_unity(g64, F.centers, eps=0.5)
    G = glue(F, P)
    assert np.linalg.norm(G.matrix - 3.0 * np.eye(g64.n_x), 2) <= 1e-12


def test_glue_reproduces_representatives_locally(g64):
    A0 = op_circle(g64, parse(STOCK))
    glued = {}
    for eps, n_c in CENTER_COUNTS.items():
        F = frozen_family(g64, n_c)
        rep = continuity_check(F, eps_ladder=(eps,))
        assert rep.passed, f"stock family not {eps}-continuous"
        P = partition_of_unity(g64, F.centers, eps)
        G = glue(F, P)
        glued[eps] = G
        worst = 0.0
        for x_i, A_i in zip(F.centers, F.operators):
            D = DiscretizedOperator(
                g64, G.v, G.matrix - A_i.matrix, interior=G.interior
            )
            worst = max(worst, local_norm(D, x_i).limit)
        # measured 0.090 at every rung; gate is the guaranteed 2 eps
        assert worst <= 0.12
        assert worst <= 2.0 * eps
    # refinement converges to the global quantization
    gap = np.linalg.norm(glued[0.125].matrix - A0.matrix, 2)
    assert gap <= 2e-3
    eps_values = sorted(CENTER_COUNTS)
    for i, e1 in enumerate(eps_values):
        for e2 in eps_values[i + 1:]:
            d = np.linalg.norm(glued[e1].matrix - glued[e2].matrix, 2)
            assert d <= 0.05
            assert d <= max(2.0 * e1, 2.0 * e2)


def test_glue_rejects_discontinuous_family(g64):
    F = outlier_family(g64)
    P = partition_of_unity(g64, F.centers, eps=0.5)
    with pytest.raises(LocalizationError, match="continuous"):
        glue(F, P)


# ---------------------------------------------------------------------------
# Partition norm bound


def indicator_blocks(n, m):
    fs = []
    for j in range(m):
        f = np.zeros(n)
        f[j * (n // m):(j + 1) * (n // m)] = 1.0
        fs.append(f)
    return fs


def test_partition_bound_single_function_is_tight(g64):
    A = op_circle(g64, parse("2 + chi(xi)"))
    rep = partition_bound_check([np.ones(g64.n_x)], [A])
    assert rep.passed
    assert abs(rep.slack) <= 1e-12


def test_partition_bound_exact_for_multipliers(g64):
    n = g64.n_x
    fs = indicator_blocks(n, 4)
    As = [
        DiscretizedOperator(g64, None, np.diag(np.cos((j + 1) * g64.x)).astype(complex))
        for j in range(4)
    ]
    rep = partition_bound_check(fs, As)
    assert rep.passed
    assert abs(rep.slack) <= 1e-12


def test_partition_bound_exact_for_scaled_common_unitary(g64):
    n = g64.n_x
    fs = indicator_blocks(n, 4)
    U = np.fft.fft(np.eye(n)) / np.sqrt(n)
    As = [DiscretizedOperator(g64, None, c * U) for c in (0.5, 1.5, 1.0, 2.0)]
    rep = partition_bound_check(fs, As)
    assert rep.passed
    assert abs(rep.slack) <= 1e-12


def test_partition_bound_fails_for_row_concentrated_rank_one(g64):
    # A_j = chi_j e^T keeps all its mass under diag(f_j), while the
    # column restriction in the bound only sees 1/sqrt(m) of e.
    n = g64.n_x
    fs = indicator_blocks(n, 4)
    e = np.ones(n) / np.sqrt(n)
    As = []
    for f in fs:
        chi = f / np.linalg.norm(f)
        As.append(DiscretizedOperator(g64, None, np.outer(chi, e).astype(complex)))
    rep = partition_bound_check(fs, As)
    assert not rep.passed
    assert abs(rep.lhs - 2.0) <= 1e-10
    assert abs(rep.bound - 0.5) <= 1e-10
    assert rep.slack < -0.1


def test_partition_bound_rejects_negative_functions(g64):
    A = op_circle(g64, parse("1"))
    f = -np.ones(g64.n_x)
    with pytest.raises(LocalizationError, match="negative"):
        partition_bound_check([f], [A])


# ---------------------------------------------------------------------------
# Local proxies vs global sections


@pytest.fixture(scope="module")
def probe_cone():
    return Cone(Point(), T=6.0, n_t=64, boundary="interval")


def test_fredholm_vs_local_elliptic_agrees(probe_cone):
    t = extract_tuple(
        ConeSymbolFamily("(p - (0,1)) / (p + (0,1)) + 2"), cone=probe_cone
    )
    rep = fredholm_vs_local(t, sizes=(64, 128))
    assert rep.agree
    assert rep.local_pass and rep.global_ok
    assert all(s >= 1.0 for s in rep.local_smin)
    assert rep.note == ""


def test_fredholm_vs_local_identity_agrees(probe_cone):
    t = extract_tuple(ConeSymbolFamily("1 + 0*p"), cone=probe_cone)
    rep = fredholm_vs_local(t, sizes=(64, 128))
    assert rep.agree
    assert rep.local_pass and rep.global_ok


def test_fredholm_vs_local_degenerate_agrees(probe_cone):
    # order-two interior zero at p = 2: the tip proxy collapses and the
    # sections stay indeterminate, so both sides say "not invertible"
    t = extract_tuple(
        ConeSymbolFamily("(0.2*(p - 2) / (0.2*(p - 2) + (0,1)))^2"), cone=probe_cone
    )
    rep = fredholm_vs_local(t, sizes=(128, 256))
    assert rep.agree
    assert not rep.local_pass
    assert min(rep.local_smin) <= 1e-3
    assert not rep.global_report.determinate
    assert not rep.global_ok


def test_fredholm_vs_local_index_instance_disagrees(probe_cone):
    # winding +1 family: every frozen coefficient operator is invertible
    # but the global sections carry a kernel; the report flags the
    # mismatch instead of papering over it
    t = extract_tuple(
        ConeSymbolFamily("1 + (1 / (1 + r)) * ((p - (0,1)) / (p + (0,1)) - 1)"),
        cone=probe_cone,
    )
    rep = fredholm_vs_local(t, sizes=(128, 256))
    assert not rep.agree
    assert rep.local_pass
    assert rep.global_report.determinate
    assert rep.global_report.kernel == 1
    assert "section_vs_symbol" in rep.note
