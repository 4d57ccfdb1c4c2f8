import numpy as np
import pytest

from psdo.geometry import Circle, Cone, Edge, Point, cutoff_family, translation_matrix
from psdo.quantize import (
    DiscretizedOperator,
    NegligibleVerdict,
    OperatorFamily,
    QuantizeError,
    dyadic_ladder,
    identity_operator,
    interior_dim,
    negligible_test,
    op_circle,
    op_edge,
    op_mellin,
    quantize,
)
from psdo.symexpr import parse, evaluate


# ---------------------------------------------------------------------------
# Oracles: direct quadratic-cost definition sums, written against the
# quantization rule itself rather than against the implementation.


def naive_op_circle(g: Circle, expr, v=None):
    n, q = g.n_x, g.q
    A = np.zeros((n * q, n * q), dtype=complex)
    for j in range(n):
        for jp in range(n):
            acc = np.zeros((q, q), dtype=complex)
            for k in g.modes:
                b = {"x": g.x[j], "xi": float(k)}
                if v is not None:
                    b["v"] = v
                a_val = evaluate(expr, b)[0, 0] if q == 1 else evaluate(expr, b)
                acc = acc + np.exp(1j * k * (g.x[j] - g.x[jp])) * np.atleast_2d(a_val if q > 1 else a_val) / n
            A[j * q : (j + 1) * q, jp * q : (jp + 1) * q] = acc
    return A


def naive_op_mellin(g: Cone, expr, v=0.0, xi=0.0):
    n = g.n_t
    A = np.zeros((n, n), dtype=complex)
    for j in range(n):
        vals = evaluate(
            expr,
            {"r": g.r[j], "w": v * g.r[j], "eta": xi * g.r[j], "p": g.p, "v": v, "x": 0.0, "t": 0.0},
        )[:, 0, 0]
        for jp in range(n):
            A[j, jp] = np.sum(np.exp(1j * g.p * (g.t[j] - g.t[jp])) * vals) / n
    return A


# ---------------------------------------------------------------------------


class TestOpCircle:
    def test_against_naive_oracle(self):
        g = Circle(16)
        expr = parse("exp((0,1)*x)*chi(xi)")
        want = naive_op_circle(g, expr)
        got = op_circle(g, expr).matrix
        assert np.max(np.abs(got - want)) < 1e-12

    def test_matrix_symbol_against_naive_oracle(self):
        g = Circle(8, q=2)
        expr = parse("[[chi(xi), exp((0,1)*x)],[0, 1]]")
        want = naive_op_circle(g, expr)
        got = op_circle(g, expr).matrix
        assert np.max(np.abs(got - want)) < 1e-12

    def test_x_independent_is_fourier_multiplier(self):
        g = Circle(32)
        expr = parse("chi(xi)")
        A = op_circle(g, expr).matrix
        F = np.fft.fft(np.eye(32), axis=0) / 32
        D = F @ A @ np.linalg.inv(F)
        off = D - np.diag(np.diag(D))
        assert np.max(np.abs(off)) < 1e-12
        assert np.max(np.abs(np.diag(D) - evaluate(parse("chi(xi)"), {"xi": g.modes.astype(float)})[:, 0, 0])) < 1e-12

    def test_multiplication_times_multiplier_is_exact(self):
        # symbol a(x)b(xi) quantizes to the exact product diag(a) op(b)
        g = Circle(64)
        ab = op_circle(g, parse("exp((0,1)*x)*chi(xi)"))
        a = op_circle(g, parse("exp((0,1)*x)"))
        b = op_circle(g, parse("chi(xi)"))
        assert np.max(np.abs(ab.matrix - (a @ b).matrix)) < 1e-13

    def test_parameter_required(self):
        g = Circle(8)
        with pytest.raises(QuantizeError):
            op_circle(g, parse("chi(v)*chi(xi)"))

    def test_shape_mismatch(self):
        g = Circle(8, q=2)
        with pytest.raises(QuantizeError):
            op_circle(g, parse("chi(xi)"))


class TestOpMellin:
    def test_unitary_multiplier(self):
        g = Cone(Point(), T=6.0, n_t=64)
        A = op_mellin(g, parse("(p-(0,1))/(p+(0,1))"))
        sv = A.singular_values()
        assert np.max(np.abs(sv - 1.0)) < 1e-10

    def test_against_naive_oracle(self):
        g = Cone(Point(), T=3.0, n_t=16)
        expr = parse("chi(p)/(1+r)")
        want = naive_op_mellin(g, expr)
        got = op_mellin(g, expr).matrix
        assert np.max(np.abs(got - want)) < 1e-12

    def test_pure_multiplier_is_diagonal_in_t_modes(self):
        g = Cone(Point(), T=4.0, n_t=32)
        A = op_mellin(g, parse("p")).matrix
        F = np.fft.fft(np.eye(32), axis=0)
        D = F @ A @ np.linalg.inv(F)
        off = D - np.diag(np.diag(D))
        assert np.max(np.abs(off)) < 1e-9
        assert np.max(np.abs(np.sort(np.diag(D).real) - np.sort(g.p))) < 1e-9

    def test_w_multiplication_example(self):
        # P = w/(w+i) at v=1, xi=0 is multiplication by r/(r+i)
        g = Cone(Point(), T=6.0, n_t=64)
        A = op_mellin(g, parse("w/(w+(0,1))"), v=1.0).matrix
        want = np.diag(g.r / (g.r + 1j))
        assert np.max(np.abs(A - want)) < 1e-12

    def test_freeze_r_zeroes_explicit_slot_only(self):
        g = Cone(Point(), T=6.0, n_t=32)
        a = op_mellin(g, parse("r + w/(w+(0,1))"), v=1.0, freeze_r=True).matrix
        b = op_mellin(g, parse("w/(w+(0,1))"), v=1.0).matrix
        assert np.max(np.abs(a - b)) < 1e-14

    def test_interval_restriction_is_principal_submatrix(self):
        gp = Cone(Point(), T=6.0, n_t=32, boundary="periodic")
        gi = Cone(Point(), T=6.0, n_t=32, boundary="interval")
        expr = parse("(p-(0,1))/(p+(0,1))")
        Ap = op_mellin(gp, expr).matrix
        Ai = op_mellin(gi, expr)
        assert Ai.interior
        assert Ai.matrix.shape == (31, 31)
        assert np.array_equal(Ai.matrix, Ap[1:, 1:])
        assert interior_dim(gi) == 31

    def test_support_policy_violation(self):
        g = Cone(Point(), T=6.0, n_t=32, boundary="interval")
        with pytest.raises(QuantizeError):
            op_mellin(g, parse("sin(r)"))

    def test_circle_base_mode_diagonal(self):
        base = Circle(8)
        g = Cone(base, T=4.0, n_t=16)
        expr = parse("(p-(0,1)*(1+t^2))/(p+(0,1)*(1+t^2))")
        A = op_mellin(g, expr).matrix
        # conjugate by the omega DFT: X = (I_t x F_w)
        Fw = np.fft.fft(np.eye(8), axis=0) / 8
        X = np.kron(np.eye(16), Fw)
        D = X @ A @ np.linalg.inv(X)
        D = D.reshape(16, 8, 16, 8)
        pt = Cone(Point(), T=4.0, n_t=16)
        for m_idx, mu in enumerate(base.modes):
            per_mode = op_mellin(pt, parse(f"(p-(0,1)*(1+{float(mu*mu+1)-1.0}))/(p+(0,1)*(1+{float(mu*mu+1)-1.0}))")).matrix
            assert np.max(np.abs(D[:, m_idx, :, m_idx] - per_mode)) < 1e-10
        # off-diagonal mode blocks vanish
        for m1 in range(8):
            for m2 in range(8):
                if m1 != m2:
                    assert np.max(np.abs(D[:, m1, :, m2])) < 1e-10


class TestOpEdge:
    def test_x_independent_matches_fiber_mellin(self):
        circ = Circle(8)
        cone = Cone(Point(), T=4.0, n_t=16)
        g = Edge(circ, cone)
        expr = parse("chi(eta)*(p-(0,1))/(p+(0,1))")
        A = op_edge(g, expr, v=0.5).matrix
        Fx = np.fft.fft(np.eye(8), axis=0) / 8
        X = np.kron(Fx, np.eye(16))
        D = (X @ A @ np.linalg.inv(X)).reshape(8, 16, 8, 16)
        for k_idx, k in enumerate(circ.modes):
            want = op_mellin(cone, expr, v=0.5, xi=float(k)).matrix
            assert np.max(np.abs(D[k_idx, :, k_idx, :] - want)) < 1e-12
        for k1 in range(8):
            for k2 in range(8):
                if k1 != k2:
                    assert np.max(np.abs(D[k1, :, k2, :])) < 1e-12

    def test_chi_eta_against_dense_oracle(self):
        # 16 x 32 grid, v = 0; row-wise definition sums
        circ = Circle(16)
        cone = Cone(Point(), T=6.0, n_t=32)
        g = Edge(circ, cone)
        A = op_edge(g, parse("chi(eta)"), v=0.0).matrix
        xi = circ.modes.astype(float)
        want = np.zeros((16 * 32, 16 * 32), dtype=complex)
        # chi(eta) has no p dependence: fiber is diagonal in t
        for j in range(16):
            for i in range(32):
                row = np.zeros((16, 32), dtype=complex)
                vals = xi * 0.0 + np.array([float(np.real(evaluate(parse("chi(eta)"), {"eta": k * cone.r[i]})[0, 0])) for k in xi])
                for jp in range(16):
                    row[jp, i] = np.sum(np.exp(1j * xi * (circ.x[j] - circ.x[jp])) * vals) / 16
                want[j * 32 + i] = row.reshape(-1)
        assert np.max(np.abs(A - want)) < 1e-12

    def test_x_dependent_against_dense_oracle(self):
        circ = Circle(8)
        cone = Cone(Point(), T=3.0, n_t=8)
        g = Edge(circ, cone)
        expr = parse("(1 + 0.5*sin(x))*chi(eta)*(p-(0,1))/(p+(0,1))")
        A = op_edge(g, expr, v=0.0).matrix
        xi = circ.modes.astype(float)
        gp = cone.p
        # fiber p-part
        M = np.zeros((8, 8), dtype=complex)
        gvals = (gp - 1j) / (gp + 1j)
        for i in range(8):
            for ip in range(8):
                M[i, ip] = np.sum(np.exp(1j * gp * (cone.t[i] - cone.t[ip])) * gvals) / 8
        want = np.zeros((64, 64), dtype=complex)
        for j in range(8):
            c_j = 1 + 0.5 * np.sin(circ.x[j])
            for i in range(8):
                chi_vals = np.array([k * cone.r[i] / np.sqrt(1 + (k * cone.r[i]) ** 2) for k in xi])
                s = np.zeros(8, dtype=complex)
                for jp in range(8):
                    s[jp] = np.sum(np.exp(1j * xi * (circ.x[j] - circ.x[jp])) * chi_vals) / 8
                want[j * 8 + i] = (c_j * np.outer(s, M[i])).reshape(-1)
        assert np.max(np.abs(A - want)) < 1e-11

    def test_interval_mode_restricts_fiber(self):
        circ = Circle(8)
        cone = Cone(Point(), T=4.0, n_t=16, boundary="interval")
        g = Edge(circ, cone)
        A = op_edge(g, parse("(p-(0,1))/(p+(0,1))"), v=0.0)
        assert A.interior
        assert A.matrix.shape == (8 * 15, 8 * 15)


class TestInvariants:
    def test_commutator_locality_semiclassical(self):
        # || [op(a_N), f] || = O(1/N) for mode-scaled symbols; the scaled
        # profile must be smooth across the Nyquist seam (even profile)
        f_src = "1 + 0.5*sin(x)"
        norms = {}
        for n in (64, 128):
            g = Circle(n)
            a = parse(f"1/(1 + (xi*{2.0 / n})^2) * exp((0,1)*x)")
            A = op_circle(g, a).matrix
            Fm = np.diag(evaluate(parse(f_src), {"x": g.x})[:, 0, 0])
            norms[n] = np.linalg.norm(A @ Fm - Fm @ A, 2)
        assert norms[128] < 0.62 * norms[64]

    def test_parameter_lipschitz_decay(self):
        # ||A(v+d) - A(v)|| decays like (1 + |v|)^-1 for this family
        g = Circle(32)
        expr = parse("(xi + (0,1)*v)/sqrt(1 + xi^2 + v^2)")
        d = 0.25
        slopes = {}
        for v in (1.0, 8.0, 64.0):
            A1 = op_circle(g, expr, v=v).matrix
            A2 = op_circle(g, expr, v=v + d).matrix
            slopes[v] = np.linalg.norm(A2 - A1, 2) / d
        c = slopes[1.0] * (1 + 1.0)
        assert slopes[8.0] <= 1.5 * c / (1 + 8.0)
        assert slopes[64.0] <= 1.5 * c / (1 + 64.0)

    def test_localized_seminorm_dilation_invariant(self):
        # Delta a pure Mellin multiplier: conjugation by kappa is exact,
        # so the cutoff-localized seminorm is shift invariant
        from psdo.geometry import DilationAction

        g = Cone(Point(), T=6.0, n_t=128)
        Delta = op_mellin(g, parse("(p-(0,1))/(p+(0,1)) - 1"))
        fam = cutoff_family(g, center=0.0, n_scales=1, base_scale=2.0, axis_name="t")
        phi = np.diag(fam[0].astype(complex))
        base = np.linalg.norm(phi @ Delta.matrix @ phi, 2)
        for k in (4, 9):
            d = DilationAction(g, k)
            phi_l = np.diag(np.roll(fam[0], k).astype(complex))
            moved = np.linalg.norm(phi_l @ Delta.matrix @ phi_l, 2)
            assert abs(moved - base) < 1e-10 * max(1.0, base)
            # and the operator itself is dilation invariant
            K = d.flat_matrix()
            assert np.max(np.abs(K @ Delta.matrix @ K.conj().T - Delta.matrix)) < 1e-10

    def test_identity_and_adjoint(self):
        g = Circle(16)
        A = op_circle(g, parse("exp((0,1)*x)*chi(xi)"))
        I = identity_operator(g)
        assert np.max(np.abs((A @ I).matrix - A.matrix)) == 0.0
        assert np.max(np.abs(A.adjoint().matrix - A.matrix.conj().T)) == 0.0

    def test_apply_matches_matrix(self):
        from psdo.geometry import GridFunction

        g = Cone(Point(), T=4.0, n_t=16)
        A = op_mellin(g, parse("chi(p)"))
        rng = np.random.default_rng(2)
        u = GridFunction(g, rng.normal(size=(16, 1)) + 0j)
        v1 = A.apply(u).flat()
        v2 = A.matrix @ u.flat()
        assert np.max(np.abs(v1 - v2)) < 1e-13


class TestFamilies:
    def test_dyadic_ladder(self):
        vs = dyadic_ladder(3)
        assert 0.0 in vs and 8.0 in vs and -8.0 in vs
        assert len(vs) == 9

    def test_family_norm_is_sup(self):
        g = Circle(16)
        fam = OperatorFamily.from_expr(g, parse("exp(-abs(v))*chi(xi)"), v_values=(0.0, 1.0, 2.0))
        norms = [op.norm() for op in fam.operators]
        assert fam.family_norm() == pytest.approx(max(norms))

    def test_negligible_accepts_decaying_family(self):
        g = Circle(16)
        fam = OperatorFamily.from_expr(g, parse("exp(-abs(v))*chi(xi)"))
        verdict = negligible_test(fam, order=4, tau=50.0)
        assert isinstance(verdict, NegligibleVerdict)
        assert verdict.accepted
        assert len(verdict.v_values) >= 3

    def test_negligible_rejects_identity(self):
        g = Circle(16)
        fam = OperatorFamily.from_expr(g, parse("1 + 0*chi(xi)"), v_values=dyadic_ladder())
        verdict = negligible_test(fam, order=4, tau=50.0)
        assert not verdict.accepted

    def test_negligible_needs_three_samples(self):
        g = Circle(16)
        fam = OperatorFamily.from_expr(g, parse("chi(xi)"), v_values=(0.0, 1.0))
        with pytest.raises(QuantizeError):
            negligible_test(fam)

    def test_quantize_dispatch(self):
        assert quantize(Circle(8), parse("chi(xi)")).matrix.shape == (8, 8)
        assert quantize(Cone(Point(), n_t=16), parse("chi(p)")).matrix.shape == (16, 16)
        g = Edge(Circle(8), Cone(Point(), n_t=16))
        assert quantize(g, parse("chi(eta)")).matrix.shape == (128, 128)
