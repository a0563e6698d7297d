import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canon_lti.exceptions import (
    DimensionError,
    IllConditionedTransformError,
    NearPoleError,
    NotSpdError,
    UnstableSystemError,
)
from canon_lti.kalman import kalman_loglik
from canon_lti.systems import (
    EigenSpectrum,
    NoiseSpec,
    StateSpaceSystem,
    Trajectory,
    apply_similarity,
    char_poly,
    controllability_matrix,
    eigenvalues,
    gramians,
    hankel_matrix,
    is_minimal,
    is_stable,
    markov_parameter,
    markov_parameters,
    observability_matrix,
    simulate,
    solve_discrete_lyapunov,
    transfer_function,
)

from conftest import make_system, random_similarity


def scalar_system(a=0.5, b=1.0, c=1.0, d=0.0):
    return StateSpaceSystem(A=[[a]], B=[[b]], C=[[c]], D=[[d]])


class TestConstruction:
    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            StateSpaceSystem(A=np.eye(2), B=np.ones((3, 1)), C=np.ones((1, 2)), D=[[0.0]])

    def test_nonfinite_rejected(self):
        with pytest.raises(DimensionError):
            StateSpaceSystem(A=[[np.nan]], B=[[1.0]], C=[[1.0]], D=[[0.0]])

    def test_noise_spec_validation(self):
        with pytest.raises(NotSpdError):
            NoiseSpec(sigma_state=0.1, sigma_obs=0.0, P0=np.eye(2))
        with pytest.raises(NotSpdError):
            NoiseSpec(sigma_state=-0.1, sigma_obs=0.5, P0=np.eye(2))
        with pytest.raises(NotSpdError):
            NoiseSpec(sigma_state=0.1, sigma_obs=0.5, P0=-np.eye(2))

    def test_trajectory_lengths(self):
        with pytest.raises(DimensionError):
            Trajectory(u=np.zeros(4), y=np.zeros(5))
        with pytest.raises(DimensionError):
            Trajectory(u=np.zeros(4), y=np.zeros(4), x=np.zeros((4, 1)))


class TestSimulate:
    def test_zero_dynamics_iid_observations(self):
        # A = 0, B = 0: states vanish after t = 0, so y_t ~ N(0, sigma_obs^2)
        sys = StateSpaceSystem(A=[[0.0]], B=[[0.0]], C=[[1.0]], D=[[0.0]])
        noise = NoiseSpec(sigma_state=0.0, sigma_obs=0.7, P0=np.eye(1))
        traj = simulate(sys, noise, np.zeros(20_000), seed=3)
        assert np.allclose(traj.x[1:], 0.0)
        assert abs(traj.y.var() - 0.49) < 3 * 0.49 * np.sqrt(2 / 20_000)

    def test_direct_unrolling(self):
        # x_1 carries no input, so an impulse at t=1 appears in y at t=2
        sys = scalar_system()
        noise = NoiseSpec(sigma_state=0.0, sigma_obs=1.0, P0=np.eye(1))
        traj = simulate(sys, noise, [1.0, 0.0, 0.0], x0=[0.0], seed=0)
        y_clean = traj.y[:, 0] - (traj.y[:, 0] - np.array([0.0, 1.0, 0.5]))
        assert np.allclose(y_clean, [0.0, 1.0, 0.5])
        # with the observation noise stripped via stored latents
        resid = traj.y[:, 0] - traj.x[1:, 0]
        x_expect = [0.0, 1.0, 0.5]
        assert np.allclose(traj.x[1:, 0], x_expect)
        assert np.all(np.abs(resid) < 10.0)

    def test_observation_variance_given_state(self):
        # sample variance of y_1 - C x_1 over many seeds is sigma_obs^2
        sys, _ = make_system(2, seed=11)
        noise = NoiseSpec.default(2, sigma_state=0.3, sigma_obs=0.5)
        n = 100_000
        resid = np.empty(n)
        base = np.random.SeedSequence(99).spawn(n)
        u = np.array([0.7])
        for i in range(n):
            traj = simulate(sys, noise, u, seed=base[i])
            resid[i] = traj.y[0, 0] - sys.C[0] @ traj.x[1] - sys.D[0, 0] * u[0]
        var = resid.var()
        tol = 3 * 0.25 * np.sqrt(2.0 / n)
        assert abs(var - 0.25) < tol

    def test_deterministic_given_seed(self):
        sys, noise = make_system(2, seed=1, sigma_state=0.3)
        t1 = simulate(sys, noise, np.ones(10), seed=5)
        t2 = simulate(sys, noise, np.ones(10), seed=5)
        assert np.array_equal(t1.y, t2.y) and np.array_equal(t1.x, t2.x)


class TestMarkovHankel:
    def test_t0_is_feedthrough(self):
        sys = scalar_system(d=2.5)
        assert markov_parameter(sys, 0)[0, 0] == 2.5

    def test_scalar_power(self):
        sys = scalar_system(a=0.5, b=1.0, c=2.0)
        assert abs(markov_parameter(sys, 3)[0, 0] - 0.5) < 1e-15

    def test_markov_equals_impulse_response(self):
        sys, _ = make_system(3, seed=7)
        noise = NoiseSpec(sigma_state=0.0, sigma_obs=0.5, P0=np.eye(3))
        T = 12
        u = np.zeros(T)
        u[0] = 1.0
        # strip observation noise by simulating and subtracting stored states
        traj = simulate(sys, noise, u, x0=np.zeros(3), seed=0)
        y_clean = np.array(
            [sys.C @ traj.x[t + 1] + sys.D @ traj.u[t] for t in range(T)]
        ).ravel()
        M = markov_parameters(sys, T - 1).ravel()
        assert np.abs(y_clean - M).max() < 1e-12 * max(1.0, np.abs(M).max())

    def test_hankel_scalar(self):
        sys = scalar_system()
        H = hankel_matrix(sys, 2, 2)
        assert np.allclose(H, [[1.0, 0.5], [0.5, 0.25]], atol=1e-15)

    def test_hankel_similarity_invariant(self, rng):
        sys, noise = make_system(3, seed=2)
        T = random_similarity(3, rng)
        sys2, _ = apply_similarity(sys, noise, T)
        H1 = hankel_matrix(sys, 4, 4)
        H2 = hankel_matrix(sys2, 4, 4)
        assert np.abs(H1 - H2).max() < 1e-8 * np.abs(H1).max()

    def test_hankel_rank_is_dx(self):
        sys, _ = make_system(3, seed=9)
        H = hankel_matrix(sys, 3, 3)
        s = np.linalg.svd(H, compute_uv=False)
        assert s[2] > 1e-10 * s[0]
        H4 = hankel_matrix(sys, 4, 4)
        s4 = np.linalg.svd(H4, compute_uv=False)
        assert s4[3] < 1e-10 * s4[0]


class TestTransferFunction:
    def test_scalar_resolvent(self):
        sys = scalar_system()
        assert abs(transfer_function(sys, 1.0)[0, 0] - 2.0) < 1e-14

    def test_large_z_limit(self):
        for seed in range(5):
            sys, _ = make_system(2, seed=seed)
            G = transfer_function(sys, 1e8)
            assert np.abs(G - sys.D).max() < 1e-6

    def test_series_oracle(self):
        sys, _ = make_system(3, seed=4)
        z = 2.0 * np.exp(1j * 0.7)
        M = markov_parameters(sys, 200)
        series = M[0].astype(complex)
        for t in range(1, 201):
            series = series + M[t] * z ** (-t)
        G = transfer_function(sys, z)
        assert np.abs(G - series).max() < 1e-10 * np.abs(G).max()

    def test_near_pole_error(self):
        sys = scalar_system(a=0.5)
        with pytest.raises(NearPoleError):
            transfer_function(sys, 0.5)


class TestEigCharPoly:
    def test_diagonal(self):
        spec = eigenvalues(np.diag([0.3, -0.7]))
        assert np.allclose(spec.values, [-0.7, 0.3])

    def test_rotation(self):
        spec = eigenvalues([[0.0, -0.5], [0.5, 0.0]])
        assert np.allclose(sorted(spec.values, key=lambda z: z.imag), [-0.5j, 0.5j])

    def test_companion_roots(self):
        from canon_lti.canonical import companion_matrix

        spec = eigenvalues(companion_matrix([0.1, -0.7]))
        assert np.allclose(np.sort(spec.values.real), [0.2, 0.5], atol=1e-12)

    def test_char_poly_diag(self):
        a = char_poly(np.diag([0.5, 0.2]))
        assert np.allclose(a, [0.1, -0.7], atol=1e-14)

    def test_char_poly_companion_round_trip(self, rng):
        from canon_lti.canonical import companion_matrix

        for _ in range(20):
            a = rng.uniform(-0.5, 0.5, size=4)
            assert np.abs(char_poly(companion_matrix(a)) - a).max() < 1e-12

    def test_char_poly_roots_oracle(self, rng):
        for seed in range(5):
            A = np.random.default_rng(seed).normal(size=(5, 5))
            A *= 0.8 / max(np.abs(np.linalg.eigvals(A)))
            a = char_poly(A)
            coeffs = np.concatenate([[1.0], a[::-1]])
            for lam in np.linalg.eigvals(A):
                val = np.polyval(coeffs, lam)
                assert abs(val) < 1e-8

    def test_char_poly_faddeev_leverrier_cross_check(self, rng):
        # independent oracle: trace-based recursion for the characteristic poly
        for seed in range(5):
            A = np.random.default_rng(100 + seed).normal(size=(4, 4)) * 0.4
            n = A.shape[0]
            M = np.zeros_like(A)
            c = np.zeros(n + 1)
            c[0] = 1.0
            for k in range(1, n + 1):
                M = A @ M + c[k - 1] * np.eye(n)
                c[k] = -np.trace(A @ M) / k
            # c holds (1, c_1, ..., c_n) of lambda^n + c_1 lambda^{n-1} + ...
            a_ref = c[1:][::-1]
            assert np.abs(char_poly(A) - a_ref).max() < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_spectrum_conjugate_closed_and_sorted(self, seed):
        A = np.random.default_rng(seed).normal(size=(4, 4))
        spec = eigenvalues(A)
        assert spec.is_conjugate_closed()
        v = spec.values
        keys = list(zip(v.real, v.imag))
        assert keys == sorted(keys)


class TestStructure:
    def test_controller_form_controllable(self):
        from canon_lti.canonical import CanonicalSiso, canonical_to_statespace

        c = CanonicalSiso(a=[0.1, -0.7, 0.2], b=[1.0, 0.0, -1.0])
        sys = canonical_to_statespace(c)
        ctrb = controllability_matrix(sys)
        assert np.linalg.matrix_rank(ctrb) == 3

    def test_zero_c_unobservable(self):
        sys = StateSpaceSystem(A=np.eye(2) * 0.5, B=np.ones((2, 1)), C=np.zeros((1, 2)), D=[[0.0]])
        O = observability_matrix(sys)
        assert np.all(O == 0.0)
        ok, _, ro = is_minimal(sys)
        assert not ok and ro == 0

    def test_random_minimal_ranks(self):
        sys, _ = make_system(3, seed=21)
        ok, rc, ro = is_minimal(sys)
        assert ok and rc == 3 and ro == 3

    def test_unreachable_mode(self):
        A = np.diag([0.5, -0.3])
        B = np.array([[1.0], [0.0]])  # second mode unreachable
        C = np.array([[1.0, 1.0]])
        sys = StateSpaceSystem(A=A, B=B, C=C, D=[[0.0]])
        ok, rc, _ = is_minimal(sys)
        assert not ok and rc == 1

    def test_scalar_minimal(self):
        sys = scalar_system()
        assert is_minimal(sys)[0]


class TestStability:
    def test_examples(self):
        assert is_stable(np.diag([0.98, -0.9]))
        from canon_lti.canonical import companion_matrix, vieta_inverse

        # |product of roots| = |a_0| = 1.5 forces a root outside the disk
        a = np.array([1.5, 0.2, 0.1])
        assert not is_stable(companion_matrix(a))
        assert vieta_inverse(a).spectral_radius() > 1.0

    def test_margin(self):
        A = np.diag([0.95, 0.1])
        assert is_stable(A)
        assert not is_stable(A, margin=0.1)


class TestGramians:
    def test_scalar_geometric_series(self):
        sys = scalar_system()
        W_c, _ = gramians(sys)
        assert abs(W_c[0, 0] - 4.0 / 3.0) < 1e-12

    def test_residuals(self):
        for seed in range(10):
            sys, _ = make_system(3, seed=seed)
            W_c, W_o = gramians(sys)
            r_c = np.linalg.norm(sys.A @ W_c @ sys.A.T + sys.B @ sys.B.T - W_c)
            r_o = np.linalg.norm(sys.A.T @ W_o @ sys.A + sys.C.T @ sys.C - W_o)
            assert r_c < 1e-10 * max(1.0, np.linalg.norm(W_c))
            assert r_o < 1e-10 * max(1.0, np.linalg.norm(W_o))

    def test_scipy_cross_check(self):
        from scipy import linalg as sla

        sys, _ = make_system(4, seed=3)
        W_c, _ = gramians(sys)
        ref = sla.solve_discrete_lyapunov(sys.A, sys.B @ sys.B.T)
        assert np.abs(W_c - ref).max() < 1e-10 * max(1.0, np.abs(ref).max())

    def test_unstable_rejected(self):
        with pytest.raises(UnstableSystemError):
            solve_discrete_lyapunov(np.diag([1.1, 0.2]), np.eye(2))

    def test_doubling_branch_matches_direct(self):
        # force the iteration path with a 13-state stable system
        rng = np.random.default_rng(8)
        A = rng.normal(size=(13, 13))
        A *= 0.7 / max(np.abs(np.linalg.eigvals(A)))
        Q = np.eye(13)
        W = solve_discrete_lyapunov(A, Q)
        assert np.abs(A @ W @ A.T + Q - W).max() < 1e-9 * np.abs(W).max()


class TestSimilarity:
    def test_identity(self):
        sys, noise = make_system(2, seed=5, sigma_state=0.3)
        sys2, noise2 = apply_similarity(sys, noise, np.eye(2))
        assert np.allclose(sys2.A, sys.A) and np.allclose(sys2.B, sys.B)
        assert np.allclose(noise2.P0, noise.P0)

    def test_scalar_scaling(self):
        sys, noise = make_system(2, seed=6)
        sys2, _ = apply_similarity(sys, noise, 2.0 * np.eye(2))
        assert np.allclose(sys2.A, sys.A)
        assert np.allclose(sys2.B, sys.B / 2.0)
        assert np.allclose(sys2.C, sys.C * 2.0)
        for t in range(5):
            assert np.allclose(markov_parameter(sys, t), markov_parameter(sys2, t))

    def test_loglik_invariance(self, rng):
        sys, noise = make_system(2, seed=14, sigma_state=0.3)
        traj = simulate(sys, noise, rng.normal(size=100), seed=2)
        T = random_similarity(2, rng)
        sys2, noise2 = apply_similarity(sys, noise, T)
        ll1, _ = kalman_loglik(sys, noise, traj)
        ll2, _ = kalman_loglik(sys2, noise2, traj)
        assert abs(ll1 - ll2) < 1e-8 * abs(ll1)

    def test_singular_transform_rejected(self):
        sys, noise = make_system(2, seed=5)
        with pytest.raises(IllConditionedTransformError):
            apply_similarity(sys, noise, np.zeros((2, 2)))

    def test_invariants_suite(self, rng):
        # eigenvalues, markov, hankel, transfer all invariant
        sys, noise = make_system(3, seed=31)
        T = random_similarity(3, rng)
        sys2, _ = apply_similarity(sys, noise, T)
        e1, e2 = eigenvalues(sys.A).values, eigenvalues(sys2.A).values
        assert np.abs(e1 - e2).max() < 1e-8
        G1 = transfer_function(sys, 1.3 + 0.4j)
        G2 = transfer_function(sys2, 1.3 + 0.4j)
        assert np.abs(G1 - G2).max() < 1e-8 * max(1.0, np.abs(G1).max())
