import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canon_lti.canonical import (
    CanonicalForm,
    CanonicalSiso,
    canonical_to_statespace,
    check_statistical_isomorphism,
    companion_matrix,
    grad_neg_log_vandermonde,
    to_controller_form,
    vandermonde_log_abs_det,
    vieta_forward,
    vieta_inverse,
    _vieta_forward_complex,
)
from canon_lti.exceptions import (
    DegenerateSpectrumError,
    NotControllableError,
)
from canon_lti.numdiff import central_gradient
from canon_lti.priors import stability_triangle_contains
from canon_lti.systems import (
    EigenSpectrum,
    NoiseSpec,
    StateSpaceSystem,
    apply_similarity,
    controllability_matrix,
    eigenvalues,
    is_minimal,
    markov_parameters,
    observability_matrix,
)

from conftest import make_system, random_similarity


class TestRealization:
    def test_template(self):
        c = CanonicalSiso(a=[0.1, -0.7], b=[1.0, 0.0], d0=0.0)
        sys = canonical_to_statespace(c)
        assert np.allclose(sys.A, [[0.0, 1.0], [-0.1, 0.7]])
        assert np.allclose(sys.B, [[0.0], [1.0]])
        assert np.allclose(sys.C, [[1.0, 0.0]])

    def test_companion_eigenvalues_match_roots(self):
        a = np.array([0.12, -0.5, 0.3])
        sys = canonical_to_statespace(CanonicalSiso(a=a, b=np.ones(3)))
        assert np.abs(eigenvalues(sys.A).values - vieta_inverse(a).values).max() < 1e-12

    def test_always_controllable(self, rng):
        for _ in range(100):
            a = rng.uniform(-0.4, 0.4, size=3)
            b = rng.normal(size=3)
            sys = canonical_to_statespace(CanonicalSiso(a=a, b=b))
            assert np.linalg.matrix_rank(controllability_matrix(sys)) == 3

    def test_observer_form_always_observable(self, rng):
        for _ in range(50):
            a = rng.uniform(-0.4, 0.4, size=3)
            b = rng.normal(size=3)
            sys = canonical_to_statespace(
                CanonicalSiso(a=a, b=b, form=CanonicalForm.OBSERVER)
            )
            assert np.linalg.matrix_rank(observability_matrix(sys)) == 3
            assert np.allclose(sys.C, [[1.0, 0.0, 0.0]])

    def test_observer_form_shares_characteristic_polynomial(self):
        # the observer parameterization shares A (hence a) with the
        # controller form; its b coefficients live in a different basis
        from canon_lti.systems import char_poly

        o = CanonicalSiso(a=[0.1, -0.7], b=[0.8, -0.3], d0=0.5, form=CanonicalForm.OBSERVER)
        sys = canonical_to_statespace(o)
        assert np.abs(char_poly(sys.A) - o.a).max() < 1e-12
        c, _ = to_controller_form(sys)
        assert np.abs(c.a - o.a).max() < 1e-10
        assert abs(c.d0 - o.d0) < 1e-12


class TestToControllerForm:
    def test_fixed_point(self):
        c = CanonicalSiso(a=[0.1, -0.7, 0.05], b=[1.0, 0.2, -0.4], d0=0.3)
        sys = canonical_to_statespace(c)
        c2, w = to_controller_form(sys)
        assert np.abs(w.T - np.eye(3)).max() < 1e-10
        assert np.abs(c2.a - c.a).max() < 1e-10
        assert np.abs(c2.b - c.b).max() < 1e-10
        assert abs(c2.d0 - c.d0) < 1e-12

    def test_markov_agreement(self):
        for seed in range(10):
            sys, _ = make_system(3, seed=seed)
            c, _ = to_controller_form(sys)
            canon = canonical_to_statespace(c)
            M1 = markov_parameters(sys, 10)
            M2 = markov_parameters(canon, 10)
            assert np.abs(M1 - M2).max() < 1e-8 * max(1.0, np.abs(M1).max())

    def test_round_trip_through_similarity(self, rng):
        for seed in range(20):
            c = CanonicalSiso(
                a=vieta_forward(rng.uniform(-0.8, 0.8, size=3)),
                b=rng.normal(size=3),
                d0=float(rng.normal()),
            )
            sys = canonical_to_statespace(c)
            noise = NoiseSpec.default(3)
            T = random_similarity(3, rng)
            moved, _ = apply_similarity(sys, noise, T)
            c2, _ = to_controller_form(moved)
            assert np.abs(c2.a - c.a).max() < 1e-7
            assert np.abs(c2.b - c.b).max() < 1e-7
            assert abs(c2.d0 - c.d0) < 1e-7

    def test_witness_applies_to_canonical(self, rng):
        sys, noise = make_system(3, seed=77)
        c, w = to_controller_form(sys)
        moved, _ = apply_similarity(sys, noise, w.T)
        canon = canonical_to_statespace(c)
        assert np.abs(moved.A - canon.A).max() < 1e-8
        assert np.abs(moved.B - canon.B).max() < 1e-8
        assert np.abs(moved.C - canon.C).max() < 1e-8

    def test_toeplitz_factorization(self, rng):
        # T_c^{-1} = [A^{n-1}B ... B] @ unit-lower-triangular Toeplitz(a)
        sys, _ = make_system(4, seed=13)
        from canon_lti.systems import char_poly

        a = char_poly(sys.A)
        n = 4
        c, w = to_controller_form(sys)
        K = np.hstack(
            [np.linalg.matrix_power(sys.A, n - 1 - j) @ sys.B for j in range(n)]
        )
        L = np.eye(n)
        for col in range(n):
            for row in range(col + 1, n):
                L[row, col] = a[n - (row - col)]
        assert np.abs(w.T - K @ L).max() < 1e-10 * max(1.0, np.abs(w.T).max())

    def test_uncontrollable_rejected(self):
        A = np.diag([0.5, -0.3])
        B = np.array([[1.0], [0.0]])
        sys = StateSpaceSystem(A=A, B=B, C=np.ones((1, 2)), D=[[0.0]])
        with pytest.raises(NotControllableError) as err:
            to_controller_form(sys)
        assert err.value.rank == 1


class TestVieta:
    def test_forward_real(self):
        a = vieta_forward(EigenSpectrum([0.5, 0.2]))
        assert np.allclose(a, [0.1, -0.7], atol=1e-15)

    def test_forward_conjugate_pair(self):
        rho, theta = 0.8, np.pi / 3
        lam = rho * np.exp(1j * theta)
        a = vieta_forward(EigenSpectrum([lam, np.conj(lam)]))
        assert np.allclose(a, [0.64, -0.8], atol=1e-14)

    def test_inverse_examples(self):
        assert np.allclose(np.sort(vieta_inverse([0.1, -0.7]).values.real), [0.2, 0.5])
        roots = vieta_inverse([0.25, 0.0])
        assert np.allclose(sorted(roots.values, key=lambda z: z.imag), [-0.5j, 0.5j])

    def test_round_trip_n5(self, rng):
        for _ in range(30):
            roots = EigenSpectrum(rng.uniform(-0.9, 0.9, size=5))
            a = vieta_forward(roots)
            back = vieta_inverse(a)
            assert np.abs(back.values - roots.values).max() < 1e-9

    def test_non_conjugate_closed_rejected(self):
        with pytest.raises(ValueError):
            vieta_forward([0.5 + 0.2j, 0.1])

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=-0.99, max_value=0.99),
        st.floats(min_value=-1.99, max_value=1.99),
    )
    def test_stability_iff_schur_triangle(self, a0, a1):
        inside = stability_triangle_contains(a0, a1)
        radius = vieta_inverse([a0, a1]).spectral_radius()
        if inside:
            assert radius < 1.0 + 1e-12
        if radius < 1.0 - 1e-9:
            assert abs(a0) < 1.0 and abs(a1) < 1.0 + a0 + 1e-9


class TestVandermonde:
    def test_single_pair(self):
        assert abs(vandermonde_log_abs_det(EigenSpectrum([0.5, 0.2])) - np.log(0.3)) < 1e-14

    def test_symmetric_pair(self):
        assert abs(vandermonde_log_abs_det(EigenSpectrum([0.5, -0.5]))) < 1e-14

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateSpectrumError):
            vandermonde_log_abs_det(EigenSpectrum([0.5, 0.5 + 1e-10]))

    def test_permutation_invariant(self):
        v1 = vandermonde_log_abs_det(EigenSpectrum([0.1, 0.5, -0.3]))
        v2 = vandermonde_log_abs_det(EigenSpectrum([-0.3, 0.1, 0.5]))
        assert v1 == v2

    def test_fd_jacobian_real_roots(self, rng):
        # |det d(vieta)/d(roots)| from central differences matches the product
        for _ in range(20):
            roots = np.sort(rng.uniform(-0.9, 0.9, size=4))
            if np.min(np.diff(roots)) < 1e-2:
                continue

            def f(lams):
                return vieta_forward(EigenSpectrum(lams))

            J = np.empty((4, 4))
            h = 1e-6
            for j in range(4):
                xp = roots.copy()
                xm = roots.copy()
                xp[j] += h
                xm[j] -= h
                J[:, j] = (f(xp) - f(xm)) / (2 * h)
            fd = abs(np.linalg.det(J))
            exact = np.exp(vandermonde_log_abs_det(EigenSpectrum(roots)))
            assert abs(fd - exact) < 1e-5 * exact

    def test_fd_jacobian_complex_roots(self, rng):
        # complex-coordinate Jacobian via central differences in C
        roots = np.array([0.3 + 0.4j, 0.3 - 0.4j, -0.5 + 0.1j, -0.5 - 0.1j])
        n = 4
        h = 1e-6
        J = np.empty((n, n), dtype=complex)
        for j in range(n):
            xp = roots.astype(complex)
            xm = roots.astype(complex)
            xp[j] += h
            xm[j] -= h
            J[:, j] = (_vieta_forward_complex(xp) - _vieta_forward_complex(xm)) / (2 * h)
        fd = abs(np.linalg.det(J))
        exact = np.exp(vandermonde_log_abs_det(EigenSpectrum(roots)))
        assert abs(fd - exact) < 1e-5 * exact

    def test_gradient_vs_fd(self, rng):
        for _ in range(10):
            roots = rng.uniform(-0.9, 0.9, size=3)
            if np.min(np.diff(np.sort(roots))) < 0.05:
                continue
            a = vieta_forward(EigenSpectrum(roots))

            def neg_log_vdm(avec):
                return -vandermonde_log_abs_det(vieta_inverse(avec))

            g = grad_neg_log_vandermonde(a)
            fd = central_gradient(neg_log_vdm, a, h=1e-6)
            assert np.abs(g - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())


class TestStatisticalIsomorphism:
    def test_similarity_image_isomorphic(self, rng):
        sys, noise = make_system(2, seed=3, sigma_state=0.3)
        T = random_similarity(2, rng)
        sys2, noise2 = apply_similarity(sys, noise, T)
        assert check_statistical_isomorphism(sys, noise, sys2, noise2)

    def test_perturbed_dynamics_not_isomorphic(self):
        c = CanonicalSiso(a=[0.1, -0.7], b=[1.0, 0.5])
        c2 = CanonicalSiso(a=[0.2, -0.7], b=[1.0, 0.5])
        noise = NoiseSpec.default(2)
        assert not check_statistical_isomorphism(
            canonical_to_statespace(c), noise, canonical_to_statespace(c2), noise
        )

    def test_scaled_observation_noise_not_isomorphic(self):
        c = CanonicalSiso(a=[0.1, -0.7], b=[1.0, 0.5])
        sys = canonical_to_statespace(c)
        n1 = NoiseSpec.default(2, sigma_state=0.3, sigma_obs=0.5)
        n2 = NoiseSpec.default(2, sigma_state=0.3, sigma_obs=1.0)
        assert not check_statistical_isomorphism(sys, n1, sys, n2)

    def test_nonminimal_rejected(self):
        A = np.diag([0.5, -0.3])
        B = np.array([[1.0], [0.0]])
        sys = StateSpaceSystem(A=A, B=B, C=np.ones((1, 2)), D=[[0.0]])
        noise = NoiseSpec.default(2)
        with pytest.raises(NotControllableError):
            check_statistical_isomorphism(sys, noise, sys, noise)
