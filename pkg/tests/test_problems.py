"""Problem-model tests against independently derived posterior values."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskaverse.errors import InvalidProblem, UnknownCatalogId, UnsupportedProblem
from riskaverse.numerics import integrate_box
from riskaverse.problems import (
    Diffeomorphism,
    ObservationSpace,
    ParameterSpace,
    affine_map,
    augment_superfluous,
    bernoulli_observation,
    bernoulli_trials,
    binomial_restricted,
    builtin_problem,
    cube_map,
    finite_categorical,
    finite_posterior,
    gaussian_mean,
    posterior_weight,
    reparameterize,
    transform_observations,
)


def normal_pdf(x, mean, sd):
    return math.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def normal_mass(lo, hi, mean, sd):
    return 0.5 * (
        math.erf((hi - mean) / (sd * math.sqrt(2.0)))
        - math.erf((lo - mean) / (sd * math.sqrt(2.0)))
    )


def two_hypothesis_problem():
    return finite_categorical(
        theta_points=[0.0, 1.0],
        probs=[[0.2, 0.8], [0.7, 0.3]],
        prior=[0.5, 0.5],
    )


class TestFinitePosterior:
    def test_two_hypotheses_first_symbol(self):
        # joint masses 0.5*0.2 and 0.5*0.7 normalize to 2/9, 7/9
        problem = two_hypothesis_problem()
        w = finite_posterior(problem, np.array([0.0]))
        assert w[0] == pytest.approx(2.0 / 9.0, rel=1e-12)
        assert w[1] == pytest.approx(7.0 / 9.0, rel=1e-12)

    def test_weights_sum_to_one(self):
        problem = two_hypothesis_problem()
        w = finite_posterior(problem, np.array([1.0]))
        assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)

    def test_posterior_weight_matches_vector(self):
        problem = two_hypothesis_problem()
        w = finite_posterior(problem, np.array([0.0]))
        assert posterior_weight(problem, np.array([0.0]), np.array([1.0])) == w[1]

    def test_unknown_theta_rejected(self):
        problem = two_hypothesis_problem()
        with pytest.raises(InvalidProblem):
            posterior_weight(problem, np.array([0.0]), np.array([0.5]))

    @given(
        a=st.floats(0.05, 0.95),
        b=st.floats(0.05, 0.95),
        prior0=st.floats(0.1, 0.9),
    )
    @settings(max_examples=30, deadline=None)
    def test_two_point_posterior_closed_form(self, a, b, prior0):
        if abs(a - b) < 1e-3:
            return
        problem = finite_categorical(
            theta_points=[0.0, 1.0],
            probs=[[a, 1.0 - a], [b, 1.0 - b]],
            prior=[prior0, 1.0 - prior0],
        )
        w = finite_posterior(problem, np.array([0.0]))
        expect = prior0 * a / (prior0 * a + (1.0 - prior0) * b)
        assert w[0] == pytest.approx(expect, rel=1e-12)


class TestContinuousPosterior:
    def test_gaussian_conjugate_density(self):
        # unit-variance likelihood and standard prior give a posterior
        # centered at x/2 with variance 1/2, up to window truncation
        problem = gaussian_mean()
        x = np.array([1.0])
        sd = math.sqrt(0.5)
        mass = normal_mass(-4.0, 4.0, 0.5, sd)
        for theta in (0.5, 1.2, -0.3):
            got = posterior_weight(problem, x, np.array([theta]))
            want = normal_pdf(theta, 0.5, sd) / mass
            assert got == pytest.approx(want, rel=1e-7)

    def test_bernoulli_posterior_density(self):
        # uniform prior on [0.05, 0.95]; s=1 of n=4 gives density
        # p(1-p)^3 / integral of q(1-q)^3
        problem = bernoulli_trials(n=4)
        x = bernoulli_observation(4, 1)

        def antideriv(q):
            return q**2 / 2 - q**3 + 0.75 * q**4 - q**5 / 5

        z = antideriv(0.95) - antideriv(0.05)
        for p in (0.2, 0.5, 0.77):
            got = posterior_weight(problem, x, np.array([p]))
            assert got == pytest.approx(p * (1 - p) ** 3 / z, rel=1e-9)

    def test_posterior_integrates_to_one(self):
        problem = bernoulli_trials(n=4)
        x = bernoulli_observation(4, 3)
        res = integrate_box(
            lambda ts: np.array([posterior_weight(problem, x, t) for t in ts]),
            problem.theta_space.lower,
            problem.theta_space.upper,
            tol=1e-7,
            vectorized=True,
        )
        assert res.value == pytest.approx(1.0, abs=1e-6)


class TestCatalog:
    def test_bernoulli_support_order_and_masses(self):
        problem = bernoulli_trials(n=2)
        sup = problem.obs_space.support_array()
        assert sup.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
        p = 0.3
        masses = problem.support_masses(np.array([p]))
        want = [0.7 * 0.7, 0.3 * 0.7, 0.3 * 0.7, 0.3 * 0.3]
        assert masses == pytest.approx(want, rel=1e-12)

    def test_theta_batch_agrees_with_likelihood(self):
        problem = bernoulli_trials(n=5)
        x = bernoulli_observation(5, 2)
        ps = np.linspace(0.1, 0.9, 7)[:, None]
        batch = problem.likelihoods_over(ps, x)
        loop = [problem.likelihood(p, x) for p in ps]
        assert batch.tolist() == loop

    def test_binomial_restricted_box(self):
        problem = binomial_restricted(n=6, eps=0.1)
        assert problem.theta_space.lower[0] == 0.1
        assert problem.theta_space.upper[0] == 0.5

    def test_tilted_prior_integrates_to_one(self):
        problem = bernoulli_trials(n=2, prior={"kind": "tilted", "slope": 0.5})
        res = integrate_box(
            problem.prior_values,
            problem.theta_space.lower,
            problem.theta_space.upper,
            tol=1e-10,
            vectorized=True,
        )
        assert res.value == pytest.approx(1.0, abs=1e-9)

    def test_tilted_prior_rejects_nonpositive_slope_combo(self):
        with pytest.raises(InvalidProblem):
            bernoulli_trials(n=2, prior={"kind": "tilted", "slope": 10.0})

    def test_gaussian_density_normalized_over_window(self):
        problem = gaussian_mean(sigma=1.0)
        res = integrate_box(
            lambda xs: problem.densities_at(np.array([0.7]), xs),
            problem.obs_space.lower,
            problem.obs_space.upper,
            tol=1e-10,
            vectorized=True,
        )
        assert res.value == pytest.approx(1.0, abs=1e-9)

    def test_builtin_problem_dispatch(self):
        problem = builtin_problem("bernoulli_trials", {"n": 3})
        assert problem.label == "bernoulli_trials"
        assert problem.meta["bernoulli_n"] == 3

    def test_unknown_catalog_id(self):
        with pytest.raises(UnknownCatalogId):
            builtin_problem("poisson_arrivals")

    def test_bernoulli_observation_helper(self):
        assert bernoulli_observation(5, 2).tolist() == [1, 1, 0, 0, 0]
        with pytest.raises(InvalidProblem):
            bernoulli_observation(3, 4)


class TestValidation:
    def test_rows_must_normalize(self):
        with pytest.raises(InvalidProblem, match="sum"):
            finite_categorical([0.0, 1.0], [[0.5, 0.4], [0.7, 0.3]])

    def test_rows_must_be_positive(self):
        with pytest.raises(InvalidProblem, match="positive"):
            finite_categorical([0.0, 1.0], [[1.0, 0.0], [0.7, 0.3]])

    def test_duplicate_rows_rejected(self):
        with pytest.raises(InvalidProblem, match="same distribution"):
            finite_categorical([0.0, 1.0], [[0.4, 0.6], [0.4, 0.6]])

    def test_prior_masses_must_sum(self):
        with pytest.raises(InvalidProblem, match="sum"):
            finite_categorical(
                [0.0, 1.0], [[0.2, 0.8], [0.7, 0.3]], prior=[0.6, 0.6]
            )

    def test_duplicate_support_points_rejected(self):
        with pytest.raises(InvalidProblem, match="distinct"):
            ObservationSpace.discrete([np.array([0.0]), np.array([0.0])])

    def test_parameter_bounds_ordered(self):
        with pytest.raises(InvalidProblem):
            ParameterSpace([1.0], [0.0])


class TestReparameterize:
    def test_finite_points_move_posterior_stays(self):
        problem = two_hypothesis_problem()
        moved = reparameterize(problem, affine_map(3.0, 1.0))
        pts = moved.finite_points_array()
        assert pts.ravel().tolist() == [1.0, 4.0]
        w0 = finite_posterior(problem, np.array([0.0]))
        w1 = finite_posterior(moved, np.array([0.0]))
        assert w1.tolist() == w0.tolist()

    def test_continuous_density_transforms_with_jacobian(self):
        problem = bernoulli_trials(n=4)
        cubed = reparameterize(problem, cube_map())
        assert cubed.theta_space.lower[0] == pytest.approx(0.05**3)
        assert cubed.theta_space.upper[0] == pytest.approx(0.95**3)
        x = bernoulli_observation(4, 1)
        p = 0.4
        base = posterior_weight(problem, x, np.array([p]))
        moved = posterior_weight(cubed, x, np.array([p**3]))
        assert moved == pytest.approx(base / (3.0 * p**2), rel=1e-7)

    def test_pushforward_mass_recorded(self):
        problem = bernoulli_trials(n=2)
        moved = reparameterize(problem, affine_map(2.0))
        assert moved.meta["reparam_mass"] == pytest.approx(1.0, abs=1e-6)

    def test_broken_inverse_rejected(self):
        bad = Diffeomorphism(
            forward=lambda p: p * 2.0,
            inverse=lambda q: q,
            jacobian_det=lambda p: 2.0,
            name="broken",
            vectorized=True,
        )
        with pytest.raises(InvalidProblem, match="roundtrip"):
            reparameterize(bernoulli_trials(n=2), bad)

    @given(scale=st.floats(0.2, 5.0), shift=st.floats(-3.0, 3.0))
    @settings(max_examples=20, deadline=None)
    def test_affine_keeps_finite_posterior(self, scale, shift):
        problem = two_hypothesis_problem()
        moved = reparameterize(problem, affine_map(scale, shift))
        w0 = finite_posterior(problem, np.array([1.0]))
        w1 = finite_posterior(moved, np.array([1.0]))
        assert w1.tolist() == w0.tolist()


class TestTransformObservations:
    def test_discrete_relabel_keeps_posterior(self):
        problem = two_hypothesis_problem()
        relabeled = transform_observations(problem, affine_map(2.0, 1.0))
        sup = relabeled.obs_space.support_array()
        assert sup.ravel().tolist() == [1.0, 3.0]
        w0 = finite_posterior(problem, np.array([0.0]))
        w1 = finite_posterior(relabeled, np.array([1.0]))
        assert w1.tolist() == w0.tolist()

    def test_continuous_density_picks_up_jacobian(self):
        problem = gaussian_mean()
        scaled = transform_observations(problem, affine_map(2.0))
        theta = np.array([0.3])
        y = 1.6
        want = normal_pdf(y / 2.0, 0.3, 1.0) / 2.0
        assert scaled.likelihood(theta, np.array([y])) == pytest.approx(want, rel=1e-12)

    def test_continuous_density_still_normalized(self):
        problem = gaussian_mean()
        scaled = transform_observations(problem, affine_map(2.0))
        res = integrate_box(
            lambda ys: scaled.densities_at(np.array([0.0]), ys),
            scaled.obs_space.lower,
            scaled.obs_space.upper,
            tol=1e-9,
            vectorized=True,
        )
        assert res.value == pytest.approx(1.0, abs=1e-8)

    def test_posterior_invariant_under_obs_scaling(self):
        problem = gaussian_mean()
        scaled = transform_observations(problem, affine_map(2.0))
        theta = np.array([0.4])
        base = posterior_weight(problem, np.array([1.0]), theta)
        moved = posterior_weight(scaled, np.array([2.0]), theta)
        assert moved == pytest.approx(base, rel=1e-7)


class TestAugmentSuperfluous:
    def test_masses_are_products(self):
        problem = bernoulli_trials(n=2)
        noisy = augment_superfluous(problem, [(0.0, 0.5), (1.0, 0.5)])
        masses = noisy.support_masses(np.array([0.3]))
        base = problem.support_masses(np.array([0.3]))
        assert masses.tolist() == np.repeat(base, 2).ravel().__mul__(0.5).tolist()
        assert float(np.sum(masses)) == pytest.approx(1.0, abs=1e-12)

    def test_posterior_untouched(self):
        problem = bernoulli_trials(n=3)
        noisy = augment_superfluous(problem, [(0.0, 0.25), (1.0, 0.75)])
        x = bernoulli_observation(3, 2)
        xy = np.concatenate([x, [1.0]])
        base = posterior_weight(problem, x, np.array([0.6]))
        aug = posterior_weight(noisy, xy, np.array([0.6]))
        assert aug == pytest.approx(base, rel=1e-9)

    def test_finite_posterior_preserved_exactly(self):
        problem = two_hypothesis_problem()
        noisy = augment_superfluous(problem, [(5.0, 0.5), (6.0, 0.5)])
        w0 = finite_posterior(problem, np.array([0.0]))
        w1 = finite_posterior(noisy, np.array([0.0, 5.0]))
        assert float(np.max(np.abs(w1 - w0))) <= 1e-12

    def test_meta_records_parent(self):
        problem = bernoulli_trials(n=2)
        noisy = augment_superfluous(problem, [(0.0, 0.5), (1.0, 0.5)])
        assert noisy.meta["augmented_from"] is problem
        assert noisy.meta["noise"] == ((0.0, 0.5), (1.0, 0.5))

    def test_noise_must_normalize(self):
        with pytest.raises(InvalidProblem, match="sum"):
            augment_superfluous(bernoulli_trials(n=2), [(0.0, 0.5), (1.0, 0.6)])

    def test_continuous_observations_rejected(self):
        with pytest.raises(UnsupportedProblem):
            augment_superfluous(gaussian_mean(), [(0.0, 1.0)])


class TestSpaces:
    def test_interior_grid_avoids_boundary(self):
        space = ParameterSpace([0.0], [1.0])
        grid = space.interior_grid(4)
        assert grid.ravel().tolist() == [0.125, 0.375, 0.625, 0.875]

    def test_contains_with_tolerance(self):
        space = ParameterSpace([0.0, 0.0], [1.0, 2.0])
        assert space.contains([0.5, 1.0])
        assert not space.contains([1.1, 1.0])
        assert space.contains([1.0 + 1e-12, 1.0], tol=1e-9)

    def test_diameter(self):
        space = ParameterSpace([0.0, 0.0], [3.0, 4.0])
        assert space.diameter == 5.0
