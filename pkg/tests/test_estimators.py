"""Estimator and limit-engine tests.

Reference values come from closed-form posteriors (conjugate Gaussian,
Beta), hand-enumerated finite problems, and dense Simpson integration.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskaverse.errors import (
    ScheduleError,
    SingularInformation,
    UnsupportedProblem,
)
from riskaverse.estimators import (
    ConvergenceTrace,
    KSchedule,
    expected_gain,
    fmap_estimate,
    generalized_wf,
    map_estimate,
    ml_estimate,
    posterior_mean,
    risk_averse_estimate,
    wf_estimate,
)
from riskaverse.losses import Loss, make_loss, raised_cosine, truncated_quadratic
from riskaverse.numerics import GridSpec, grid_argmax
from riskaverse.problems import (
    EstimationProblem,
    ObservationSpace,
    ParameterSpace,
    bernoulli_observation,
    bernoulli_trials,
    binomial_restricted,
    cube_map,
    finite_categorical,
    finite_posterior,
    gaussian_mean,
    posterior_weight,
    reparameterize,
)

X0 = np.array([0.0])


def two_hypothesis():
    # posterior after x=0: (2/9, 7/9)
    return finite_categorical(
        [[0.0], [1.0]], [[0.2, 0.8], [0.7, 0.3]], prior=[0.5, 0.5]
    )


def normal_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def gauss_posterior_density(t, x=1.0, lo=-4.0, hi=4.0):
    """Truncated conjugate posterior for the unit-scale Gaussian problem."""
    mean = 0.5 * x
    sd = math.sqrt(0.5)
    z = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd)
    pdf = math.exp(-0.5 * ((t - mean) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    return pdf / z


def point_values(est):
    return sorted(float(p[0]) for p in est.points)


# ---------------------------------------------------------------------------
# schedules and traces


def test_geometric_schedule_default():
    sched = KSchedule.geometric()
    assert len(sched) == 13
    assert sched.k_values[0] == 1.0
    assert sched.k_values[-1] == 4.0**12
    assert all(b > a for a, b in zip(sched.k_values, sched.k_values[1:]))


def test_schedule_needs_four_levels():
    with pytest.raises(ScheduleError):
        KSchedule((1.0, 2.0, 3.0))


def test_schedule_rejects_nonincreasing_and_nonpositive():
    with pytest.raises(ScheduleError):
        KSchedule((1.0, 2.0, 2.0, 3.0))
    with pytest.raises(ScheduleError):
        KSchedule((0.0, 1.0, 2.0, 3.0))
    with pytest.raises(ScheduleError):
        KSchedule.geometric(base=1.0)


def _dummy_estimates(n):
    from riskaverse.numerics import SetEstimate

    return tuple(SetEstimate((np.array([0.0]),), 1.0, 1e-9, 0.0) for _ in range(n))


def test_trace_rejects_length_mismatch():
    with pytest.raises(ScheduleError):
        ConvergenceTrace((1.0, 2.0), _dummy_estimates(3), (1.0, 1.0), (1.0, 1.0))


def test_trace_rejects_rising_gain():
    with pytest.raises(ScheduleError):
        ConvergenceTrace(
            (1.0, 2.0, 4.0),
            _dummy_estimates(3),
            (0.5, 0.5, 0.7),
            (0.5, 0.5, 0.7),
        )


def test_trace_rows_shape():
    trace, _ = risk_averse_estimate(
        two_hypothesis(), make_loss("quadratic"), truncated_quadratic, x=X0
    )
    rows = list(trace.rows())
    assert len(rows) == len(trace.k_values)
    ks = [r[0] for r in rows]
    assert ks == sorted(ks)
    for row in rows:
        assert len(row) == 4  # k, theta, gain, plateau flag
        assert isinstance(row[-1], bool)


# ---------------------------------------------------------------------------
# MAP over finite parameter sets


def test_map_two_hypothesis():
    est = map_estimate(two_hypothesis(), X0)
    assert point_values(est) == [1.0]
    assert est.value == pytest.approx(7.0 / 9.0, rel=1e-12)


def test_map_uniform_tie_keeps_all_points():
    # identical rows are deliberate here, so skip the identifiability check
    prob = finite_categorical(
        [[0.0], [1.0], [2.0]],
        [[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]],
        validate=False,
    )
    est = map_estimate(prob, X0)
    assert point_values(est) == [0.0, 1.0, 2.0]
    assert est.plateau


def test_map_five_point_prior_shaped():
    # the likelihood column for x=0 is constant, so the posterior is the prior
    prior = [0.1, 0.2, 0.4, 0.2, 0.1]
    rows = [[0.5, 0.05 + 0.08 * i, 0.45 - 0.08 * i] for i in range(5)]
    prob = finite_categorical([[float(i)] for i in range(5)], rows, prior=prior)
    est = map_estimate(prob, X0)
    assert point_values(est) == [2.0]
    assert est.value == pytest.approx(0.4, rel=1e-12)


def test_map_rejects_continuous():
    with pytest.raises(UnsupportedProblem):
        map_estimate(gaussian_mean(), np.array([1.0]))


# ---------------------------------------------------------------------------
# density mode


def test_fmap_gaussian_conjugate_mode():
    est = fmap_estimate(gaussian_mean(), np.array([1.0]))
    (p,) = point_values(est)
    assert abs(p - 0.5) <= est.resolution
    assert est.value == pytest.approx(gauss_posterior_density(p), rel=1e-7)


def test_fmap_binomial_mode():
    est = fmap_estimate(bernoulli_trials(10), bernoulli_observation(10, 3))
    (p,) = point_values(est)
    assert abs(p - 0.3) <= est.resolution


def test_fmap_symmetric_bimodal_returns_both_modes():
    def theta_batch(ts, x):
        t = np.atleast_2d(ts)[:, 0]
        x0 = float(np.atleast_1d(x)[0])
        return np.exp(-0.5 * (x0 - t**2) ** 2) / math.sqrt(2.0 * math.pi)

    prob = EstimationProblem(
        theta_space=ParameterSpace([-2.0], [2.0]),
        obs_space=ObservationSpace.continuous([-8.0], [12.0]),
        prior=lambda t: 0.25,
        likelihood=lambda t, x: float(theta_batch(np.atleast_2d(t), x)[0]),
        label="signed_root",
        theta_batch=theta_batch,
        prior_batch=lambda ts: np.full(np.atleast_2d(ts).shape[0], 0.25),
    )
    # theta and -theta induce the same law; the aliasing is the point here
    est = fmap_estimate(prob, np.array([1.0]))
    pts = point_values(est)
    assert len(pts) == 2
    assert abs(pts[0] + 1.0) <= est.resolution
    assert abs(pts[1] - 1.0) <= est.resolution


def test_fmap_rejects_finite():
    with pytest.raises(UnsupportedProblem):
        fmap_estimate(two_hypothesis(), X0)


# ---------------------------------------------------------------------------
# maximum likelihood


def test_ml_binomial():
    est = ml_estimate(bernoulli_trials(10), bernoulli_observation(10, 3))
    (p,) = point_values(est)
    assert abs(p - 0.3) <= est.resolution


def test_ml_boundary_when_rate_restricted():
    est = ml_estimate(binomial_restricted(10), bernoulli_observation(10, 0))
    (p,) = point_values(est)
    assert abs(p - 0.05) <= est.resolution


def test_ml_gaussian_matches_observation():
    est = ml_estimate(gaussian_mean(), np.array([0.7]))
    (p,) = point_values(est)
    assert abs(p - 0.7) <= est.resolution


def test_ml_finite_tie_set():
    est = ml_estimate(two_hypothesis(), X0)
    assert point_values(est) == [1.0]
    assert est.value == pytest.approx(0.7, rel=1e-12)


# ---------------------------------------------------------------------------
# information-weighted modes


def test_wf_binomial_shifts_mode():
    # density/sqrt(I) with I = n/(p(1-p)) peaks at (s + 1/2)/(n + 1)
    est = wf_estimate(bernoulli_trials(10), bernoulli_observation(10, 3))
    (p,) = point_values(est)
    assert abs(p - 3.5 / 11.0) <= est.resolution


def test_wf_gaussian_equals_density_mode():
    # constant Fisher information: the weight changes nothing
    x = np.array([1.0])
    wf = wf_estimate(gaussian_mean(), x)
    fm = fmap_estimate(gaussian_mean(), x)
    assert len(wf.points) == len(fm.points) == 1
    assert abs(point_values(wf)[0] - point_values(fm)[0]) <= 1e-9


def test_wf_boundary_when_shift_leaves_interval():
    # (0 + 1/2)/11 < 0.05, so the weighted mode pins to the lower edge
    est = wf_estimate(binomial_restricted(10), bernoulli_observation(10, 0))
    (p,) = point_values(est)
    assert abs(p - 0.05) <= est.resolution


def _flat_likelihood_problem():
    support = (np.array([0.0]), np.array([1.0]))
    return EstimationProblem(
        theta_space=ParameterSpace([0.0], [1.0]),
        obs_space=ObservationSpace.discrete(support),
        prior=lambda t: 1.0,
        likelihood=lambda t, x: 0.5,
        label="uninformative",
        mass_fn=lambda t: np.array([0.5, 0.5]),
        prior_batch=lambda ts: np.ones(np.atleast_2d(ts).shape[0]),
    )


def test_wf_raises_when_information_vanishes_everywhere():
    prob = _flat_likelihood_problem()
    with pytest.raises(SingularInformation):
        wf_estimate(prob, np.array([0.0]))


def test_wf_rejects_finite():
    with pytest.raises(UnsupportedProblem):
        wf_estimate(two_hypothesis(), X0)


def test_wf_commutes_with_reparameterization():
    base = bernoulli_trials(10)
    x = bernoulli_observation(10, 3)
    direct = point_values(wf_estimate(base, x))[0]
    cubed = reparameterize(base, cube_map())
    moved = point_values(wf_estimate(cubed, x))[0]
    # image of the direct estimate, allowing a cell on either chart
    assert abs(moved - direct**3) <= 3.0 * direct**2 * 2e-3 + 2e-3


def test_generalized_wf_hellinger_matches_wf():
    prob = bernoulli_trials(10)
    x = bernoulli_observation(10, 3)
    gw = generalized_wf(prob, x, make_loss("hellinger_sq"))
    wf = wf_estimate(prob, x)
    assert abs(point_values(gw)[0] - point_values(wf)[0]) <= gw.resolution + wf.resolution


def test_generalized_wf_quadratic_matches_density_mode():
    x = np.array([1.0])
    gw = generalized_wf(gaussian_mean(), x, make_loss("quadratic"))
    fm = fmap_estimate(gaussian_mean(), x)
    assert abs(point_values(gw)[0] - point_values(fm)[0]) <= gw.resolution + fm.resolution


def test_generalized_wf_weighted_ml_matches_ml():
    # tilted prior separates the likelihood peak from the posterior mode
    prob = bernoulli_trials(10, prior={"kind": "tilted", "slope": 0.9})
    x = bernoulli_observation(10, 3)
    gw = generalized_wf(prob, x, make_loss("weighted_ml"))
    ml = ml_estimate(prob, x)
    fm = fmap_estimate(prob, x)
    assert abs(point_values(gw)[0] - point_values(ml)[0]) <= gw.resolution + ml.resolution
    assert abs(point_values(fm)[0] - point_values(ml)[0]) > 5.0 * (gw.resolution + ml.resolution)


def test_generalized_wf_scale_invariant_bitwise():
    base = make_loss("quadratic")
    scaled = Loss(
        name="quadratic_x4",
        eval=lambda p, a, b: 4.0 * base.eval(p, a, b),
        batch1=lambda p, ts, b: 4.0 * base.batch1(p, ts, b),
    )
    x = np.array([1.0])
    one = generalized_wf(gaussian_mean(), x, base)
    four = generalized_wf(gaussian_mean(), x, scaled)
    assert len(one.points) == len(four.points)
    for a, b in zip(one.points, four.points):
        assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# expected attenuated gain


def test_gain_two_hypothesis_by_hand():
    prob = two_hypothesis()
    L = make_loss("quadratic")
    v = expected_gain(prob, L, truncated_quadratic, 0.5, [1.0], X0)
    assert v == pytest.approx(7.0 / 9.0 + 2.0 / 9.0 * 0.25, rel=1e-12)
    v0 = expected_gain(prob, L, truncated_quadratic, 0.5, [0.0], X0)
    assert v0 == pytest.approx(2.0 / 9.0 + 7.0 / 9.0 * 0.25, rel=1e-12)


def test_gain_limits_in_k():
    prob = two_hypothesis()
    L = make_loss("quadratic")
    assert expected_gain(prob, L, truncated_quadratic, 1e-12, [1.0], X0) == pytest.approx(
        1.0, abs=1e-9
    )
    assert expected_gain(prob, L, truncated_quadratic, 1e12, [1.0], X0) == pytest.approx(
        7.0 / 9.0, rel=1e-12
    )


def test_gain_rejects_bad_k():
    with pytest.raises(ScheduleError):
        expected_gain(two_hypothesis(), make_loss("quadratic"), truncated_quadratic, 0.0, [1.0], X0)
    with pytest.raises(ScheduleError):
        expected_gain(
            two_hypothesis(), make_loss("quadratic"), truncated_quadratic, -1.0, [1.0], X0
        )


def test_gain_continuous_against_simpson():
    prob = gaussian_mean()
    L = make_loss("quadratic")
    k, theta = 2.0, 0.3
    v = expected_gain(prob, L, truncated_quadratic, k, [theta], np.array([1.0]))

    ts = np.linspace(-4.0, 4.0, 80001)
    dens = np.array([gauss_posterior_density(t) for t in ts])
    a = np.where(k * (ts - theta) ** 2 < 1.0, (1.0 - k * (ts - theta) ** 2) ** 2, 0.0)
    h = ts[1] - ts[0]
    weights = np.ones_like(ts)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    simpson = float(np.sum(weights * dens * a)) * h / 3.0
    assert v == pytest.approx(simpson, rel=1e-6)


def test_gain_continuous_small_k_saturates():
    v = expected_gain(
        gaussian_mean(), make_loss("quadratic"), truncated_quadratic, 1e-9, [0.3], np.array([1.0])
    )
    assert 1.0 - 1e-6 <= v <= 1.0 + 1e-9


def test_gain_continuous_large_k_scaling():
    # V_k -> f(theta|x) * (16/15) / sqrt(k) for the truncated quadratic window
    k = 1e8
    theta = 0.5
    v = expected_gain(
        gaussian_mean(), make_loss("quadratic"), truncated_quadratic, k, [theta], np.array([1.0])
    )
    predicted = gauss_posterior_density(theta) * (16.0 / 15.0) / math.sqrt(k)
    assert v == pytest.approx(predicted, rel=1e-3)


def test_gain_sandwich_bounds():
    prob = two_hypothesis()
    L = make_loss("quadratic")
    w = finite_posterior(prob, X0)
    pts = prob.finite_points_array()
    for k in (0.25, 0.5, 2.0, 8.0):
        for j, theta in enumerate(pts):
            v = expected_gain(prob, L, truncated_quadratic, k, theta, X0)
            lvals = np.array([L(prob, p, theta) for p in pts])
            neighborhood = float(np.sum(w[k * lvals < 1.0]))
            assert w[j] - 1e-12 <= v <= neighborhood + 1e-12


@settings(max_examples=40, deadline=None)
@given(
    probs=st.lists(
        st.tuples(st.floats(0.05, 0.95), st.floats(0.05, 0.95)),
        min_size=2,
        max_size=4,
    ),
    k1=st.floats(0.01, 50.0),
    factor=st.floats(1.01, 100.0),
)
def test_gain_monotone_in_k(probs, k1, factor):
    rows = [[a, b, max(1e-6, 2.0 - a - b)] for a, b in probs]
    rows = [[x / sum(r) for x in r] for r in rows]
    prob = finite_categorical([[float(i)] for i in range(len(rows))], rows, validate=False)
    L = make_loss("quadratic")
    for theta in prob.finite_points_array():
        v1 = expected_gain(prob, L, truncated_quadratic, k1, theta, X0)
        v2 = expected_gain(prob, L, truncated_quadratic, k1 * factor, theta, X0)
        assert v2 <= v1 + 1e-12


# ---------------------------------------------------------------------------
# posterior mean (contrast, not an engine mode)


def test_posterior_mean_symmetric_gaussian():
    m = posterior_mean(gaussian_mean(), np.array([0.0]))
    assert abs(float(m[0])) <= 1e-9


def test_posterior_mean_beta():
    prob = bernoulli_trials(10, prior_lower=0.0, prior_upper=1.0)
    m = posterior_mean(prob, bernoulli_observation(10, 3))
    assert float(m[0]) == pytest.approx(1.0 / 3.0, abs=1e-6)


def _two_island_problem():
    def bump(t):
        t = np.atleast_2d(t)[:, 0]
        return np.exp(-(((t - 0.2) / 0.05) ** 2)) + np.exp(-(((t - 0.8) / 0.05) ** 2))

    def mass_fn(t):
        b = float(bump(np.atleast_2d(t))[0])
        return np.array([0.2 * b, 1.0 - 0.2 * b])

    prob = EstimationProblem(
        theta_space=ParameterSpace([0.0], [1.0]),
        obs_space=ObservationSpace.discrete((np.array([0.0]), np.array([1.0]))),
        prior=lambda t: 1.0,
        likelihood=lambda t, x: float(mass_fn(t)[int(float(np.atleast_1d(x)[0]))]),
        label="two_island",
        mass_fn=mass_fn,
        theta_batch=lambda ts, x: (
            0.2 * bump(ts) if float(np.atleast_1d(x)[0]) == 0.0 else 1.0 - 0.2 * bump(ts)
        ),
        prior_batch=lambda ts: np.ones(np.atleast_2d(ts).shape[0]),
    )
    return prob


def test_posterior_mean_lands_between_islands():
    prob = _two_island_problem()
    x = np.array([0.0])
    m = float(posterior_mean(prob, x)[0])
    assert m == pytest.approx(0.5, abs=1e-6)
    # the mean sits where the posterior carries essentially no mass
    ratio = posterior_weight(prob, x, [0.5]) / posterior_weight(prob, x, [0.2])
    assert ratio < 1e-10
    modes = point_values(fmap_estimate(prob, x))
    assert min(abs(m - p) for p in modes) > 0.25


def test_posterior_mean_rejects_finite():
    with pytest.raises(UnsupportedProblem):
        posterior_mean(two_hypothesis(), X0)


# ---------------------------------------------------------------------------
# the limit engine


def test_engine_requires_observation():
    with pytest.raises(UnsupportedProblem):
        risk_averse_estimate(two_hypothesis(), make_loss("quadratic"), truncated_quadratic)


@pytest.mark.parametrize(
    "loss_name,att",
    [
        ("quadratic", truncated_quadratic),
        ("hellinger_sq", raised_cosine),
        ("iro_violating_masses", truncated_quadratic),
    ],
)
def test_engine_finite_limits_inside_map(loss_name, att):
    prob = two_hypothesis()
    trace, est = risk_averse_estimate(prob, make_loss(loss_name), att, x=X0)
    assert not trace.limit.diverged
    assert point_values(est) == point_values(map_estimate(prob, X0))
    assert not est.flagged_empty


def test_engine_finite_tie_keeps_full_set():
    prob = finite_categorical(
        [[0.0], [1.0], [2.0]],
        [[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]],
        validate=False,
    )
    _, est = risk_averse_estimate(prob, make_loss("quadratic"), truncated_quadratic, x=X0)
    assert point_values(est) == [0.0, 1.0, 2.0]


def test_engine_gaussian_hellinger_reaches_weighted_mode():
    prob = gaussian_mean()
    x = np.array([1.0])
    sched = KSchedule.geometric(count=8)
    trace, est = risk_averse_estimate(
        prob, make_loss("hellinger_sq"), truncated_quadratic, sched, x, tol=1e-6
    )
    assert not trace.limit.diverged
    wf = wf_estimate(prob, x)
    assert abs(point_values(est)[0] - point_values(wf)[0]) <= est.resolution + wf.resolution
    # rescaled gains settle to an order-one constant once truncation bites
    tail = trace.per_k_scaled_gain[-3:]
    assert max(tail) <= 1.05 * min(tail)


def test_engine_binomial_g_loss_matches_weighted_density():
    prob = bernoulli_trials(10)
    x = bernoulli_observation(10, 3)
    sched = KSchedule.geometric(count=10)
    L = make_loss("semicontinuous_g", F_weight="two_theta")
    trace, est = risk_averse_estimate(prob, L, truncated_quadratic, sched, x, tol=1e-6)
    assert not trace.limit.diverged
    # uniform prior: density over G'(theta)=2*theta peaks at 2/9
    assert abs(point_values(est)[0] - 2.0 / 9.0) <= est.resolution + 2e-4


def test_engine_gain_sequence_monotone():
    prob = bernoulli_trials(6)
    x = bernoulli_observation(6, 2)
    sched = KSchedule.geometric(count=6)
    trace, _ = risk_averse_estimate(
        prob, make_loss("quadratic"), truncated_quadratic, sched, x, tol=1e-6
    )
    gains = trace.per_k_max_gain
    assert all(b <= a + 1e-7 for a, b in zip(gains, gains[1:]))
    assert gains[0] > gains[-1]
