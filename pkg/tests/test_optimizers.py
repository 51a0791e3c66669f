import numpy as np
import pytest

from heliid import model, optimizers
from heliid.optimizers import (
    GaConfig,
    IwoConfig,
    PemConfig,
    Plant,
    SearchSpace,
    competitive_exclusion,
    disperse,
    minimize_ga,
    minimize_iwo,
    minimize_pem,
    reproduce,
    sigma_schedule,
)


def sphere(x):
    return float(np.sum(np.square(x)))


def box(dim=5, half=5.0):
    return SearchSpace(lower=np.full(dim, -half), upper=np.full(dim, half))


# --- SearchSpace ---------------------------------------------------------------

def test_space_basic_properties():
    space = box()
    assert space.dim == 5
    assert np.array_equal(space.ranges, np.full(5, 10.0))
    assert np.array_equal(space.midpoint(), np.zeros(5))
    assert space.contains(np.zeros(5))
    assert not space.contains(np.full(5, 6.0))


def test_space_clip_and_frozen():
    space = SearchSpace(lower=np.array([-1.0, 0.0]), upper=np.array([1.0, 0.0]),
                        frozen=frozenset({1}))
    out = space.clip(np.array([5.0, 3.0]))
    assert np.array_equal(out, [1.0, 0.0])


def test_space_validation():
    with pytest.raises(ValueError):
        SearchSpace(lower=np.array([1.0]), upper=np.array([0.0]))
    with pytest.raises(ValueError):
        SearchSpace(lower=np.array([-1.0]), upper=np.array([1.0]), frozen=frozenset({0}))


def test_space_sampling_respects_bounds_and_frozen():
    space = SearchSpace(lower=np.array([-2.0, 0.0, -1.0]),
                        upper=np.array([2.0, 0.0, 3.0]), frozen=frozenset({1}))
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = space.sample_uniform(rng)
        assert space.contains(x)
        assert x[1] == 0.0


def test_around_truth_bounds():
    space = SearchSpace.around_truth()
    values = model.TRUTH_HOVER.to_array()
    for i, name in enumerate(model.PARAM_NAMES):
        if name in model.HOVER_ZERO_PARAMS:
            assert space.lower[i] == space.upper[i] == 0.0
            assert i in space.frozen
        else:
            half = max(3.0 * abs(values[i]), 1.0)
            assert space.upper[i] == pytest.approx(half)
            assert space.lower[i] == pytest.approx(-half)
    assert not SearchSpace.around_truth(free_zeros=True).frozen


# --- sigma schedule --------------------------------------------------------------

def test_sigma_schedule_endpoints():
    cfg = IwoConfig(iter_max=200, sigma_initial=0.1, sigma_final=0.001)
    assert sigma_schedule(cfg, 0) == pytest.approx(0.1)
    assert sigma_schedule(cfg, 200) == pytest.approx(0.001)


def test_sigma_schedule_midpoint_cubic():
    cfg = IwoConfig(iter_max=100, sigma_initial=1.0, sigma_final=0.2, n=3.0)
    # ((100-50)/100)^3 * (1.0 - 0.2) + 0.2 = 0.3
    assert sigma_schedule(cfg, 50) == pytest.approx(0.3)


def test_sigma_schedule_monotone_decreasing():
    cfg = IwoConfig()
    values = [sigma_schedule(cfg, i) for i in range(cfg.iter_max + 1)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_sigma_schedule_bounds_checked():
    cfg = IwoConfig(iter_max=10)
    with pytest.raises(ValueError):
        sigma_schedule(cfg, 11)
    with pytest.raises(ValueError):
        sigma_schedule(cfg, -1)


def test_sigma_schedule_degenerate_iter_max():
    cfg = IwoConfig(iter_max=0)
    assert sigma_schedule(cfg, 0) == cfg.sigma_final


# --- reproduce -------------------------------------------------------------------

def test_reproduce_two_plants_full_span():
    cfg = IwoConfig(seeds_min=0, seeds_max=5)
    assert reproduce([-1.0, -3.0], cfg) == [5, 0]


def test_reproduce_linear_interpolation():
    cfg = IwoConfig(seeds_min=0, seeds_max=4)
    assert reproduce([-1.0, -2.0, -3.0], cfg) == [4, 2, 0]


def test_reproduce_all_tied_gives_minimum():
    cfg = IwoConfig(seeds_min=1, seeds_max=5)
    assert reproduce([-2.0, -2.0, -2.0], cfg) == [1, 1, 1]


def test_reproduce_respects_min_offset():
    cfg = IwoConfig(seeds_min=2, seeds_max=4)
    assert reproduce([0.0, -10.0], cfg) == [4, 2]


def test_reproduce_rejects_empty():
    with pytest.raises(ValueError):
        reproduce([], IwoConfig())


# --- disperse --------------------------------------------------------------------

def test_disperse_statistics():
    space = box(dim=3, half=50.0)  # wide box: negligible clipping
    rng = np.random.default_rng(5)
    parent = np.array([1.0, -2.0, 3.0])
    sigma_fraction = 0.02  # absolute sigma = 0.02 * 100 = 2.0
    children = np.array([disperse(parent, sigma_fraction, space, rng) for _ in range(4000)])
    assert np.allclose(children.mean(axis=0), parent, atol=0.15)
    assert np.allclose(children.std(axis=0), 2.0, rtol=0.1)


def test_disperse_clamps_and_freezes():
    space = SearchSpace(lower=np.array([-1.0, 0.0]), upper=np.array([1.0, 0.0]),
                        frozen=frozenset({1}))
    rng = np.random.default_rng(8)
    for _ in range(200):
        child = disperse(np.array([0.9, 0.0]), 0.5, space, rng)
        assert space.contains(child)
        assert child[1] == 0.0


def test_disperse_zero_sigma_is_identity():
    space = box(dim=2)
    rng = np.random.default_rng(0)
    parent = np.array([0.3, -0.7])
    assert np.array_equal(disperse(parent, 0.0, space, rng), parent)


# --- competitive exclusion ---------------------------------------------------------

def plant(cost, birth=0, order=0, parent=None):
    return Plant(x=np.zeros(1), cost=cost, birth=birth, order=order, parent=parent)


def test_exclusion_keeps_fittest():
    pop = [plant(c, order=i) for i, c in enumerate([5.0, 1.0, 3.0, 2.0, 4.0])]
    survivors = competitive_exclusion(pop, 3)
    assert [pl.cost for pl in survivors] == [1.0, 2.0, 3.0]


def test_exclusion_no_op_when_small():
    pop = [plant(1.0), plant(2.0)]
    assert competitive_exclusion(pop, 5) == pop


def test_exclusion_tie_prefers_older_then_insertion():
    pop = [
        plant(1.0, birth=2, order=3),
        plant(1.0, birth=1, order=2),
        plant(1.0, birth=1, order=1),
        plant(0.5, birth=3, order=4),
    ]
    survivors = competitive_exclusion(pop, 2)
    assert [pl.order for pl in survivors] == [4, 1]


def test_exclusion_parent_rescue():
    # parent (order 0) is out of the cut, but its child (order 10) tops the union
    pop = [
        plant(9.0, birth=0, order=0),
        plant(1.0, birth=1, order=10, parent=0),
        plant(2.0, birth=0, order=1),
        plant(3.0, birth=0, order=2),
        plant(4.0, birth=0, order=3),
        plant(5.0, birth=0, order=4),
        plant(6.0, birth=0, order=5),
        plant(7.0, birth=0, order=6),
    ]
    plain = competitive_exclusion(pop, 4)
    assert all(pl.order != 0 for pl in plain)
    rescued = competitive_exclusion(pop, 4, parent_rescue=True)
    assert any(pl.order == 0 for pl in rescued)
    assert len(rescued) == 4


# --- IWO ---------------------------------------------------------------------------

def test_iwo_sphere_convergence():
    space = box()
    hits = 0
    for seed in range(10):
        res = minimize_iwo(sphere, space, IwoConfig(rng_seed=seed))
        assert res.best_cost <= 0.1
        hits += res.best_cost < 1e-3
    assert hits >= 9


def test_iwo_deterministic():
    space = box()
    a = minimize_iwo(sphere, space, IwoConfig(rng_seed=3, iter_max=30))
    b = minimize_iwo(sphere, space, IwoConfig(rng_seed=3, iter_max=30))
    assert np.array_equal(a.best_params, b.best_params)
    assert a.best_cost == b.best_cost
    assert np.array_equal(a.cost_trace, b.cost_trace)
    assert a.evaluations == b.evaluations
    c = minimize_iwo(sphere, space, IwoConfig(rng_seed=4, iter_max=30))
    assert not np.array_equal(a.best_params, c.best_params)


def test_iwo_trace_monotone_and_sized():
    res = minimize_iwo(sphere, box(), IwoConfig(rng_seed=1, iter_max=50))
    assert len(res.cost_trace) == 51
    assert np.all(np.diff(res.cost_trace) <= 0)
    assert res.cost_trace[-1] == res.best_cost


def test_iwo_zero_iterations():
    cfg = IwoConfig(rng_seed=0, iter_max=0, pop_initial=7)
    res = minimize_iwo(sphere, box(), cfg)
    assert res.evaluations == 7
    assert len(res.cost_trace) == 1


def test_iwo_respects_bounds_and_frozen():
    space = SearchSpace(lower=np.array([-1.0, 0.0, -2.0]),
                        upper=np.array([1.0, 0.0, 2.0]), frozen=frozenset({1}))
    shifted = lambda x: sphere(x - np.array([0.5, 0.0, 3.0]))  # optimum outside box
    res = minimize_iwo(shifted, space, IwoConfig(rng_seed=2, iter_max=60))
    assert space.contains(res.best_params)
    assert res.best_params[1] == 0.0
    assert res.best_params[2] == pytest.approx(2.0, abs=0.01)


def test_iwo_escapes_flat_plateau():
    # every random point in the box except a tiny basin scores the same ceiling
    def plateau(x):
        return sphere(x) if np.all(np.abs(x) < 1.0) else 100.0

    res = minimize_iwo(plateau, box(dim=2, half=50.0), IwoConfig(rng_seed=0))
    assert res.best_cost < 100.0


def test_iwo_population_cap_enforced():
    calls = []

    def counting(x):
        calls.append(1)
        return sphere(x)

    cfg = IwoConfig(rng_seed=0, iter_max=20, pop_max=25, seeds_max=5)
    res = minimize_iwo(counting, box(), cfg)
    assert res.evaluations == len(calls)
    # at most pop_max plants each bearing seeds_max seeds per iteration
    assert res.evaluations <= cfg.pop_initial + cfg.iter_max * cfg.pop_max * cfg.seeds_max


# --- GA ------------------------------------------------------------------------------

def test_ga_sphere_convergence():
    space = box()
    for seed in range(5):
        res = minimize_ga(sphere, space, GaConfig(rng_seed=seed))
        assert res.best_cost < 1e-2


def test_ga_deterministic():
    cfg = GaConfig(rng_seed=6, generations=20)
    a = minimize_ga(sphere, box(), cfg)
    b = minimize_ga(sphere, box(), cfg)
    assert np.array_equal(a.best_params, b.best_params)
    assert np.array_equal(a.cost_trace, b.cost_trace)


def test_ga_trace_monotone():
    res = minimize_ga(sphere, box(), GaConfig(rng_seed=0, generations=40))
    assert len(res.cost_trace) == 41
    assert np.all(np.diff(res.cost_trace) <= 0)


def test_ga_respects_bounds():
    space = SearchSpace(lower=np.array([-1.0, 0.0]), upper=np.array([1.0, 0.0]),
                        frozen=frozenset({1}))
    res = minimize_ga(lambda x: sphere(x - 5.0), space, GaConfig(rng_seed=1, generations=30))
    assert space.contains(res.best_params)
    assert res.best_params[1] == 0.0


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GaConfig(pop_size=1)
    with pytest.raises(ValueError):
        GaConfig(pop_size=10, elitism=10)


# --- PEM (Nelder-Mead) ----------------------------------------------------------------

def test_pem_quadratic_bowl():
    target = np.array([0.5, -1.5, 2.0])
    res = minimize_pem(lambda x: sphere(x - target), box(dim=3), PemConfig())
    assert res.best_cost < 1e-8
    assert np.allclose(res.best_params, target, atol=1e-3)


def test_pem_trace_monotone_and_bounded():
    space = box(dim=3)
    res = minimize_pem(sphere, space, PemConfig(max_iter=200))
    assert np.all(np.diff(res.cost_trace) <= 0)
    assert space.contains(res.best_params)


def test_pem_deterministic():
    a = minimize_pem(sphere, box(dim=4), PemConfig())
    b = minimize_pem(sphere, box(dim=4), PemConfig())
    assert np.array_equal(a.best_params, b.best_params)
    assert a.evaluations == b.evaluations


# --- IWO config validation ---------------------------------------------------------

def test_iwo_config_validation():
    with pytest.raises(ValueError):
        IwoConfig(iter_max=-1)
    with pytest.raises(ValueError):
        IwoConfig(pop_initial=0)
    with pytest.raises(ValueError):
        IwoConfig(pop_initial=30, pop_max=25)
    with pytest.raises(ValueError):
        IwoConfig(seeds_min=6, seeds_max=5)
    with pytest.raises(ValueError):
        IwoConfig(sigma_initial=0.001, sigma_final=0.1)


# --- prediction-error objective ------------------------------------------------------

def test_prediction_error_zero_at_truth():
    from heliid import fitness, harness

    log = harness.synthesize_flight(noise_fraction=0.0, duration_s=5.0)
    fc = fitness.FitnessConfig(flap_sign_symmetric=True)
    obj = optimizers.prediction_error_objective(log, fc)
    assert obj(model.TRUTH_HOVER.to_array()) < 1e-20
    perturbed = model.TRUTH_HOVER.to_array() * 1.2
    assert obj(perturbed) > 1e-6
