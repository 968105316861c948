"""Particle filter machinery: every stage plus small end-to-end runs."""

import math

import numpy as np
import pytest

from echoreg.backend import Executor
from echoreg.errors import BadConfig
from echoreg.geometry import RigidParams, to_matrix
from echoreg.phantom import PhantomSpec, make_pair, make_phantom
from echoreg.smc import (
    ParticleSet,
    SmcConfig,
    ess,
    estimate,
    init_particles,
    measure,
    predict,
    register_smc,
    resample_systematic,
    update_weights,
    _stream,
)
from echoreg.volume import normalize_zscore

from .conftest import random_volume
from . import oracles


def _uniform_set(states, seed=0):
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    return ParticleSet(
        states=states,
        weights=np.full(n, 1.0 / n),
        measurements=np.zeros(n),
        rng_seed=seed,
    )


class TestInit:
    def test_deterministic_given_seed(self):
        cfg = SmcConfig(n_particles=4, seed=99)
        a = init_particles(cfg)
        b = init_particles(cfg)
        assert np.array_equal(a.states, b.states)
        assert np.all(a.weights == 0.25)

    def test_rejects_bad_config(self):
        with pytest.raises(BadConfig):
            init_particles(SmcConfig(t_limit=0.0))
        with pytest.raises(BadConfig):
            init_particles(SmcConfig(n_particles=0))
        with pytest.raises(BadConfig):
            SmcConfig(ess_fraction=0.0).validate()
        with pytest.raises(BadConfig):
            SmcConfig(mode="hybrid").validate()

    def test_law_of_large_numbers_box(self):
        cfg = SmcConfig(n_particles=100_000, t_limit=20.0, r_limit=15.0, seed=5)
        ps = init_particles(cfg)
        lim = cfg.state_limits()
        assert np.all(ps.states >= -lim) and np.all(ps.states <= lim)
        # per-axis mean within 3 sigma of 0, sigma = (L/sqrt(3))/sqrt(N)
        tol = 3.0 * lim / math.sqrt(3.0) / math.sqrt(cfg.n_particles)
        assert np.all(np.abs(ps.states.mean(axis=0)) <= tol)


class TestPredict:
    def test_zero_sigma_keeps_states(self):
        cfg = SmcConfig(n_particles=8, sigma0_t=0.0, sigma0_r=0.0)
        ps = init_particles(cfg)
        moved = predict(ps, cfg)
        assert np.array_equal(moved.states, ps.states)

    def test_annealed_noise_scale(self):
        # sigma at iteration 10 with gamma 0.9 is sigma0 * 0.9^10
        cfg = SmcConfig(
            n_particles=100_000, sigma0_t=2.0, sigma0_r=2.0, anneal_gamma=0.9, seed=7
        )
        ps = _uniform_set(np.zeros((cfg.n_particles, 6)), seed=7)
        ps.iteration = 10
        moved = predict(ps, cfg)
        expected = cfg.state_sigma0() * 0.9 ** 10
        got = moved.states.std(axis=0)
        assert np.all(np.abs(got - expected) <= 0.02 * expected)

    def test_per_particle_streams_do_not_depend_on_population(self):
        cfg = SmcConfig(n_particles=8, seed=3)
        big = _uniform_set(np.zeros((8, 6)), seed=3)
        small = _uniform_set(np.zeros((4, 6)), seed=3)
        big.iteration = small.iteration = 2
        moved_big = predict(big, cfg)
        moved_small = predict(small, SmcConfig(n_particles=4, seed=3))
        assert np.array_equal(moved_big.states[:4], moved_small.states)

    def test_repeatable(self):
        cfg = SmcConfig(n_particles=16, seed=11)
        ps = init_particles(cfg)
        assert np.array_equal(predict(ps, cfg).states, predict(ps, cfg).states)

    def test_clamped_to_double_limits(self):
        cfg = SmcConfig(n_particles=64, sigma0_t=500.0, sigma0_r=500.0, seed=1)
        ps = init_particles(cfg)
        moved = predict(ps, cfg)
        lim = 2.0 * cfg.state_limits()
        assert np.all(moved.states >= -lim) and np.all(moved.states <= lim)


class TestUpdateWeights:
    def test_beta_zero_keeps_weights(self):
        ps = _uniform_set(np.zeros((3, 6)))
        ps.measurements = np.array([0.1, 0.9, 0.4])
        ps.weights = np.array([0.2, 0.3, 0.5])
        out = update_weights(ps, SmcConfig(beta=0.0))
        np.testing.assert_allclose(out.weights, [0.2, 0.3, 0.5], atol=1e-15)

    def test_two_particle_hand_case(self):
        # z = (1, 0), uniform prior, beta = ln 4 -> weights (4/5, 1/5)
        ps = _uniform_set(np.zeros((2, 6)))
        ps.measurements = np.array([1.0, 0.0])
        out = update_weights(ps, SmcConfig(beta=math.log(4.0)))
        np.testing.assert_allclose(out.weights, [0.8, 0.2], atol=1e-12)

    def test_equal_measurements_keep_weights(self):
        ps = _uniform_set(np.zeros((4, 6)))
        ps.weights = np.array([0.1, 0.2, 0.3, 0.4])
        ps.measurements = np.full(4, 0.7)
        out = update_weights(ps, SmcConfig(beta=30.0))
        np.testing.assert_allclose(out.weights, ps.weights, atol=1e-12)

    def test_normalized_after_update(self, rng):
        ps = _uniform_set(rng.normal(size=(32, 6)))
        ps.measurements = rng.random(32)
        out = update_weights(ps, SmcConfig(beta=50.0))
        assert abs(out.weights.sum() - 1.0) < 1e-9


class TestEss:
    def test_uniform(self):
        ps = _uniform_set(np.zeros((8, 6)))
        assert ess(ps) == pytest.approx(8.0, abs=1e-12)

    def test_degenerate(self):
        ps = _uniform_set(np.zeros((4, 6)))
        ps.weights = np.array([1.0, 0.0, 0.0, 0.0])
        assert ess(ps) == pytest.approx(1.0, abs=1e-12)

    def test_hand_case(self):
        ps = _uniform_set(np.zeros((3, 6)))
        ps.weights = np.array([0.5, 0.25, 0.25])
        assert ess(ps) == pytest.approx(8.0 / 3.0, abs=1e-12)


class TestResampleSystematic:
    def test_uniform_weights_copy_everyone_once(self):
        states = np.arange(30, dtype=float).reshape(5, 6)
        ps = _uniform_set(states)
        out = resample_systematic(ps, np.random.default_rng(0))
        assert np.array_equal(out.states, states)
        assert np.all(out.weights == 0.2)

    def test_all_weight_on_one(self):
        states = np.arange(24, dtype=float).reshape(4, 6)
        ps = _uniform_set(states)
        ps.weights = np.array([1.0, 0.0, 0.0, 0.0])
        out = resample_systematic(ps, np.random.default_rng(3))
        assert np.all(out.states == states[0])

    def test_copy_counts_for_known_weights_any_offset(self):
        # weights (0.5, 0.3, 0.2) expanded over 10 slots: for every offset u
        # the integer expectations force counts exactly (5, 3, 2)
        class FixedRng:
            def __init__(self, u):
                self.u = u

            def uniform(self, lo, hi):
                assert lo == 0.0 and hi == pytest.approx(0.1)
                return self.u

        weights = np.array([0.5, 0.3, 0.2] + [0.0] * 7)
        states = np.arange(10, dtype=float).reshape(10, 1).repeat(6, axis=1)
        for u in np.linspace(0.0, 0.1 - 1e-9, 9):
            ps = _uniform_set(states)
            ps.weights = weights.copy()
            out = resample_systematic(ps, FixedRng(u))
            counts = np.bincount(out.states[:, 0].astype(int), minlength=10)
            assert tuple(counts[:3]) == (5, 3, 2)
            assert counts[3:].sum() == 0
            assert np.all(out.weights == 0.1)

    def test_copy_counts_bracket_expected(self, rng):
        for n in (2, 3, 8, 17, 64):
            for _ in range(20):
                w = rng.random(n)
                w /= w.sum()
                states = np.arange(n, dtype=float).reshape(n, 1).repeat(6, axis=1)
                ps = _uniform_set(states)
                ps.weights = w
                out = resample_systematic(ps, rng)
                counts = np.bincount(out.states[:, 0].astype(int), minlength=n)
                low = np.floor(n * w)
                high = np.ceil(n * w)
                assert np.all(counts >= low) and np.all(counts <= high)


class TestEstimate:
    def test_all_weight_on_one_particle(self, rng):
        states = rng.normal(size=(5, 6))
        ps = _uniform_set(states)
        ps.weights = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        got = estimate(ps, SmcConfig())
        np.testing.assert_allclose(got.to_array(), states[2], atol=1e-15)

    def test_two_particle_mean(self):
        states = np.zeros((2, 6))
        states[0, 3], states[1, 3] = 2.0, 4.0
        ps = _uniform_set(states)
        assert estimate(ps, SmcConfig()).tx == pytest.approx(3.0, abs=1e-15)

    def test_matches_scalar_weighted_mean_oracle(self, rng):
        states = rng.normal(size=(16, 6))
        w = rng.random(16)
        w /= w.sum()
        ps = _uniform_set(states)
        ps.weights = w
        got = estimate(ps, SmcConfig()).to_array()
        expected = oracles.weighted_mean_scalar(list(w), [list(s) for s in states])
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_best_particle_mode(self, rng):
        states = rng.normal(size=(4, 6))
        ps = _uniform_set(states)
        ps.best_state = states[1].copy()
        ps.best_measurement = 0.9
        got = estimate(ps, SmcConfig(estimate="best_particle"))
        np.testing.assert_array_equal(got.to_array(), states[1])


@pytest.fixture(scope="module")
def small_case():
    spec = PhantomSpec(
        dims=(24, 24, 24),
        frames=1,
        outer_semiaxes=(9.0, 7.5, 10.0),
        inner_semiaxes=(6.0, 4.5, 7.0),
        speckle_sigma=0.2,
        amplitude=0.0,
        seed=2,
    )
    seq, masks = make_phantom(spec)
    truth = RigidParams(
        math.radians(4.0), 0.0, math.radians(-3.0), 2.5, -1.5, 1.0
    )
    return make_pair(seq, masks, truth), truth


class TestMeasure:
    def test_identity_on_same_volume_scores_one(self, rng):
        v = normalize_zscore(random_volume(rng, (10, 10, 10)))
        ps = _uniform_set(np.zeros((1, 6)))
        out = measure(ps, v, v, SmcConfig(), Executor())
        assert out.measurements[0] == pytest.approx(1.0, abs=1e-6)

    def test_out_of_frame_scores_zero(self, rng):
        v = normalize_zscore(random_volume(rng, (8, 8, 8)))
        states = np.zeros((1, 6))
        states[0, 3] = 1e6
        out = measure(_uniform_set(states), v, v, SmcConfig(), Executor())
        assert out.measurements[0] == 0.0

    def test_truth_beats_random_states(self, small_case, rng):
        case, truth = small_case
        tm, sm = case.target_masks[0], case.source_masks[0]
        states = np.concatenate(
            [truth.to_array()[np.newaxis], rng.uniform(-1, 1, (20, 6)) * 0.3]
        )
        out = measure(_uniform_set(states), tm, sm, SmcConfig(mode="mask"), Executor())
        assert np.argmax(out.measurements) == 0

    def test_best_tracking_monotone(self, small_case):
        case, _ = small_case
        tm, sm = case.target_masks[0], case.source_masks[0]
        cfg = SmcConfig(mode="mask", n_particles=16, n_iterations=8, seed=4)
        _, trace = register_smc(tm, sm, cfg, Executor())
        best = trace.best_measurement
        assert all(b >= a for a, b in zip(best, best[1:]))
        assert all(m <= b + 1e-15 for m, b in zip(trace.max_measurement, best))


class TestRegisterSmc:
    def test_mode_preconditions(self, rng):
        raw = random_volume(rng, (6, 6, 6))
        with pytest.raises(BadConfig):
            register_smc(raw, raw, SmcConfig(mode="image", n_particles=2, n_iterations=1))
        with pytest.raises(BadConfig):
            register_smc(raw, raw, SmcConfig(mode="mask", n_particles=2, n_iterations=1))

    def test_already_aligned_source(self, small_case):
        case, _ = small_case
        v = normalize_zscore(case.target.frames[0])
        cfg = SmcConfig(
            n_particles=128, n_iterations=30, t_limit=6.0, r_limit=8.0, seed=0
        )
        est, trace = register_smc(v, v, cfg, Executor(workers=2))
        arr = est.to_array()
        assert np.all(np.abs(np.degrees(arr[:3])) <= 0.5)
        assert np.all(np.abs(arr[3:]) <= 0.5)
        assert len(trace) == 30

    def test_recovers_small_case(self, small_case):
        # the 12-voxel mini cavity pins translation tightly but carries
        # little rotation signal; degree-level rotation recovery is
        # exercised at full scale by the acceptance suite
        case, truth = small_case
        tm, sm = case.target_masks[0], case.source_masks[0]
        cfg = SmcConfig(
            mode="mask", n_particles=128, n_iterations=25,
            t_limit=6.0, r_limit=8.0, seed=1,
        )
        est, trace = register_smc(tm, sm, cfg, Executor(workers=2))
        err = np.abs(est.to_array() - truth.to_array())
        assert np.all(np.degrees(err[:3]) <= 6.0)
        assert np.all(err[3:] <= 0.5)
        matrix = to_matrix(est, tm.physical_center())
        from echoreg.metrics import dice_under_transform

        assert float(dice_under_transform(sm, tm, matrix)) >= 0.94
        assert abs(trace.ess[0]) >= 1.0

    def test_worker_count_invariance(self, small_case):
        case, _ = small_case
        tm, sm = case.target_masks[0], case.source_masks[0]
        cfg = SmcConfig(mode="mask", n_particles=32, n_iterations=6, seed=9)
        est1, trace1 = register_smc(tm, sm, cfg, Executor(workers=1))
        est2, trace2 = register_smc(tm, sm, cfg, Executor(workers=2))
        assert np.array_equal(est1.to_array(), est2.to_array())
        assert trace1.mean_measurement == trace2.mean_measurement
        assert trace1.ess == trace2.ess

    def test_weight_invariants_along_run(self, small_case):
        case, _ = small_case
        tm, sm = case.target_masks[0], case.source_masks[0]
        cfg = SmcConfig(mode="mask", n_particles=16, n_iterations=10, seed=2)
        _, trace = register_smc(tm, sm, cfg, Executor())
        assert all(1.0 <= e <= 16.0 + 1e-9 for e in trace.ess)
        assert all(
            fired == (e < cfg.ess_fraction * 16)
            for fired, e in zip(trace.resampled, trace.ess)
        )


class TestStreams:
    def test_distinct_roles_and_indices(self):
        a = _stream(1, 0, 0, 0).uniform(size=4)
        b = _stream(1, 1, 0, 0).uniform(size=4)
        c = _stream(1, 0, 0, 1).uniform(size=4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_reproducible(self):
        assert np.array_equal(
            _stream(7, 1, 3, 11).standard_normal(6),
            _stream(7, 1, 3, 11).standard_normal(6),
        )
