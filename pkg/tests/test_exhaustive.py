"""Grid-search baseline against brute-force enumeration."""

import itertools
import math

import numpy as np
import pytest

from echoreg import geometry
from echoreg.backend import Executor
from echoreg.errors import BadConfig
from echoreg.exhaustive import GridSpec, register_exhaustive
from echoreg.geometry import RigidParams, to_matrix
from echoreg.metrics import ncc
from echoreg.phantom import PhantomSpec, make_pair, make_phantom
from echoreg.volume import normalize_zscore


@pytest.fixture(scope="module")
def tiny_pair():
    spec = PhantomSpec(
        dims=(16, 16, 16),
        frames=1,
        outer_semiaxes=(6.0, 5.0, 7.0),
        inner_semiaxes=(4.0, 3.0, 5.0),
        speckle_sigma=0.25,
        amplitude=0.0,
        seed=5,
    )
    seq, masks = make_phantom(spec)
    truth = RigidParams(tx=1.0, ty=-1.0)
    case = make_pair(seq, masks, truth)
    return (
        normalize_zscore(case.target.frames[0]),
        normalize_zscore(case.source.frames[0]),
        truth,
    )


class TestGridSpec:
    def test_node_count(self):
        g = GridSpec(half_counts=(1, 0, 2, 1, 1, 0), step_t=1.0, step_r=1.0)
        assert g.n_nodes == 3 * 1 * 5 * 3 * 3 * 1

    def test_validation(self):
        with pytest.raises(BadConfig):
            GridSpec(half_counts=(1, 1, 1, 1, 1, -1)).validate()
        with pytest.raises(BadConfig):
            GridSpec(half_counts=(1, 1, 1, 1, 1, 1), step_t=0.0).validate()
        GridSpec(half_counts=(0, 0, 0, 1, 1, 1), step_r=0.0).validate()  # rot unused

    def test_node_state_matches_enumeration_order(self):
        g = GridSpec(half_counts=(1, 0, 1, 0, 1, 0), step_t=2.0, step_r=3.0)
        axes = g.axis_values()
        flat = list(itertools.product(*axes))
        for idx in (0, 3, g.n_nodes - 1):
            np.testing.assert_allclose(g.node_state(idx), flat[idx], atol=1e-15)


class TestRegisterExhaustive:
    def test_identity_wins_when_aligned(self, tiny_pair):
        t_img, _, _ = tiny_pair
        g = GridSpec(half_counts=(1, 1, 1, 1, 1, 1), step_t=2.0, step_r=4.0)
        est, val = register_exhaustive(t_img, t_img, g, Executor())
        np.testing.assert_array_equal(est.to_array(), np.zeros(6))
        assert float(val) == pytest.approx(1.0, abs=1e-12)

    def test_on_grid_translation_recovered_exactly(self, tiny_pair):
        t_img, s_img, truth = tiny_pair
        g = GridSpec(half_counts=(0, 0, 0, 2, 2, 2), step_t=1.0, step_r=1.0)
        est, _ = register_exhaustive(t_img, s_img, g, Executor())
        assert (est.tx, est.ty, est.tz) == (truth.tx, truth.ty, truth.tz)
        assert (est.rx, est.ry, est.rz) == (0.0, 0.0, 0.0)

    def test_matches_bruteforce_enumeration(self, tiny_pair):
        t_img, s_img, _ = tiny_pair
        g = GridSpec(half_counts=(1, 1, 1, 1, 1, 1), step_t=1.5, step_r=3.0)
        est, val = register_exhaustive(t_img, s_img, g, Executor(workers=2))

        best_val = -1.0
        best_state = None
        count = 0
        for node in itertools.product(*g.axis_values()):
            p = RigidParams(*node)
            m = to_matrix(p, t_img.physical_center())
            v = float(ncc(t_img, geometry.resample(s_img, t_img, m)))
            if v > best_val:
                best_val, best_state = v, p
            count += 1
        assert count == g.n_nodes
        np.testing.assert_array_equal(est.to_array(), best_state.to_array())
        assert float(val) == pytest.approx(best_val, abs=1e-12)

    def test_result_at_least_identity_score(self, tiny_pair):
        t_img, s_img, _ = tiny_pair
        g = GridSpec(half_counts=(1, 1, 1, 1, 1, 1), step_t=2.0, step_r=5.0)
        _, val = register_exhaustive(t_img, s_img, g, Executor())
        identity_score = float(ncc(t_img, s_img))
        assert float(val) >= identity_score - 1e-12

    def test_worker_independence(self, tiny_pair):
        t_img, s_img, _ = tiny_pair
        g = GridSpec(half_counts=(1, 1, 0, 1, 1, 1), step_t=1.0, step_r=2.0)
        est1, val1 = register_exhaustive(t_img, s_img, g, Executor(workers=1))
        est2, val2 = register_exhaustive(t_img, s_img, g, Executor(workers=2))
        assert np.array_equal(est1.to_array(), est2.to_array())
        assert float(val1) == float(val2)

    def test_every_node_evaluated_exactly_once(self, tiny_pair):
        t_img, s_img, _ = tiny_pair
        g = GridSpec(half_counts=(1, 0, 1, 1, 0, 1), step_t=1.0, step_r=2.0)
        calls = []

        class CountingExecutor(Executor):
            def measure_ncc(self, target, source, mats, overlap_only=False):
                calls.append(np.asarray(mats).shape[0])
                return super().measure_ncc(target, source, mats, overlap_only)

        register_exhaustive(t_img, s_img, g, CountingExecutor(workers=1))
        assert sum(calls) == g.n_nodes
