import math

import numpy as np
import pytest

from mmclab import (
    gen_random_ergodic,
    gen_separation_instance,
    make_instance,
    misclassification,
    oracle_classify,
    pool_estimates,
    refine,
    sample_trajectories,
    trajectory_loglik,
    validate_model,
)
from mmclab.errors import EmptyCluster, ZeroProbabilityTransition
from mmclab.likelihood import save_stage2, load_stage2
from mmclab.simgen import TrajectorySet, single_chain_instance
from tests.conftest import random_models


def traj_set(states):
    return TrajectorySet(states=np.asarray(states, dtype=np.int32), seed=0,
                         instance_id="test")


class TestPoolEstimates:
    def test_single_trajectory_unsmoothed(self):
        trajs = traj_set([[0, 0, 1]])
        est = pool_estimates(trajs, np.array([0]), K=1, lam=0.0, S=2)
        assert np.allclose(est.kernels[0, 0], [0.5, 0.5])
        assert est.undefined_rows[0].tolist() == [False, True]
        assert np.all(est.kernels[0, 1] == 0.0)

    def test_single_trajectory_smoothed(self):
        trajs = traj_set([[0, 0, 1]])
        est = pool_estimates(trajs, np.array([0]), K=1, lam=0.5, S=2)
        assert np.allclose(est.kernels[0, 1], [0.5, 0.5])  # pure prior row
        assert np.allclose(est.kernels[0].sum(axis=1), 1.0, atol=1e-12)

    def test_pooling_identical_trajectories_invariant(self):
        one = traj_set([[0, 1, 0, 0]])
        two = traj_set([[0, 1, 0, 0], [0, 1, 0, 0]])
        e1 = pool_estimates(one, np.zeros(1, dtype=int), 1, 0.0, S=2)
        e2 = pool_estimates(two, np.zeros(2, dtype=int), 1, 0.0, S=2)
        assert np.allclose(e1.kernels, e2.kernels, atol=1e-15)

    def test_rows_normalize_with_smoothing(self):
        rng = np.random.default_rng(0)
        trajs = traj_set(rng.integers(0, 3, size=(6, 20)))
        labels = np.array([0, 0, 1, 1, 2, 2])
        for lam in (0.0, 0.5, 2.0):
            est = pool_estimates(trajs, labels, 3, lam, S=3)
            defined = ~est.undefined_rows
            sums = est.kernels.sum(axis=2)[defined]
            assert np.allclose(sums, 1.0, atol=1e-12)

    def test_empty_cluster_raises(self):
        trajs = traj_set([[0, 1], [1, 0]])
        with pytest.raises(EmptyCluster):
            pool_estimates(trajs, np.array([0, 0]), K=2, lam=0.5, S=2)


class TestTrajectoryLoglik:
    def test_hand_example(self):
        kernel = np.full((2, 2), 0.5)
        val = trajectory_loglik([0, 0, 1], kernel)
        assert val == pytest.approx(2 * math.log(0.5), abs=1e-15)

    def test_count_form_equals_sequential_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            S = int(rng.integers(2, 5))
            kernel = rng.dirichlet(np.ones(S), size=S)
            traj = rng.integers(0, S, size=int(rng.integers(2, 60)))
            sequential = math.fsum(math.log(kernel[traj[h], traj[h + 1]])
                                   for h in range(len(traj) - 1))
            assert trajectory_loglik(traj, kernel) == sequential  # exact

    def test_monotone_in_used_probabilities(self):
        traj = [0, 1, 0]
        low = np.array([[0.2, 0.8], [0.3, 0.7]])
        high = np.array([[0.1, 0.9], [0.4, 0.6]])  # larger on both used entries
        assert trajectory_loglik(traj, high) > trajectory_loglik(traj, low)

    def test_zero_probability_raises(self):
        kernel = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ZeroProbabilityTransition):
            trajectory_loglik([0, 1], kernel)


class TestRefine:
    def test_fixed_point(self):
        inst = gen_separation_instance(2, T=40, H=400)
        trajs = sample_trajectories(inst, 0)
        first = refine(trajs, inst.decoding, 2, 0.5, S=inst.S)
        again = refine(trajs, first.labels, 2, 0.5, S=inst.S)
        if first.changed == 0:
            assert np.array_equal(first.labels, inst.decoding)
        assert again.changed == 0 or np.array_equal(again.labels, first.labels)

    def test_optimal_labels_unchanged(self):
        inst = gen_separation_instance(2, T=60, H=1_000)
        trajs = sample_trajectories(inst, 1)
        res = refine(trajs, inst.decoding, 2, 0.5, S=inst.S)
        assert res.changed == 0
        assert np.array_equal(res.labels, inst.decoding)

    def test_improves_on_corrupted_labels(self):
        inst = gen_separation_instance(2, T=60, H=1_500)
        trajs = sample_trajectories(inst, 2)
        corrupted = inst.decoding.copy()
        corrupted[:6] = 1 - corrupted[:6]
        res = refine(trajs, corrupted, 2, 0.5, S=inst.S)
        assert misclassification(res.labels, inst.decoding) \
            <= misclassification(corrupted, inst.decoding)

    def test_label_permutation_equivariance(self):
        inst = gen_separation_instance(2, T=30, H=800)
        trajs = sample_trajectories(inst, 3)
        start = inst.decoding.copy()
        start[:3] = 1 - start[:3]
        res = refine(trajs, start, 2, 0.5, S=inst.S)
        swapped = refine(trajs, 1 - start, 2, 0.5, S=inst.S)
        assert np.array_equal(swapped.labels, 1 - res.labels)

    def test_iterate_mode_reaches_fixed_point(self):
        inst = gen_separation_instance(2, T=40, H=1_200)
        trajs = sample_trajectories(inst, 12)
        start = inst.decoding.copy()
        start[:8] = 1 - start[:8]
        res = refine(trajs, start, 2, 0.5, S=inst.S, iterate=True)
        again = refine(trajs, res.labels, 2, 0.5, S=inst.S)
        assert again.changed == 0

    def test_smoothed_scores_always_finite(self):
        trajs = traj_set([[0, 0, 0], [1, 1, 1]])
        res = refine(trajs, np.array([0, 1]), 2, 0.5, S=2)
        assert np.isfinite(res.loglik).all()

    def test_stage2_json_roundtrip(self, tmp_path):
        inst = gen_separation_instance(1, T=10, H=50)
        trajs = sample_trajectories(inst, 4)
        res = refine(trajs, inst.decoding, 2, 0.5, S=inst.S)
        save_stage2(res, tmp_path / "s2.json", dump_loglik=True)
        labels, changed, lam = load_stage2(tmp_path / "s2.json")
        assert np.array_equal(labels, res.labels)
        assert changed == res.changed and lam == 0.5
        raw = np.fromfile(tmp_path / "s2.json.loglik", dtype="<f8")
        assert raw.shape[0] == res.loglik.size


class TestOracleClassify:
    def test_single_source_all_one_label(self):
        models = list(gen_separation_instance(2, T=2, H=2).models)
        inst = single_chain_instance(models[0], T=40, H=300)
        trajs = sample_trajectories(inst, 5)
        labels = oracle_classify(trajs, models)
        assert (labels == 0).all()

    def test_identical_models_tie_to_lowest_index(self):
        m = gen_random_ergodic(3, seed=0, floor=0.05)
        inst = single_chain_instance(m, T=10, H=50)
        trajs = sample_trajectories(inst, 6)
        labels = oracle_classify(trajs, [m, m])
        assert (labels == 0).all()

    def test_use_initial_term_can_flip(self):
        # two chains with the same kernel but disjoint-ish initial mass
        P = np.array([[0.6, 0.4], [0.4, 0.6]])
        a = validate_model(P, [0.999, 0.001])
        b = validate_model(P, [0.001, 0.999])
        inst = make_instance([a, b], np.array([0.5, 0.5]), 40, 6)
        trajs = sample_trajectories(inst, 7)
        plain = oracle_classify(trajs, [a, b], use_initial=False)
        with_mu = oracle_classify(trajs, [a, b], use_initial=True)
        assert (plain == 0).all()  # identical kernels tie to index 0
        assert misclassification(with_mu, inst.decoding) \
            < misclassification(plain, inst.decoding)

    def test_zero_probability_transition_raises(self):
        P_pos = np.array([[0.5, 0.5], [0.5, 0.5]])
        m_pos = validate_model(P_pos, [0.5, 0.5])
        P_zero = np.array([[0.0, 1.0], [0.5, 0.5]])  # ergodic, one structural zero
        m_zero = validate_model(P_zero, [0.5, 0.5])
        trajs = traj_set([[0, 0, 1]])  # uses the (0 -> 0) transition
        with pytest.raises(ZeroProbabilityTransition):
            oracle_classify(trajs, [m_pos, m_zero])

    def test_plugin_consistency_small(self):
        models = random_models(2, 4, seed0=50, floor=0.04)
        inst = make_instance(models, np.array([0.5, 0.5]), 50, 2_000)
        trajs = sample_trajectories(inst, 8)
        plug_in = refine(trajs, inst.decoding, 2, 1e-9, S=inst.S)
        oracle = oracle_classify(trajs, models)
        assert (plug_in.labels == oracle).mean() >= 0.98
