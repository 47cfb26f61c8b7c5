import numpy as np
import pytest

from iwies.behavior import bc_nav
from iwies.environments import Variant, rollout, sample_task
from iwies.parallel_eval import (
    ProtocolError,
    ScalarPacket,
    SeedSchedule,
    WorkerPool,
    derive_perturbation,
    evaluate_population,
    reconstruct_and_update,
)
from iwies.policy_net import MlpArchitecture, init_random, param_count

SMALL = MlpArchitecture(2, (8,), 2, 0.1)
D = param_count(SMALL)


@pytest.fixture(scope="module")
def task():
    return sample_task(Variant.GOAL, 3)


@pytest.fixture(scope="module")
def theta():
    return init_random(SMALL, 1) * 20


class TestDerivePerturbation:
    def test_reproducible(self):
        s = SeedSchedule(42, stream=2)
        a = derive_perturbation(s, 5, 3, 100)
        b = derive_perturbation(SeedSchedule(42, stream=2), 5, 3, 100)
        assert a.tobytes() == b.tobytes()

    def test_distinct_streams(self):
        s = SeedSchedule(42)
        base = derive_perturbation(s, 5, 3, 50)
        assert np.any(base != derive_perturbation(s, 5, 4, 50))
        assert np.any(base != derive_perturbation(s, 6, 3, 50))
        assert np.any(base != derive_perturbation(SeedSchedule(42, stream=1), 5, 3, 50))
        assert np.any(base != derive_perturbation(SeedSchedule(43), 5, 3, 50))

    def test_index_and_generation_not_interchangeable(self):
        s = SeedSchedule(0)
        assert np.any(derive_perturbation(s, 1, 2, 20) != derive_perturbation(s, 2, 1, 20))

    def test_prefix_stable(self):
        s = SeedSchedule(9)
        np.testing.assert_array_equal(
            derive_perturbation(s, 0, 0, 10), derive_perturbation(s, 0, 0, 1000)[:10]
        )

    def test_standard_normal_moments(self):
        x = derive_perturbation(SeedSchedule(7), 0, 0, 100_000)
        assert abs(x.mean()) < 0.02
        assert abs(x.var() - 1.0) < 0.05


class TestScalarPacket:
    def test_text_roundtrip(self):
        p = ScalarPacket(3, 7, -12.345678901234567, 0.1 + 0.2, -1e-300)
        assert p.to_text() == f"gen=3 worker=7 f={p.fitness!r} n={p.novelty!r} q={p.quality!r}"
        assert ScalarPacket.from_text(p.to_text()) == p

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ScalarPacket(0, 0, float("nan"), 0.0, 0.0)


class TestEvaluatePopulation:
    def test_worker_count_invariance(self, task, theta):
        s = SeedSchedule(5)
        ref = evaluate_population(SMALL, theta, 0.05, 2, 8, task, None, s, workers=1)
        for workers in (2, 3, 8):
            assert evaluate_population(SMALL, theta, 0.05, 2, 8, task, None, s, workers=workers) == ref

    def test_process_backend_matches(self, task, theta):
        s = SeedSchedule(5)
        ref = evaluate_population(SMALL, theta, 0.05, 0, 6, task, None, s)
        with WorkerPool(3, backend="process") as pool:
            assert evaluate_population(SMALL, theta, 0.05, 0, 6, task, None, s, pool=pool) == ref

    def test_sorted_and_fields(self, task, theta):
        s = SeedSchedule(5)
        bc_prev = bc_nav(rollout(task, SMALL, theta), task.horizon)
        packets = evaluate_population(SMALL, theta, 0.05, 1, 5, task, bc_prev, s, workers=2)
        assert [p.worker_index for p in packets] == list(range(5))
        for p in packets:
            assert p.quality == p.fitness
            assert p.novelty >= 0.0 and p.generation == 1
        # Instance 3 recomputed by hand.
        eps = derive_perturbation(s, 1, 3, D)
        trace = rollout(task, SMALL, theta + 0.05 * eps)
        assert packets[3].fitness == trace.episode_return

    def test_zero_sigma(self, task, theta):
        packets = evaluate_population(SMALL, theta, 0.0, 0, 4, task, None, SeedSchedule(1))
        expected = rollout(task, SMALL, theta).episode_return
        assert all(p.fitness == expected for p in packets)

    def test_no_previous_behavior(self, task, theta):
        packets = evaluate_population(SMALL, theta, 0.05, 0, 4, task, None, SeedSchedule(1))
        assert all(p.novelty == 0.0 for p in packets)


class TestReconstructAndUpdate:
    def _packets(self, f, gen=0):
        return [ScalarPacket(gen, i, v, 0.0, v) for i, v in enumerate(f)]

    def test_matches_materialised_reference(self):
        s = SeedSchedule(11)
        m, d, sigma, alpha = 6, 40, 0.05, 0.02
        theta = np.linspace(-1, 1, d)
        f = [-3.0, -1.5, 0.25, -7.0, 2.0, -0.5]
        w = [0.5, 1.5, 1.0, 0.8, 1.2, 1.0]
        eps = np.stack([derive_perturbation(s, 4, i, d) for i in range(m)])
        acc = np.zeros(d)
        for i in range(m):
            acc += (w[i] * f[i]) * eps[i]
        expected = theta + alpha * (acc / (m * sigma))
        got = reconstruct_and_update(theta, self._packets(f, 4), w, sigma, alpha, 4, s)
        assert got.tobytes() == expected.tobytes()

    def test_zero_fitness(self):
        theta = np.arange(5.0)
        got = reconstruct_and_update(theta, self._packets([0.0] * 4), [1.0] * 4, 0.05, 0.1, 0, SeedSchedule(0))
        np.testing.assert_array_equal(got, theta)

    def test_weight_alpha_bilinearity(self):
        s = SeedSchedule(3)
        theta = np.zeros(30)
        f, w = [1.0, -2.0, 0.5], [0.7, 1.1, 1.2]
        base = reconstruct_and_update(theta, self._packets(f), w, 0.05, 0.1, 0, s)
        scaled = reconstruct_and_update(theta, self._packets(f), [2 * v for v in w], 0.05, 0.05, 0, s)
        assert base.tobytes() == scaled.tobytes()

    def test_missing_packet(self):
        packets = self._packets([1.0, 2.0, 3.0])
        with pytest.raises(ProtocolError):
            reconstruct_and_update(np.zeros(3), packets[:2], [1.0] * 3, 0.1, 0.1, 0, SeedSchedule(0))
        with pytest.raises(ProtocolError):
            reconstruct_and_update(np.zeros(3), [packets[1], packets[0], packets[2]],
                                   [1.0] * 3, 0.1, 0.1, 0, SeedSchedule(0))
