import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from padpfl.accounting import NoiseCalibration
from padpfl.errors import InvalidParameterError
from padpfl.federation import FederationState, TrainSettings, aggregate, run_round, substream
from padpfl.model import Batch, MLPShape, local_train
from padpfl.report import metrics_csv

SHAPE = MLPShape(input=16, hidden=4, output=3)


def clients(n, m=12, seed=0):
    rng = np.random.default_rng(seed)
    return [Batch(rng.random((m, SHAPE.input)), rng.integers(0, 3, m)) for _ in range(n)]


def noise(client_sigma=0.0, server_sigma=0.0):
    return NoiseCalibration(1.0, client_sigma, server_sigma, 0.0, 0.0)


def state(seed=0):
    return FederationState(SHAPE.init(substream(seed, 1)), 0, seed)


def mean_chi(d):
    return math.sqrt(2) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))


class TestAggregate:
    def test_identical_points(self):
        x = np.arange(5.0)
        assert np.allclose(aggregate([x, x, x], [0.2, 0.3, 0.5]), x)

    def test_two_points(self):
        assert np.array_equal(aggregate([np.ones(4), 3 * np.ones(4)], [0.5, 0.5]), 2 * np.ones(4))

    def test_zero_weight_ignored(self):
        a, b = np.ones(3), np.full(3, 7.0)
        base = aggregate([a, b], [1.0, 0.0])
        assert np.array_equal(base, aggregate([a, b * 1e6 + 3], [1.0, 0.0]))

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            aggregate([np.ones(2)], [0.5, 0.5])

    @given(st.integers(2, 6), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
    def test_linearity(self, n, a, b, seed):
        rng = np.random.default_rng(seed)
        xs = [rng.normal(size=7) for _ in range(n)]
        ys = [rng.normal(size=7) for _ in range(n)]
        p = rng.dirichlet(np.ones(n))
        p[-1] = 1 - math.fsum(p[:-1])
        lhs = aggregate([a * x + b * y for x, y in zip(xs, ys)], p)
        rhs = a * aggregate(xs, p) + b * aggregate(ys, p)
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestRound:
    def test_single_client_is_local_sgd(self):
        data = clients(1)
        st0 = state()
        s = TrainSettings(lr=0.1, epochs=3, mu=0.01)
        res = run_round(st0, [1.0], noise(), data, SHAPE, s)
        expect, _ = local_train(SHAPE, st0.global_params, data[0], st0.global_params, 0.01, 0.1, 3)
        assert np.array_equal(res.state.global_params, expect)
        assert res.state.round == 1 and res.metrics.round == 1

    def test_lr_zero_fixed_point(self):
        data = clients(4)
        st0 = state()
        res = run_round(st0, [0.25] * 4, noise(), data, SHAPE, TrainSettings(lr=0.0, epochs=2))
        assert np.allclose(res.state.global_params, st0.global_params, atol=1e-15)
        assert res.metrics.client_noise_norm == res.metrics.server_noise_norm == 0.0
        assert res.metrics.achieved_gammas == pytest.approx([1.0] * 4)

    def test_clip_then_noise_bound(self):
        data = clients(5)
        s = TrainSettings(lr=0.5, epochs=2, clip_bound=0.3)
        res = run_round(state(), [0.2] * 5, noise(0.01, 0.02), data, SHAPE, s)
        # Before server noise the model lies within B of the origin up to client noise.
        assert np.linalg.norm(res.pre_noise_params) <= 0.3 + res.metrics.client_noise_norm + 1e-12
        assert res.metrics.server_noise_norm > 0

    def test_metrics_after_server_noise(self):
        data = clients(3)
        s = TrainSettings(lr=0.05, epochs=1)
        res = run_round(state(), [0.2, 0.3, 0.5], noise(0.0, 0.5), data, SHAPE, s)
        diff = res.state.global_params - res.pre_noise_params
        assert np.linalg.norm(diff) == pytest.approx(res.metrics.server_noise_norm)

    def test_workers_do_not_change_result(self):
        data = clients(6, seed=3)
        s = TrainSettings(lr=0.1, epochs=2, batch_size=5, clip_bound=2.0)
        p = [0.1, 0.1, 0.2, 0.2, 0.2, 0.2]
        a = run_round(state(4), p, noise(0.01, 0.01), data, SHAPE, s, workers=1)
        b = run_round(state(4), p, noise(0.01, 0.01), data, SHAPE, s, workers=4)
        assert np.array_equal(a.state.global_params, b.state.global_params)
        assert metrics_csv([a.metrics]) == metrics_csv([b.metrics])

    def test_substreams_differ_across_rounds(self):
        data = clients(2)
        s = TrainSettings(lr=0.0, epochs=0)
        st0 = state()
        r1 = run_round(st0, [0.5, 0.5], noise(0.0, 1.0), data, SHAPE, s)
        r2 = run_round(r1.state, [0.5, 0.5], noise(0.0, 1.0), data, SHAPE, s)
        n1 = r1.state.global_params - st0.global_params
        n2 = r2.state.global_params - r1.state.global_params
        assert not np.allclose(n1, n2)

    def test_impact_count_mismatch(self):
        with pytest.raises(InvalidParameterError):
            run_round(state(), [1.0], noise(), clients(2), SHAPE, TrainSettings())

    def test_snapshot(self):
        data = clients(3)
        res = run_round(state(), [0.2, 0.3, 0.5], noise(), data, SHAPE, TrainSettings(), keep_snapshot=True)
        snap = res.snapshot
        assert snap.round == 1 and snap.divergences.shape == (3,)
        assert snap.loss == pytest.approx(res.metrics.global_loss)
        assert np.linalg.norm(snap.global_grad) == pytest.approx(res.metrics.grad_norm_global)


def test_aggregated_noise_norm_monte_carlo():
    """Mean norm of the aggregated client noise over 200 rounds."""
    N, sigma = 60, 0.0249
    data = clients(N, m=2)
    s = TrainSettings(lr=0.0, epochs=0)
    st0 = state()
    p = [1 / N] * N
    norms = []
    for _ in range(200):
        res = run_round(st0, p, noise(sigma, 0.0), data, SHAPE, s)
        norms.append(res.metrics.client_noise_norm)
        st0 = FederationState(st0.global_params, res.state.round, st0.seed)
    expected = math.sqrt(sigma**2 / N) * mean_chi(SHAPE.size)
    assert np.mean(norms) == pytest.approx(expected, rel=0.05)
