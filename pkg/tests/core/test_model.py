"""
模型组合与 BPTT 测试
"""
import numpy as np
import pytest

from src.core.cells import CellKind, CellSpec, cell_backward, cell_forward, zero_state
from src.core.gradient_check import (
    GRADIENT_TOLERANCE,
    bptt_gradient_errors,
    max_error,
    random_model_instance,
    random_scaled_laplacian,
)
from src.core.model import (
    ModelSpec,
    Readout,
    SequenceBatch,
    bptt,
    check_params,
    forward_losses,
    init_model,
    layer_params,
    predictions,
    readout_backward,
    readout_forward,
    step_loss,
)
from src.shared.exceptions import CellError, DataError, NumericalError, ShapeError

ALL_KINDS = list(CellKind)


def frame_batch(rng, steps, size, n, d_x):
    frames = rng.uniform(0, 1, (steps + 1, size, n, d_x))
    return SequenceBatch(inputs=frames[:-1], targets=frames[1:])


def token_batch(rng, steps, size, vocab):
    ids = rng.integers(0, vocab, (steps + 1, size))
    frames = np.zeros((steps + 1, size, vocab, 1))
    np.put_along_axis(frames, ids[..., None, None], 1.0, axis=-2)
    return SequenceBatch(inputs=frames[:-1], targets=ids[1:])


class TestModelSpec:

    def test_rejects_three_layers(self):
        with pytest.raises(CellError):
            ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2), layers=3)

    def test_token_readout_requires_vocabulary_vertices(self):
        with pytest.raises(CellError):
            ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2), readout=Readout.POOLED, vocab=5)
        with pytest.raises(CellError):
            ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=2, d_h=2), readout=Readout.VERTEX)

    def test_vocab_defaults_to_vertex_count(self):
        spec = ModelSpec(CellSpec(CellKind.GCGRU, n=12, d_x=1, d_h=4), readout="pooled")
        assert spec.vocab == 12 and spec.is_token_task

    def test_second_layer_consumes_hidden_signal(self):
        spec = ModelSpec(CellSpec(CellKind.GCLSTM_M2, n=5, d_x=2, d_h=3, K=2), layers=2)
        first, second = spec.layer_specs()
        assert first.d_x == 2 and second.d_x == 3

    @pytest.mark.parametrize("readout", list(Readout))
    def test_param_count_matches_init(self, readout):
        d_x = 2 if readout == Readout.DENSE else 1
        spec = ModelSpec(CellSpec(CellKind.GCLSTM_M2, n=6, d_x=d_x, d_h=3, K=2), layers=2, readout=readout)
        params = init_model(spec, 0)
        assert spec.param_count() == sum(value.size for value in params.values())
        assert list(params) == [name for name, _ in spec.param_shapes()]
        assert all(name.startswith(("layer0.", "layer1.", "readout.")) for name in params)


class TestParams:

    def test_init_deterministic(self):
        spec = ModelSpec(CellSpec(CellKind.GCGRU, n=4, d_x=1, d_h=2, K=2), layers=2)
        a, b = init_model(spec, 3), init_model(spec, 3)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_layers_seeded_independently(self):
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=2, d_h=2, K=2), layers=2)
        params = init_model(spec, 0)
        assert not np.array_equal(params["layer0.W_h"], params["layer1.W_h"])

    def test_check_params_rejects_missing_tensor(self):
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2))
        params = init_model(spec, 0)
        del params["readout.b"]
        with pytest.raises(ShapeError):
            check_params(spec, params)

    def test_check_params_rejects_wrong_shape(self):
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2))
        params = init_model(spec, 0)
        params["layer0.b"] = np.zeros(3)
        with pytest.raises(ShapeError):
            check_params(spec, params)


class TestPredictions:

    def test_frame_predictions_are_probabilities(self):
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=2, d_h=3, K=2))
        probs = predictions(spec, np.array([[-50.0, 0.0], [3.0, 50.0]]))
        np.testing.assert_allclose(probs[0, 1], 0.5)
        assert np.all((probs >= 0) & (probs <= 1))

    def test_token_predictions_are_distributions(self):
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=5, d_x=1, d_h=3, K=2), readout=Readout.POOLED, vocab=5)
        probs = predictions(spec, np.random.default_rng(0).standard_normal((3, 5)))
        np.testing.assert_allclose(probs.sum(axis=-1), np.ones(3))


class TestSequenceBatch:

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            SequenceBatch(inputs=np.zeros((2, 3, 4)), targets=np.zeros((2, 3, 4)))

    def test_rejects_mismatched_targets(self):
        with pytest.raises(ShapeError):
            SequenceBatch(inputs=np.zeros((2, 1, 3, 1)), targets=np.zeros((3, 1)))

    def test_rejects_non_finite_inputs(self):
        inputs = np.zeros((1, 1, 2, 1))
        inputs[0, 0, 0, 0] = np.nan
        with pytest.raises(DataError):
            SequenceBatch(inputs=inputs, targets=np.zeros((1, 1, 2, 1)))


class TestBPTT:

    def test_single_step_composition(self):
        rng = np.random.default_rng(0)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=3, K=2))
        params = init_model(spec, 1)
        L = random_scaled_laplacian(rng, 4)
        batch = frame_batch(rng, 1, 2, 4, 1)
        result = bptt(spec, params, batch, L)

        cells = layer_params(params, 0)
        h, _, cache = cell_forward(spec.cell.kind, cells, L, batch.inputs[0], zero_state(spec.cell, 2))
        loss, d_logits = step_loss(spec, readout_forward(spec, params, h), batch.targets[0])
        grads = {name: np.zeros_like(value) for name, value in params.items()}
        d_h = readout_backward(spec, params, h, d_logits, grads)
        _, _, cell_grads = cell_backward(spec.cell.kind, cells, cache, d_h)

        assert result.loss == loss
        for name in ("readout.W", "readout.b"):
            np.testing.assert_allclose(result.grads[name], grads[name], rtol=1e-13, atol=1e-16)
        for name, value in cell_grads.items():
            np.testing.assert_allclose(result.grads[f"layer0.{name}"], value, rtol=1e-13, atol=1e-16)

    def test_loss_is_mean_of_step_losses(self):
        rng = np.random.default_rng(1)
        spec = ModelSpec(CellSpec(CellKind.GCGRU, n=5, d_x=1, d_h=2, K=2))
        result = bptt(spec, init_model(spec, 0), frame_batch(rng, 4, 2, 5, 1), random_scaled_laplacian(rng, 5))
        assert len(result.step_losses) == 4
        assert result.loss == pytest.approx(np.mean(result.step_losses), rel=1e-15)

    def test_weight_doubling_doubles_gradients(self):
        rng = np.random.default_rng(2)
        spec = ModelSpec(CellSpec(CellKind.GCLSTM_M2, n=5, d_x=1, d_h=3, K=2))
        params = init_model(spec, 0)
        batch = frame_batch(rng, 3, 2, 5, 1)
        L = random_scaled_laplacian(rng, 5)
        single = bptt(spec, params, batch, L)
        double = bptt(spec, params, batch, L, weight=2.0)
        assert double.loss == pytest.approx(2.0 * single.loss, rel=1e-15)
        for name in params:
            np.testing.assert_allclose(double.grads[name], 2.0 * single.grads[name], rtol=1e-15, atol=0)

    def test_elementwise_weight_zero_masks_step(self):
        rng = np.random.default_rng(3)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2, K=2))
        params = init_model(spec, 0)
        batch = frame_batch(rng, 2, 1, 4, 1)
        weight = np.ones(batch.targets.shape)
        weight[1] = 0.0
        result = bptt(spec, params, batch, random_scaled_laplacian(rng, 4), weight=weight)
        assert result.step_losses[1] == 0.0

    def test_non_finite_loss_carries_step(self):
        rng = np.random.default_rng(4)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2, K=2))
        params = init_model(spec, 0)
        params["readout.b"] = np.array([np.nan])
        with pytest.raises(NumericalError) as excinfo:
            bptt(spec, params, frame_batch(rng, 3, 1, 4, 1), random_scaled_laplacian(rng, 4))
        assert excinfo.value.step == 0

    def test_dropout_reproducible_with_seeded_generator(self):
        rng = np.random.default_rng(5)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=4, d_x=1, d_h=2, K=2), layers=2)
        params = init_model(spec, 0)
        batch = frame_batch(rng, 3, 2, 4, 1)
        L = random_scaled_laplacian(rng, 4)
        a = bptt(spec, params, batch, L, keep_prob=0.75, rng=np.random.default_rng(9))
        b = bptt(spec, params, batch, L, keep_prob=0.75, rng=np.random.default_rng(9))
        assert a.loss == b.loss
        for name in params:
            np.testing.assert_array_equal(a.grads[name], b.grads[name])

    def test_fclstm_runs_without_graph(self):
        rng = np.random.default_rng(6)
        spec = ModelSpec(CellSpec(CellKind.FCLSTM, n=3, d_x=2, d_h=2))
        result = bptt(spec, init_model(spec, 0), frame_batch(rng, 2, 1, 3, 2), None)
        assert np.isfinite(result.loss)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(7)
        for _ in range(2):
            errors = bptt_gradient_errors(random_model_instance(kind, rng))
            assert max_error(errors) <= GRADIENT_TOLERANCE, errors

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_finite_differences_suite(self, kind):
        rng = np.random.default_rng(8)
        for _ in range(100):
            errors = bptt_gradient_errors(random_model_instance(kind, rng))
            assert max_error(errors) <= GRADIENT_TOLERANCE, errors


class TestForwardLosses:

    def test_forced_inputs_match_bptt(self):
        rng = np.random.default_rng(10)
        spec = ModelSpec(CellSpec(CellKind.GCGRU, n=6, d_x=1, d_h=3, K=2), readout=Readout.POOLED)
        params = init_model(spec, 0)
        batch = token_batch(rng, 4, 2, 6)
        L = random_scaled_laplacian(rng, 6)
        assert forward_losses(spec, params, batch, L) == bptt(spec, params, batch, L).step_losses

    def test_rollout_one_equals_forced_inputs(self):
        rng = np.random.default_rng(11)
        spec = ModelSpec(CellSpec(CellKind.GCLSTM_M2, n=5, d_x=1, d_h=2, K=2))
        params = init_model(spec, 0)
        batch = frame_batch(rng, 4, 2, 5, 1)
        L = random_scaled_laplacian(rng, 5)
        assert forward_losses(spec, params, batch, L, rollout=1) == forward_losses(spec, params, batch, L)

    def test_rollout_changes_only_free_steps(self):
        rng = np.random.default_rng(12)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=5, d_x=1, d_h=2, K=2), readout=Readout.VERTEX)
        params = init_model(spec, 0)
        batch = token_batch(rng, 5, 2, 5)
        L = random_scaled_laplacian(rng, 5)
        forced = forward_losses(spec, params, batch, L)
        rolled = forward_losses(spec, params, batch, L, rollout=3)
        assert rolled[:3] == forced[:3]

    @pytest.mark.parametrize("rollout", [-1, 5])
    def test_rollout_out_of_range(self, rollout):
        rng = np.random.default_rng(13)
        spec = ModelSpec(CellSpec(CellKind.GCRNN, n=3, d_x=1, d_h=2, K=1))
        with pytest.raises(DataError):
            forward_losses(spec, init_model(spec, 0), frame_batch(rng, 4, 1, 3, 1),
                           random_scaled_laplacian(rng, 3), rollout=rollout)
