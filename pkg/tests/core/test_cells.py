"""
循环单元测试：参数量、门运算、K=1 退化、局部性、置换等变与单步梯度
"""
import numpy as np
import pytest
from scipy.special import expit

from src.core.cells import (
    CellKind,
    CellSpec,
    CellState,
    PeepholeShape,
    cell_backward,
    cell_forward,
    cell_init,
    fclstm_step,
    gclstm_m2_step,
    gcgru_step,
    gcrn_m1_step,
    gcrnn_step,
    param_count,
    param_shapes,
    zero_state,
)
from src.core.gradient_check import (
    GRADIENT_TOLERANCE,
    cell_gradient_errors,
    max_error,
    random_cell_instance,
    random_scaled_laplacian,
)
from src.core.graph import graph_from_edges, grid_graph, hop_distances, knn_graph
from src.core.sparse_linalg import from_scipy
from src.shared.exceptions import CellError, ShapeError

ALL_KINDS = list(CellKind)
GRAPH_KINDS = [kind for kind in CellKind if kind.uses_graph]


def random_state(rng, spec):
    shape = (spec.n, spec.d_h)
    c = rng.standard_normal(shape) if spec.kind.is_lstm else None
    return CellState(h=rng.uniform(-1, 1, shape), c=c)


def perturbed_params(rng, spec, seed=0):
    params = cell_init(spec, seed)
    return {name: value + 0.3 * rng.standard_normal(value.shape) for name, value in params.items()}


class TestParamCount:

    def test_fclstm_shared_peepholes(self):
        spec = CellSpec(CellKind.FCLSTM, n=7, d_x=3, d_h=5, peephole_shape=PeepholeShape.SHARED)
        assert param_count(spec) == 195

    def test_gclstm_m2_without_peepholes(self):
        spec = CellSpec(CellKind.GCLSTM_M2, n=4, d_x=1, d_h=4, K=3, peepholes=False)
        assert param_count(spec) == 240 + 16

    @pytest.mark.parametrize("kind", ALL_KINDS)
    @pytest.mark.parametrize("peepholes", [True, False])
    @pytest.mark.parametrize("shape", list(PeepholeShape))
    def test_matches_allocated_arrays(self, kind, peepholes, shape):
        spec = CellSpec(kind, n=6, d_x=2, d_h=3, K=4, peepholes=peepholes, peephole_shape=shape)
        params = cell_init(spec, 0)
        assert param_count(spec) == sum(value.size for value in params.values())
        assert [name for name, _ in param_shapes(spec)] == list(params)

    def test_affine_in_support(self):
        d_x, d_h = 3, 5
        counts = [param_count(CellSpec(CellKind.GCLSTM_M2, n=10, d_x=d_x, d_h=d_h, K=K,
                                       peephole_shape=PeepholeShape.SHARED)) for K in range(1, 8)]
        assert set(np.diff(counts)) == {4 * d_h * (d_x + d_h)}
        assert counts[4] - counts[2] == 2 * 4 * d_h * (d_x + d_h)

    def test_independent_of_vertex_count_without_peepholes(self):
        counts = {param_count(CellSpec(CellKind.GCLSTM_M2, n=n, d_x=1, d_h=8, K=3, peepholes=False))
                  for n in (4, 64, 4096)}
        assert len(counts) == 1

    def test_independent_of_graph_connectivity(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((20, 2))
        spec = CellSpec(CellKind.GCLSTM_M2, n=20, d_x=1, d_h=4, K=3)
        params = cell_init(spec, 1)
        x = rng.standard_normal((20, 1))
        for k in (4, 8, 16):
            L = knn_graph(points, k).scaled_laplacian
            h, _, _ = gclstm_m2_step(params, L, x, zero_state(spec))
            assert h.shape == (20, 4)
            assert param_count(spec) == sum(value.size for value in params.values())

    def test_fclstm_standard_formula(self):
        spec = CellSpec(CellKind.FCLSTM, n=3, d_x=4, d_h=6, peepholes=False)
        assert param_count(spec) == 4 * 6 * (4 + 6) + 4 * 6

    @pytest.mark.parametrize("field_name", ["n", "d_x", "d_h", "K"])
    def test_rejects_non_positive_dims(self, field_name):
        kwargs = dict(kind=CellKind.GCGRU, n=2, d_x=1, d_h=1, K=1)
        kwargs[field_name] = 0
        with pytest.raises(CellError):
            CellSpec(**kwargs)


class TestCellInit:

    def test_deterministic(self):
        spec = CellSpec(CellKind.GCLSTM_M2, n=5, d_x=2, d_h=3, K=2)
        a, b = cell_init(spec, 7), cell_init(spec, 7)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_lstm_biases(self):
        params = cell_init(CellSpec(CellKind.FCLSTM, n=2, d_x=1, d_h=3), 0)
        for gate in ("i", "f", "o"):
            np.testing.assert_array_equal(params[f"b_{gate}"], np.ones(3))
        np.testing.assert_array_equal(params["b_c"], np.zeros(3))

    def test_gru_biases_zero(self):
        params = cell_init(CellSpec(CellKind.GCGRU, n=2, d_x=1, d_h=3, K=2), 0)
        for gate in ("z", "r", "h"):
            assert not params[f"b_{gate}"].any()


class TestLSTMSteps:

    def test_bias_only_gate_arithmetic(self):
        spec = CellSpec(CellKind.FCLSTM, n=3, d_x=2, d_h=4)
        params = {name: np.zeros_like(value) for name, value in cell_init(spec, 0).items()}
        for gate in ("i", "f", "o"):
            params[f"b_{gate}"][:] = 1.0
        h, state, cache = fclstm_step(params, np.zeros((3, 2)), zero_state(spec))
        for gate in (cache.i, cache.f, cache.o):
            np.testing.assert_array_equal(gate, np.full((3, 4), expit(1.0)))
        assert expit(1.0) == pytest.approx(0.7311, abs=1e-4)
        assert not state.c.any() and not h.any()

    def test_saturated_forget_carries_memory(self):
        rng = np.random.default_rng(1)
        spec = CellSpec(CellKind.FCLSTM, n=4, d_x=2, d_h=3, peepholes=False)
        params = {name: np.zeros_like(value) for name, value in cell_init(spec, 0).items()}
        params["b_f"][:] = 50.0
        params["b_i"][:] = -50.0
        state = random_state(rng, spec)
        _, new_state, _ = fclstm_step(params, rng.standard_normal((4, 2)), state)
        np.testing.assert_array_equal(new_state.c, state.c)

    @pytest.mark.parametrize("kind", [CellKind.FCLSTM, CellKind.GCRN_M1, CellKind.GCLSTM_M2])
    def test_range_bounds(self, kind):
        rng = np.random.default_rng(2)
        for _ in range(10):
            spec = CellSpec(kind, n=6, d_x=2, d_h=3, K=3)
            params = perturbed_params(rng, spec, int(rng.integers(0, 1000)))
            x = 5.0 * rng.standard_normal((6, 2))
            _, _, cache = cell_forward(kind, params, random_scaled_laplacian(rng, 6), x, random_state(rng, spec))
            for gate in (cache.i, cache.f, cache.o):
                assert np.all((gate > 0) & (gate < 1))
            assert np.all(np.abs(cache.o * cache.tanh_c) <= 1.0)

    def test_missing_cell_state(self):
        spec = CellSpec(CellKind.FCLSTM, n=2, d_x=1, d_h=2)
        with pytest.raises(CellError):
            fclstm_step(cell_init(spec, 0), np.zeros((2, 1)), CellState(h=np.zeros((2, 2))))

    def test_shape_mismatch(self):
        spec = CellSpec(CellKind.FCLSTM, n=2, d_x=1, d_h=2)
        with pytest.raises(ShapeError):
            fclstm_step(cell_init(spec, 0), np.zeros((2, 3)), zero_state(spec))

    def test_graph_kind_requires_laplacian(self):
        spec = CellSpec(CellKind.GCLSTM_M2, n=2, d_x=1, d_h=2)
        with pytest.raises(CellError):
            gclstm_m2_step(cell_init(spec, 0), None, np.zeros((2, 1)), zero_state(spec))

    def test_laplacian_size_mismatch(self):
        rng = np.random.default_rng(3)
        spec = CellSpec(CellKind.GCLSTM_M2, n=4, d_x=1, d_h=2)
        with pytest.raises(ShapeError):
            gclstm_m2_step(cell_init(spec, 0), random_scaled_laplacian(rng, 5), np.zeros((4, 1)), zero_state(spec))


class TestGraphRecurrentSteps:

    def test_gcrnn_zero_params(self):
        rng = np.random.default_rng(4)
        spec = CellSpec(CellKind.GCRNN, n=5, d_x=2, d_h=3, K=3)
        params = {name: np.zeros_like(value) for name, value in cell_init(spec, 0).items()}
        h, _ = gcrnn_step(params, random_scaled_laplacian(rng, 5), rng.standard_normal((5, 2)),
                          rng.uniform(-1, 1, (5, 3)))
        assert not h.any()

    def test_gcgru_update_gate_carry(self):
        rng = np.random.default_rng(5)
        spec = CellSpec(CellKind.GCGRU, n=5, d_x=2, d_h=3, K=2)
        params = perturbed_params(rng, spec)
        params["W_xz"][:] = 0.0
        params["W_hz"][:] = 0.0
        params["b_z"][:] = 50.0
        h_prev = rng.uniform(-1, 1, (5, 3))
        h, cache = gcgru_step(params, random_scaled_laplacian(rng, 5), rng.standard_normal((5, 2)), h_prev)
        np.testing.assert_array_equal(h, h_prev)

    @pytest.mark.parametrize("kind", [CellKind.GCRNN, CellKind.GCGRU])
    def test_range_bounds(self, kind):
        rng = np.random.default_rng(6)
        for _ in range(10):
            spec = CellSpec(kind, n=6, d_x=2, d_h=3, K=3)
            params = perturbed_params(rng, spec, int(rng.integers(0, 1000)))
            x = 5.0 * rng.standard_normal((6, 2))
            h, _, cache = cell_forward(kind, params, random_scaled_laplacian(rng, 6), x, random_state(rng, spec))
            assert np.all(np.abs(h) <= 1.0)
            if kind == CellKind.GCGRU:
                assert np.all((cache.z > 0) & (cache.z < 1))
                assert np.all((cache.r > 0) & (cache.r < 1))


class TestReductions:
    """K=1 时图单元与对应的顶点共享全连接单元逐位一致"""

    def test_gcrn_m1_identity_feature_stage(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n, d_x, d_h = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            spec = CellSpec(CellKind.GCRN_M1, n=n, d_x=d_x, d_h=d_h, K=1)
            params = perturbed_params(rng, spec)
            params["W_cnn"] = np.eye(d_x)[None]
            fc_params = {name: value for name, value in params.items() if name != "W_cnn"}
            state = random_state(rng, spec)
            x = rng.standard_normal((n, d_x))
            h, new_state, _ = gcrn_m1_step(params, random_scaled_laplacian(rng, n), x, state)
            h_fc, fc_state, _ = fclstm_step(fc_params, x, state)
            np.testing.assert_array_equal(h, h_fc)
            np.testing.assert_array_equal(new_state.c, fc_state.c)

    def test_gclstm_m2_matches_fclstm(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n, d_x, d_h = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            spec = CellSpec(CellKind.GCLSTM_M2, n=n, d_x=d_x, d_h=d_h, K=1)
            params = perturbed_params(rng, spec)
            fc_params = {name: (value[0] if value.ndim == 3 else value) for name, value in params.items()}
            state = random_state(rng, spec)
            x = rng.standard_normal((n, d_x))
            h, new_state, _ = gclstm_m2_step(params, random_scaled_laplacian(rng, n), x, state)
            h_fc, fc_state, _ = fclstm_step(fc_params, x, state)
            np.testing.assert_array_equal(h, h_fc)
            np.testing.assert_array_equal(new_state.c, fc_state.c)

    def test_gcrnn_matches_vanilla_rnn(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n, d_x, d_h = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            spec = CellSpec(CellKind.GCRNN, n=n, d_x=d_x, d_h=d_h, K=1)
            params = perturbed_params(rng, spec)
            x, h_prev = rng.standard_normal((n, d_x)), rng.uniform(-1, 1, (n, d_h))
            h, _ = gcrnn_step(params, random_scaled_laplacian(rng, n), x, h_prev)
            expected = np.tanh(x @ params["W_x"][0] + h_prev @ params["W_h"][0] + params["b"])
            np.testing.assert_array_equal(h, expected)

    def test_gcgru_matches_vanilla_gru(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n, d_x, d_h = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            spec = CellSpec(CellKind.GCGRU, n=n, d_x=d_x, d_h=d_h, K=1)
            p = perturbed_params(rng, spec)
            x, h_prev = rng.standard_normal((n, d_x)), rng.uniform(-1, 1, (n, d_h))
            h, _ = gcgru_step(p, random_scaled_laplacian(rng, n), x, h_prev)

            z = expit(x @ p["W_xz"][0] + h_prev @ p["W_hz"][0] + p["b_z"])
            r = expit(x @ p["W_xr"][0] + h_prev @ p["W_hr"][0] + p["b_r"])
            h_tilde = np.tanh(x @ p["W_xh"][0] + (r * h_prev) @ p["W_hh"][0] + p["b_h"])
            np.testing.assert_array_equal(h, z * h_prev + (1.0 - z) * h_tilde)


class TestLocalityAndEquivariance:

    @pytest.mark.parametrize("kind", [CellKind.GCRN_M1, CellKind.GCLSTM_M2, CellKind.GCRNN, CellKind.GCGRU])
    def test_one_step_locality(self, kind):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(4, 16))
            K = int(rng.integers(1, 4))
            g = knn_graph(rng.standard_normal((n, 2)), int(rng.integers(1, 3)))
            spec = CellSpec(kind, n=n, d_x=2, d_h=3, K=K)
            params = perturbed_params(rng, spec)
            v = int(rng.integers(0, n))
            delta = np.zeros((n, 2))
            delta[v] = rng.standard_normal(2)
            h_delta, _, _ = cell_forward(kind, params, g.scaled_laplacian, delta, zero_state(spec))
            h_zero, _, _ = cell_forward(kind, params, g.scaled_laplacian, np.zeros((n, 2)), zero_state(spec))
            far = hop_distances(g, v) > K - 1
            np.testing.assert_array_equal(h_delta[far], h_zero[far])

    @staticmethod
    def _permuted_step(kind, params, L, x, state, perm):
        permuted_params = {name: (value[perm] if name.startswith("w_c") else value)
                           for name, value in params.items()}
        L_perm = from_scipy(L.to_scipy()[perm][:, perm])
        state_perm = CellState(h=state.h[perm], c=None if state.c is None else state.c[perm])
        h, new_state, _ = cell_forward(kind, params, L, x, state)
        h_perm, new_state_perm, _ = cell_forward(kind, permuted_params, L_perm, x[perm], state_perm)
        pairs = [(h_perm, h[perm])]
        if new_state.c is not None:
            pairs.append((new_state_perm.c, new_state.c[perm]))
        return pairs

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_permutation_equivariance(self, kind):
        # 一般图上累加顺序随置换改变，只能在舍入误差内相等
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            spec = CellSpec(kind, n=n, d_x=2, d_h=3, K=int(rng.integers(1, 4)))
            pairs = self._permuted_step(kind, perturbed_params(rng, spec), random_scaled_laplacian(rng, n),
                                        rng.standard_normal((n, 2)), random_state(rng, spec), rng.permutation(n))
            for actual, expected in pairs:
                np.testing.assert_allclose(actual, expected, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_permutation_equivariance_exact_for_k1(self, kind):
        rng = np.random.default_rng(22)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            spec = CellSpec(kind, n=n, d_x=2, d_h=3, K=1)
            pairs = self._permuted_step(kind, perturbed_params(rng, spec), random_scaled_laplacian(rng, n),
                                        rng.standard_normal((n, 2)), random_state(rng, spec), rng.permutation(n))
            for actual, expected in pairs:
                np.testing.assert_array_equal(actual, expected)

    @pytest.mark.parametrize("kind", GRAPH_KINDS)
    def test_permutation_equivariance_exact_on_degree_two_graphs(self, kind):
        rng = np.random.default_rng(23)
        for _ in range(20):
            n = int(rng.integers(3, 10))
            ring = [(v, (v + 1) % n, float(rng.uniform(0.1, 2.0))) for v in range(n)]
            L = graph_from_edges(n, ring, lambda_max_mode="bound").scaled_laplacian
            assert np.diff(L.to_scipy().indptr).max() == 2
            spec = CellSpec(kind, n=n, d_x=2, d_h=3, K=int(rng.integers(2, 5)))
            pairs = self._permuted_step(kind, perturbed_params(rng, spec), L,
                                        rng.standard_normal((n, 2)), random_state(rng, spec), rng.permutation(n))
            for actual, expected in pairs:
                np.testing.assert_array_equal(actual, expected)


class TestCellBackward:

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_cotangent(self, kind):
        rng = np.random.default_rng(13)
        spec = CellSpec(kind, n=4, d_x=2, d_h=3, K=2)
        params = perturbed_params(rng, spec)
        L = random_scaled_laplacian(rng, 4)
        _, _, cache = cell_forward(kind, params, L, rng.standard_normal((4, 2)), random_state(rng, spec))
        dx, d_state, grads = cell_backward(kind, params, cache, np.zeros((4, 3)))
        assert not dx.any() and not d_state.h.any()
        assert all(not g.any() for g in grads.values())

    def test_kind_cache_mismatch(self):
        rng = np.random.default_rng(14)
        spec = CellSpec(CellKind.GCRNN, n=3, d_x=1, d_h=2, K=2)
        params = cell_init(spec, 0)
        _, _, cache = cell_forward(CellKind.GCRNN, params, random_scaled_laplacian(rng, 3),
                                   np.zeros((3, 1)), zero_state(spec))
        with pytest.raises(CellError):
            cell_backward(CellKind.GCGRU, params, cache, np.zeros((3, 2)))

    def test_gradients_accumulate(self):
        rng = np.random.default_rng(15)
        spec = CellSpec(CellKind.GCGRU, n=4, d_x=2, d_h=2, K=2)
        params = perturbed_params(rng, spec)
        L = random_scaled_laplacian(rng, 4)
        _, _, cache = cell_forward(CellKind.GCGRU, params, L, rng.standard_normal((4, 2)), random_state(rng, spec))
        d_h = rng.standard_normal((4, 2))
        _, _, once = cell_backward(CellKind.GCGRU, params, cache, d_h)
        _, _, twice = cell_backward(CellKind.GCGRU, params, cache, d_h,
                                    grads={name: g.copy() for name, g in once.items()})
        for name in once:
            np.testing.assert_allclose(twice[name], 2.0 * once[name], rtol=1e-14, atol=1e-15)

    def test_disabled_peepholes_match_zero_peepholes(self):
        rng = np.random.default_rng(16)
        with_peep = CellSpec(CellKind.FCLSTM, n=4, d_x=2, d_h=3, peepholes=True)
        without = CellSpec(CellKind.FCLSTM, n=4, d_x=2, d_h=3, peepholes=False)
        params = perturbed_params(rng, without)
        zero_peep = dict(params)
        for name in ("w_ci", "w_cf", "w_co"):
            zero_peep[name] = np.zeros(with_peep.peephole_dims())
        x, state = rng.standard_normal((4, 2)), random_state(rng, without)
        d_h = rng.standard_normal((4, 3))

        _, _, cache_a = fclstm_step(params, x, state)
        _, _, cache_b = fclstm_step(zero_peep, x, state)
        dx_a, ds_a, grads_a = cell_backward(CellKind.FCLSTM, params, cache_a, d_h)
        dx_b, ds_b, grads_b = cell_backward(CellKind.FCLSTM, zero_peep, cache_b, d_h)
        np.testing.assert_array_equal(dx_a, dx_b)
        np.testing.assert_array_equal(ds_a.c, ds_b.c)
        for name in params:
            np.testing.assert_array_equal(grads_a[name], grads_b[name])

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(17)
        for _ in range(5):
            errors = cell_gradient_errors(random_cell_instance(kind, rng))
            assert max_error(errors) <= GRADIENT_TOLERANCE, errors

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_finite_differences_suite(self, kind):
        rng = np.random.default_rng(18)
        for _ in range(100):
            errors = cell_gradient_errors(random_cell_instance(kind, rng))
            assert max_error(errors) <= GRADIENT_TOLERANCE, errors

    def test_corrupted_gradient_detected(self):
        rng = np.random.default_rng(19)
        errors = cell_gradient_errors(random_cell_instance(CellKind.GCLSTM_M2, rng), corrupt=True)
        assert max_error(errors) > GRADIENT_TOLERANCE

    def test_per_vertex_peephole_shape_on_grid(self):
        g = grid_graph(3, 3, 8)
        spec = CellSpec(CellKind.GCLSTM_M2, n=9, d_x=1, d_h=2, K=2)
        params = cell_init(spec, 0)
        assert params["w_ci"].shape == (9, 2)
        h, _, _ = gclstm_m2_step(params, g.scaled_laplacian, np.ones((9, 1)), zero_state(spec))
        assert h.shape == (9, 2)
