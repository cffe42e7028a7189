import numpy as np
import pytest

from automixer import autodiff as ad
from automixer.autodiff import Adam, Tensor, backward, clip_grad_norm
from automixer.errors import (DataError, DimensionError, ParameterError,
                              TrainingDiverged, UsageError)
from automixer.gradcheck import check_gradients, numerical_grad, relative_error


def rand_tensor(rng, shape, name=None):
    return Tensor(rng.uniform(-2, 2, shape), requires_grad=True, name=name)


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, Tensor(np.eye(2)))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_zero(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, Tensor(np.zeros((2, 2))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        a = rand_tensor(rng, (3, 3), "a")
        b = rand_tensor(rng, (3, 3), "b")
        err = check_gradients(lambda: ad.total_sum(ad.matmul(a, b)), [a, b], tol=1e-6)
        assert err < 1e-6

    def test_batched_left_operand(self):
        rng = np.random.default_rng(8)
        a = rand_tensor(rng, (2, 3, 4), "a")
        b = rand_tensor(rng, (4, 5), "b")
        assert ad.matmul(a, b).shape == (2, 3, 5)
        check_gradients(lambda: ad.total_sum(ad.matmul(a, b)), [a, b], tol=1e-6)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)

    def test_tanh_at_zero(self):
        assert ad.tanh(Tensor(0.0)).item() == 0.0

    def test_sigmoid_gradient(self):
        x = Tensor([0.3, -1.2], requires_grad=True)
        err = check_gradients(lambda: ad.total_sum(ad.sigmoid(x)), [x], tol=1e-6)
        assert err < 1e-6

    @pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.relu, ad.gelu])
    def test_unary_gradients(self, op):
        rng = np.random.default_rng(11)
        x = rand_tensor(rng, (4, 3))
        check_gradients(lambda: ad.total_sum(op(x)), [x], tol=1e-5)

    @pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
    def test_binary_gradients(self, op):
        rng = np.random.default_rng(12)
        a = rand_tensor(rng, (3, 4))
        b = rand_tensor(rng, (3, 4))
        check_gradients(lambda: ad.total_sum(op(a, b)), [a, b], tol=1e-6)

    @pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
    def test_trailing_vector_broadcast(self, op):
        rng = np.random.default_rng(13)
        a = rand_tensor(rng, (2, 5, 4))
        b = rand_tensor(rng, (4,))
        assert op(a, b).shape == (2, 5, 4)
        check_gradients(lambda: ad.total_sum(op(a, b)), [a, b], tol=1e-6)

    def test_incompatible_broadcast_rejected(self):
        with pytest.raises(DimensionError):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_scale_by_constant(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        out = ad.scale(x, 2.5)
        np.testing.assert_allclose(out.data, [2.5, -5.0])
        check_gradients(lambda: ad.total_sum(ad.scale(x, 2.5)), [x], tol=1e-6)


class TestReshapePermute:
    def test_reshape_round_trip_bit_identical(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(24, 16)))
        back = ad.reshape(ad.reshape(x, (16, 3, 8)), (24, 16))
        assert np.array_equal(back.data, x.data)

    def test_double_permute_is_identity(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(3, 5)))
        assert np.array_equal(ad.permute(ad.permute(x, (1, 0)), (1, 0)).data, x.data)

    def test_gradient_through_permute(self):
        rng = np.random.default_rng(5)
        x = rand_tensor(rng, (2, 3))
        w = rand_tensor(rng, (2, 3))
        check_gradients(
            lambda: ad.total_sum(ad.mul(ad.permute(x, (1, 0)), ad.permute(w, (1, 0)))),
            [x, w], tol=1e-6)

    def test_reshape_count_mismatch(self):
        with pytest.raises(DimensionError):
            ad.reshape(Tensor(np.ones((2, 3))), (4, 2))

    def test_bad_permutation(self):
        with pytest.raises(DimensionError):
            ad.permute(Tensor(np.ones((2, 3))), (0, 0))


class TestStackTake:
    def test_take_row_inverts_stack(self):
        rng = np.random.default_rng(6)
        rows = [Tensor(rng.normal(size=4), requires_grad=True) for _ in range(3)]
        stacked = ad.stack(rows, axis=0)
        for i, r in enumerate(rows):
            assert np.array_equal(ad.take_row(stacked, i).data, r.data)

    def test_gradients(self):
        rng = np.random.default_rng(9)
        rows = [rand_tensor(rng, (4,)) for _ in range(3)]
        check_gradients(
            lambda: ad.total_sum(ad.mul(ad.stack(rows, axis=0),
                                        ad.stack(rows, axis=0))),
            rows, tol=1e-6)


class TestNormalizeLayer:
    def test_constant_input_maps_to_zero(self):
        out = ad.normalize_layer(Tensor([1.0, 1.0, 1.0]),
                                 Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_two_point_closed_form(self):
        # mean 0, var 1 -> x unchanged up to the eps correction
        out = ad.normalize_layer(Tensor([-1.0, 1.0]),
                                 Tensor(np.ones(2)), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-5)

    def test_gradient_random_4_vector(self):
        rng = np.random.default_rng(10)
        x = rand_tensor(rng, (4,), "x")
        g = rand_tensor(rng, (4,), "g")
        b = rand_tensor(rng, (4,), "b")
        err = check_gradients(
            lambda: ad.total_sum(ad.mul(ad.normalize_layer(x, g, b),
                                        ad.normalize_layer(x, g, b))),
            [x, g, b], tol=1e-5)
        assert err < 1e-5

    def test_gamma_beta_shape_check(self):
        with pytest.raises(DimensionError):
            ad.normalize_layer(Tensor(np.ones((2, 3))),
                               Tensor(np.ones(2)), Tensor(np.zeros(3)))


class TestDropout:
    def test_eval_mode_identity(self):
        x = Tensor(np.arange(6.0))
        out = ad.dropout(x, 0.4, training=False, rng=None)
        np.testing.assert_array_equal(out.data, x.data)

    def test_p_zero_identity(self):
        x = Tensor(np.arange(6.0))
        out = ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x.data)

    def test_mean_preserved_in_expectation(self):
        rng = np.random.default_rng(42)
        out = ad.dropout(Tensor(np.ones(100_000)), 0.5, training=True, rng=rng)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_p_one_rejected(self):
        with pytest.raises(ParameterError):
            ad.dropout(Tensor(np.ones(3)), 1.0, training=True,
                       rng=np.random.default_rng(0))

    def test_seeded_masks_reproducible(self):
        x = Tensor(np.ones(1000))
        a = ad.dropout(x, 0.3, True, np.random.default_rng(5)).data
        b = ad.dropout(x, 0.3, True, np.random.default_rng(5)).data
        assert np.array_equal(a, b)


class TestLosses:
    def test_mse_zero_on_equal(self):
        t = Tensor([1.0, 2.0, 3.0])
        assert ad.loss_mse(t, Tensor([1.0, 2.0, 3.0])).item() == 0.0

    def test_mse_unit_offset(self):
        assert ad.loss_mse(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0

    def test_mse_matches_hand_computation(self):
        rng = np.random.default_rng(14)
        p, t = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        expected = float(np.mean((p - t) ** 2))
        assert ad.loss_mse(Tensor(p), Tensor(t)).item() == pytest.approx(
            expected, abs=1e-12)

    def test_mse_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.loss_mse(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_bce_indifference_point(self):
        assert ad.loss_bce_logits(Tensor([0.0]), Tensor([1.0])).item() == \
            pytest.approx(np.log(2.0))

    def test_bce_saturation(self):
        assert ad.loss_bce_logits(Tensor([50.0]), Tensor([1.0])).item() == \
            pytest.approx(0.0, abs=1e-12)

    def test_bce_matches_direct_formula(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=5)
        y = rng.integers(0, 2, 5).astype(float)
        s = 1 / (1 + np.exp(-x))
        expected = float(np.mean(-(y * np.log(s) + (1 - y) * np.log(1 - s))))
        got = ad.loss_bce_logits(Tensor(x), Tensor(y)).item()
        assert got == pytest.approx(expected, abs=1e-9)

    def test_bce_rejects_non_binary_labels(self):
        with pytest.raises(DataError):
            ad.loss_bce_logits(Tensor([0.0]), Tensor([0.5]))

    @pytest.mark.parametrize("loss", [ad.loss_mse, ad.loss_bce_logits])
    def test_loss_gradients(self, loss):
        rng = np.random.default_rng(16)
        pred = rand_tensor(rng, (2, 3), "pred")
        target = Tensor(rng.integers(0, 2, (2, 3)).astype(float))
        check_gradients(lambda: loss(pred, target), [pred], tol=1e-6)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        backward(ad.total_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(ad.total_sum(ad.mul(x, x)))
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(UsageError):
            backward(ad.add(x, x))

    def test_fanout_accumulates_like_duplicated_inputs(self):
        # loss(x, x) must equal loss(x1, x2) gradients summed
        rng = np.random.default_rng(17)
        v = rng.normal(size=4)
        x = Tensor(v, requires_grad=True)
        backward(ad.total_sum(ad.mul(ad.sigmoid(x), ad.tanh(x))))
        x1 = Tensor(v, requires_grad=True)
        x2 = Tensor(v, requires_grad=True)
        backward(ad.total_sum(ad.mul(ad.sigmoid(x1), ad.tanh(x2))))
        np.testing.assert_allclose(x.grad, x1.grad + x2.grad, rtol=1e-12)

    def test_outputs_finite_on_finite_inputs(self):
        rng = np.random.default_rng(18)
        x = Tensor(rng.uniform(-100, 100, (50,)))
        for op in (ad.sigmoid, ad.tanh, ad.relu, ad.gelu):
            assert np.all(np.isfinite(op(x).data))
        assert np.isfinite(ad.loss_bce_logits(
            Tensor(rng.uniform(-500, 500, 20)),
            Tensor(rng.integers(0, 2, 20).astype(float))).item())

    def test_no_grad_suppresses_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.sigmoid(x)
        assert out._backward is None and not out.requires_grad


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        p = Tensor([1.0, 2.0], requires_grad=True, name="p")
        p.grad = np.zeros(2)
        before = p.data.copy()
        Adam([p]).step()
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_is_minus_lr(self):
        # bias-corrected moments cancel: one step with g=1 moves by exactly -lr
        p = Tensor([0.0], requires_grad=True)
        p.grad = np.ones(1)
        Adam([p], lr=1e-3).step()
        assert p.data[0] == pytest.approx(-1e-3, abs=1e-10)  # eps shifts by lr*eps

    def test_converges_on_quadratic(self):
        w = Tensor([0.0], requires_grad=True)
        opt = Adam([w], lr=0.05)
        for _ in range(200):
            opt.zero_grad()
            loss = ad.loss_mse(w, Tensor([3.0]))
            backward(loss)
            opt.step()
        assert abs(w.data[0] - 3.0) < 0.5

    def test_nan_gradient_aborts(self):
        p = Tensor([1.0], requires_grad=True)
        p.grad = np.array([np.nan])
        with pytest.raises(TrainingDiverged):
            Adam([p]).step()

    def test_clip_grad_norm(self):
        p = Tensor(np.zeros(4), requires_grad=True)
        p.grad = np.full(4, 10.0)
        norm = clip_grad_norm([p], max_norm=5.0)
        assert norm == pytest.approx(20.0)
        assert np.linalg.norm(p.grad) == pytest.approx(5.0)


class TestGradcheckHarness:
    def test_numerical_grad_on_quadratic(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        num = numerical_grad(lambda: float(np.sum(x.data ** 2)), x)
        np.testing.assert_allclose(num, [2.0, -4.0], atol=1e-7)

    def test_relative_error_zero_for_equal(self):
        g = np.array([1.0, 2.0])
        assert relative_error(g, g) == 0.0
