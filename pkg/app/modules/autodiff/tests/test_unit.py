import math

import numpy as np
import pytest

from app.modules.autodiff import functional as F
from app.modules.autodiff.models import ScalarLoss, ShapeError, Tensor, topological_order
from app.modules.autodiff.services import GradCheckService, grad_check, primitive_cases


def image(values):
    array = np.asarray(values, dtype=np.float64)
    return Tensor(array.reshape((1, 1) + array.shape))


# --------------------
# Tensor and graph
# --------------------


def test_tensor_promotes_integer_data_to_float():
    assert Tensor([1, 2, 3]).dtype == np.float64


def test_backward_on_non_scalar_is_rejected():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        F.relu(x).backward()


def test_sum_gradient_is_all_ones(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
    F.sum_all(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((1, 2, 3, 3)))


def test_sigmoid_gradient_at_zero_is_quarter():
    x = Tensor(np.zeros((1, 1, 2, 2)), requires_grad=True)
    F.sum_all(F.sigmoid(x)).backward()
    np.testing.assert_allclose(x.grad, 0.25)


def test_shared_subexpression_gradients_are_summed():
    x = Tensor(np.full((1, 1, 2, 2), 3.0), requires_grad=True)
    y = F.relu(x)
    F.sum_all(F.add(y, y)).backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 2.0))


def test_repeated_backward_accumulates_until_reset():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    F.sum_all(x).backward()
    F.sum_all(x).backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 2.0))
    x.zero_grad()
    assert x.grad is None


def test_topological_order_visits_each_node_once():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    y = F.sigmoid(x)
    z = F.add(y, F.mul(y, y))
    order = topological_order(F.sum_all(z))
    assert len(order) == len({id(node) for node in order})
    assert order[0] is x
    assert order.index(y) < order.index(z)


def test_ops_without_grad_inputs_record_no_graph():
    out = F.relu(Tensor(np.ones((1, 1, 2, 2))))
    assert out.is_leaf
    assert not out.requires_grad


def test_assert_finite_flags_nan():
    with pytest.raises(FloatingPointError):
        Tensor([1.0, np.nan]).assert_finite("activations")


# --------------------
# conv2d / maxpool2
# --------------------


def test_conv2d_one_by_one_is_scalar_multiply():
    out = F.conv2d(image([[3.0]]), Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.zeros(1)))
    assert out.data.item() == 6.0


def test_conv2d_identity_kernel_returns_input(rng):
    x = Tensor(rng.normal(size=(2, 1, 5, 4)))
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    out = F.conv2d(x, Tensor(kernel), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_all_ones_kernel_matches_direct_sum():
    x = image([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    out = F.conv2d(x, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
    assert out.data[0, 0, 1, 1] == 45.0
    assert out.data[0, 0, 0, 0] == 12.0


def test_conv2d_same_padding_keeps_spatial_size(rng):
    x = Tensor(rng.normal(size=(1, 3, 6, 8)))
    out = F.conv2d(x, Tensor(rng.normal(size=(4, 3, 5, 5))), Tensor(np.zeros(4)))
    assert out.shape == (1, 4, 6, 8)


def test_conv2d_channel_mismatch_is_rejected(rng):
    with pytest.raises(ShapeError, match="channel mismatch"):
        F.conv2d(Tensor(rng.normal(size=(1, 2, 4, 4))), Tensor(rng.normal(size=(1, 3, 3, 3))), Tensor(np.zeros(1)))


def test_conv2d_even_kernel_is_rejected(rng):
    with pytest.raises(ShapeError, match="odd"):
        F.conv2d(Tensor(rng.normal(size=(1, 1, 4, 4))), Tensor(rng.normal(size=(1, 1, 2, 2))), Tensor(np.zeros(1)))


def test_maxpool2_window_max():
    assert F.maxpool2(image([[1, 2], [3, 4]])).data.item() == 4.0


def test_maxpool2_row_major_grid():
    out = F.maxpool2(image(np.arange(16).reshape(4, 4)))
    np.testing.assert_array_equal(out.data[0, 0], [[5, 7], [13, 15]])


def test_maxpool2_constant_input_halves_resolution():
    out = F.maxpool2(Tensor(np.full((1, 2, 4, 6), 1.5)))
    assert out.shape == (1, 2, 2, 3)
    np.testing.assert_array_equal(out.data, 1.5)


def test_maxpool2_tie_routes_gradient_to_first_cell():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    F.sum_all(F.maxpool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool2_odd_dims_are_rejected():
    with pytest.raises(ShapeError):
        F.maxpool2(Tensor(np.ones((1, 1, 3, 4))))


# --------------------
# Elementwise
# --------------------


def test_relu_values():
    out = F.relu(Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)))
    np.testing.assert_array_equal(out.data.ravel(), [0.0, 0.0, 2.0])


def test_relu_subgradient_at_zero_is_zero():
    x = Tensor(np.zeros((1, 1, 1, 1)), requires_grad=True)
    F.sum_all(F.relu(x)).backward()
    assert x.grad.item() == 0.0


def test_sigmoid_closed_forms():
    assert F.sigmoid(image([[0.0]])).data.item() == 0.5
    assert F.sigmoid(image([[math.log(3)]])).data.item() == pytest.approx(0.75, abs=1e-15)


def test_sigmoid_stays_strictly_inside_unit_interval():
    out = F.sigmoid(image([[-1000.0, -100.0, 100.0, 1000.0]])).data
    assert np.all(out > 0) and np.all(out < 1)


def test_sigmoid_symmetry_and_reverse_identity(rng):
    x = Tensor(rng.normal(scale=4.0, size=(1, 2, 5, 5)))
    positive = F.sigmoid(x).data
    negative = F.sigmoid(F.negate(x)).data
    np.testing.assert_allclose(positive + negative, 1.0, atol=1e-12)
    np.testing.assert_allclose(F.reverse(F.sigmoid(x)).data, negative, atol=1e-12)


def test_reverse_values():
    out = F.reverse(image([[0.0, 0.5, 1.0]]))
    np.testing.assert_array_equal(out.data.ravel(), [1.0, 0.5, 0.0])


def test_broadcast_mul_scales_every_channel():
    features = Tensor(np.array([2.0, 4.0]).reshape(1, 2, 1, 1))
    attention = Tensor(np.full((1, 1, 1, 1), 0.5))
    out = F.elementwise(features, attention, "mul")
    np.testing.assert_array_equal(out.data.ravel(), [1.0, 2.0])


def test_broadcast_mul_gradient_sums_over_channels():
    features = Tensor(np.array([2.0, 4.0]).reshape(1, 2, 1, 1), requires_grad=True)
    attention = Tensor(np.full((1, 1, 1, 1), 0.5), requires_grad=True)
    F.sum_all(F.mul(features, attention)).backward()
    assert attention.grad.shape == (1, 1, 1, 1)
    assert attention.grad.item() == 6.0


def test_add_requires_equal_shapes():
    with pytest.raises(ShapeError):
        F.add(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((1, 1, 2, 2))))


def test_mul_rejects_incompatible_shapes():
    with pytest.raises(ShapeError):
        F.mul(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((1, 2, 4, 4))))


def test_elementwise_unknown_kind():
    with pytest.raises(ValueError):
        F.elementwise(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones((1, 1, 1, 1))), "sub")


# --------------------
# bilinear_upsample
# --------------------


@pytest.mark.parametrize("factor", [2, 4, 8, 16, 32])
def test_upsample_preserves_constants(factor):
    out = F.bilinear_upsample(Tensor(np.full((1, 1, 2, 3), 0.7)), factor)
    assert out.shape == (1, 1, 2 * factor, 3 * factor)
    np.testing.assert_allclose(out.data, 0.7, atol=1e-15)


def test_upsample_single_pixel_clamps():
    out = F.bilinear_upsample(image([[5.0]]), 2)
    np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 5.0))


def test_upsample_matches_half_pixel_formula():
    source = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = F.bilinear_upsample(image(source), 2).data[0, 0]
    np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)

    def sample(i, j):
        y = min(max((i + 0.5) / 2 - 0.5, 0.0), 1.0)
        x = min(max((j + 0.5) / 2 - 0.5, 0.0), 1.0)
        top = source[0, 0] * (1 - x) + source[0, 1] * x
        bottom = source[1, 0] * (1 - x) + source[1, 1] * x
        return top * (1 - y) + bottom * y

    expected = np.array([[sample(i, j) for j in range(4)] for i in range(4)])
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_upsample_is_linear(rng):
    a, b = rng.normal(size=(2, 1, 2, 3, 3))
    combined = F.bilinear_upsample(Tensor(2.0 * a - 0.5 * b), 4).data
    separate = 2.0 * F.bilinear_upsample(Tensor(a), 4).data - 0.5 * F.bilinear_upsample(Tensor(b), 4).data
    np.testing.assert_allclose(combined, separate, atol=1e-12)


def test_upsample_rejects_invalid_factor():
    with pytest.raises(ShapeError):
        F.bilinear_upsample(Tensor(np.ones((1, 1, 2, 2))), 3)


# --------------------
# bce_from_logits
# --------------------


def test_bce_zero_logits_unbalanced_is_p_ln2():
    loss = F.bce_from_logits(Tensor(np.zeros((1, 1, 4, 5))), Tensor(np.ones((1, 1, 4, 5))), balanced=False)
    assert isinstance(loss, ScalarLoss)
    assert loss.value == pytest.approx(20 * math.log(2), rel=1e-12)


def test_bce_hand_evaluated_two_pixel_case():
    logits = Tensor(np.array([math.log(3), -math.log(3)]).reshape(1, 1, 1, 2))
    target = Tensor(np.array([1.0, 0.0]).reshape(1, 1, 1, 2))
    loss = F.bce_from_logits(logits, target, balanced=False)
    assert loss.value == pytest.approx(-2 * math.log(0.75), abs=1e-12)
    assert loss.value == pytest.approx(0.57536, abs=1e-5)


def test_bce_confident_correct_prediction_is_tiny():
    logits = Tensor(np.array([100.0, -100.0]).reshape(1, 1, 1, 2))
    target = Tensor(np.array([1.0, 0.0]).reshape(1, 1, 1, 2))
    assert F.bce_from_logits(logits, target, balanced=False).value < 1e-6


def test_bce_extreme_logits_stay_finite():
    logits = Tensor(np.array([1000.0, -1000.0]).reshape(1, 1, 1, 2), requires_grad=True)
    target = Tensor(np.array([0.0, 1.0]).reshape(1, 1, 1, 2))
    loss = F.bce_from_logits(logits, target, balanced=False)
    loss.backward()
    assert loss.value == pytest.approx(2000.0)
    assert np.all(np.isfinite(logits.grad))


def test_bce_balanced_weights_each_class_by_the_other_share():
    target = np.array([1.0, 0.0, 0.0, 0.0]).reshape(1, 1, 2, 2)
    loss = F.bce_from_logits(Tensor(np.zeros((1, 1, 2, 2))), Tensor(target), balanced=True)
    # one positive weighted 3/4, three negatives weighted 1/4
    assert loss.value == pytest.approx((0.75 + 3 * 0.25) * math.log(2), rel=1e-12)


def test_bce_rejects_non_binary_target():
    with pytest.raises(ValueError):
        F.bce_from_logits(Tensor(np.zeros((1, 1, 1, 2))), Tensor(np.array([0.5, 1.0]).reshape(1, 1, 1, 2)))


def test_bce_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        F.bce_from_logits(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 3))))


# --------------------
# grad_check
# --------------------


def test_grad_check_linear_op_is_exact(rng):
    x = Tensor(rng.normal(size=(1, 1, 3, 3)))
    assert grad_check(lambda x: F.sum_all(F.scale(x, 2.0)), [x]) < 1e-10


def test_grad_check_detects_wrong_backward(rng):
    def squared_with_bad_rule(x):
        return F.sum_all(Tensor.from_op(x.data**2, (x,), lambda grad: (grad * x.data,), "bad_square"))

    x = Tensor(rng.uniform(0.5, 1.5, size=(1, 1, 2, 2)))
    assert grad_check(squared_with_bad_rule, [x]) > 0.1


def test_grad_check_leaves_inputs_unchanged(rng):
    x = Tensor(rng.normal(size=(1, 1, 3, 3)))
    before = x.data.copy()
    grad_check(lambda x: F.sum_all(F.sigmoid(x)), [x])
    np.testing.assert_array_equal(x.data, before)
    assert x.grad is None


@pytest.mark.parametrize("case", primitive_cases(), ids=lambda case: case.name)
def test_primitive_gradients_match_finite_differences(case):
    result = GradCheckService().check_case(case, seeds=20)
    assert result.passed, f"{case.name}: max relative error {result.max_error:.3e} >= {result.tolerance:.0e}"
    assert len(result.per_seed) == 20


def test_determinism_of_forward_ops(rng):
    x = rng.normal(size=(1, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))

    def run():
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)))
        return F.bilinear_upsample(F.maxpool2(F.relu(out)), 2).data

    np.testing.assert_array_equal(run(), run())
