import numpy as np
import pytest
import torch

from tsvad.errors import ConfigError, DataError
from tsvad.losses import masked_loss, temporal_shift_loss
from tsvad.windowing import WindowSpec


def brute_force_mse(output, target):
    """Element-by-element reference sum, no tensor reductions."""
    o = output.detach().numpy().ravel()
    t = target.detach().numpy().ravel()
    return sum((a - b) ** 2 for a, b in zip(o, t)) / len(o)


def test_identity_is_zero():
    spec = WindowSpec(6, 2)
    x = torch.rand(6, 8, 8)
    lb = temporal_shift_loss(x, x.clone(), spec)
    assert float(lb.total) == 0.0
    assert float(lb.recon_component) == 0.0
    assert float(lb.pred_component) == 0.0


def test_uniform_offset():
    spec = WindowSpec(6, 2)
    target = torch.rand(6, 8, 8, dtype=torch.double)
    output = target + 0.1
    lb = temporal_shift_loss(output, target, spec)
    assert float(lb.total) == pytest.approx(0.01, rel=1e-9)
    assert float(lb.recon_component) == pytest.approx(0.01, rel=1e-9)
    assert float(lb.pred_component) == pytest.approx(0.01, rel=1e-9)


def test_pred_only_error_example():
    # W=6, S=2, target 0, output 0 on recon positions and 0.3 on pred positions.
    spec = WindowSpec(6, 2)
    output = torch.zeros(6, 4, 4, dtype=torch.double)
    output[4:] = 0.3
    target = torch.zeros(6, 4, 4, dtype=torch.double)
    lb = temporal_shift_loss(output, target, spec)
    assert float(lb.recon_component) == 0.0
    assert float(lb.pred_component) == pytest.approx(0.09, rel=1e-12)
    assert float(lb.total) == pytest.approx(0.03, rel=1e-12)
    assert float(lb.total) == pytest.approx(brute_force_mse(output, target), rel=1e-12)


def test_weights_reflect_position_counts():
    lb = temporal_shift_loss(torch.rand(6, 4, 4), torch.rand(6, 4, 4), WindowSpec(6, 2))
    assert lb.recon_weight == pytest.approx(4 / 6)
    assert lb.pred_weight == pytest.approx(2 / 6)


def test_decomposition_identity_random_volumes():
    torch.manual_seed(7)
    for _ in range(1000):
        w = int(torch.randint(1, 9, ()).item())
        s = int(torch.randint(0, w + 1, ()).item())
        spec = WindowSpec(w, s)
        output = torch.rand(w, 6, 6, dtype=torch.double)
        target = torch.rand(w, 6, 6, dtype=torch.double)
        lb = temporal_shift_loss(output, target, spec)
        combo = lb.recon_weight * float(lb.recon_component) + lb.pred_weight * float(
            lb.pred_component
        )
        assert float(lb.total) == pytest.approx(combo, rel=1e-6)
        assert float(lb.total) == pytest.approx(brute_force_mse(output, target), rel=1e-6)


def test_zero_shift_reduces_to_plain_mse():
    spec = WindowSpec(8, 0)
    output = torch.rand(8, 4, 4, dtype=torch.double)
    target = torch.rand(8, 4, 4, dtype=torch.double)
    lb = temporal_shift_loss(output, target, spec)
    assert float(lb.pred_component) == 0.0
    assert float(lb.total) == float(lb.recon_component)
    assert float(lb.total) == pytest.approx(float(((output - target) ** 2).mean()), rel=1e-12)


def test_custom_weights():
    spec = WindowSpec(6, 2)
    output = torch.rand(6, 4, 4, dtype=torch.double)
    target = torch.rand(6, 4, 4, dtype=torch.double)
    lb = temporal_shift_loss(output, target, spec, weights=(0.25, 0.75))
    expected = 0.25 * float(lb.recon_component) + 0.75 * float(lb.pred_component)
    assert float(lb.total) == pytest.approx(expected, rel=1e-12)
    assert lb.recon_weight == 0.25 and lb.pred_weight == 0.75


def test_masked_full_equals_total():
    spec = WindowSpec(6, 2)
    output = torch.rand(2, 1, 6, 8, 8)
    target = torch.rand(2, 1, 6, 8, 8)
    assert float(masked_loss(output, target, spec, "full")) == float(
        temporal_shift_loss(output, target, spec).total
    )


def test_masked_recon_only_zero_shift_is_window_mse():
    spec = WindowSpec(8, 0)
    output = torch.rand(8, 4, 4, dtype=torch.double)
    target = torch.rand(8, 4, 4, dtype=torch.double)
    got = float(masked_loss(output, target, spec, "recon-only"))
    assert got == pytest.approx(float(((output - target) ** 2).mean()), rel=1e-12)


def test_masked_pred_only_full_shift_equals_full():
    spec = WindowSpec(4, 4)
    output = torch.rand(4, 4, 4, dtype=torch.double)
    target = torch.rand(4, 4, 4, dtype=torch.double)
    pred_only = float(masked_loss(output, target, spec, "pred-only"))
    full = float(masked_loss(output, target, spec, "full"))
    assert pred_only == pytest.approx(full, rel=1e-12)


def test_pred_only_without_shift_rejected():
    spec = WindowSpec(8, 0)
    x = torch.rand(8, 4, 4)
    with pytest.raises(ConfigError):
        masked_loss(x, x, spec, "pred-only")


def test_unknown_mode_rejected():
    spec = WindowSpec(6, 2)
    x = torch.rand(6, 4, 4)
    with pytest.raises(ConfigError):
        masked_loss(x, x, spec, "everything")


def test_shape_mismatch_rejected():
    spec = WindowSpec(6, 2)
    with pytest.raises(DataError):
        temporal_shift_loss(torch.rand(6, 4, 4), torch.rand(6, 4, 5), spec)
    with pytest.raises(DataError):
        temporal_shift_loss(torch.rand(5, 4, 4), torch.rand(5, 4, 4), spec)


def test_non_negative_and_zero_only_at_equality():
    torch.manual_seed(3)
    spec = WindowSpec(4, 1)
    for _ in range(50):
        output = torch.rand(4, 3, 3, dtype=torch.double)
        target = torch.rand(4, 3, 3, dtype=torch.double)
        lb = temporal_shift_loss(output, target, spec)
        assert float(lb.total) >= 0.0
        if not torch.equal(output, target):
            assert float(lb.total) > 0.0


def test_permutation_symmetry_within_recon_class():
    torch.manual_seed(11)
    spec = WindowSpec(6, 2)
    output = torch.rand(6, 5, 5, dtype=torch.double)
    target = torch.rand(6, 5, 5, dtype=torch.double)
    base = temporal_shift_loss(output, target, spec)
    perm = [2, 0, 3, 1, 4, 5]  # shuffle recon positions, keep pred fixed
    permuted_out = output[perm]
    permuted_tgt = target[perm]
    shuffled = temporal_shift_loss(permuted_out, permuted_tgt, spec)
    assert float(shuffled.recon_component) == pytest.approx(
        float(base.recon_component), rel=1e-12
    )
    assert float(shuffled.pred_component) == pytest.approx(
        float(base.pred_component), rel=1e-12
    )


def _finite_difference_grad(loss_fn, point, step=1e-4):
    grad = np.zeros_like(point.detach().numpy())
    flat = point.detach().clone().view(-1)
    for i in range(flat.numel()):
        plus = flat.clone()
        plus[i] += step
        minus = flat.clone()
        minus[i] -= step
        f_plus = float(loss_fn(plus.view_as(point)))
        f_minus = float(loss_fn(minus.view_as(point)))
        grad.ravel()[i] = (f_plus - f_minus) / (2 * step)
    return grad


@pytest.mark.parametrize("mode", ["full", "recon-only", "pred-only"])
def test_gradient_matches_central_differences(mode):
    torch.manual_seed(5)
    spec = WindowSpec(2, 1)
    target = torch.rand(2, 4, 4, dtype=torch.double)
    output = torch.rand(2, 4, 4, dtype=torch.double, requires_grad=True)

    loss = masked_loss(output, target, spec, mode)
    loss.backward()
    analytic = output.grad.detach().numpy()

    numeric = _finite_difference_grad(
        lambda o: masked_loss(o, target, spec, mode), output, step=1e-4
    )
    denom = np.maximum(np.abs(numeric), 1e-8)
    rel_err = np.abs(analytic - numeric) / denom
    assert rel_err.max() < 1e-3
