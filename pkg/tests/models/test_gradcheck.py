from __future__ import annotations

import pytest
import torch

from src.models import ModelError, NonDeterministicClosure, grad_check


def test_quadratic_loss():
    p = torch.randn(5, dtype=torch.float64, requires_grad=True)

    error = grad_check(lambda: 0.5 * (p**2).sum(), [("p", p)], epsilon=1e-4, samples_per_tensor=None)

    assert error < 1e-10


@pytest.mark.parametrize("scale", [1.0, 1e-4])
def test_wrong_gradient_is_caught_at_any_loss_scale(scale):
    torch.manual_seed(0)
    p = torch.randn(5, dtype=torch.float64, requires_grad=True)

    def closure():
        # forward value is unchanged; the extra term adds 10% to the analytic gradient
        skew = 0.05 * ((p**2).sum() - (p.detach() ** 2).sum())
        return scale * (0.5 * (p**2).sum() + skew)

    error = grad_check(closure, [("p", p)], epsilon=1e-4, samples_per_tensor=None)

    assert error == pytest.approx(0.1 / 1.1, rel=1e-4)


def test_frozen_parameter_is_skipped_and_gets_no_gradient():
    p = torch.randn(3, dtype=torch.float64, requires_grad=True)
    frozen = torch.randn(3, dtype=torch.float64, requires_grad=False)

    error = grad_check(lambda: (p * frozen).sum(), [("p", p), ("frozen", frozen)], samples_per_tensor=None)

    assert error < 1e-8
    assert frozen.grad is None


def test_float32_is_rejected():
    p = torch.randn(3, requires_grad=True)

    with pytest.raises(ModelError):
        grad_check(lambda: p.sum(), [("p", p)])


def test_nondeterministic_closure():
    p = torch.randn(3, dtype=torch.float64, requires_grad=True)
    calls = iter(range(100))

    with pytest.raises(NonDeterministicClosure):
        grad_check(lambda: p.sum() + next(calls), [("p", p)])


def test_tiny_vit_head_gradients(tiny_network):
    torch.manual_seed(1)
    x = torch.randn(2, 3, 8, 8, dtype=torch.float64)
    target = torch.softmax(torch.randn(2, 8, dtype=torch.float64), dim=-1)

    def closure():
        logits = tiny_network.dino_head(tiny_network.encode(x).cls)
        return -(target * torch.log_softmax(logits / 0.1, dim=-1)).sum(dim=-1).mean()

    error = grad_check(closure, tiny_network, epsilon=1e-5, samples_per_tensor=3)

    assert error < 1e-6
    gain = tiny_network.dino_head.last_layer.parametrizations.weight.original0
    assert gain.grad is None
