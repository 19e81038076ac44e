import torch
from django.test import SimpleTestCase
from torch import nn

from exceptions import ShapeError
from numerics.autograd import backward, finite_difference_check, layer_params
from numerics.layers import CausalConv3d, LayerNorm, attention, gelu

TOLERANCE = 1e-3


class BackwardTests(SimpleTestCase):
    def test_sum_gives_ones(self):
        p = torch.randn(3, 4, requires_grad=True)
        grads = backward(p.sum(), {"p": p})
        self.assertTrue(torch.equal(grads["p"], torch.ones(3, 4)))

    def test_unrelated_parameter_gets_zeros(self):
        p = torch.randn(3, requires_grad=True)
        q = torch.randn(2, requires_grad=True)
        grads = backward((p * 2).sum(), {"p": p, "q": q})
        self.assertTrue(torch.equal(grads["q"], torch.zeros(2)))

    def test_constant_loss_gives_zeros(self):
        p = torch.randn(3, requires_grad=True)
        grads = backward(torch.tensor(4.0), {"p": p})
        self.assertTrue(torch.equal(grads["p"], torch.zeros(3)))

    def test_non_scalar_loss_is_rejected(self):
        p = torch.randn(3, requires_grad=True)
        with self.assertRaises(ShapeError):
            backward(p * 2, {"p": p})

    def test_deterministic(self):
        layer = nn.Linear(4, 2)
        x = torch.randn(5, 4, generator=torch.Generator().manual_seed(0))
        first = backward(layer(x).pow(2).sum(), layer_params(layer))
        second = backward(layer(x).pow(2).sum(), layer_params(layer))
        for name in first:
            self.assertTrue(torch.equal(first[name], second[name]))


class FiniteDifferenceTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.generator = torch.Generator().manual_seed(0)

    def test_causal_conv3d(self):
        conv = CausalConv3d(2, 3, stride=(2, 1, 1)).double()
        x = torch.randn(1, 2, 5, 4, 4, dtype=torch.float64, generator=self.generator)
        error = finite_difference_check(lambda: conv(x).pow(2).sum(), layer_params(conv))
        self.assertLess(error, TOLERANCE)

    def test_attention(self):
        shape = (1, 2, 3, 4)
        q, k, v = (
            torch.randn(*shape, dtype=torch.float64, generator=self.generator).requires_grad_()
            for _ in range(3)
        )
        error = finite_difference_check(
            lambda: attention(q, k, v).pow(2).sum(), {"q": q, "k": k, "v": v}
        )
        self.assertLess(error, TOLERANCE)

    def test_layer_norm(self):
        norm = LayerNorm(6).double()
        with torch.no_grad():
            norm.scale.uniform_(0.5, 1.5)
        x = torch.randn(3, 6, dtype=torch.float64, generator=self.generator).requires_grad_()
        target = torch.randn(3, 6, dtype=torch.float64, generator=self.generator)
        params = {**layer_params(norm), "input": x}
        error = finite_difference_check(lambda: (norm(x) * target).sum(), params)
        self.assertLess(error, TOLERANCE)

    def test_linear_and_gelu(self):
        layer = nn.Linear(5, 4).double()
        x = torch.randn(2, 5, dtype=torch.float64, generator=self.generator).requires_grad_()
        params = {**layer_params(layer), "input": x}
        error = finite_difference_check(lambda: gelu(layer(x)).pow(2).sum(), params)
        self.assertLess(error, TOLERANCE)

    def test_gradient_through_a_transpose(self):
        p = torch.randn(3, 4, dtype=torch.float64, generator=self.generator).requires_grad_()
        b = torch.randn(3, 2, dtype=torch.float64, generator=self.generator)
        error = finite_difference_check(lambda: (p.transpose(0, 1) @ b).pow(2).sum(), {"p": p})
        self.assertLess(error, TOLERANCE)

    def test_non_contiguous_parameter_is_rejected(self):
        p = torch.empty_strided((3, 4), (1, 3), dtype=torch.float64).normal_(generator=self.generator)
        p.requires_grad_()
        with self.assertRaisesMessage(ShapeError, "must be contiguous"):
            finite_difference_check(lambda: p.pow(2).sum(), {"p": p})
