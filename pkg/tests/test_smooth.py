"""Smoothed rounding/modulo: exact values, derivatives, deviation bounds."""

import torch

import pytest

from rtgauntlet.errors import ParameterError
from rtgauntlet.transforms import exact_mod, smooth_mod, smooth_round


def test_integer_fixed_points():
    x = torch.tensor([-3.0, 0.0, 2.0, 17.0])
    assert torch.equal(smooth_round(x), x)


def test_quarter_value():
    # round(0.25) = 0, correction 0.25^3
    out = smooth_round(torch.tensor([0.25])).item()
    assert out == pytest.approx(0.015625, abs=1e-12)


def test_derivative_matches_central_difference():
    x = torch.tensor([0.25], dtype=torch.float64, requires_grad=True)
    smooth_round(x).sum().backward()
    assert x.grad.item() == pytest.approx(0.1875, abs=1e-9)
    h = 1e-6
    fd = (smooth_round(torch.tensor([0.25 + h], dtype=torch.float64))
          - smooth_round(torch.tensor([0.25 - h], dtype=torch.float64))).item() / (2 * h)
    assert fd == pytest.approx(0.1875, abs=1e-6)


def test_max_deviation_from_exact_round():
    x = torch.linspace(0.0, 1.0, 20001, dtype=torch.float64)[:-1]
    dev = (smooth_round(x) - torch.round(x)).abs()
    assert dev.max().item() == pytest.approx(0.125, abs=1e-9)
    # attained at fractional part 0.5, which round-half-even sends to 0
    assert x[dev.argmax()].item() == pytest.approx(0.5, abs=1e-9)


def test_agreement_at_integers_exact():
    x = torch.arange(-5.0, 6.0)
    assert torch.equal(smooth_round(x), torch.round(x))


class TestExactMod:
    def test_fractional_part(self):
        assert exact_mod(torch.tensor([1.25]), 1.0).item() == pytest.approx(0.25, abs=1e-12)

    def test_periodicity(self):
        x = torch.linspace(-2.3, 2.3, 101, dtype=torch.float64)
        torch.testing.assert_close(exact_mod(x + 1.0, 1.0), exact_mod(x, 1.0), atol=1e-12, rtol=0)

    def test_bad_divisor(self):
        with pytest.raises(ParameterError):
            exact_mod(torch.tensor([1.0]), 0.0)


class TestSmoothMod:
    def test_hand_evaluated_value(self):
        # u = 1.25: smoothed round is 1.015625, difference positive
        out = smooth_mod(torch.tensor([1.25], dtype=torch.float64), 1.0).item()
        assert out == pytest.approx(0.234375, abs=1e-12)

    def test_divisor_scaling(self):
        x = torch.tensor([2.5], dtype=torch.float64)
        a = smooth_mod(x, 2.0).item()
        b = 2.0 * smooth_mod(x / 2.0, 1.0).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_range_up_to_smoothing_error(self):
        x = torch.linspace(-4.0, 4.0, 4001, dtype=torch.float64)
        out = smooth_mod(x, 1.5)
        assert out.min().item() >= -1e-9
        assert out.max().item() <= 1.5 + 1e-9

    def test_nonzero_derivative_almost_everywhere(self):
        x = torch.linspace(0.05, 0.45, 41, dtype=torch.float64, requires_grad=True)
        smooth_mod(x, 1.0).sum().backward()
        assert (x.grad.abs() > 1e-6).all()

    def test_bad_divisor(self):
        with pytest.raises(ParameterError):
            smooth_mod(torch.tensor([1.0]), -2.0)
