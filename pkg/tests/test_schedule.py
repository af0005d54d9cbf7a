import math

import numpy as np
import pytest

from climdown.schedule import linear_schedule


def product_oracle(beta, t):
    """Independent per-index product of (1 - beta) up to index t."""
    prod = 1.0
    for s in range(t + 1):
        prod *= 1.0 - float(beta[s])
    return prod


class TestLinearSchedule:
    def test_default_endpoints(self):
        s = linear_schedule()
        assert s.timesteps == 100
        assert s.beta[0] == pytest.approx(1e-4)
        assert s.beta[-1] == pytest.approx(0.02)

    def test_single_step_schedule(self):
        s = linear_schedule(1)
        assert s.beta.tolist() == [1e-4]
        assert s.alpha_bar[0] == pytest.approx(0.9999)

    def test_alpha_bar_first_entry(self):
        s = linear_schedule()
        assert s.alpha_bar[0] == pytest.approx(1 - 1e-4, rel=1e-12)
        assert s.alpha_bar[0] == s.alpha[0]

    def test_alpha_is_one_minus_beta_exactly(self):
        s = linear_schedule()
        for t in range(s.timesteps):
            b, a, _, _ = s.lookup(t)
            assert a == 1.0 - b

    def test_sigma_is_sqrt_beta(self):
        s = linear_schedule()
        assert np.array_equal(s.sigma, np.sqrt(s.beta))

    @pytest.mark.parametrize("timesteps", [1, 10, 100])
    def test_alpha_bar_matches_product_oracle(self, timesteps):
        s = linear_schedule(timesteps)
        for t in range(timesteps):
            want = product_oracle(s.beta, t)
            assert abs(s.alpha_bar[t] - want) <= 1e-12 * abs(want)

    def test_alpha_bar_strictly_decreasing(self):
        s = linear_schedule()
        assert np.all(np.diff(s.alpha_bar) < 0)

    def test_terminal_noising_level(self):
        # product oracle value, frozen: alpha_bar[99] ~ 0.36356 < 0.40
        s = linear_schedule()
        last = product_oracle(s.beta, 99)
        assert s.alpha_bar[-1] == pytest.approx(last, rel=1e-12)
        assert last < 0.40
        assert last == pytest.approx(0.3635632480554922, rel=1e-9)

    def test_log_sum_agreement(self):
        # alpha_bar[T-1] equals exp(sum of log alpha) within float noise
        s = linear_schedule()
        assert s.alpha_bar[-1] == pytest.approx(
            math.exp(np.log(s.alpha).sum()), rel=1e-12
        )

    def test_lookup_bounds(self):
        s = linear_schedule(10)
        with pytest.raises(IndexError):
            s.lookup(10)
        with pytest.raises(IndexError):
            s.lookup(-1)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            linear_schedule(0)
        with pytest.raises(ValueError):
            linear_schedule(10, beta_start=0.0)
        with pytest.raises(ValueError):
            linear_schedule(10, beta_start=0.5, beta_end=0.1)
        with pytest.raises(ValueError):
            linear_schedule(10, beta_start=0.5, beta_end=1.0)

    def test_mid_schedule_interpolation(self):
        s = linear_schedule(100, 1e-4, 0.02)
        # linear interpolation: beta[t] = start + t/(T-1) * (end - start)
        for t in (0, 33, 50, 99):
            want = 1e-4 + (t / 99) * (0.02 - 1e-4)
            assert s.beta[t] == pytest.approx(want, rel=1e-12)
