import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from basisdyn.errors import InputError
from basisdyn.logistic import (
    LogisticConfig,
    bernoulli_check,
    first_passage,
    lemma3_iteration_bound,
    lemma4_separation,
    logistic_iterate,
)


class TestIterate:
    def test_first_step(self):
        x = logistic_iterate(LogisticConfig(1.0, 0.1, 0.01), 1)
        assert x[0] == 0.01
        assert x[1] == pytest.approx(0.01099, abs=1e-15)

    def test_fixed_points(self):
        assert np.all(logistic_iterate(LogisticConfig(2.0, 0.1, 2.0), 20) == 2.0)
        assert np.all(logistic_iterate(LogisticConfig(2.0, 0.1, 0.0), 20) == 0.0)

    @given(st.floats(0.1, 10), st.floats(0.01, 0.99), st.floats(1e-9, 1.0))
    def test_monotone_and_bounded(self, sigma, eta_sigma, frac):
        x = logistic_iterate(LogisticConfig(sigma, eta_sigma / sigma, frac * sigma), 300)
        assert np.all(np.diff(x) >= -1e-15 * sigma)
        assert np.all(x <= sigma * (1 + 1e-12))

    def test_validation(self):
        with pytest.raises(InputError):
            LogisticConfig(1.0, 1.0, 0.1)
        with pytest.raises(InputError):
            LogisticConfig(1.0, 0.1, 2.0)
        with pytest.raises(InputError):
            LogisticConfig(-1.0, 0.1, 0.0)
        with pytest.raises(InputError):
            logistic_iterate(LogisticConfig(1.0, 0.1, 0.1), -1)


class TestLemma3:
    def test_value(self):
        assert lemma3_iteration_bound(0.1, 0.1, 1.0, 0.1) == math.ceil(2 * math.log(40) / math.log(1.1)) == 78

    def test_smaller_eps_needs_longer(self):
        assert lemma3_iteration_bound(1e-4, 0.01, 1.0, 0.1) > lemma3_iteration_bound(1e-4, 0.1, 1.0, 0.1)

    def test_first_passage_is_inclusive(self):
        cfg = LogisticConfig(1.0, 0.1, 0.5)
        assert first_passage(cfg, 0.5, 10) == 0
        assert first_passage(LogisticConfig(1.0, 0.1, 0.0), 0.5, 10) is None

    def test_errors(self):
        with pytest.raises(InputError):
            lemma3_iteration_bound(0.2, 0.1, 1.0, 0.1)
        with pytest.raises(InputError):
            lemma3_iteration_bound(0.01, 0.5, 1.0, 0.1)
        with pytest.raises(InputError):
            lemma3_iteration_bound(0.01, 0.1, 1.0, 1.0)


class TestLemma4:
    def test_values(self):
        T, y = lemma4_separation(2.0, 1.0, 0.1, 1e-9, 0.1)
        assert T == math.ceil(math.log(6.4e11) / math.log(1.2)) == 150
        assert y == pytest.approx(0.64, rel=1e-12)

    def test_close_signals_give_vacuous_bound(self):
        _, y = lemma4_separation(2.0, 2.0 - 1e-12, 0.1, 1e-9, 0.1)
        assert y == pytest.approx(16 * 4 / 0.1, rel=1e-9)

    @pytest.mark.parametrize("s2", [0.5, 1.0, 1.5])
    def test_twins_never_cross(self, s2):
        x = logistic_iterate(LogisticConfig(2.0, 0.1, 1e-6), 400)
        y = logistic_iterate(LogisticConfig(s2, 0.1, 1e-6), 400)
        assert np.all(x >= y)

    def test_errors(self):
        with pytest.raises(InputError):
            lemma4_separation(1.0, 2.0, 0.1, 1e-9, 0.1)
        with pytest.raises(InputError):
            lemma4_separation(2.0, 1.0, 0.2, 1e-9, 0.1)
        with pytest.raises(InputError):
            lemma4_separation(2.0, 1.0, 0.1, 0.5, 0.1)


class TestBernoulli:
    def test_examples(self):
        assert bernoulli_check(0.0, 3.0)
        assert bernoulli_check(0.1, 2.0)

    @given(st.floats(1.0, 50.0, exclude_min=True), st.floats(0.0, 0.999999))
    def test_holds_on_domain(self, r, frac):
        assert bernoulli_check(frac / (r - 1), r)

    def test_errors(self):
        with pytest.raises(InputError):
            bernoulli_check(0.1, 1.0)
        with pytest.raises(InputError):
            bernoulli_check(1.0, 2.0)
        with pytest.raises(InputError):
            bernoulli_check(-0.1, 2.0)
