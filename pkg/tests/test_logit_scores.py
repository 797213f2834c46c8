"""MSP, max logit, entropy, and energy scores.

Frozen expected values were computed by direct evaluation of the defining
formulas with math.exp/math.log (see oracle values in the assertions).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodlens.errors import NonPositiveTemperature, SingleClass
from oodlens.logit_scores import energy_score, entropy_score, max_logit, msp

logit_rows = st.lists(
    st.lists(
        st.floats(min_value=-50, max_value=50, allow_nan=False),
        min_size=2,
        max_size=6,
    ).filter(lambda r: len(r) >= 2),
    min_size=1,
    max_size=8,
).filter(lambda rows: len({len(r) for r in rows}) == 1)


class TestMsp:
    def test_uniform_logits(self):
        assert msp([[0.0, 0.0, 0.0]])[0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_two_one_zero(self):
        # direct evaluation: e^2/(e^2 + e + 1) = 0.6652409557748218
        assert msp([[2.0, 1.0, 0.0]])[0] == pytest.approx(0.6652409557748218, abs=1e-6)

    def test_dominant_logit(self):
        # direct evaluation: e^10/(e^10 + 2) = 0.9999092083843409
        assert msp([[10.0, 0.0, 0.0]])[0] == pytest.approx(0.9999092083843409, abs=1e-6)

    def test_range(self):
        gen = np.random.default_rng(0)
        scores = msp(gen.normal(0, 5, (100, 4)))
        assert (scores > 0.25).all() and (scores <= 1.0).all()

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            msp([[1.0]])


class TestMaxLogit:
    def test_basic(self):
        assert max_logit([[2.0, 1.0, 0.0]])[0] == 2.0
        assert max_logit([[-1.0, -5.0]])[0] == -1.0

    @settings(max_examples=50, deadline=None)
    @given(logit_rows, st.floats(min_value=-10, max_value=10, allow_nan=False))
    def test_constant_shift_additivity(self, rows, c):
        arr = np.asarray(rows)
        shifted = max_logit(arr + c)
        assert shifted == pytest.approx(max_logit(arr) + c, abs=1e-9)


class TestEntropyScore:
    def test_uniform_binary(self):
        assert entropy_score([[0.0, 0.0]])[0] == pytest.approx(-math.log(2), abs=1e-12)

    def test_uniform_ternary(self):
        assert entropy_score([[0.0, 0.0, 0.0]])[0] == pytest.approx(
            -math.log(3), abs=1e-12
        )

    def test_dominant_logit(self):
        # direct evaluation of -H(softmax([10,0,0])) = -0.000998711894
        assert entropy_score([[10.0, 0.0, 0.0]])[0] == pytest.approx(
            -0.000998711894057499, abs=1e-5
        )

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            entropy_score([[1.0]])


class TestEnergyScore:
    def test_zeros_give_ln_k(self):
        for k in (2, 3, 5):
            assert energy_score([[0.0] * k])[0] == pytest.approx(math.log(k), abs=1e-12)

    def test_two_one_zero(self):
        # direct evaluation: ln(e^2 + e + 1) = 2.40760596444438
        assert energy_score([[2.0, 1.0, 0.0]])[0] == pytest.approx(
            2.40760596444438, abs=1e-6
        )

    def test_dominant_logit_limit(self):
        assert energy_score([[50.0, 0.0, 0.0]])[0] == pytest.approx(50.0, abs=1e-12)

    def test_nonpositive_temperature(self):
        for t in (0.0, -1.0):
            with pytest.raises(NonPositiveTemperature):
                energy_score([[1.0, 0.0]], t)

    @settings(max_examples=50, deadline=None)
    @given(logit_rows)
    def test_dominates_max_logit_at_t1(self, rows):
        arr = np.asarray(rows)
        assert (energy_score(arr) >= max_logit(arr) - 1e-12).all()


class TestSharedInvariants:
    @settings(max_examples=50, deadline=None)
    @given(logit_rows, st.floats(min_value=-20, max_value=20, allow_nan=False))
    def test_shift_behavior(self, rows, c):
        arr = np.asarray(rows)
        np.testing.assert_allclose(msp(arr + c), msp(arr), atol=1e-9)
        np.testing.assert_allclose(entropy_score(arr + c), entropy_score(arr), atol=1e-9)
        np.testing.assert_allclose(
            energy_score(arr + c), energy_score(arr) + c, atol=1e-9
        )

    @settings(max_examples=50, deadline=None)
    @given(logit_rows, st.randoms(use_true_random=False))
    def test_column_permutation_invariance(self, rows, rng):
        arr = np.asarray(rows)
        perm = list(range(arr.shape[1]))
        rng.shuffle(perm)
        permuted = arr[:, perm]
        for fn in (msp, max_logit, entropy_score, energy_score):
            np.testing.assert_allclose(fn(permuted), fn(arr), atol=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            msp([[np.nan, 0.0]])
