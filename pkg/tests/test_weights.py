"""Weight families and the normalization invariant sum_k C(n-1,k-1) w(k) = n."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustval import InvalidParam, NormalizationViolation, make_weights
from robustval.weights import log_comb, normalization_sum, rescaled


def test_loo_weights_n3():
    spec = make_weights("loo", 3)
    assert [spec.w(k) for k in (1, 2, 3)] == [0.0, 0.0, 3.0]


def test_banzhaf_weights_n4():
    spec = make_weights("banzhaf", 4)
    assert [spec.w(k) for k in range(1, 5)] == [0.5, 0.5, 0.5, 0.5]


def test_shapley_weights_n3():
    spec = make_weights("shapley", 3)
    np.testing.assert_allclose([spec.w(k) for k in (1, 2, 3)], [1.0, 0.5, 1.0])


@pytest.mark.parametrize("kind", ["loo", "shapley", "banzhaf"])
@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 13, 21])
def test_families_satisfy_normalization(kind, n):
    spec = make_weights(kind, n)
    total = normalization_sum(spec.as_array(), n)
    assert abs(total - n) <= 1e-9 * n


@pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (2.5, 3.5)])
def test_beta_weights_normalized(alpha, beta):
    spec = make_weights("beta", 7, alpha=alpha, beta=beta)
    assert abs(normalization_sum(spec.as_array(), 7) - 7) <= 1e-9 * 7


def test_beta_1_1_is_shapley():
    """The uniform Beta prior recovers the Shapley weighting."""
    for n in (2, 5, 9):
        b = make_weights("beta", n, alpha=1.0, beta=1.0)
        s = make_weights("shapley", n)
        np.testing.assert_allclose(b.as_array(), s.as_array(), rtol=1e-12)


def test_beta_rejects_nonpositive_params():
    with pytest.raises(InvalidParam):
        make_weights("beta", 5, alpha=0.0, beta=1.0)
    with pytest.raises(InvalidParam):
        make_weights("beta", 5, alpha=1.0, beta=-2.0)


class TestCustomWeights:
    def test_valid_custom_accepted(self):
        # n=3: C(2,0)w1 + C(2,1)w2 + C(2,2)w3 = 3
        spec = make_weights("custom", 3, weights=[1.0, 0.5, 1.0])
        assert spec.w(2) == 0.5

    def test_off_normalization_rejected(self):
        with pytest.raises(NormalizationViolation):
            make_weights("custom", 3, weights=[1.0, 1.0, 1.0])

    def test_wrong_length_rejected(self):
        with pytest.raises(InvalidParam):
            make_weights("custom", 3, weights=[1.0, 0.5])

    def test_w_outside_range_is_zero(self):
        spec = make_weights("banzhaf", 4)
        assert spec.w(0) == 0.0
        assert spec.w(5) == 0.0

    @given(
        st.integers(min_value=2, max_value=12),
        st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=12, max_size=12),
    )
    @settings(max_examples=60, deadline=None)
    def test_rescaled_always_normalizes(self, n, raw):
        spec = rescaled(np.asarray(raw[:n]), n)
        assert abs(normalization_sum(spec.as_array(), n) - n) <= 1e-9 * n


def test_log_comb_matches_exact():
    for n in (5, 30, 200, 500):
        for k in (0, 1, n // 3, n // 2, n):
            assert math.isclose(
                log_comb(n, k), math.log(math.comb(n, k)), rel_tol=1e-12
            )


def test_normalization_check_survives_large_n():
    """C(n-1, k-1) overflows floats well before n=400; the check must not."""
    spec = make_weights("shapley", 400)
    assert abs(normalization_sum(spec.as_array(), 400) - 400) <= 1e-9 * 400


def test_unknown_kind_rejected():
    with pytest.raises(InvalidParam):
        make_weights("borda", 4)
