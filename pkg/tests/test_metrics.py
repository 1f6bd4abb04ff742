import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ipmc_hybrid.errors import DataError, DegenerateTargetError
from ipmc_hybrid.metrics import evaluate, fitting, nmse

finite = st.floats(-1e3, 1e3, allow_nan=False)


def pairs(min_size=2):
    return st.integers(min_size, 40).flatmap(
        lambda n: st.tuples(arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite))
    )


def test_hand_examples():
    assert nmse([0, 2], [0, 1]) == pytest.approx(0.125, abs=1e-12)
    assert fitting([0, 2], [2, 0]) == pytest.approx(-100.0, abs=1e-12)
    w = np.array([1.0, 3.0, -2.0])
    wn = w / 3.0
    assert fitting(w, np.full(3, w.mean())) == pytest.approx(0.0, abs=1e-12)
    assert nmse(w, np.zeros(3)) == pytest.approx(np.mean(wn**2), abs=1e-15)


def test_errors():
    with pytest.raises(DataError):
        nmse([1, 2], [1])
    with pytest.raises(DegenerateTargetError):
        nmse([0, 0], [1, 1])
    with pytest.raises(DegenerateTargetError):
        fitting([2, 2], [1, 1])
    with pytest.raises(DataError):
        nmse([], [])


def test_evaluate_records_normalizer():
    r = evaluate([0.0, -4.0, 2.0], [0.0, -4.0, 2.0])
    assert r.normalizer == 4.0 and r.n_samples == 3
    assert r.nmse == 0.0 and r.fitting_percent == 100.0


@settings(max_examples=100, deadline=None)
@given(pairs(), st.floats(1e-3, 1e3))
def test_metric_properties(pair, c):
    w, w_hat = pair
    assume(np.ptp(w) > 1e-6)
    e, f = nmse(w, w_hat), fitting(w, w_hat)
    assert e >= 0 and f <= 100
    assert nmse(w, w) == 0 and fitting(w, w) == 100
    assert nmse(c * w, c * w_hat) == pytest.approx(e, rel=1e-9, abs=1e-12)
    assert fitting(c * w, c * w_hat) == pytest.approx(f, rel=1e-9, abs=1e-9)
    perm = np.random.default_rng(len(w)).permutation(len(w))
    assert nmse(w[perm], w_hat[perm]) == pytest.approx(e, rel=1e-12, abs=1e-15)
    assert fitting(w[perm], w_hat[perm]) == pytest.approx(f, rel=1e-9, abs=1e-9)
