import math

import pytest

from treepot.errors import SchemaError
from treepot.weights import (WeightSequence, arithmetic, bounded, doubling_gap,
                             finite_weights, geometric_gap)


def test_arithmetic_extension():
    w = arithmetic([1.0], 1.0)
    assert [w.w(k) for k in range(4)] == [1.0, 2.0, 3.0, 4.0]
    assert w.delta(0) == 1.0 and w.delta(3) == 1.0
    assert math.isinf(w.limit())


def test_bounded_tail_hits_limit():
    w = bounded([1.0], 2.0, 0.5)
    assert [w.w(k) for k in range(4)] == [1.0, 1.5, 1.75, 1.875]
    assert w.limit() == 2.0
    assert w.delta_tail_sum(1) == (1.0, 1.0)


def test_geometric_gap():
    w = geometric_gap([1.0, 2.0], 0.5)
    assert w.w(2) == 2.5 and w.w(3) == 2.75
    assert w.limit() == math.inf  # limit only closed-form for bounded rule
    assert w.gap_ratio_sup(1) == 0.5


def test_doubling_gap_and_overflow_guard():
    w = doubling_gap([1.0, 2.0])
    assert [w.w(k) for k in range(5)] == [1.0, 2.0, 4.0, 12.0, 76.0]
    assert 30 < w.max_safe_index() < 60


def test_validation():
    with pytest.raises(SchemaError):
        finite_weights([2.0, 1.0])
    with pytest.raises(SchemaError):
        finite_weights([-1.0, 1.0])
    with pytest.raises(SchemaError):
        bounded([1.0], 0.5, 0.5)  # w_inf below prefix
    with pytest.raises(SchemaError):
        finite_weights([1.0, 2.0]).w(5)


def test_json_roundtrip():
    for w in (arithmetic([1.0, 2.5], 0.5), geometric_gap([1.0], 0.9),
              bounded([1.0], 3.0, 0.25), doubling_gap([1.0, 2.0]),
              finite_weights([1.0, 2.0, 4.0])):
        again = WeightSequence.from_json(w.to_json())
        upto = len(w.prefix) if w.finite else len(w.prefix) + 2
        assert [again.w(k) for k in range(upto)] == [w.w(k) for k in range(upto)]


def test_convention_w_minus_one_is_zero():
    w = arithmetic([1.0], 1.0)
    assert w.w(-1) == 0.0
    assert w.delta(0) == w.w(0)
