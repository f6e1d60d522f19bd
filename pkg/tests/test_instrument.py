import numpy as np

from exprad.instrument import count_allocations


def test_counts_temporaries():
    a = np.ones(100)
    with count_allocations() as c:
        _ = a + a
    assert c.count >= 1 and c.nbytes >= 800


def test_out_argument_is_free():
    a = np.ones(100)
    with count_allocations() as c:
        np.multiply(a, a, out=a)
        np.add.reduce(a, out=np.empty(()))[()] if False else None
    assert c.count == 0


def test_nested_use_restores_handler():
    with count_allocations() as outer:
        pass
    with count_allocations() as inner:
        np.zeros(10)
    assert outer.count == 0 and inner.count == 1
    np.zeros(10)
    assert inner.count == 1
