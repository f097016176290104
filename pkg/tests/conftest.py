import random

import pytest

from cdnflow.tp import TpInstance


def t1_instance():
    # 2x2, optimum 11: flow family cost 20 - 3a over a in [1, 3]
    return TpInstance(n=2, m=2, b=[3, 4], d=[5, 2], c=[[1, 2], [3, 1]])


def t4_instance():
    # 2x2, optimum 13: flow family cost 21 - 4t over t in [0, 2]
    return TpInstance(n=2, m=2, b=[3, 4], d=[2, 5], c=[[4, 1], [2, 3]])


@pytest.fixture
def t1():
    return t1_instance()


@pytest.fixture
def t4():
    return t4_instance()


def random_balanced_tp(rng: random.Random, n=None, m=None, cmax=9, dmax=9) -> TpInstance:
    """Seeded random balanced instance with all-real arcs."""
    if n is None:
        n = rng.randint(2, 5)
    if m is None:
        m = rng.randint(2, 5)
    d = [rng.randint(1, dmax) for _ in range(m)]
    total = sum(d)
    cuts = sorted(rng.randint(0, total) for _ in range(n - 1))
    b = []
    prev = 0
    for cut in cuts + [total]:
        b.append(cut - prev)
        prev = cut
    c = [[rng.randint(0, cmax) for _ in range(m)] for _ in range(n)]
    return TpInstance(n=n, m=m, b=b, d=d, c=c)
