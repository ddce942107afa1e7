import numpy as np
import pytest

from choiceprior.gambles import Gamble, LotShape, Problem, Schema


def random_gamble(rng: np.random.Generator, allow_lottery: bool = True) -> Gamble:
    high = float(rng.integers(-50, 121))
    low = float(rng.integers(-50, 121))
    p_high = float(rng.choice([0.01, 0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95, 0.99, 1.0]))
    if allow_lottery:
        lot_num = int(rng.integers(1, 10))
    else:
        lot_num = 1
    shape = LotShape(int(rng.integers(1, 4))) if lot_num > 1 else LotShape.NONE
    return Gamble(high, p_high, low, lot_num, shape)


def random_problem(rng: np.random.Generator, schema: Schema = Schema.CPC15) -> Problem:
    a = random_gamble(rng, allow_lottery=schema == Schema.CPC18)
    b = random_gamble(rng)
    corr = int(rng.choice([-1, 0, 1], p=[0.1, 0.8, 0.1]))
    amb = bool(rng.random() < 0.2)
    p = Problem("", a, b, corr=corr, amb=amb, schema=schema)
    import dataclasses

    return dataclasses.replace(p, id=p.content_id())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
