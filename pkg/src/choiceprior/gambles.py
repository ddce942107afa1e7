"""Domain types for risky-choice problems.

A gamble pays a fixed "low" amount unless its lottery branch fires, in which
case it pays one of several lottery outcomes anchored on the "high" amount.
A problem is a pair of gambles (A, B) plus ambiguity and payoff-correlation
flags. Payoffs are money quantized to cents so that distribution equality,
deduplication, and dominance checks are exact; probabilities are float64.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when a domain object or input file violates its contract."""


def to_cents(x: float) -> int:
    """Quantize a money amount to integer cents."""
    return int(round(x * 100))


def from_cents(c: int) -> float:
    return c / 100.0


class LotShape(IntEnum):
    """Payoff shape of a lottery branch; codes match the problem CSV."""

    NONE = 0
    SYMM = 1
    RSKEW = 2
    LSKEW = 3


class Schema(str, Enum):
    CPC15 = "CPC15"
    CPC18 = "CPC18"


@dataclass(frozen=True)
class OutcomeDistribution:
    """Explicit (payoff, probability) outcomes, merged and sorted by payoff.

    Duplicate payoffs (at cent resolution) are merged at construction and
    zero-probability outcomes dropped, so two distributions are equal iff
    their canonical forms are equal.
    """

    outcomes: tuple[tuple[float, float], ...]
    _payoffs: np.ndarray = field(init=False, repr=False, compare=False)
    _cumprobs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        merged: dict[int, float] = {}
        for payoff, prob in self.outcomes:
            if not math.isfinite(payoff):
                raise ValidationError(f"non-finite payoff {payoff!r}")
            if prob < 0.0 or prob > 1.0 + PROB_TOL:
                raise ValidationError(f"probability {prob!r} outside [0, 1]")
            if prob == 0.0:
                continue
            cents = to_cents(payoff)
            merged[cents] = merged.get(cents, 0.0) + prob
        if not merged:
            raise ValidationError("distribution has no outcomes with positive probability")
        total = sum(merged.values())
        if abs(total - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")
        items = sorted((from_cents(c), p) for c, p in merged.items())
        object.__setattr__(self, "outcomes", tuple(items))
        payoffs = np.array([x for x, _ in items], dtype=np.float64)
        cum = np.cumsum([p for _, p in items])
        cum[-1] = 1.0
        object.__setattr__(self, "_payoffs", payoffs)
        object.__setattr__(self, "_cumprobs", cum)

    def canonical(self) -> tuple[tuple[int, float], ...]:
        """Hashable exact-equality key: (cents, rounded probability) pairs."""
        return tuple((to_cents(x), round(p, 12)) for x, p in self.outcomes)

    @property
    def payoffs(self) -> np.ndarray:
        return self._payoffs

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self._cumprobs, prepend=0.0)

    def quantile(self, u):
        """Inverse CDF; accepts a scalar or ndarray of values in (0, 1)."""
        idx = np.searchsorted(self._cumprobs, u, side="left")
        idx = np.minimum(idx, len(self._payoffs) - 1)
        return self._payoffs[idx]

    def min_payoff(self) -> float:
        return float(self._payoffs[0])

    def variance(self) -> float:
        p = self.probabilities
        mean = float(np.dot(p, self._payoffs))
        return float(np.dot(p, (self._payoffs - mean) ** 2))


@dataclass(frozen=True)
class Gamble:
    """One risky option: low branch plus a lottery branch anchored on `high`."""

    high: float
    p_high: float
    low: float
    lot_num: int = 1
    lot_shape: LotShape = LotShape.NONE

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_high <= 1.0:
            raise ValidationError(f"p_high {self.p_high!r} outside [0, 1]")
        if self.lot_num < 1:
            raise ValidationError(f"lot_num must be >= 1, got {self.lot_num}")
        if self.lot_shape == LotShape.NONE and self.lot_num != 1:
            raise ValidationError("lot_shape NONE requires lot_num == 1")
        object.__setattr__(self, "high", from_cents(to_cents(self.high)))
        object.__setattr__(self, "low", from_cents(to_cents(self.low)))
        object.__setattr__(self, "lot_shape", LotShape(self.lot_shape))

    def has_lottery(self) -> bool:
        return self.lot_shape != LotShape.NONE or self.lot_num > 1


def lottery_distribution(g: Gamble) -> list[tuple[float, float]]:
    """Payoffs and weights of the lottery branch alone (weights sum to 1).

    SYMM spreads integer-stepped payoffs symmetrically around `high` with
    binomial weights, so the branch mean equals `high` exactly. RSKEW/LSKEW
    place geometrically-weighted payoffs above/below the anchor.
    """
    k = g.lot_num
    if g.lot_shape == LotShape.NONE:
        return [(g.high, 1.0)]
    if g.lot_shape == LotShape.SYMM:
        denom = 2.0 ** (k - 1)
        return [(g.high - (k - 1) + 2 * i, math.comb(k - 1, i) / denom) for i in range(k)]
    norm = 1.0 - 0.5**k
    weights = [(0.5**i) / norm for i in range(1, k + 1)]
    if g.lot_shape == LotShape.RSKEW:
        return [(g.high - 1 + 2**i, w) for i, w in zip(range(1, k + 1), weights)]
    if g.lot_shape == LotShape.LSKEW:
        return [(g.high + 1 - 2**i, w) for i, w in zip(range(1, k + 1), weights)]
    raise ValidationError(f"unknown lot_shape {g.lot_shape!r}")


def expand(g: Gamble) -> OutcomeDistribution:
    """Expand a parametric gamble into an explicit outcome distribution."""
    branch = [(x, w * g.p_high) for x, w in lottery_distribution(g)]
    branch.append((g.low, 1.0 - g.p_high))
    return OutcomeDistribution(tuple(branch))


def expected_value(d: OutcomeDistribution) -> float:
    return float(np.dot(d.probabilities, d.payoffs))


@dataclass(frozen=True)
class Problem:
    """A pair of gambles plus correlation/ambiguity flags."""

    id: str
    gamble_a: Gamble
    gamble_b: Gamble
    corr: int = 0
    amb: bool = False
    schema: Schema = Schema.CPC15

    def __post_init__(self) -> None:
        if self.corr not in (-1, 0, 1):
            raise ValidationError(f"corr must be -1, 0, or +1, got {self.corr}")
        object.__setattr__(self, "schema", Schema(self.schema))
        if self.schema == Schema.CPC15 and self.gamble_a.has_lottery():
            raise ValidationError("CPC15 problems allow no lottery on gamble A")

    def distributions(self) -> tuple[OutcomeDistribution, OutcomeDistribution]:
        return expand(self.gamble_a), expand(self.gamble_b)

    def canonical_key(self) -> tuple:
        """Dedup key: expanded distributions plus (corr, amb)."""
        da, db = self.distributions()
        return (da.canonical(), db.canonical(), self.corr, self.amb)

    def content_id(self) -> str:
        """Stable hex id derived from the canonical key."""
        return hashlib.sha256(repr(self.canonical_key()).encode()).hexdigest()[:16]


def joint_quantiles(corr: int, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map a base quantile draw to the (u_a, u_b) pair implied by corr.

    corr=+1 shares the quantile, corr=-1 inverts it for B; corr=0 callers
    must pass independent draws themselves.
    """
    if corr == -1:
        return u, 1.0 - u
    return u, u


def sample_joint(p: Problem, rng: np.random.Generator, size: int | None = None):
    """Draw correlated payoff pairs for a problem.

    Returns a scalar pair when size is None, otherwise two arrays. corr=0
    draws independently; corr=+1/-1 couple the two gambles through a shared
    (or inverted) uniform quantile applied to each inverse CDF.
    """
    da, db = p.distributions()
    n = 1 if size is None else size
    if p.corr == 0:
        ua = rng.random(n)
        ub = rng.random(n)
    else:
        ua, ub = joint_quantiles(p.corr, rng.random(n))
    pay_a = da.quantile(ua)
    pay_b = db.quantile(ub)
    if size is None:
        return float(pay_a[0]), float(pay_b[0])
    return pay_a, pay_b


def is_degenerate(p: Problem) -> bool:
    """A problem is degenerate if both gambles expand to the same distribution,
    or one gamble is constant while a nonzero correlation is declared."""
    da, db = p.distributions()
    if da.canonical() == db.canonical():
        return True
    if p.corr != 0 and (len(da.outcomes) == 1 or len(db.outcomes) == 1):
        return True
    return False


def dominates(da: OutcomeDistribution, db: OutcomeDistribution) -> bool:
    """True iff A's payoff weakly exceeds B's at every shared quantile and
    strictly on a positive-measure segment (first-order dominance under the
    shared-quantile coupling)."""
    cuts = sorted(set(da._cumprobs.tolist()) | set(db._cumprobs.tolist()))
    strict = False
    prev = 0.0
    for c in cuts:
        mid = (prev + c) / 2.0
        ca = to_cents(float(da.quantile(mid)))
        cb = to_cents(float(db.quantile(mid)))
        if ca < cb:
            return False
        if ca > cb and c - prev > PROB_TOL:
            strict = True
        prev = c
    return strict


# -- canonical problem CSV ---------------------------------------------------

PROBLEM_CSV_HEADER = [
    "id",
    "ha", "pha", "la", "lot_num_a", "lot_shape_a",
    "hb", "phb", "lb", "lot_num_b", "lot_shape_b",
    "corr", "amb",
]


def _money(x: float) -> str:
    return f"{x:.2f}"


def problem_to_row(p: Problem) -> list[str]:
    a, b = p.gamble_a, p.gamble_b
    return [
        p.id,
        _money(a.high), repr(a.p_high), _money(a.low), str(a.lot_num), str(int(a.lot_shape)),
        _money(b.high), repr(b.p_high), _money(b.low), str(b.lot_num), str(int(b.lot_shape)),
        str(p.corr), str(int(p.amb)),
    ]


def row_to_problem(row: Sequence[str], schema: Schema) -> Problem:
    try:
        a = Gamble(float(row[1]), float(row[2]), float(row[3]), int(row[4]), LotShape(int(row[5])))
        b = Gamble(float(row[6]), float(row[7]), float(row[8]), int(row[9]), LotShape(int(row[10])))
        return Problem(row[0], a, b, corr=int(row[11]), amb=bool(int(row[12])), schema=schema)
    except (IndexError, ValueError) as exc:
        raise ValidationError(f"bad problem row {row!r}: {exc}") from exc


def save_problems(problems: Iterable[Problem], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROBLEM_CSV_HEADER)
        for p in problems:
            writer.writerow(problem_to_row(p))


def load_problems(path: str | Path, schema: Schema | None = None) -> list[Problem]:
    """Read the canonical problem CSV.

    The CSV does not carry the schema tag; pass it explicitly, or leave None
    to infer CPC18 when any row puts a lottery on gamble A.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PROBLEM_CSV_HEADER:
            raise ValidationError(f"{path}: unexpected problem CSV header {header!r}")
        rows = list(reader)
    if schema is None:
        has_a_lottery = any(int(r[4]) > 1 or int(r[5]) != 0 for r in rows)
        schema = Schema.CPC18 if has_a_lottery else Schema.CPC15
    return [row_to_problem(row, schema) for row in rows]
