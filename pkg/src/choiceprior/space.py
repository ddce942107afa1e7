"""Random sampling of the two problem spaces and raw feature encoding.

The sampling grids below span the qualitative problem space (integer payoffs,
a coarse probability grid, one-to-nine-outcome lotteries of three shapes,
occasional ambiguity and payoff correlation) and are fully config-overridable.
Generated sets are deduplicated on expanded distributions, filtered for
degeneracy, and kept disjoint from caller-supplied exclusion sets.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .gambles import (
    Gamble,
    LotShape,
    Problem,
    Schema,
    ValidationError,
    is_degenerate,
    save_problems,
)

DEFAULT_PROBABILITY_GRID = tuple(
    sorted({0.01, 0.99, 1.0} | {round(0.05 * i, 2) for i in range(1, 20)})
)

REJECTION_WINDOW = 10_000
MIN_ACCEPT_RATE = 0.001


class GenerationError(RuntimeError):
    """Raised when rejection sampling stalls (space too constrained)."""


@dataclass(frozen=True)
class SpaceConfig:
    """Sampling distributions for one problem space."""

    schema: Schema = Schema.CPC15
    payoff_range: tuple[int, int] = (-50, 120)
    probability_grid: tuple[float, ...] = DEFAULT_PROBABILITY_GRID
    lot_num_range: tuple[int, int] = (1, 9)
    ambiguity_rate: float = 0.2
    corr_rates: tuple[float, float, float] = (0.1, 0.8, 0.1)  # weights for -1, 0, +1

    def __post_init__(self) -> None:
        lo, hi = self.payoff_range
        if lo > hi:
            raise ValidationError("payoff_range is empty")
        if self.lot_num_range[0] < 1 or self.lot_num_range[0] > self.lot_num_range[1]:
            raise ValidationError("lot_num_range must be a non-empty range of ints >= 1")
        if not self.probability_grid:
            raise ValidationError("probability_grid is empty")
        for p in self.probability_grid:
            if not 0.0 < p <= 1.0:
                raise ValidationError(f"probability_grid value {p!r} outside (0, 1]")
        if abs(sum(self.corr_rates) - 1.0) > 1e-9:
            raise ValidationError("corr_rates must sum to 1")
        if not 0.0 <= self.ambiguity_rate <= 1.0:
            raise ValidationError("ambiguity_rate outside [0, 1]")
        object.__setattr__(self, "schema", Schema(self.schema))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema"] = self.schema.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceConfig":
        return cls(
            schema=Schema(d["schema"]),
            payoff_range=tuple(d["payoff_range"]),
            probability_grid=tuple(d["probability_grid"]),
            lot_num_range=tuple(d["lot_num_range"]),
            ambiguity_rate=d["ambiguity_rate"],
            corr_rates=tuple(d["corr_rates"]),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ProblemSet:
    """An ordered, deduplicated, non-degenerate collection of problems."""

    problems: list[Problem]
    schema: Schema
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def id_set(self) -> set[str]:
        return {p.id for p in self.problems}

    def key_set(self) -> set:
        return {p.canonical_key() for p in self.problems}


def _sample_gamble(cfg: SpaceConfig, rng: np.random.Generator, allow_lottery: bool) -> Gamble:
    lo, hi = cfg.payoff_range
    high = int(rng.integers(lo, hi + 1))
    low = int(rng.integers(lo, hi + 1))
    p_high = float(cfg.probability_grid[rng.integers(0, len(cfg.probability_grid))])
    if allow_lottery:
        lot_num = int(rng.integers(cfg.lot_num_range[0], cfg.lot_num_range[1] + 1))
    else:
        lot_num = 1
    if lot_num > 1:
        shape = LotShape(int(rng.integers(1, 4)))
    else:
        shape = LotShape.NONE
    return Gamble(high, p_high, low, lot_num, shape)


def sample_problem(cfg: SpaceConfig, rng: np.random.Generator) -> Problem:
    """Draw one problem from the configured space (no filtering here)."""
    a = _sample_gamble(cfg, rng, allow_lottery=cfg.schema == Schema.CPC18)
    b = _sample_gamble(cfg, rng, allow_lottery=True)
    corr = int(rng.choice([-1, 0, 1], p=cfg.corr_rates))
    amb = bool(rng.random() < cfg.ambiguity_rate)
    p = Problem("", a, b, corr=corr, amb=amb, schema=cfg.schema)
    return dataclasses.replace(p, id=p.content_id())


def generate_set(
    cfg: SpaceConfig,
    count: int,
    exclusions: Sequence[ProblemSet] = (),
    rng: np.random.Generator | int | None = None,
) -> ProblemSet:
    """Rejection-sample `count` unique, non-degenerate problems.

    Problems equal (under canonical distribution equality) to any exclusion-set
    member are rejected. Raises GenerationError if a full sampling window
    accepts less than 0.1% of draws.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    seed = rng if isinstance(rng, int) else None
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    excluded: set = set()
    for ex in exclusions:
        excluded |= ex.key_set()
    seen: set = set()
    problems: list[Problem] = []
    attempts = 0
    window_attempts = 0
    window_accepts = 0
    rejected = {"degenerate": 0, "duplicate": 0, "excluded": 0}
    while len(problems) < count:
        p = sample_problem(cfg, rng)
        attempts += 1
        window_attempts += 1
        key = p.canonical_key()
        if key in seen:
            rejected["duplicate"] += 1
        elif key in excluded:
            rejected["excluded"] += 1
        elif is_degenerate(p):
            rejected["degenerate"] += 1
        else:
            seen.add(key)
            problems.append(p)
            window_accepts += 1
        if window_attempts >= REJECTION_WINDOW:
            if window_accepts < MIN_ACCEPT_RATE * window_attempts:
                raise GenerationError(
                    f"accepted {window_accepts}/{window_attempts} in the last window "
                    f"({len(problems)}/{count} generated); space too constrained"
                )
            window_attempts = 0
            window_accepts = 0
    provenance = {
        "seed": seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "count": count,
        "attempts": attempts,
        "rejected": rejected,
        "n_excluded_keys": len(excluded),
    }
    return ProblemSet(problems, cfg.schema, provenance)


def save_problem_set(ps: ProblemSet, csv_path: str | Path) -> Path:
    """Write the canonical problem CSV plus a JSON provenance sidecar."""
    csv_path = Path(csv_path)
    save_problems(ps.problems, csv_path)
    sidecar = csv_path.with_suffix(csv_path.suffix + ".provenance.json")
    sidecar.write_text(json.dumps(ps.provenance, indent=2, sort_keys=True) + "\n")
    return sidecar


# -- raw feature encoding -----------------------------------------------------

CPC15_FEATURE_NAMES = (
    "ha", "pha", "la",
    "hb", "phb", "lb", "lot_num_b", "lot_shape_b",
    "corr", "amb", "feedback", "block",
)
CPC18_FEATURE_NAMES = ("schema",) + CPC15_FEATURE_NAMES[:3] + (
    "lot_num_a", "lot_shape_a",
) + CPC15_FEATURE_NAMES[3:]


def feature_names(schema: Schema) -> tuple[str, ...]:
    return CPC15_FEATURE_NAMES if schema == Schema.CPC15 else CPC18_FEATURE_NAMES


def encode_features(p: Problem, block: int, feedback: bool) -> np.ndarray:
    """Encode a problem plus block context as the raw feature vector.

    CPC15 problems yield 12 numbers; CPC18 adds gamble A's lottery fields and
    a leading schema code for 15. Enum fields use their integer codes.
    """
    if block < 1:
        raise ValidationError(f"block must be >= 1, got {block}")
    a, b = p.gamble_a, p.gamble_b
    tail = [
        b.high, b.p_high, b.low, float(b.lot_num), float(int(b.lot_shape)),
        float(p.corr), float(p.amb), float(feedback), float(block),
    ]
    if p.schema == Schema.CPC15:
        vec = [a.high, a.p_high, a.low] + tail
    else:
        vec = [1.0, a.high, a.p_high, a.low, float(a.lot_num), float(int(a.lot_shape))] + tail
    return np.array(vec, dtype=np.float64)


def decode_features(vec: Sequence[float], problem_id: str = "") -> tuple[Problem, int, bool]:
    """Inverse of encode_features (up to the problem id)."""
    v = list(map(float, vec))
    if len(v) == 12:
        a = Gamble(v[0], v[1], v[2])
        rest = v[3:]
        schema = Schema.CPC15
    elif len(v) == 15:
        if v[0] != 1.0:
            raise ValidationError("15-element vector must carry schema code 1")
        a = Gamble(v[1], v[2], v[3], int(v[4]), LotShape(int(v[5])))
        rest = v[6:]
        schema = Schema.CPC18
    else:
        raise ValidationError(f"feature vector length {len(v)} is not 12 or 15")
    b = Gamble(rest[0], rest[1], rest[2], int(rest[3]), LotShape(int(rest[4])))
    p = Problem(problem_id, a, b, corr=int(rest[5]), amb=bool(rest[6]), schema=schema)
    return p, int(rest[8]), bool(rest[7])


def input_dim(schema: Schema) -> int:
    return 12 if schema == Schema.CPC15 else 15
