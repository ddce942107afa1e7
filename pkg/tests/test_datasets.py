"""Target CSV round-trips, dataset building, and problem-level splits."""

import numpy as np
import pytest

from choiceprior.datasets import (
    TargetRecord,
    build_dataset,
    load_targets,
    sample_problem_fraction,
    save_targets,
    split_by_problem,
)
from choiceprior.gambles import Schema, ValidationError
from conftest import random_problem


@pytest.fixture
def small(rng):
    problems = [random_problem(rng) for _ in range(30)]
    records = []
    for p in problems:
        for block, feedback in ((1, False), (2, True)):
            records.append(TargetRecord(p.id, block, feedback, 16, float(rng.random())))
    return problems, records


class TestTargetCsv:
    def test_roundtrip_byte_identical(self, tmp_path, small):
        _, records = small
        path = tmp_path / "t.csv"
        save_targets(records, path)
        loaded = load_targets(path)
        assert loaded == records
        raw = path.read_bytes()
        save_targets(loaded, path)
        assert path.read_bytes() == raw

    def test_invariants_enforced(self):
        with pytest.raises(ValidationError):
            TargetRecord("x", 1, False, 16, 1.2)
        with pytest.raises(ValidationError):
            TargetRecord("x", 0, False, 16, 0.5)
        with pytest.raises(ValidationError):
            TargetRecord("x", 1, False, -1, 0.5)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValidationError):
            load_targets(path)


class TestBuildDataset:
    def test_join_alignment(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        assert len(ds) == len(records)
        assert ds.features.shape == (len(records), 12)
        # block/feedback columns mirror the encoded tail
        np.testing.assert_array_equal(ds.features[:, -1], ds.blocks)
        np.testing.assert_array_equal(ds.features[:, -2], ds.feedback.astype(float))

    def test_unknown_problem_rejected(self, small):
        problems, records = small
        records = records + [TargetRecord("missing", 1, False, 1, 0.5)]
        with pytest.raises(ValidationError):
            build_dataset(problems, records)

    def test_mixed_widths_rejected(self, rng, small):
        problems, records = small
        p18 = random_problem(rng, Schema.CPC18)
        with pytest.raises(ValidationError):
            build_dataset(problems + [p18], records + [TargetRecord(p18.id, 1, False, 1, 0.5)])


class TestSplits:
    def test_disjoint_and_complete(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        parts = split_by_problem(ds, (0.6, 0.2, 0.2), seed=4, names=["train", "val", "test"])
        id_sets = [set(p.ids) for p in parts]
        assert id_sets[0] & id_sets[1] == set()
        assert id_sets[0] & id_sets[2] == set()
        assert id_sets[1] & id_sets[2] == set()
        assert sum(len(p) for p in parts) == len(ds)
        assert [p.split for p in parts] == ["train", "val", "test"]

    def test_blocks_never_straddle_splits(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        train, val = split_by_problem(ds, (0.8, 0.2), seed=9)
        assert set(train.ids).isdisjoint(set(val.ids))
        # both blocks of each problem land in the same part
        for part in (train, val):
            counts = {}
            for pid in part.ids:
                counts[pid] = counts.get(pid, 0) + 1
            assert set(counts.values()) == {2}

    def test_seeded_determinism(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        a = split_by_problem(ds, (0.5, 0.5), seed=7)[0]
        b = split_by_problem(ds, (0.5, 0.5), seed=7)[0]
        assert a.ids == b.ids

    def test_fraction_subset(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        sub = sample_problem_fraction(ds, 0.5, seed=3)
        assert len(sub.problem_ids()) == 15
        assert len(sub) == 30
        with pytest.raises(ValidationError):
            sample_problem_fraction(ds, 0.0)

    def test_bad_fractions(self, small):
        problems, records = small
        ds = build_dataset(problems, records)
        with pytest.raises(ValidationError):
            split_by_problem(ds, (0.5, 0.4))
