import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldcheck.core import (
    Block,
    City,
    FieldcheckError,
    LabeledInstance,
    MissingOutcomeError,
    ObservationRecord,
    PredictionSet,
    Source,
    UnknownBlockError,
    aggregate_outcomes,
    aggregate_windows,
    atomic_write_text,
    build_training_matrix,
    derive_seed,
    make_rng,
    parse_predictions,
    parse_records,
    predictions_to_csv,
    records_to_csv,
)

R, F = Source.REPORT, Source.FIELD


def rec(block, period, outcome, source=R, note=None):
    return ObservationRecord(block, period, source, note, outcome)


def small_city(n=5, d=3):
    rng = np.random.default_rng(0)
    blocks = tuple(Block(i, i % 2, tuple(rng.standard_normal(d))) for i in range(n))
    return City(blocks, {0: 0.1, 1: 0.2})


class TestAggregateOutcomes:
    def test_or_rule_positive(self):
        recs = [rec(4, 0, 0), rec(4, 1, 0), rec(4, 2, 1)]
        (inst,) = aggregate_outcomes(recs, 0, 3)
        assert inst.block == 4 and inst.label == 1

    def test_all_negative(self):
        (inst,) = aggregate_outcomes([rec(1, 0, 0), rec(1, 2, 0)], 0, 3)
        assert inst.label == 0

    def test_field_only_block_has_no_instance(self):
        out = aggregate_outcomes([rec(2, 1, 1, F), rec(3, 1, 0)], 0, 3)
        assert [i.block for i in out] == [3]

    def test_field_positive_does_not_leak_into_label(self):
        (inst,) = aggregate_outcomes([rec(2, 1, 1, F), rec(2, 1, 0)], 0, 3)
        assert inst.label == 0

    def test_window_bounds_are_half_open(self):
        recs = [rec(0, 2, 1), rec(1, 5, 1), rec(2, 4, 0)]
        out = aggregate_outcomes(recs, 2, 3)
        assert [(i.block, i.label) for i in out] == [(0, 1), (2, 0)]

    def test_missing_outcome_names_record(self):
        with pytest.raises(MissingOutcomeError, match="block=7 period=1"):
            aggregate_outcomes([rec(7, 1, None, note="hmm")], 0, 3)

    def test_window_len_validated(self):
        with pytest.raises(ValueError):
            aggregate_outcomes([], 0, 0)

    def test_features_from_city(self):
        city = small_city()
        (inst,) = aggregate_outcomes([rec(3, 0, 1)], 0, 3, city)
        assert inst.features == city.block(3).features

    def test_one_instance_per_block_window(self):
        recs = [rec(1, 0, 0), rec(1, 0, 1), rec(1, 1, 0)]
        assert len(aggregate_outcomes(recs, 0, 3)) == 1


record_lists = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 9), st.integers(0, 1), st.sampled_from([R, F])),
    max_size=40,
)


class TestAggregationProperties:
    @given(record_lists)
    def test_out_of_window_records_do_not_matter(self, rows):
        recs = [rec(b, p, o, s) for b, p, o, s in rows]
        inside = [r for r in recs if 3 <= r.period < 6]
        assert aggregate_outcomes(recs, 3, 3) == aggregate_outcomes(inside, 3, 3)

    @given(record_lists, st.integers(0, 6), st.integers(3, 5))
    def test_adding_positive_never_clears_label(self, rows, block, period):
        recs = [rec(b, p, o, s) for b, p, o, s in rows]
        before = {i.block: i.label for i in aggregate_outcomes(recs, 3, 3)}
        after = {i.block: i.label for i in aggregate_outcomes(recs + [rec(block, period, 1)], 3, 3)}
        assert after[block] == 1
        for b, label in before.items():
            assert after[b] >= label

    @given(record_lists)
    def test_reaggregation_is_idempotent(self, rows):
        recs = [rec(b, p, o, s) for b, p, o, s in rows]
        first = aggregate_outcomes(recs, 3, 3)
        # feed the instances back in as one report per block-window
        again = aggregate_outcomes([rec(i.block, i.window_start, i.label) for i in first], 3, 3)
        assert [(i.block, i.label) for i in again] == [(i.block, i.label) for i in first]

    @given(record_lists)
    def test_input_order_irrelevant(self, rows):
        recs = [rec(b, p, o, s) for b, p, o, s in rows]
        shuffled = recs[:]
        random.Random(1).shuffle(shuffled)
        assert aggregate_outcomes(recs, 2, 3) == aggregate_outcomes(shuffled, 2, 3)


def test_aggregate_windows_matches_per_window_calls():
    rng = np.random.default_rng(3)
    recs = [rec(int(b), int(p), int(o)) for b, p, o in zip(rng.integers(0, 8, 60), rng.integers(0, 12, 60), rng.integers(0, 2, 60))]
    got = aggregate_windows(recs, range(0, 10), 3)
    expect = sorted(
        (i for s in range(10) for i in aggregate_outcomes(recs, s, 3)), key=lambda i: (i.block, i.window_start)
    )
    assert got == expect


class TestBuildTrainingMatrix:
    def test_empty(self):
        X, y = build_training_matrix([], small_city(d=3))
        assert X.shape == (0, 3) and y.shape == (0,)

    def test_shapes(self):
        city = small_city(d=3)
        insts = [LabeledInstance(1, 0, 3, (), 1), LabeledInstance(2, 0, 3, (), 0)]
        X, y = build_training_matrix(insts, city)
        assert X.shape == (2, 3) and y.tolist() == [1, 0]
        np.testing.assert_array_equal(X[0], city.features[1])

    def test_shuffled_equals_presorted(self):
        city = small_city(n=6)
        insts = [LabeledInstance(b, s, 3, (), (b + s) % 2) for b in range(6) for s in (0, 3, 6)]
        shuffled = insts[:]
        random.Random(0).shuffle(shuffled)
        presorted = sorted(insts, key=lambda i: (i.block, i.window_start))
        X1, y1 = build_training_matrix(shuffled, city)
        X2 = np.array([city.block(i.block).features for i in presorted])
        y2 = np.array([i.label for i in presorted])
        np.testing.assert_array_equal(X1, X2)
        np.testing.assert_array_equal(y1, y2)

    def test_unknown_block(self):
        with pytest.raises(UnknownBlockError, match="99"):
            build_training_matrix([LabeledInstance(99, 0, 3, (), 1)], small_city())


class TestCity:
    def test_dense_ids_required(self):
        with pytest.raises(FieldcheckError):
            City((Block(1, 0, (0.0,)),), {0: 0.1})

    def test_ragged_features_rejected(self):
        with pytest.raises(FieldcheckError):
            City((Block(0, 0, (0.0,)), Block(1, 0, (0.0, 1.0))), {0: 0.1})

    def test_non_finite_rejected(self):
        with pytest.raises(FieldcheckError):
            City((Block(0, 0, (float("nan"),)),), {0: 0.1})

    def test_features_read_only(self):
        city = small_city()
        with pytest.raises(ValueError):
            city.features[0, 0] = 1.0


class TestSeeding:
    def test_deterministic(self):
        assert derive_seed(5, "a", 1) == derive_seed(5, "a", 1)

    def test_labels_separate_streams(self):
        seeds = {derive_seed(5), derive_seed(5, "a"), derive_seed(5, "b"), derive_seed(6, "a"), derive_seed(5, "a", 1)}
        assert len(seeds) == 5

    def test_label_boundaries_matter(self):
        assert derive_seed(0, "ab", "c") != derive_seed(0, "a", "bc")

    def test_u64_range(self):
        assert 0 <= derive_seed(2**64 - 1, "x") < 2**64

    def test_rng_reproducible(self):
        np.testing.assert_array_equal(make_rng(1, "x").random(4), make_rng(1, "x").random(4))


class TestRecordCsv:
    def test_round_trip(self):
        recs = [rec(0, 1, 1, note='burrows, "big" ones'), rec(3, 2, None, F, "no activity"), rec(5, 0, 0)]
        assert parse_records(records_to_csv(recs)) == recs

    def test_empty_has_header(self):
        assert records_to_csv([]) == "block_id,period,source,note,outcome\n"

    def test_bad_header(self):
        with pytest.raises(FieldcheckError, match="header"):
            parse_records("a,b\n1,2\n")

    def test_bad_outcome_line_number(self):
        with pytest.raises(FieldcheckError, match="line 3"):
            parse_records("block_id,period,source,note,outcome\n0,0,report,,1\n0,0,report,,2\n")

    def test_bad_source(self):
        with pytest.raises(FieldcheckError):
            parse_records("block_id,period,source,note,outcome\n0,0,email,,1\n")


class TestPredictions:
    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            PredictionSet(0, {0: 1.5})

    def test_csv_round_trip_is_exact(self):
        preds = PredictionSet.from_arrays(7, [2, 0, 1], [0.1 + 0.2, 1 / 3, 0.0])
        back = parse_predictions(predictions_to_csv(preds))
        assert back == preds

    def test_duplicate_block(self):
        with pytest.raises(FieldcheckError, match="duplicate"):
            parse_predictions("block_id,window_start,predicted_prob\n1,0,0.5\n1,0,0.4\n")


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    atomic_write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


@settings(max_examples=25)
@given(st.integers(0, 2**64 - 1))
def test_derive_seed_any_u64(seed):
    assert isinstance(derive_seed(seed, "x"), int)
