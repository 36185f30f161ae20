import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spotrec.corpus import (
    Corpus,
    CorpusError,
    TouristRecord,
    discretize_time,
    filter_min_pois,
    from_records,
    ingest,
    parse_timestamp,
    serialize,
    time_split,
    user_split,
)


def ts(s: str) -> datetime:
    return parse_timestamp(s)


def rec(user, spot, when, words=("temple",)) -> TouristRecord:
    return TouristRecord(user_id=user, spot_id=spot, timestamp=ts(when), words=tuple(words))


class TestDiscretizeTime:
    def test_march_is_slot_two(self):
        assert discretize_time(ts("2014-03-15T10:00Z")) == 2

    def test_january_boundary(self):
        assert discretize_time(ts("2013-01-01T00:00Z")) == 0

    def test_december_boundary(self):
        assert discretize_time(ts("2015-12-31T23:59Z")) == 11

    def test_offset_normalized_to_utc(self):
        # 01:30+02:00 on May 1st is 23:30 UTC on April 30th.
        assert discretize_time(ts("2014-05-01T01:30:00+02:00")) == 3


class TestIngest:
    def test_singleton_row(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text(
            json.dumps({"user": "u1", "spot": "l1", "time": "2014-03-15T10:00Z", "words": ["temple"]})
            + "\n"
        )
        corpus = ingest(path)
        assert corpus.summary() == {
            "users": 1, "spots": 1, "records": 1, "words": 1, "time_slots": 12,
        }
        assert corpus.records[0].time_slot == 2

    def test_three_rows_one_user_two_spots(self, tmp_path):
        rows = [
            {"user": "u", "spot": "a", "time": "2014-01-01T00:00Z", "words": []},
            {"user": "u", "spot": "b", "time": "2014-01-02T00:00Z", "words": ["x"]},
            {"user": "u", "spot": "a", "time": "2014-01-03T00:00Z", "words": ["x", "y"]},
        ]
        path = tmp_path / "c.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        corpus = ingest(path)
        assert len(corpus.users) == 1
        assert len(corpus.spots) == 2
        assert corpus.num_records == 3

    def test_malformed_row_names_row_and_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps({"user": "u", "spot": "a", "time": "2014-01-01T00:00Z", "words": []})
            + "\n"
            + json.dumps({"user": "u", "time": "2014-01-02T00:00Z", "words": []})
            + "\n"
        )
        with pytest.raises(CorpusError, match=r"row 2.*spot"):
            ingest(path)

    def test_bad_timestamp_is_reported(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"user": "u", "spot": "a", "time": "yesterday", "words": []}) + "\n")
        with pytest.raises(CorpusError, match=r"row 1.*time"):
            ingest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(CorpusError, match="empty"):
            ingest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError, match="not found"):
            ingest(tmp_path / "nope.jsonl")

    def test_csv_round(self, tmp_path):
        corpus = from_records(
            [rec("u1", "a", "2014-03-15T10:00Z", ["x", "y"]), rec("u2", "b", "2014-04-01T00:00Z", [])]
        )
        path = tmp_path / "c.csv"
        serialize(corpus, path, format="csv")
        again = ingest(path, format="csv")
        assert again == corpus


class TestFilterMinPois:
    def test_keeps_only_multi_spot_users(self):
        corpus = from_records(
            [
                rec("A", "s1", "2014-01-01T00:00Z"),
                rec("A", "s2", "2014-01-02T00:00Z"),
                rec("B", "s1", "2014-01-03T00:00Z"),
            ]
        )
        filtered = filter_min_pois(corpus, 2)
        assert filtered.users.items == ["A"]
        assert filtered.num_records == 2

    def test_min_pois_one_is_identity(self):
        corpus = from_records(
            [rec("A", "s1", "2014-01-01T00:00Z"), rec("B", "s2", "2014-01-02T00:00Z")]
        )
        assert filter_min_pois(corpus, 1) == corpus

    def test_repeat_visits_to_one_spot_removed(self):
        records = [rec("C", "s1", f"2014-01-0{i}T00:00Z") for i in range(1, 6)]
        records.append(rec("D", "s1", "2014-02-01T00:00Z"))
        records.append(rec("D", "s2", "2014-02-02T00:00Z"))
        filtered = filter_min_pois(from_records(records), 2)
        assert "C" not in filtered.users
        assert "D" in filtered.users

    def test_empty_result_errors(self):
        corpus = from_records([rec("A", "s1", "2014-01-01T00:00Z")])
        with pytest.raises(CorpusError, match="no users survive"):
            filter_min_pois(corpus, 2)


class TestTimeSplit:
    def _user_corpus(self, n):
        return from_records(
            [rec("u", f"s{i % 3}", f"2014-01-{i + 1:02d}T00:00Z") for i in range(n)]
        )

    def test_prefix_rule_point_eight(self):
        split = time_split(self._user_corpus(10), 0.8)
        assert split.train.num_records == 8
        assert split.test.num_records == 2

    def test_two_records_half(self):
        split = time_split(self._user_corpus(2), 0.5)
        assert split.train.num_records == 1
        assert split.test.num_records == 1

    def test_prefix_rule_point_two(self):
        split = time_split(self._user_corpus(10), 0.2)
        assert split.train.num_records == 2
        assert split.test.num_records == 8

    def test_both_sides_nonempty_even_when_ceil_takes_all(self):
        split = time_split(self._user_corpus(2), 0.8)
        assert split.train.num_records == 1
        assert split.test.num_records == 1

    def test_bad_ratio(self):
        for ratio in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(CorpusError):
                time_split(self._user_corpus(4), ratio)

    def test_train_precedes_test_chronologically(self):
        corpus = from_records(
            [
                rec("u", "a", "2014-05-01T00:00Z"),
                rec("u", "b", "2014-01-01T00:00Z"),
                rec("u", "c", "2014-03-01T00:00Z"),
                rec("u", "d", "2014-02-01T00:00Z"),
            ]
        )
        split = time_split(corpus, 0.5)
        latest_train = max(r.timestamp for r in split.train.records)
        earliest_test = min(r.timestamp for r in split.test.records)
        assert latest_train <= earliest_test

    def test_shared_user_vocabulary(self):
        split = time_split(self._user_corpus(4), 0.5)
        assert split.train.users is split.test.users


class TestUserSplit:
    def _corpus(self, num_users):
        records = []
        for u in range(num_users):
            records.append(rec(f"u{u}", "a", "2014-01-01T00:00Z"))
            records.append(rec(f"u{u}", "b", "2014-01-02T00:00Z"))
        return from_records(records)

    def test_eight_two_disjoint(self):
        split = user_split(self._corpus(10), 0.8, seed=11)
        train_users = {r.user_idx for r in split.train.records}
        test_users = {r.user_idx for r in split.test.records}
        assert len(train_users) == 8
        assert len(test_users) == 2
        assert not train_users & test_users

    def test_same_seed_identical(self):
        a = user_split(self._corpus(7), 0.5, seed=3)
        b = user_split(self._corpus(7), 0.5, seed=3)
        assert a.train == b.train
        assert a.test == b.test

    def test_two_users_half(self):
        split = user_split(self._corpus(2), 0.5, seed=0)
        assert len({r.user_idx for r in split.train.records}) == 1
        assert len({r.user_idx for r in split.test.records}) == 1

    def test_bad_ratio(self):
        with pytest.raises(CorpusError):
            user_split(self._corpus(4), 1.2, seed=0)


# --- property tests ---------------------------------------------------------

_words = st.lists(st.sampled_from(["shrine", "food", "walk", "view"]), max_size=3)
_records = st.lists(
    st.builds(
        rec,
        st.sampled_from([f"u{i}" for i in range(5)]),
        st.sampled_from([f"s{i}" for i in range(6)]),
        st.sampled_from(
            [f"2014-{m:02d}-{d:02d}T0{h}:00Z" for m in (1, 6, 12) for d in (1, 15) for h in range(4)]
        ),
        _words,
    ),
    min_size=1,
    max_size=40,
)


@settings(max_examples=40, deadline=None)
@given(_records)
def test_jsonl_round_trip(tmp_path_factory, records):
    corpus = from_records(records)
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    serialize(corpus, path)
    assert ingest(path) == corpus


@settings(max_examples=40, deadline=None)
@given(_records)
def test_filter_idempotent(records):
    corpus = from_records(records)
    try:
        once = filter_min_pois(corpus, 2)
    except CorpusError:
        return
    assert filter_min_pois(once, 2) == once


_multi_record_users = st.lists(
    st.lists(
        st.sampled_from(
            [f"2014-{m:02d}-{d:02d}T0{h}:00Z" for m in (1, 6, 12) for d in (1, 15) for h in range(4)]
        ),
        min_size=2,
        max_size=8,
    ),
    min_size=1,
    max_size=5,
)


@settings(max_examples=40, deadline=None)
@given(_multi_record_users, st.sampled_from([0.2, 0.5, 0.8]))
def test_time_split_preserves_records_and_order(per_user_stamps, ratio):
    records = [
        rec(f"u{u}", f"s{(u + i) % 4}", stamp)
        for u, stamps in enumerate(per_user_stamps)
        for i, stamp in enumerate(stamps)
    ]
    corpus = from_records(records)
    split = time_split(corpus, ratio)
    combined = sorted(split.train.records + split.test.records, key=repr)
    assert combined == sorted(corpus.records, key=repr)
    for side in (split.train, split.test):
        for recs in side.records_by_user().values():
            stamps = [r.timestamp for r in recs]
            assert stamps == sorted(stamps)


@settings(max_examples=40, deadline=None)
@given(_records, st.integers(0, 10))
def test_user_split_partitions_users(records, seed):
    corpus = from_records(records)
    if len(corpus.users) < 2:
        return
    split = user_split(corpus, 0.5, seed=seed)
    train_users = {r.user_idx for r in split.train.records}
    test_users = {r.user_idx for r in split.test.records}
    assert train_users | test_users == set(range(len(corpus.users)))
    assert not train_users & test_users
