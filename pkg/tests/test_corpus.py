from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest

from chatmap.corpus import (
    BUILTIN_ADAPTERS,
    ConversationRecord,
    Turn,
    format_timestamp,
    generate_synthetic_corpus,
    get_adapter,
    ingest_lines,
    parse_record,
    parse_timestamp,
    serialize_record,
    validate_record,
    TOPIC_KEYWORDS,
)
from chatmap.errors import InvalidArg, InvariantViolation, MalformedLine, MissingField

CANON = BUILTIN_ADAPTERS["canonical"]


def make_line(**overrides) -> str:
    payload = {
        "conversation_id": "c-1",
        "dataset": "demo",
        "timestamp": "2024-03-04T10:00:00Z",
        "turns": [
            {"role": "user", "text": "hello there"},
            {"role": "assistant", "text": "hi"},
        ],
        "hashed_ip": "a" * 64,
        "country": "Canada",
        "state": "",
        "language": "English",
        "toxic": False,
        "redacted": False,
        "model": "gpt-4",
    }
    payload.update(overrides)
    return json.dumps(payload)


class TestParseRecord:
    def test_basic_line_derives_turn_count(self):
        rec = parse_record(make_line(), CANON)
        assert rec.turn_count == 2
        assert rec.language == "English"
        assert not rec.toxic

    def test_missing_turns_is_missing_field(self):
        line = json.dumps({k: v for k, v in json.loads(make_line()).items() if k != "turns"})
        with pytest.raises(MissingField) as exc:
            parse_record(line, CANON)
        assert exc.value.field == "turns"

    def test_bad_json_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_record("{not json", CANON)
        with pytest.raises(MalformedLine):
            parse_record("[1, 2]", CANON)

    def test_zero_turns_violates_invariant(self):
        with pytest.raises(InvariantViolation):
            parse_record(make_line(turns=[]), CANON)

    def test_roles_must_alternate_starting_user(self):
        bad = [{"role": "assistant", "text": "hi"}, {"role": "user", "text": "yo"}]
        with pytest.raises(InvariantViolation):
            parse_record(make_line(turns=bad), CANON)

    def test_empty_user_turn_rejected_assistant_ok(self):
        ok = [{"role": "user", "text": "q"}, {"role": "assistant", "text": ""}]
        rec = parse_record(make_line(turns=ok), CANON)
        assert rec.turns[1].text == ""
        bad = [{"role": "user", "text": ""}]
        with pytest.raises(InvariantViolation):
            parse_record(make_line(turns=bad), CANON)

    def test_bad_hashed_ip_rejected(self):
        with pytest.raises(InvariantViolation):
            parse_record(make_line(hashed_ip="XYZ"), CANON)

    def test_optional_fields_default_empty(self):
        payload = json.loads(make_line())
        for key in ("hashed_ip", "country", "state"):
            payload.pop(key)
        rec = parse_record(json.dumps(payload), CANON)
        assert rec.hashed_ip == "" and rec.country == "" and rec.state == ""

    def test_epoch_timestamps_accepted(self):
        rec = parse_record(make_line(timestamp=1700000000), CANON)
        assert rec.timestamp == datetime.fromtimestamp(1700000000, tz=timezone.utc)


class TestAdapters:
    def test_wildchat_like_mapping(self):
        line = json.dumps({
            "conversation_hash": "abc123",
            "timestamp": "2024-05-06T07:08:09Z",
            "conversation": [{"role": "user", "content": "write an email"}],
            "hashed_ip": "b" * 64,
            "country": "India",
            "state": "",
            "language": "English",
            "toxic": True,
            "redacted": False,
            "model": "gpt-4",
        })
        rec = parse_record(line, get_adapter("wildchat-like"))
        assert rec.conversation_id == "abc123"
        assert rec.dataset == "wildchat"
        assert rec.toxic is True
        assert rec.turns[0].text == "write an email"

    def test_lmsys_like_mapping_without_geography(self):
        line = json.dumps({
            "conversation_id": "x9",
            "tstamp": 1690000000.5,
            "conversation": [{"role": "user", "content": "hola"}],
            "language": "Spanish",
            "model": "vicuna-13b",
            "toxic": False,
            "redacted": True,
        })
        rec = parse_record(line, get_adapter("lmsys-like"))
        assert rec.dataset == "lmsys"
        assert rec.country == "" and rec.hashed_ip == ""
        assert rec.redacted is True

    def test_unknown_adapter(self):
        with pytest.raises(InvalidArg):
            get_adapter("nope")


class TestRoundTrip:
    def test_serialize_parse_identity(self):
        rec = parse_record(make_line(), CANON)
        assert parse_record(serialize_record(rec), CANON) == rec

    def test_generator_output_round_trips(self):
        for rec in generate_synthetic_corpus(50, seed=3):
            assert parse_record(serialize_record(rec), CANON) == rec

    def test_timestamp_formats(self):
        dt = parse_timestamp("2024-01-02T03:04:05.123456+00:00")
        assert format_timestamp(dt) == "2024-01-02T03:04:05.123456Z"
        assert parse_timestamp(format_timestamp(dt)) == dt


class TestIngestLines:
    def test_bad_lines_skipped_with_count(self):
        lines = [make_line(), "garbage", make_line(conversation_id="c-2"), make_line(turns=[])]
        records, stats = ingest_lines(lines, CANON)
        assert stats.parsed == 2
        assert stats.skipped == 2
        assert len(stats.warnings) == 2

    def test_duplicate_ids_skipped(self):
        records, stats = ingest_lines([make_line(), make_line()], CANON)
        assert stats.parsed == 1 and stats.skipped == 1

    def test_order_preserved(self):
        lines = [make_line(conversation_id=f"c-{i}") for i in range(10)]
        records, _ = ingest_lines(lines, CANON)
        assert [r.conversation_id for r in records] == [f"c-{i}" for i in range(10)]


class TestSyntheticCorpus:
    def test_determinism_byte_identical(self):
        a = generate_synthetic_corpus(5, seed=7)
        b = generate_synthetic_corpus(5, seed=7)
        assert [serialize_record(r) for r in a] == [serialize_record(r) for r in b]

    def test_counts_and_unique_ids(self):
        records = generate_synthetic_corpus(10_000, seed=1)
        assert len(records) == 10_000
        assert len({r.key for r in records}) == 10_000

    def test_all_records_valid(self):
        for rec in generate_synthetic_corpus(1_000, seed=9):
            validate_record(rec)

    def test_pure_coding_mix_always_contains_keyword(self):
        records = generate_synthetic_corpus(300, seed=2, topic_mix=[("coding", 1.0)])
        for rec in records:
            first = rec.first_user_text().casefold()
            assert any(kw in first for kw in TOPIC_KEYWORDS["coding"])

    def test_shared_ips_exist(self):
        records = generate_synthetic_corpus(500, seed=4, shared_ip_fraction=0.4)
        counts: dict[str, int] = {}
        for rec in records:
            counts[rec.hashed_ip] = counts.get(rec.hashed_ip, 0) + 1
        assert max(counts.values()) >= 3

    def test_invalid_args(self):
        with pytest.raises(InvalidArg):
            generate_synthetic_corpus(0, seed=1)
        with pytest.raises(InvalidArg):
            generate_synthetic_corpus(5, seed=1, topic_mix=[])
        with pytest.raises(InvalidArg):
            generate_synthetic_corpus(5, seed=1, topic_mix=[("coding", -1.0)])


def test_validate_rejects_naive_timestamp():
    rec = ConversationRecord(
        conversation_id="x", dataset="d", timestamp=datetime(2024, 1, 1),
        turns=(Turn("user", "hi"),), language="English", model="gpt-4",
    )
    with pytest.raises(InvariantViolation):
        validate_record(rec)
