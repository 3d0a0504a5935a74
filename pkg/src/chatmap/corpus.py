"""Conversation records: parsing, validation, serialization, synthetic data.

A corpus is a UTF-8 line-delimited JSON file, one conversation per line.
Source schemas differ between dataset exports, so parsing goes through a
declarative FieldMapping (source field name -> canonical field name).  The
canonical field names are the same ones used as HTTP query parameters by the
API server.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

from .errors import InvalidArg, InvariantViolation, MalformedLine, MissingField

ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_HASHED_IP_RE = re.compile(r"^[0-9a-f]{64}$")

# Canonical record fields, in serialization order.
CANONICAL_FIELDS = (
    "conversation_id",
    "dataset",
    "timestamp",
    "turns",
    "hashed_ip",
    "country",
    "state",
    "language",
    "toxic",
    "redacted",
    "model",
    "turn_count",
)

_REQUIRED = ("conversation_id", "timestamp", "turns", "language", "model", "toxic", "redacted")
_OPTIONAL_EMPTY = ("country", "state", "hashed_ip")


@dataclass(frozen=True)
class Turn:
    role: str
    text: str


@dataclass(frozen=True)
class ConversationRecord:
    conversation_id: str
    dataset: str
    timestamp: datetime
    turns: tuple[Turn, ...]
    hashed_ip: str = ""
    country: str = ""
    state: str = ""
    language: str = ""
    toxic: bool = False
    redacted: bool = False
    model: str = ""

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    @property
    def key(self) -> tuple[str, str]:
        return (self.dataset, self.conversation_id)

    def first_user_text(self) -> str | None:
        for turn in self.turns:
            if turn.role == ROLE_USER:
                return turn.text
        return None


@dataclass(frozen=True)
class FieldMapping:
    """Declarative source-name -> canonical-name mapping for one input schema.

    `source_to_canonical` translates top-level JSON keys; `role_key` and
    `text_key` name the per-turn keys inside the mapped `turns` list.  If the
    source lines carry no dataset field, `default_dataset` is used.
    """

    name: str
    source_to_canonical: dict[str, str]
    role_key: str = "role"
    text_key: str = "content"
    default_dataset: str = ""

    def with_dataset(self, dataset: str) -> "FieldMapping":
        return replace(self, default_dataset=dataset)


_CANONICAL_MAPPING = {f: f for f in CANONICAL_FIELDS if f != "turn_count"}

BUILTIN_ADAPTERS: dict[str, FieldMapping] = {
    "canonical": FieldMapping("canonical", _CANONICAL_MAPPING, role_key="role", text_key="text"),
    "wildchat-like": FieldMapping(
        "wildchat-like",
        {
            "conversation_hash": "conversation_id",
            "timestamp": "timestamp",
            "conversation": "turns",
            "hashed_ip": "hashed_ip",
            "country": "country",
            "state": "state",
            "language": "language",
            "toxic": "toxic",
            "redacted": "redacted",
            "model": "model",
        },
        default_dataset="wildchat",
    ),
    "lmsys-like": FieldMapping(
        "lmsys-like",
        {
            "conversation_id": "conversation_id",
            "tstamp": "timestamp",
            "conversation": "turns",
            "language": "language",
            "model": "model",
            "toxic": "toxic",
            "redacted": "redacted",
        },
        default_dataset="lmsys",
    ),
}


def get_adapter(name: str) -> FieldMapping:
    try:
        return BUILTIN_ADAPTERS[name]
    except KeyError:
        raise InvalidArg(f"unknown adapter {name!r}; built-ins: {sorted(BUILTIN_ADAPTERS)}") from None


def parse_timestamp(value) -> datetime:
    """Accept RFC 3339 strings (Z or numeric offset) or epoch seconds."""
    if isinstance(value, bool):
        raise InvariantViolation(f"timestamp must be a string or number, got {value!r}")
    if isinstance(value, (int, float)):
        return _EPOCH + timedelta(microseconds=round(value * 1_000_000))
    if isinstance(value, str):
        s = value.strip()
        if s.endswith(("Z", "z")):
            s = s[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(s)
        except ValueError:
            raise InvariantViolation(f"unparseable timestamp {value!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.astimezone(timezone.utc)
    raise InvariantViolation(f"timestamp must be a string or number, got {type(value).__name__}")


def format_timestamp(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        return f"{base}.{dt.microsecond:06d}Z"
    return base + "Z"


def timestamp_micros(dt: datetime) -> int:
    return (dt.astimezone(timezone.utc) - _EPOCH) // timedelta(microseconds=1)


def timestamp_from_micros(micros: int) -> datetime:
    return _EPOCH + timedelta(microseconds=micros)


def validate_record(rec: ConversationRecord) -> None:
    """Raise InvariantViolation unless `rec` satisfies every record invariant."""
    if not rec.conversation_id:
        raise InvariantViolation("conversation_id is empty")
    if not rec.dataset:
        raise InvariantViolation("dataset is empty")
    if rec.turn_count < 1:
        raise InvariantViolation("record has zero turns")
    for i, turn in enumerate(rec.turns):
        expected = ROLE_USER if i % 2 == 0 else ROLE_ASSISTANT
        if turn.role != expected:
            raise InvariantViolation(
                f"turn {i} has role {turn.role!r}, expected {expected!r} (turns alternate, user first)"
            )
        if turn.role == ROLE_USER and not turn.text:
            raise InvariantViolation(f"user turn {i} has empty text")
    if rec.hashed_ip and not _HASHED_IP_RE.match(rec.hashed_ip):
        raise InvariantViolation("hashed_ip is not a 64-char lowercase hex string")
    if not rec.language:
        raise InvariantViolation("language is empty")
    if not rec.model:
        raise InvariantViolation("model is empty")
    if rec.timestamp.tzinfo is None:
        raise InvariantViolation("timestamp is naive")


def _parse_turns(value, adapter: FieldMapping) -> tuple[Turn, ...]:
    if not isinstance(value, list):
        raise InvariantViolation("turns must be a list")
    turns = []
    for i, item in enumerate(value):
        if not isinstance(item, dict):
            raise InvariantViolation(f"turn {i} is not an object")
        if adapter.role_key not in item:
            raise InvariantViolation(f"turn {i} lacks role key {adapter.role_key!r}")
        if adapter.text_key not in item:
            raise InvariantViolation(f"turn {i} lacks text key {adapter.text_key!r}")
        role = str(item[adapter.role_key]).strip().lower()
        if role not in (ROLE_USER, ROLE_ASSISTANT):
            raise InvariantViolation(f"turn {i} has unknown role {role!r}")
        text = item[adapter.text_key]
        if text is None:
            text = ""
        if not isinstance(text, str):
            raise InvariantViolation(f"turn {i} text is not a string")
        turns.append(Turn(role, text))
    return tuple(turns)


def parse_record(raw_line: str, adapter: FieldMapping) -> ConversationRecord:
    """Parse one JSON line into a validated ConversationRecord.

    Raises MalformedLine (bad JSON), MissingField (required field absent after
    mapping) or InvariantViolation (present but invalid).
    """
    try:
        obj = json.loads(raw_line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedLine("line is not a JSON object")

    mapped: dict[str, object] = {}
    for src, canon in adapter.source_to_canonical.items():
        if src in obj:
            mapped[canon] = obj[src]

    for name in _REQUIRED:
        if name not in mapped:
            raise MissingField(name)
    dataset = mapped.get("dataset") or adapter.default_dataset
    if not dataset:
        raise MissingField("dataset")

    toxic = mapped["toxic"]
    redacted = mapped["redacted"]
    if not isinstance(toxic, bool):
        raise InvariantViolation("toxic flag must be a boolean")
    if not isinstance(redacted, bool):
        raise InvariantViolation("redacted flag must be a boolean")

    rec = ConversationRecord(
        conversation_id=str(mapped["conversation_id"]),
        dataset=str(dataset),
        timestamp=parse_timestamp(mapped["timestamp"]),
        turns=_parse_turns(mapped["turns"], adapter),
        hashed_ip=str(mapped.get("hashed_ip") or ""),
        country=str(mapped.get("country") or ""),
        state=str(mapped.get("state") or ""),
        language=str(mapped["language"]),
        toxic=toxic,
        redacted=redacted,
        model=str(mapped["model"]),
    )
    validate_record(rec)
    return rec


def serialize_record(rec: ConversationRecord) -> str:
    """Canonical JSON line for `rec`; parse_record(serialize_record(r)) == r."""
    payload = {
        "conversation_id": rec.conversation_id,
        "dataset": rec.dataset,
        "timestamp": format_timestamp(rec.timestamp),
        "turns": [{"role": t.role, "text": t.text} for t in rec.turns],
        "hashed_ip": rec.hashed_ip,
        "country": rec.country,
        "state": rec.state,
        "language": rec.language,
        "toxic": rec.toxic,
        "redacted": rec.redacted,
        "model": rec.model,
        "turn_count": rec.turn_count,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


@dataclass
class IngestStats:
    parsed: int = 0
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)


def ingest_lines(lines, adapter: FieldMapping, max_warnings: int = 20) -> tuple[list[ConversationRecord], IngestStats]:
    """Parse lines in order; invalid lines are skipped and counted, not fatal.

    Output order equals input order.  Duplicate (dataset, conversation_id)
    pairs are skipped like any other invariant failure.
    """
    records: list[ConversationRecord] = []
    stats = IngestStats()
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = parse_record(line, adapter)
            if rec.key in seen:
                raise InvariantViolation(f"duplicate id {rec.key}")
            seen.add(rec.key)
        except (MalformedLine, MissingField, InvariantViolation) as exc:
            stats.skipped += 1
            if len(stats.warnings) < max_warnings:
                stats.warnings.append(f"line {lineno}: {exc}")
            continue
        records.append(rec)
        stats.parsed += 1
    return records, stats


def load_corpus(path, adapter: FieldMapping | None = None) -> tuple[list[ConversationRecord], IngestStats]:
    adapter = adapter or BUILTIN_ADAPTERS["canonical"]
    with open(path, encoding="utf-8") as fh:
        return ingest_lines(fh, adapter)


def save_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(serialize_record(rec))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

# Keywords that every generated first turn of a topic is guaranteed to contain
# (in at least one language-specific form).
TOPIC_KEYWORDS: dict[str, tuple[str, ...]] = {
    "coding": ("python",),
    "email": ("email", "correo", "邮件", "письмо"),
    "story": ("story", "historia", "故事", "историю"),
    "math": ("how many", "cuantos", "多少", "сколько"),
}

DEFAULT_TOPIC_MIX: tuple[tuple[str, float], ...] = (
    ("coding", 0.35),
    ("email", 0.25),
    ("story", 0.2),
    ("math", 0.2),
)

DEFAULT_LANGUAGE_MIX: tuple[tuple[str, float], ...] = (
    ("English", 0.7),
    ("Spanish", 0.12),
    ("Chinese", 0.1),
    ("Russian", 0.08),
)

_TASKS = (
    "parse a csv file", "reverse a string", "merge two sorted lists", "rename files in a folder",
    "scrape a table from a webpage", "deduplicate records", "read json from an api",
    "plot a histogram", "split text into sentences", "validate phone numbers",
)
_PEOPLE = ("boss", "professor", "landlord", "client", "coworker", "recruiter", "teammate")
_SUBJECTS = (
    "a deadline extension", "the quarterly report", "a refund request", "scheduling a meeting",
    "my resignation", "the broken heater", "an invoice dispute", "a job application",
)
_HEROES = ("a lighthouse keeper", "a retired astronaut", "a street cat", "a young violinist",
           "a mapmaker", "a night-shift baker")
_QUESTS = ("finds a hidden door", "loses their memory", "wins an unlikely race",
           "learns to fly", "meets their double", "builds a tiny boat")
_PLACES = ("an abandoned subway", "a floating market", "a snowed-in village", "a desert observatory")
_ITEMS = ("tennis balls", "apples", "books", "bricks", "marbles", "bottles", "coins")
_CONTAINERS = ("a school bus", "an olympic pool", "a shipping container", "a backpack", "a bathtub")

# First-turn templates per (topic, language).  Each template embeds one of the
# topic's keywords; non-English templates keep loanword keywords, which is how
# mixed-language chat logs commonly look.
_FIRST_TURN_TEMPLATES: dict[tuple[str, str], tuple[str, ...]] = {
    ("coding", "English"): (
        "write a python function to {task}",
        "how do I {task} in python",
        "why does my python script crash when I try to {task}",
    ),
    ("coding", "Spanish"): (
        "escribe una funcion de python para {task}",
        "como puedo {task} usando python",
    ),
    ("coding", "Chinese"): (
        "帮我写一个 python 脚本来 {task}",
        "用 python 怎么 {task}",
    ),
    ("coding", "Russian"): (
        "напиши функцию на python чтобы {task}",
        "как с помощью python {task}",
    ),
    ("email", "English"): (
        "write an email to my {person} about {subject}",
        "draft a polite email asking about {subject}",
        "help me reply to an email from my {person} about {subject}",
    ),
    ("email", "Spanish"): (
        "redacta un correo para mi {person} sobre {subject}",
        "escribe un email cortes sobre {subject}",
    ),
    ("email", "Chinese"): (
        "帮我给{person}写一封关于{subject}的邮件",
        "写一封 email 说明 {subject}",
    ),
    ("email", "Russian"): (
        "напиши письмо моему {person} про {subject}",
        "составь вежливый email насчет {subject}",
    ),
    ("story", "English"): (
        "tell me a story about {hero} who {quest}",
        "write a short story set in {place}",
        "continue this story: {hero} {quest}",
    ),
    ("story", "Spanish"): (
        "cuentame una historia sobre {hero} que {quest}",
        "escribe una historia corta ambientada en {place}",
    ),
    ("story", "Chinese"): (
        "给我讲一个关于{hero}的故事",
        "写一个发生在{place}的故事",
    ),
    ("story", "Russian"): (
        "расскажи историю про {hero}",
        "напиши историю которая происходит в {place}",
    ),
    ("math", "English"): (
        "how many {item} fit in {container}",
        "how many ways can you arrange {count} {item}",
        "if I buy {count} {item} and lose {count2}, how many are left",
    ),
    ("math", "Spanish"): (
        "cuantos {item} caben en {container}",
        "cuantos {item} necesito para llenar {container}",
    ),
    ("math", "Chinese"): (
        "{container}里能装多少{item}",
        "{count}个{item}分给3个人每人多少",
    ),
    ("math", "Russian"): (
        "сколько {item} поместится в {container}",
        "сколько способов расставить {count} {item}",
    ),
}

_REPLY_TEMPLATES: dict[str, tuple[str, ...]] = {
    "coding": (
        "Here is a small example that should help:\n\n```python\n# {task}\nfor line in data:\n    process(line)\n```\nLet me know if you need tests.",
        "You can do that with the standard library; the key is to iterate lazily and handle encoding errors.",
    ),
    "email": (
        "Subject: {subject}\n\nDear {person},\n\nI hope this finds you well. I am writing regarding {subject}.\n\nBest regards",
        "Here is a concise draft you can adapt; keep the tone neutral and end with a clear ask.",
    ),
    "story": (
        "Once upon a time, {hero} woke before dawn and {quest}. The town never spoke of it again.",
        "The wind carried salt and rumors. {hero} counted both, then set off toward {place}.",
    ),
    "math": (
        "Roughly {count} — estimate the volume of {container}, divide by the volume of one of the {item}, and subtract packing losses.",
        "Set it up as a division problem; the answer is {count} once you round down.",
    ),
}

_FOLLOWUPS = (
    "can you make it shorter",
    "now explain it step by step",
    "give me another version",
    "what could go wrong with this",
)

_COUNTRIES = ("United States", "India", "United Kingdom", "Germany", "Brazil",
              "Canada", "France", "Australia", "Japan", "Mexico")
_US_STATES = ("California", "Texas", "New York", "Florida", "Washington",
              "Massachusetts", "Illinois", "Ohio")
_MODELS = ("gpt-3.5-turbo", "gpt-4", "gpt-4-turbo", "vicuna-13b", "llama-2-13b-chat")


def _weighted_choice(rng: random.Random, pairs) -> str:
    names = [p[0] for p in pairs]
    weights = [p[1] for p in pairs]
    return rng.choices(names, weights=weights, k=1)[0]


def _fake_hashed_ip(seed: int, tag: str) -> str:
    return hashlib.sha256(f"{seed}:{tag}".encode()).hexdigest()


def _fill(rng: random.Random, template: str) -> str:
    return template.format(
        task=rng.choice(_TASKS),
        person=rng.choice(_PEOPLE),
        subject=rng.choice(_SUBJECTS),
        hero=rng.choice(_HEROES),
        quest=rng.choice(_QUESTS),
        place=rng.choice(_PLACES),
        item=rng.choice(_ITEMS),
        container=rng.choice(_CONTAINERS),
        count=rng.randint(2, 99),
        count2=rng.randint(1, 40),
    )


def generate_synthetic_corpus(
    n: int,
    seed: int,
    topic_mix=None,
    *,
    dataset: str = "synthetic",
    language_mix=None,
    shared_ip_fraction: float = 0.2,
) -> list[ConversationRecord]:
    """Deterministic synthetic conversations with topic-templated first turns.

    Identical (n, seed, mixes) produce byte-identical corpora.  A
    `shared_ip_fraction` of records draw their hashed_ip from a small pool of
    repeat users so per-user pivots have something to find.
    """
    if n < 1:
        raise InvalidArg("n must be >= 1")
    topic_mix = list(topic_mix) if topic_mix is not None else list(DEFAULT_TOPIC_MIX)
    language_mix = list(language_mix) if language_mix is not None else list(DEFAULT_LANGUAGE_MIX)
    if not topic_mix:
        raise InvalidArg("topic_mix is empty")
    if any(w <= 0 for _, w in topic_mix):
        raise InvalidArg("topic weights must be positive")
    unknown = [t for t, _ in topic_mix if t not in TOPIC_KEYWORDS]
    if unknown:
        raise InvalidArg(f"unknown topics: {unknown}")
    if not (0.0 <= shared_ip_fraction <= 1.0):
        raise InvalidArg("shared_ip_fraction must be in [0, 1]")

    rng = random.Random(seed)
    pool_size = max(1, n // 50)
    ip_pool = [_fake_hashed_ip(seed, f"pool-{i}") for i in range(pool_size)]
    base_time = datetime(2024, 1, 1, tzinfo=timezone.utc)

    records = []
    for i in range(n):
        topic = _weighted_choice(rng, topic_mix)
        language = _weighted_choice(rng, language_mix)
        templates = _FIRST_TURN_TEMPLATES.get((topic, language)) or _FIRST_TURN_TEMPLATES[(topic, "English")]
        first = _fill(rng, rng.choice(templates))
        reply = _fill(rng, rng.choice(_REPLY_TEMPLATES[topic]))
        turns = [Turn(ROLE_USER, first), Turn(ROLE_ASSISTANT, reply)]
        for _ in range(rng.randint(0, 2)):
            turns.append(Turn(ROLE_USER, rng.choice(_FOLLOWUPS)))
            turns.append(Turn(ROLE_ASSISTANT, _fill(rng, rng.choice(_REPLY_TEMPLATES[topic]))))
        if rng.random() < 0.1:
            turns.append(Turn(ROLE_USER, rng.choice(_FOLLOWUPS)))

        country = rng.choice(_COUNTRIES)
        state = rng.choice(_US_STATES) if country == "United States" else ""
        if rng.random() < shared_ip_fraction:
            hashed_ip = rng.choice(ip_pool)
        else:
            hashed_ip = _fake_hashed_ip(seed, f"solo-{i}")

        records.append(ConversationRecord(
            conversation_id=f"{dataset}-{i:07d}",
            dataset=dataset,
            timestamp=base_time + timedelta(minutes=rng.randrange(0, 525_600)),
            turns=tuple(turns),
            hashed_ip=hashed_ip,
            country=country,
            state=state,
            language=language,
            toxic=rng.random() < 0.04,
            redacted=rng.random() < 0.06,
            model=rng.choice(_MODELS),
        ))
    return records
