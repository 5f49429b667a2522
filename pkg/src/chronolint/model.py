"""Core value types: timestamps, commit records, anomalies, dataset manifests.

Everything here is an immutable value object, safe to share across threads.
All timestamp comparisons in the toolkit go through ``epoch_seconds``; the
recorded timezone offset is carried along for reporting but never applied.
"""

from dataclasses import dataclass, field
from enum import Enum

TZ_OFFSET_MIN = -1080
TZ_OFFSET_MAX = 1080

# Floor-division factors for normalizing raw integer timestamps to seconds.
_UNIT_FACTORS = {"s": 1, "seconds": 1, "ms": 10**3, "milliseconds": 10**3,
                 "us": 10**6, "microseconds": 10**6}

NO_NAME = "(no name)"


@dataclass(frozen=True)
class Timestamp:
    """A commit timestamp: whole seconds since the Unix epoch, UTC.

    ``tz_offset_minutes`` is the offset recorded with the commit. It is
    informational only and never added to ``epoch_seconds``. Negative epochs
    are legal: they are exactly the suspicious values this toolkit exists to
    surface.
    """

    epoch_seconds: int
    tz_offset_minutes: int = 0

    def __post_init__(self):
        if not TZ_OFFSET_MIN <= self.tz_offset_minutes <= TZ_OFFSET_MAX:
            raise ValueError(
                f"tz offset {self.tz_offset_minutes} outside "
                f"[{TZ_OFFSET_MIN}, {TZ_OFFSET_MAX}] minutes"
            )


@dataclass(frozen=True)
class CommitRecord:
    """One commit's identity and metadata, normalized to internal units."""

    hash: str
    repo_id: str
    parents: tuple[str, ...]
    author_date: Timestamp
    committer_date: Timestamp
    author_id: str
    committer_id: str
    message: str
    verified: bool | None = None  # tri-state: True / False / unknown
    stars: int | None = None      # repo-level star count, if known

    def date(self, field_name: str = "committer") -> Timestamp:
        """Select the comparison date per the configured field."""
        if field_name == "committer":
            return self.committer_date
        if field_name == "author":
            return self.author_date
        raise ValueError(f"unknown date field {field_name!r}")


class AnomalyKind(str, Enum):
    OLD = "old"
    FUTURE = "future"
    OUT_OF_ORDER_LINEAR = "out_of_order_linear"
    OUT_OF_ORDER_PARENT = "out_of_order_parent"
    TOOL_SIGNATURE = "tool_signature"
    VERIFIED_MISMATCH = "verified_mismatch"


_OUT_OF_ORDER_KINDS = frozenset(
    {AnomalyKind.OUT_OF_ORDER_LINEAR, AnomalyKind.OUT_OF_ORDER_PARENT}
)


@dataclass(frozen=True)
class Anomaly:
    """A flagged commit with the reason and, for ordering problems, the
    measured parent-minus-child gap in seconds."""

    kind: AnomalyKind
    commit_hash: str
    repo_id: str
    evidence: str
    delta_seconds: int | None = None

    def __post_init__(self):
        if (self.delta_seconds is not None) != (self.kind in _OUT_OF_ORDER_KINDS):
            raise ValueError(
                "delta_seconds must be set exactly for out-of-order anomalies"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """Names a dataset snapshot: when it was frozen and which repos it holds."""

    name: str
    snapshot_date: Timestamp
    repos: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.snapshot_date.epoch_seconds <= 0:
            raise ValueError("snapshot_date must be positive")
        if len(set(self.repos)) != len(self.repos):
            raise ValueError("manifest repo ids must be unique")


def normalize_timestamp(raw: int, unit: str, tz_offset_minutes: int = 0) -> Timestamp:
    """Floor-divide a raw integer timestamp down to whole seconds.

    ``unit`` is one of s/ms/us (or the spelled-out forms). Flooring, not
    truncation, so negative sub-second values round toward minus infinity.
    """
    try:
        factor = _UNIT_FACTORS[unit]
    except KeyError:
        raise ValueError(f"unknown timestamp unit {unit!r}") from None
    return Timestamp(raw // factor, tz_offset_minutes)


# Civil-date conversion on the proleptic Gregorian calendar. datetime would
# overflow outside years 1..9999, and suspicious epochs can land anywhere in
# the int64 range, so the day arithmetic is done directly.

_DAYS_EPOCH_SHIFT = 719468  # days from 0000-03-01 to 1970-01-01
_ERA_DAYS = 146097          # days per 400-year era


def _civil_from_days(days: int) -> tuple[int, int, int]:
    z = days + _DAYS_EPOCH_SHIFT
    era = z // _ERA_DAYS
    doe = z - era * _ERA_DAYS
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    year = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    day = doy - (153 * mp + 2) // 5 + 1
    month = mp + 3 if mp < 10 else mp - 9
    if month <= 2:
        year += 1
    return year, month, day


def _days_from_civil(year: int, month: int, day: int) -> int:
    year -= month <= 2
    era = year // 400
    yoe = year - era * 400
    doy = (153 * (month + (-3 if month > 2 else 9)) + 2) // 5 + day - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * _ERA_DAYS + doe - _DAYS_EPOCH_SHIFT


def format_utc(ts: Timestamp) -> str:
    """Render as ``YYYY-MM-DD HH:MM:SS UTC``, for any epoch value."""
    days, rem = divmod(ts.epoch_seconds, 86400)
    year, month, day = _civil_from_days(days)
    hh, rem = divmod(rem, 3600)
    mm, ss = divmod(rem, 60)
    return f"{year:04d}-{month:02d}-{day:02d} {hh:02d}:{mm:02d}:{ss:02d} UTC"


def parse_utc(text: str) -> Timestamp:
    """Parse the output of :func:`format_utc`, or an ISO-8601 UTC instant.

    Accepts ``YYYY-MM-DD HH:MM:SS UTC``, ``YYYY-MM-DDTHH:MM:SS[Z]`` and a
    bare ``YYYY-MM-DD`` (midnight). Offsets other than Z/UTC are rejected:
    cutoff instants are defined in UTC.
    """
    s = text.strip()
    if s.endswith(" UTC"):
        s = s[:-4]
    elif s.endswith("Z"):
        s = s[:-1]
    s = s.replace("T", " ")
    date_part, _, time_part = s.partition(" ")
    ymd = date_part.split("-")
    # A leading '-' (negative year) splits into an empty first element.
    if ymd and ymd[0] == "":
        ymd = ["-" + ymd[1]] + ymd[2:]
    if len(ymd) != 3:
        raise ValueError(f"unparseable UTC date {text!r}")
    year, month, day = (int(p) for p in ymd)
    hh = mm = ss = 0
    if time_part:
        hms = time_part.split(":")
        if len(hms) != 3:
            raise ValueError(f"unparseable UTC time {text!r}")
        hh, mm, ss = (int(p) for p in hms)
    epoch = _days_from_civil(year, month, day) * 86400 + hh * 3600 + mm * 60 + ss
    return Timestamp(epoch)


def canonical_repo_id(repo_id: str) -> str:
    """Lowercase and strip a trailing .git so forge spellings compare equal."""
    rid = repo_id.strip().lower()
    if rid.endswith(".git"):
        rid = rid[: -len(".git")]
    return rid
