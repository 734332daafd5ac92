"""Audit events, per-account logs and the centralized archive.

Events record logins and API calls: who acted, in which account, on what,
when, and whether the call was allowed. Each account produces its own
time-ordered log; archives from many accounts merge into one, keeping a
stable order of (time, source account, position in file) so analysis runs
are reproducible byte for byte.

On disk a log is UTF-8 JSON Lines, one event per line with the fields
time, kind, user, account, action, resource, verdict, source. Timestamps
are UTC RFC 3339 at second precision (``2024-01-01T00:00:00Z``).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, Sequence

from .policy import Verdict, _OPERATION_RE, _SERVICE_RE, split_action

_TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

_EVENT_KEYS = frozenset(
    {"time", "kind", "user", "account", "action", "resource", "verdict", "source"}
)


class EventError(ValueError):
    """An audit event or log line is malformed."""


class EventKind(str, Enum):
    LOGIN = "Login"
    API_CALL = "ApiCall"


def parse_timestamp(text: str) -> datetime:
    """Parse the canonical UTC second-precision form, rejecting others."""
    try:
        return datetime.strptime(text, _TIME_FORMAT).replace(tzinfo=timezone.utc)
    except (TypeError, ValueError) as exc:
        raise EventError(f"bad timestamp {text!r}: expected YYYY-MM-DDTHH:MM:SSZ") from exc


def format_timestamp(when: datetime) -> str:
    return when.astimezone(timezone.utc).strftime(_TIME_FORMAT)


@dataclass(frozen=True)
class AuditEvent:
    """One recorded activity. API calls carry a concrete action and resource;
    logins carry neither. ``source`` is the account whose log produced the
    event (equal to ``account`` for self-produced events)."""

    time: datetime
    kind: EventKind
    user: str
    account: str
    verdict: Verdict
    action: str = ""
    resource: str = ""
    source: str = ""

    def __post_init__(self) -> None:
        if self.time.tzinfo is None:
            raise EventError("event time must be timezone-aware UTC")
        if not isinstance(self.kind, EventKind):
            raise EventError(f"bad event kind {self.kind!r}")
        if not isinstance(self.verdict, Verdict):
            raise EventError(f"bad verdict {self.verdict!r}")
        if self.kind is EventKind.API_CALL:
            if not self.action or not self.resource:
                raise EventError("ApiCall events need a non-empty action and resource")
            try:
                split_action(self.action)
            except ValueError as exc:
                raise EventError(str(exc)) from exc
            if "*" in self.resource:
                raise EventError(f"event resource must be concrete: {self.resource!r}")
        else:
            if self.action or self.resource:
                raise EventError("Login events must not carry an action or resource")
        if not self.user or not self.account:
            raise EventError("events need a user and an account")
        if not self.source:
            object.__setattr__(self, "source", self.account)


def event_to_obj(event: AuditEvent) -> dict:
    return {
        "time": format_timestamp(event.time),
        "kind": event.kind.value,
        "user": event.user,
        "account": event.account,
        "action": event.action,
        "resource": event.resource,
        "verdict": event.verdict.value,
        "source": event.source,
    }


def event_from_obj(obj: object) -> AuditEvent:
    if not isinstance(obj, dict):
        raise EventError("event must be a JSON object")
    unknown = sorted(set(obj) - _EVENT_KEYS)
    if unknown:
        raise EventError(f"unknown event field(s) {', '.join(unknown)}")
    missing = sorted(_EVENT_KEYS - set(obj))
    if missing:
        raise EventError(f"missing event field(s) {', '.join(missing)}")
    try:
        kind = EventKind(obj["kind"])
    except ValueError:
        raise EventError(f"bad event kind {obj['kind']!r}") from None
    try:
        verdict = Verdict(obj["verdict"])
    except ValueError:
        raise EventError(f"bad verdict {obj['verdict']!r}") from None
    return AuditEvent(
        time=parse_timestamp(obj["time"]),
        kind=kind,
        user=obj["user"],
        account=obj["account"],
        action=obj["action"],
        resource=obj["resource"],
        verdict=verdict,
        source=obj["source"],
    )


def _order_key(event: AuditEvent) -> tuple[datetime, str]:
    return (event.time, event.source)


@dataclass(frozen=True)
class LogArchive:
    """A time-ordered event sequence. Construction and append both keep
    (time, source, arrival) order, so late events slot in deterministically."""

    events: tuple[AuditEvent, ...] = ()

    @property
    def accounts_covered(self) -> frozenset[str]:
        return frozenset(e.source for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


def archive_from_events(events: Iterable[AuditEvent]) -> LogArchive:
    """Build an archive from events in arrival order (stable re-sort)."""
    return LogArchive(tuple(sorted(events, key=_order_key)))


def append_event(archive: LogArchive, event: AuditEvent) -> LogArchive:
    """Insert one event, keeping order; returns a new archive."""
    events = list(archive.events)
    bisect.insort_right(events, event, key=_order_key)
    return LogArchive(tuple(events))


def merge_archives(archives: Sequence[LogArchive]) -> LogArchive:
    """Union of the inputs in one time-ordered archive.

    The sort is stable, so events that tie on (time, source) keep their
    per-input order; merging with an empty archive is the identity.
    """
    return archive_from_events(e for a in archives for e in a.events)


def write_archive(archive: LogArchive, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in archive.events:
            fh.write(json.dumps(event_to_obj(event), separators=(",", ":")) + "\n")


def read_archive(path) -> LogArchive:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                events.append(event_from_obj(obj))
            except (json.JSONDecodeError, EventError) as exc:
                raise EventError(f"{path}:{lineno}: {exc}") from exc
    return archive_from_events(events)


def _parse_filter_pattern(pattern: str) -> tuple[str, str]:
    """Split a query action pattern into (service, operation pattern).

    Queries accept one extension over policy action patterns: the service
    part may be ``*`` on its own with an arbitrary operation pattern
    (``*:Delete*``), matching the operation across all services.
    """
    if pattern == "*":
        return "*", "*"
    parts = pattern.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise EventError(f"bad action pattern {pattern!r}: expected 'service:operation'")
    service, op = parts
    if service != "*" and not _SERVICE_RE.fullmatch(service):
        raise EventError(f"bad action pattern {pattern!r}: invalid service token")
    body = op[:-1] if op.endswith("*") else op
    if op != "*" and not _OPERATION_RE.fullmatch(body):
        raise EventError(f"bad action pattern {pattern!r}: one trailing '*' at most")
    return service, op


def _action_filter_matches(service: str, op_pattern: str, action: str) -> bool:
    if not action or ":" not in action:
        return False
    act_service, act_op = action.split(":", 1)
    if service != "*" and act_service != service:
        return False
    if op_pattern == "*":
        return True
    if op_pattern.endswith("*"):
        return act_op.startswith(op_pattern[:-1])
    return act_op == op_pattern


@dataclass(frozen=True)
class QueryFilter:
    """Conjunction of optional per-field constraints; absent fields match all.

    ``action_pattern`` uses the action-pattern language (plus the ``*:Op*``
    any-service extension); the time range is inclusive at both ends.
    """

    user: str | None = None
    account: str | None = None
    action_pattern: str | None = None
    kind: EventKind | None = None
    verdict: Verdict | None = None
    since: datetime | None = None
    until: datetime | None = None

    def __post_init__(self) -> None:
        if self.action_pattern is not None:
            _parse_filter_pattern(self.action_pattern)
        if self.since is not None and self.until is not None and self.since > self.until:
            raise EventError("bad time range: since is after until")


def query(archive: LogArchive, flt: QueryFilter) -> list[AuditEvent]:
    """Events satisfying every present filter field, in archive order."""
    pattern = None
    if flt.action_pattern is not None:
        pattern = _parse_filter_pattern(flt.action_pattern)
    out = []
    for event in archive.events:
        if flt.user is not None and event.user != flt.user:
            continue
        if flt.account is not None and event.account != flt.account:
            continue
        if flt.kind is not None and event.kind is not flt.kind:
            continue
        if flt.verdict is not None and event.verdict is not flt.verdict:
            continue
        if flt.since is not None and event.time < flt.since:
            continue
        if flt.until is not None and event.time > flt.until:
            continue
        if pattern is not None and not _action_filter_matches(pattern[0], pattern[1], event.action):
            continue
        out.append(event)
    return out


@dataclass(frozen=True)
class DeniedBucket:
    bucket_start: datetime
    user: str
    account: str
    count: int


def denied_access_summary(archive: LogArchive, bucket: timedelta) -> list[DeniedBucket]:
    """Count Deny events per (time bucket, user, account).

    Buckets are aligned to the Unix epoch, so identical inputs always land
    in identical cells; the counts partition the archive's Deny events.
    """
    if bucket <= timedelta(0):
        raise EventError("bucket duration must be positive")
    width = int(bucket.total_seconds())
    if width <= 0:
        raise EventError("bucket duration must be at least one second")
    cells: dict[tuple[datetime, str, str], int] = {}
    for event in archive.events:
        if event.verdict is not Verdict.DENY:
            continue
        seconds = int(event.time.timestamp())
        start = datetime.fromtimestamp(seconds - seconds % width, tz=timezone.utc)
        key = (start, event.user, event.account)
        cells[key] = cells.get(key, 0) + 1
    return [
        DeniedBucket(bucket_start=k[0], user=k[1], account=k[2], count=v)
        for k, v in sorted(cells.items())
    ]
