"""Registry snapshot model and the REGSNAP v1 text format.

A REGSNAP file is line based, UTF-8 with LF endings::

    REGSNAP 1
    hive SOFTWARE
    captured 2009-03-02T14:20:00Z                (optional)
    key Software\\Microsoft<TAB>2009-03-02T14:16:38Z
    val MRUListEx<TAB>REG_BINARY<TAB>AAAAAP////8=

``val`` lines attach to the most recent ``key`` line. Keys named only as
ancestors of a later ``key`` line are created implicitly and inherit that
line's timestamp until an explicit line for them appears.
"""

from __future__ import annotations

import base64
import binascii
import enum
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator, Optional

from regdialog.errors import (
    BadBase64,
    BadTimestamp,
    DuplicateKeyPath,
    DuplicateValueName,
    IllegalCharacterInName,
    MalformedHeader,
    MalformedLine,
)

MAGIC = "REGSNAP 1"

_ROOT_ALIASES = {
    "HKCU": "HKCU",
    "HKEY_CURRENT_USER": "HKCU",
    "HKLM": "HKLM",
    "HKEY_LOCAL_MACHINE": "HKLM",
}

_ISO_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})Z$")
# display form used in forensic reports, day first
_DISPLAY_RE = re.compile(r"^(\d{2})/(\d{2})/(\d{4}) (\d{2}):(\d{2}):(\d{2}) UTC$")


class ValueType(str, enum.Enum):
    REG_SZ = "REG_SZ"
    REG_EXPAND_SZ = "REG_EXPAND_SZ"
    REG_BINARY = "REG_BINARY"
    REG_DWORD = "REG_DWORD"
    REG_QWORD = "REG_QWORD"
    REG_MULTI_SZ = "REG_MULTI_SZ"


def fold(name: str) -> str:
    """Case-fold a key or value name for comparison."""
    return name.casefold()


def has_control_chars(text: str) -> bool:
    return any(unicodedata.category(ch) == "Cc" for ch in text)


def name_problem(name: str, allow_empty: bool = False) -> Optional[str]:
    """Return why *name* is not a legal key/value name, or None."""
    if not name and not allow_empty:
        return "empty name"
    if "\\" in name:
        return f"backslash in name {name!r}"
    if has_control_chars(name):
        return f"control character in name {name!r}"
    return None


def parse_timestamp(text: str) -> datetime:
    """Parse ``YYYY-MM-DDTHH:MM:SSZ`` or ``DD/MM/YYYY HH:MM:SS UTC``.

    Raises ValueError on anything else.
    """
    m = _ISO_RE.match(text)
    if m:
        y, mo, d, h, mi, s = (int(g) for g in m.groups())
    else:
        m = _DISPLAY_RE.match(text)
        if not m:
            raise ValueError(f"bad timestamp {text!r}")
        d, mo, y, h, mi, s = (int(g) for g in m.groups())
    return datetime(y, mo, d, h, mi, s, tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _timestamp_ok(ts: datetime) -> bool:
    return ts.tzinfo is not None and ts.utcoffset().total_seconds() == 0 and ts.microsecond == 0


@dataclass(frozen=True)
class RegistryValue:
    name: str
    value_type: ValueType
    data: bytes = b""

    def sort_key(self):
        return (fold(self.name), self.name)


@dataclass(eq=False)
class RegistryKey:
    """A registry key. Children are kept in lists so that invalid trees can be
    represented and reported by :func:`validate_axioms`."""

    name: str
    last_modified: Optional[datetime]
    values: list[RegistryValue] = field(default_factory=list)
    subkeys: list[RegistryKey] = field(default_factory=list)

    def subkey(self, name: str) -> Optional[RegistryKey]:
        folded = fold(name)
        for child in self.subkeys:
            if fold(child.name) == folded:
                return child
        return None

    def value(self, name: str) -> Optional[RegistryValue]:
        folded = fold(name)
        for v in self.values:
            if fold(v.name) == folded:
                return v
        return None

    def sort_key(self):
        return (fold(self.name), self.name)

    def _canon(self):
        return (
            self.name,
            self.last_modified,
            tuple(sorted(self.values, key=RegistryValue.sort_key)),
            tuple(k._canon() for k in sorted(self.subkeys, key=RegistryKey.sort_key)),
        )

    def __eq__(self, other):
        # structural: sibling and value order do not matter
        if not isinstance(other, RegistryKey):
            return NotImplemented
        return self._canon() == other._canon()

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RegistryPath:
    segments: tuple[str, ...]
    root_alias: Optional[str] = None

    @classmethod
    def parse(cls, text: str, aliases: bool = True) -> RegistryPath:
        """Parse ``HKCU\\Software\\X``, ``\\Software\\X`` or ``Software\\X``."""
        text = text.strip()
        if text.startswith("\\"):
            text = text[1:]
        segments = [s for s in text.split("\\")] if text else []
        alias = None
        if aliases and segments and segments[0].upper() in _ROOT_ALIASES:
            alias = _ROOT_ALIASES[segments[0].upper()]
            segments = segments[1:]
        return cls(tuple(segments), alias)

    @classmethod
    def coerce(cls, value) -> RegistryPath:
        if isinstance(value, RegistryPath):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        return cls(tuple(value))

    @property
    def folded(self) -> tuple[str, ...]:
        return tuple(fold(s) for s in self.segments)

    @property
    def name(self) -> str:
        return self.segments[-1] if self.segments else ""

    @property
    def parent(self) -> RegistryPath:
        return RegistryPath(self.segments[:-1], self.root_alias)

    def child(self, name: str) -> RegistryPath:
        return RegistryPath(self.segments + (name,), self.root_alias)

    def hive_relative(self) -> RegistryPath:
        return RegistryPath(self.segments) if self.root_alias else self

    def startswith(self, prefix: RegistryPath) -> bool:
        """Segment-wise, case-insensitive prefix test; root aliases are ignored."""
        n = len(prefix.segments)
        return n <= len(self.segments) and self.folded[:n] == prefix.folded

    def sort_key(self):
        return self.folded

    def __len__(self):
        return len(self.segments)

    def __eq__(self, other):
        if not isinstance(other, RegistryPath):
            return NotImplemented
        return self.root_alias == other.root_alias and self.folded == other.folded

    def __hash__(self):
        return hash((self.root_alias, self.folded))

    def __str__(self):
        body = "\\".join(self.segments)
        if self.root_alias:
            return f"{self.root_alias}\\{body}" if body else self.root_alias
        return "\\" + body

    def __repr__(self):
        return f"RegistryPath({str(self)!r})"


@dataclass(eq=False)
class RegistrySnapshot:
    hive_name: str
    root: RegistryKey = None
    captured_at: Optional[datetime] = None

    def __post_init__(self):
        if self.root is None:
            self.root = RegistryKey(self.hive_name, None)

    def iter_keys(self) -> Iterator[tuple[RegistryPath, RegistryKey]]:
        """Depth-first walk in canonical order; the root itself is not yielded."""
        stack = [((), self.root)]
        while stack:
            segments, key = stack.pop()
            if segments:
                yield RegistryPath(segments), key
            children = sorted(key.subkeys, key=RegistryKey.sort_key, reverse=True)
            stack.extend((segments + (c.name,), c) for c in children)

    def key_at(self, path) -> Optional[RegistryKey]:
        return key_at(self, path)

    def __eq__(self, other):
        if not isinstance(other, RegistrySnapshot):
            return NotImplemented
        return (
            self.hive_name == other.hive_name
            and self.captured_at == other.captured_at
            and self.root._canon()[2:] == other.root._canon()[2:]
        )

    __hash__ = None


def key_at(snapshot: RegistrySnapshot, path) -> Optional[RegistryKey]:
    """Look a key up by path, ignoring case and any root alias."""
    path = RegistryPath.coerce(path)
    key = snapshot.root
    for segment in path.segments:
        key = key.subkey(segment)
        if key is None:
            return None
    return key if path.segments else None


# -- axioms -------------------------------------------------------------------

class AxiomKind(str, enum.Enum):
    MissingTimestamp = "MissingTimestamp"
    BadTimestamp = "BadTimestamp"
    EmptyKeyName = "EmptyKeyName"
    IllegalCharacterInName = "IllegalCharacterInName"
    DuplicateSiblingName = "DuplicateSiblingName"
    DuplicateValueName = "DuplicateValueName"


@dataclass(frozen=True)
class AxiomViolation:
    kind: AxiomKind
    path: RegistryPath
    detail: str

    def __str__(self):
        return f"{self.kind.value}: {self.path}: {self.detail}"


def validate_axioms(snapshot: RegistrySnapshot) -> list[AxiomViolation]:
    """Check every key against the structural axioms.

    A key needs a legal non-empty name and exactly one timestamp, and names
    must be unique among siblings and among a key's values. Duplicate
    timestamps cannot be represented, so only a missing one is reported. The
    root is the hive container and is exempt from the name and timestamp
    checks.
    """
    out: list[AxiomViolation] = []

    def visit(key: RegistryKey, path: RegistryPath, is_root: bool):
        if not is_root:
            if not key.name:
                out.append(AxiomViolation(AxiomKind.EmptyKeyName, path, "key has no name"))
            else:
                problem = name_problem(key.name)
                if problem:
                    out.append(AxiomViolation(AxiomKind.IllegalCharacterInName, path, problem))
            if key.last_modified is None:
                out.append(AxiomViolation(AxiomKind.MissingTimestamp, path, "key has no timestamp"))
            elif not _timestamp_ok(key.last_modified):
                out.append(AxiomViolation(
                    AxiomKind.BadTimestamp, path, "timestamp must be UTC with 1-second resolution"))
        seen: dict[str, str] = {}
        for v in sorted(key.values, key=RegistryValue.sort_key):
            problem = name_problem(v.name, allow_empty=True)
            if problem:
                out.append(AxiomViolation(AxiomKind.IllegalCharacterInName, path, problem))
            if fold(v.name) in seen:
                out.append(AxiomViolation(
                    AxiomKind.DuplicateValueName, path,
                    f"values {seen[fold(v.name)]!r} and {v.name!r} collide"))
            else:
                seen[fold(v.name)] = v.name
        seen = {}
        for child in sorted(key.subkeys, key=RegistryKey.sort_key):
            if fold(child.name) in seen:
                out.append(AxiomViolation(
                    AxiomKind.DuplicateSiblingName, path,
                    f"subkeys {seen[fold(child.name)]!r} and {child.name!r} collide"))
            else:
                seen[fold(child.name)] = child.name
            visit(child, path.child(child.name), False)

    visit(snapshot.root, RegistryPath(()), True)
    return out


# -- REGSNAP parsing / serialization ------------------------------------------

def _decode(data) -> str:
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedLine(f"input is not UTF-8: {e}") from None


def _check_name(name: str, lineno: int, allow_empty: bool = False):
    problem = name_problem(name, allow_empty=allow_empty)
    if problem:
        raise IllegalCharacterInName(problem, lineno)


def _timestamp(text: str, lineno: int) -> datetime:
    try:
        return parse_timestamp(text)
    except ValueError:
        raise BadTimestamp(f"bad timestamp {text!r}", lineno) from None


def parse_snapshot(data) -> RegistrySnapshot:
    """Parse REGSNAP v1 text (bytes or str) into a snapshot.

    Every error carries the 1-based line number it was detected on.
    """
    text = _decode(data)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != MAGIC:
        raise MalformedHeader(f"first line must be {MAGIC!r}", 1)
    if len(lines) < 2 or not lines[1].startswith("hive "):
        raise MalformedHeader("second line must be 'hive <name>'", 2)
    hive_name = lines[1][5:]
    if not hive_name or has_control_chars(hive_name):
        raise MalformedHeader(f"illegal hive name {hive_name!r}", 2)

    snapshot = RegistrySnapshot(hive_name)
    nodes: dict[tuple[str, ...], RegistryKey] = {(): snapshot.root}
    explicit: set[tuple[str, ...]] = set()
    current: Optional[RegistryKey] = None
    current_values: set[str] = set()

    for lineno, line in enumerate(lines[2:], start=3):
        if line.startswith("captured "):
            if lineno != 3:
                raise MalformedLine("'captured' must directly follow the hive line", lineno)
            snapshot.captured_at = _timestamp(line[9:], lineno)
        elif line.startswith("key "):
            fields = line[4:].split("\t")
            if len(fields) != 2:
                raise MalformedLine("expected 'key <path>\\t<timestamp>'", lineno)
            raw_path, raw_ts = fields
            if raw_path.startswith("\\"):
                raw_path = raw_path[1:]
            segments = tuple(raw_path.split("\\"))
            for segment in segments:
                _check_name(segment, lineno)
            ts = _timestamp(raw_ts, lineno)
            folded = tuple(fold(s) for s in segments)
            if folded in explicit:
                raise DuplicateKeyPath(f"duplicate key path {raw_path!r}", lineno)
            for depth in range(1, len(segments) + 1):
                prefix = folded[:depth]
                if prefix not in nodes:
                    node = RegistryKey(segments[depth - 1], ts)
                    nodes[prefix[:-1]].subkeys.append(node)
                    nodes[prefix] = node
            current = nodes[folded]
            # an explicit line replaces the sentinel of an implicit ancestor
            current.name = segments[-1]
            current.last_modified = ts
            explicit.add(folded)
            current_values = set()
        elif line.startswith("val "):
            if current is None:
                raise MalformedLine("'val' line before any 'key' line", lineno)
            fields = line[4:].split("\t")
            if len(fields) != 3:
                raise MalformedLine("expected 'val <name>\\t<type>\\t<base64>'", lineno)
            name, raw_type, raw_data = fields
            _check_name(name, lineno, allow_empty=True)
            try:
                value_type = ValueType(raw_type)
            except ValueError:
                raise MalformedLine(f"unknown value type {raw_type!r}", lineno) from None
            try:
                payload = base64.b64decode(raw_data, validate=True)
            except (binascii.Error, ValueError):
                raise BadBase64(f"bad base64 data {raw_data!r}", lineno) from None
            if base64.b64encode(payload).decode("ascii") != raw_data:
                raise BadBase64(f"non-canonical base64 {raw_data!r}", lineno)
            if fold(name) in current_values:
                raise DuplicateValueName(f"duplicate value name {name!r}", lineno)
            current_values.add(fold(name))
            current.values.append(RegistryValue(name, value_type, payload))
        else:
            raise MalformedLine(f"unrecognised line {line[:40]!r}", lineno)

    for node in nodes.values():
        node.subkeys.sort(key=RegistryKey.sort_key)
        node.values.sort(key=RegistryValue.sort_key)
    return snapshot


def serialize_snapshot(snapshot: RegistrySnapshot) -> bytes:
    """Emit the canonical REGSNAP form (siblings and values in case-folded order)."""
    out = [MAGIC, f"hive {snapshot.hive_name}"]
    if snapshot.captured_at is not None:
        out.append(f"captured {format_timestamp(snapshot.captured_at)}")
    for path, key in snapshot.iter_keys():
        rendered = "\\".join(path.segments)
        out.append(f"key {rendered}\t{format_timestamp(key.last_modified)}")
        for v in sorted(key.values, key=RegistryValue.sort_key):
            data = base64.b64encode(v.data).decode("ascii")
            out.append(f"val {v.name}\t{v.value_type.value}\t{data}")
    return ("\n".join(out) + "\n").encode("utf-8")
