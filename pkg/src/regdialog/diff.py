"""Restore point comparison: per-key Added/Removed/Modified records and grouping."""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

from regdialog.errors import ChronologyError, HiveMismatch, PathMismatch, TooFewSnapshots
from regdialog.snapshot import (
    RegistryKey,
    RegistryPath,
    RegistrySnapshot,
    RegistryValue,
    ValueType,
    fold,
    format_timestamp,
    parse_timestamp,
)

SCHEMA = "regdialog/1"


class State(str, enum.Enum):
    Added = "Added"
    Removed = "Removed"
    Modified = "Modified"

    @property
    def label(self) -> str:
        return _LABELS[self]


# text labels as printed by the original comparer
_LABELS = {State.Added: "ADDED", State.Removed: "REM", State.Modified: "MODIFIED"}


@dataclass(frozen=True)
class DiffOptions:
    touch_as_modified: bool = False


@dataclass(frozen=True)
class ValueDelta:
    added: tuple[RegistryValue, ...] = ()
    removed: tuple[RegistryValue, ...] = ()
    changed: tuple[tuple[RegistryValue, RegistryValue], ...] = ()

    def __bool__(self):
        return bool(self.added or self.removed or self.changed)

    def swapped(self) -> ValueDelta:
        return ValueDelta(self.removed, self.added, tuple((new, old) for old, new in self.changed))

    def to_json(self):
        return {
            "added": [_value_json(v) for v in self.added],
            "removed": [_value_json(v) for v in self.removed],
            "changed": [
                {"name": old.name, "older": _value_json(old), "newer": _value_json(new)}
                for old, new in self.changed
            ],
        }

    @classmethod
    def from_json(cls, obj) -> ValueDelta:
        return cls(
            tuple(_value_from_json(v) for v in obj["added"]),
            tuple(_value_from_json(v) for v in obj["removed"]),
            tuple(
                (_value_from_json(c["older"]), _value_from_json(c["newer"]))
                for c in obj["changed"]
            ),
        )


def _value_json(v: RegistryValue):
    return {"name": v.name, "type": v.value_type.value, "data": base64.b64encode(v.data).decode("ascii")}


def _value_from_json(obj) -> RegistryValue:
    return RegistryValue(obj["name"], ValueType(obj["type"]), base64.b64decode(obj["data"]))


@dataclass(frozen=True)
class DiffRecord:
    path: RegistryPath
    state: State
    older_timestamp: Optional[datetime] = None
    newer_timestamp: Optional[datetime] = None
    value_delta: ValueDelta = field(default_factory=ValueDelta)

    def __post_init__(self):
        if self.state is State.Added and self.older_timestamp is not None:
            raise ValueError("Added record cannot carry an older timestamp")
        if self.state is State.Removed and self.newer_timestamp is not None:
            raise ValueError("Removed record cannot carry a newer timestamp")

    def text(self) -> str:
        return f"{self.state.label}: {self.path}"

    def swapped(self) -> DiffRecord:
        state = {State.Added: State.Removed, State.Removed: State.Added}.get(self.state, self.state)
        return DiffRecord(self.path, state, self.newer_timestamp, self.older_timestamp, self.value_delta.swapped())

    def to_json(self):
        return {
            "path": str(self.path),
            "state": self.state.value,
            "valueDelta": self.value_delta.to_json(),
            "olderTs": format_timestamp(self.older_timestamp) if self.older_timestamp else None,
            "newerTs": format_timestamp(self.newer_timestamp) if self.newer_timestamp else None,
        }

    @classmethod
    def from_json(cls, obj) -> DiffRecord:
        return cls(
            RegistryPath.parse(obj["path"]),
            State(obj["state"]),
            parse_timestamp(obj["olderTs"]) if obj.get("olderTs") else None,
            parse_timestamp(obj["newerTs"]) if obj.get("newerTs") else None,
            ValueDelta.from_json(obj["valueDelta"]),
        )


@dataclass(frozen=True)
class DiffSet:
    older_id: str
    newer_id: str
    records: tuple[DiffRecord, ...] = ()

    def __len__(self):
        return len(self.records)

    def text_lines(self) -> list[str]:
        return [r.text() for r in self.records]

    def to_json(self):
        return {
            "schema": SCHEMA,
            "older": self.older_id,
            "newer": self.newer_id,
            "records": [r.to_json() for r in self.records],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> DiffSet:
        return cls(obj["older"], obj["newer"], tuple(DiffRecord.from_json(r) for r in obj["records"]))


@dataclass(frozen=True)
class DiffGroup:
    common_key: RegistryPath
    records: tuple[DiffRecord, ...]
    owning_software: Optional[str] = None

    def to_json(self):
        return {
            "commonKey": str(self.common_key),
            "owningSoftware": self.owning_software,
            "records": [r.to_json() for r in self.records],
        }


def _value_map(key: RegistryKey) -> dict[str, RegistryValue]:
    return {fold(v.name): v for v in key.values}


def _delta(older: Optional[RegistryKey], newer: Optional[RegistryKey]) -> ValueDelta:
    old = _value_map(older) if older is not None else {}
    new = _value_map(newer) if newer is not None else {}
    added = tuple(new[n] for n in sorted(new.keys() - old.keys()))
    removed = tuple(old[n] for n in sorted(old.keys() - new.keys()))
    changed = tuple(
        (old[n], new[n]) for n in sorted(old.keys() & new.keys())
        if (old[n].value_type, old[n].data) != (new[n].value_type, new[n].data)
    )
    return ValueDelta(added, removed, changed)


def compare_keys(
    older: RegistryKey,
    newer: RegistryKey,
    options: DiffOptions = DiffOptions(),
    path: Optional[RegistryPath] = None,
) -> Optional[DiffRecord]:
    """Compare the own values of two keys occupying the same path.

    Subkeys are not looked at. A timestamp-only change yields a record only
    when ``options.touch_as_modified`` is set.
    """
    if fold(older.name) != fold(newer.name):
        raise PathMismatch(f"cannot compare key {older.name!r} with key {newer.name!r}")
    if path is None:
        path = RegistryPath((newer.name,))
    delta = _delta(older, newer)
    if not delta and not (options.touch_as_modified and older.last_modified != newer.last_modified):
        return None
    return DiffRecord(path, State.Modified, older.last_modified, newer.last_modified, delta)


def _flatten(snapshot: RegistrySnapshot) -> dict[tuple[str, ...], tuple[RegistryPath, RegistryKey]]:
    return {path.folded: (path, key) for path, key in snapshot.iter_keys()}


def _snapshot_id(snapshot: RegistrySnapshot, fallback: str) -> str:
    if snapshot.captured_at is not None:
        return f"{snapshot.hive_name}@{format_timestamp(snapshot.captured_at)}"
    return fallback


def compare_snapshots(
    older: RegistrySnapshot,
    newer: RegistrySnapshot,
    options: DiffOptions = DiffOptions(),
    older_id: Optional[str] = None,
    newer_id: Optional[str] = None,
) -> DiffSet:
    """Diff two snapshots of the same hive, one record per changed key path.

    Added and removed subtrees are expanded: every key inside them gets its
    own record. Records come out in case-folded path order.
    """
    if fold(older.hive_name) != fold(newer.hive_name):
        raise HiveMismatch(f"cannot compare hive {older.hive_name!r} with hive {newer.hive_name!r}")
    if older.captured_at and newer.captured_at and older.captured_at > newer.captured_at:
        raise ChronologyError(
            f"older snapshot captured {format_timestamp(older.captured_at)} "
            f"after newer snapshot {format_timestamp(newer.captured_at)}")
    old_keys, new_keys = _flatten(older), _flatten(newer)
    records = []
    for folded in old_keys.keys() - new_keys.keys():
        path, key = old_keys[folded]
        records.append(DiffRecord(path, State.Removed, key.last_modified, None, _delta(key, None)))
    for folded in new_keys.keys() - old_keys.keys():
        path, key = new_keys[folded]
        records.append(DiffRecord(path, State.Added, None, key.last_modified, _delta(None, key)))
    for folded in old_keys.keys() & new_keys.keys():
        old_path, old_key = old_keys[folded]
        new_path, new_key = new_keys[folded]
        rec = compare_keys(old_key, new_key, options, new_path)
        if rec is not None:
            records.append(rec)
    records.sort(key=lambda r: r.path.sort_key())
    return DiffSet(
        older_id or _snapshot_id(older, "older"),
        newer_id or _snapshot_id(newer, "newer"),
        tuple(records),
    )


def compare_chain(
    snapshots: Sequence[RegistrySnapshot],
    options: DiffOptions = DiffOptions(),
    ids: Optional[Sequence[str]] = None,
) -> list[DiffSet]:
    """Diff each consecutive pair of a chronologically ordered snapshot list."""
    if len(snapshots) < 2:
        raise TooFewSnapshots(f"need at least 2 snapshots, got {len(snapshots)}")
    if ids is None:
        ids = [_snapshot_id(s, f"snapshot{i + 1}") for i, s in enumerate(snapshots)]
    return [
        compare_snapshots(snapshots[i], snapshots[i + 1], options, ids[i], ids[i + 1])
        for i in range(len(snapshots) - 1)
    ]


def group_diffs(diffset: DiffSet, specs, annotations=None) -> tuple[list[DiffGroup], list[DiffRecord]]:
    """Assign each record to the group of its longest matching grouping key.

    With *annotations*, each group's owning software is looked up from its
    common key (directly or inherited from an annotated ancestor).
    """
    from regdialog.kb import lookup_key

    groups: dict[tuple[str, ...], tuple[RegistryPath, list[DiffRecord]]] = {}
    ungrouped: list[DiffRecord] = []
    for record in diffset.records:
        best = None
        for spec in specs:
            key = spec.match(record.path)
            if key is not None and (best is None or len(key) > len(best)):
                best = key
        if best is None:
            ungrouped.append(record)
            continue
        groups.setdefault(best.folded, (best, []))[1].append(record)
    out = []
    for folded in sorted(groups):
        common_key, records = groups[folded]
        software = None
        if annotations is not None:
            anno = lookup_key(annotations, common_key)
            software = anno.owning_software if anno else None
        out.append(DiffGroup(common_key, tuple(records), software))
    return out, ungrouped
