"""The shipped forensic knowledge base: ontology files, key annotations, rules.

The default data lives in the package's ``data`` directory. A different
directory can be chosen per call or through the ``REGDIALOG_KB`` environment
variable; it must hold ``*.onto`` files, ``annotations.txt`` and ``rules.txt``.
"""

from __future__ import annotations

import enum
import hashlib
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from regdialog.errors import AnnotationError
from regdialog.ontology import (
    ConceptAssertion,
    ConceptGraph,
    DataAssertion,
    FactStore,
    ObjectAssertion,
    parse_statements,
    build_ontology,
)
from regdialog.rules import Rule, parse_rules
from regdialog.snapshot import RegistryPath

KB_ENV = "REGDIALOG_KB"
ANNOTATIONS_FILE = "annotations.txt"
RULES_FILE = "rules.txt"


class GroupingKind(str, enum.Enum):
    PrefixPattern = "PrefixPattern"
    ExplicitPath = "ExplicitPath"


@dataclass(frozen=True)
class GroupingKeySpec:
    """Either ``depth`` segments below a fixed prefix, or one explicit key."""

    kind: GroupingKind
    path: RegistryPath
    depth: int = 0

    def __post_init__(self):
        if self.kind is GroupingKind.PrefixPattern and self.depth < 1:
            raise ValueError("prefix pattern depth must be at least 1")
        if not self.path.segments:
            raise ValueError("grouping path must not be empty")

    @classmethod
    def prefix(cls, prefix: str, depth: int) -> GroupingKeySpec:
        return cls(GroupingKind.PrefixPattern, RegistryPath.parse(prefix).hive_relative(), depth)

    @classmethod
    def explicit(cls, path: str) -> GroupingKeySpec:
        return cls(GroupingKind.ExplicitPath, RegistryPath.parse(path).hive_relative())

    def match(self, path) -> Optional[RegistryPath]:
        """Return the grouping key *path* falls under, or None."""
        path = RegistryPath.coerce(path)
        n = len(self.path)
        if not path.startswith(self.path):
            return None
        if self.kind is GroupingKind.ExplicitPath:
            return RegistryPath(path.segments[:n])
        if len(path) == n:
            return None
        # manufacturer-only keys group under themselves
        return RegistryPath(path.segments[: n + min(self.depth, len(path) - n)])


def default_grouping_specs() -> list[GroupingKeySpec]:
    return [
        GroupingKeySpec.prefix("Software", 2),
        GroupingKeySpec.explicit(r"Software\Microsoft\Windows\ShellNoRoam"),
        GroupingKeySpec.explicit(r"Software\Microsoft\Windows\CurrentVersion\Explorer\FileExts"),
    ]


@dataclass(frozen=True)
class KeyAnnotation:
    path: RegistryPath
    hive: str
    evidence_concepts: frozenset[str]
    owning_software: Optional[str] = None
    description: str = ""
    # set when the annotation was inherited from an annotated ancestor
    inherited_from: Optional[RegistryPath] = None

    @property
    def inherited(self) -> bool:
        return self.inherited_from is not None


def parse_annotations(text, source: Optional[str] = None) -> list[KeyAnnotation]:
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    out: list[KeyAnnotation] = []
    seen: set[tuple[str, ...]] = set()
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if not line.startswith("anno "):
            raise AnnotationError("expected an 'anno' line", lineno, source)
        fields = line[5:].split("\t")
        if len(fields) != 5:
            raise AnnotationError("expected 5 tab-separated fields", lineno, source)
        raw_path, hive, concepts, software, description = fields
        path = RegistryPath.parse(raw_path)
        if not path.segments or any(not s for s in path.segments):
            raise AnnotationError(f"bad key path {raw_path!r}", lineno, source)
        if path.folded in seen:
            raise AnnotationError(f"duplicate annotation for {raw_path!r}", lineno, source)
        seen.add(path.folded)
        names = frozenset(c.strip() for c in concepts.split(",") if c.strip())
        out.append(KeyAnnotation(
            path, hive, names, None if software.strip() in ("", "-") else software.strip(), description))
    return out


def lookup_key(annotations: Iterable[KeyAnnotation], path) -> Optional[KeyAnnotation]:
    """Find the annotation for *path*, case-insensitively and ignoring root aliases.

    Falls back to the nearest annotated ancestor; the result then carries
    only that ancestor's owning software, not its evidence concepts.
    """
    path = RegistryPath.coerce(path)
    folded = path.folded
    best = None
    for anno in annotations:
        af = anno.path.folded
        if af == folded:
            return anno
        if len(af) < len(folded) and folded[: len(af)] == af and (best is None or len(af) > len(best.path)):
            best = anno
    if best is None:
        return None
    return KeyAnnotation(
        path, best.hive, frozenset(), best.owning_software, best.description, inherited_from=best.path)


_UNSAFE = re.compile(r"[^A-Za-z0-9]+")


def key_individual(path) -> str:
    """Stable individual name for the registry key at *path* (root alias ignored)."""
    path = RegistryPath.coerce(path)
    digest = hashlib.sha1("\\".join(path.folded).encode("utf-8")).hexdigest()[:8]
    readable = _UNSAFE.sub("_", "_".join(path.folded)).strip("_")[-40:].strip("_")
    return f"key_{readable}_{digest}" if readable else f"key_{digest}"


def annotation_facts(annotations: Iterable[KeyAnnotation]) -> list:
    out = []
    for anno in annotations:
        ind = key_individual(anno.path)
        out += [ConceptAssertion(ind, c) for c in sorted(anno.evidence_concepts)]
        out.append(DataAssertion(ind, "hasRegistryPath", str(anno.path)))
        out.append(DataAssertion(ind, "hasName", anno.path.name))
        if anno.description:
            out.append(DataAssertion(ind, "hasDescription", anno.description))
        if anno.owning_software:
            out.append(ObjectAssertion(ind, "belongsToSoftware", anno.owning_software))
    return out


def check_annotations(graph: ConceptGraph, store: FactStore, annotations: Iterable[KeyAnnotation]) -> list[str]:
    """Problems with annotations against the ontology; empty when all is well."""
    problems = []
    for anno in annotations:
        for c in sorted(anno.evidence_concepts):
            if c not in graph.concepts:
                problems.append(f"{anno.path}: unknown concept {c}")
            elif not (graph.subsumes("EvidenceObject", c) or graph.subsumes("RegistryKeyObject", c)):
                problems.append(f"{anno.path}: {c} is neither evidence nor a registry key concept")
        if anno.owning_software and anno.owning_software not in store.individuals:
            problems.append(f"{anno.path}: unknown software individual {anno.owning_software}")
    return problems


@dataclass
class KnowledgeBase:
    graph: ConceptGraph
    facts: FactStore
    annotations: list[KeyAnnotation]
    grouping_specs: list[GroupingKeySpec]
    rules: list[Rule] = field(default_factory=list)
    source: str = ""

    def lookup(self, path) -> Optional[KeyAnnotation]:
        return lookup_key(self.annotations, path)


def kb_directory(kb_dir=None):
    """Resolve the knowledge base directory: argument, then env var, then package data."""
    if kb_dir:
        return Path(kb_dir)
    if os.environ.get(KB_ENV):
        return Path(os.environ[KB_ENV])
    return resources.files("regdialog") / "data"


def load_rules(kb_dir=None, rules_file=None) -> list[Rule]:
    if rules_file is not None:
        path = Path(rules_file)
        return parse_rules(path.read_text(encoding="utf-8"), str(path))
    d = kb_directory(kb_dir)
    return parse_rules((d / RULES_FILE).read_text(encoding="utf-8"), RULES_FILE)


def seed_knowledge_base(kb_dir=None, rules_file=None, extra: Iterable[tuple[str, str]] = ()) -> KnowledgeBase:
    """Load the ontology, annotations and rules of a knowledge base directory.

    *extra* is a sequence of (ONTO-TXT text, source name) pairs built into the
    same ontology as the directory's ``*.onto`` files.
    """
    d = kb_directory(kb_dir)
    statements = []
    onto_files = sorted((p for p in d.iterdir() if p.name.endswith(".onto")), key=lambda p: p.name)
    for p in onto_files:
        statements += parse_statements(p.read_text(encoding="utf-8"), p.name)
    for text, source in extra:
        statements += parse_statements(text, source)
    graph, store = build_ontology(statements)
    anno_path = d / ANNOTATIONS_FILE
    annotations = parse_annotations(anno_path.read_text(encoding="utf-8"), ANNOTATIONS_FILE) \
        if anno_path.is_file() else []
    problems = check_annotations(graph, store, annotations)
    if problems:
        raise AnnotationError("; ".join(problems), None, ANNOTATIONS_FILE)
    store.update(annotation_facts(annotations))
    rules = load_rules(d, rules_file) if (rules_file or (d / RULES_FILE).is_file()) else []
    return KnowledgeBase(graph, store, annotations, default_grouping_specs(), rules, str(d))
