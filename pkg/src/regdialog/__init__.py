"""Registry snapshot diffing with ontology-driven interpretation of the changes."""

__version__ = "0.1.0"

from regdialog.snapshot import (
    RegistryKey,
    RegistryPath,
    RegistrySnapshot,
    RegistryValue,
    ValueType,
    key_at,
    parse_snapshot,
    serialize_snapshot,
    validate_axioms,
)
from regdialog.ontology import ConceptGraph, FactStore, check_consistency, load_ontology
from regdialog.kb import KeyAnnotation, GroupingKeySpec, default_grouping_specs, lookup_key, seed_knowledge_base
from regdialog.diff import DiffOptions, DiffRecord, DiffSet, DiffGroup, compare_chain, compare_keys, compare_snapshots, group_diffs
from regdialog.rules import Rule, infer, parse_rules
from regdialog.activity import classify_activity

__all__ = [
    "ConceptGraph",
    "DiffGroup",
    "DiffOptions",
    "DiffRecord",
    "DiffSet",
    "FactStore",
    "GroupingKeySpec",
    "KeyAnnotation",
    "RegistryKey",
    "RegistryPath",
    "RegistrySnapshot",
    "RegistryValue",
    "Rule",
    "ValueType",
    "check_consistency",
    "classify_activity",
    "compare_chain",
    "compare_keys",
    "compare_snapshots",
    "default_grouping_specs",
    "group_diffs",
    "infer",
    "key_at",
    "load_ontology",
    "lookup_key",
    "parse_rules",
    "parse_snapshot",
    "seed_knowledge_base",
    "serialize_snapshot",
    "validate_axioms",
]
