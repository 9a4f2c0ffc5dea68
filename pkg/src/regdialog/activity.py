"""Turn comparison results into ontology individuals and classify their activity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from regdialog.diff import DiffGroup, DiffRecord, DiffSet, group_diffs
from regdialog.kb import KnowledgeBase, key_individual
from regdialog.ontology import ConceptAssertion, DataAssertion, FactStore, ObjectAssertion
from regdialog.rules import InferenceResult, Rule, infer
from regdialog.snapshot import RegistryPath

ACTIVITY_CONCEPTS = (
    "SoftwareInstallationActivityObject",
    "SoftwareUninstallationActivityObject",
    "SoftwareConfigurationActivityObject",
    "UserFileActivityObject",
    "UserFolderActivityObject",
)


def unit_individual(pair: int, index: int) -> str:
    return f"unit_p{pair}_{index:04d}"


def group_individual(pair: int, index: int) -> str:
    return f"group_p{pair}_{index:03d}"


@dataclass
class Classification:
    facts: FactStore
    inference: InferenceResult
    # individual name -> (1-based comparison number, record or group)
    units: dict[str, tuple[int, DiffRecord]]
    groups: dict[str, tuple[int, DiffGroup]]

    def activities_of(self, unit: str) -> list[str]:
        return [c for c in ACTIVITY_CONCEPTS if self.facts.is_instance(unit, c)]

    def unit_for(self, pair: int, path) -> Optional[str]:
        folded = RegistryPath.coerce(path).folded
        for name, (p, record) in self.units.items():
            if p == pair and record.path.folded == folded:
                return name
        return None

    def group_for(self, pair: int, common_key) -> Optional[str]:
        folded = RegistryPath.coerce(common_key).folded
        for name, (p, group) in self.groups.items():
            if p == pair and group.common_key.folded == folded:
                return name
        return None


class _Materializer:
    def __init__(self, store: FactStore):
        self.store = store

    def key(self, path: RegistryPath) -> str:
        ind = key_individual(path)
        s = self.store
        s.add(ConceptAssertion(ind, "RegistryKeyObject"))
        if not s.values(ind, "hasRegistryPath"):
            s.add(DataAssertion(ind, "hasRegistryPath", str(path)))
        if not s.values(ind, "hasName"):
            s.add(DataAssertion(ind, "hasName", path.name))
        return ind


def materialize(
    diffsets: Sequence[DiffSet],
    grouped: Sequence[tuple[list[DiffGroup], list[DiffRecord]]],
    kb: KnowledgeBase,
) -> tuple[FactStore, dict, dict]:
    """Assert units, groups and their keys into a copy of the KB facts.

    Every record becomes an RPCUnitObject containing its key; every group an
    RPCGroupObject with a common key and its units. Keys already known from
    annotations keep their individual and path.
    """
    store = kb.facts.copy()
    m = _Materializer(store)
    units: dict[str, tuple[int, DiffRecord]] = {}
    groups: dict[str, tuple[int, DiffGroup]] = {}
    for pair, (diffset, (pair_groups, _)) in enumerate(zip(diffsets, grouped), start=1):
        unit_of: dict[tuple[str, ...], str] = {}
        for index, record in enumerate(diffset.records, start=1):
            u = unit_individual(pair, index)
            units[u] = (pair, record)
            unit_of[record.path.folded] = u
            k = m.key(record.path)
            store.add(ConceptAssertion(u, "RPCUnitObject"))
            store.add(DataAssertion(u, "hasComparisonState", record.state.value))
            store.add(DataAssertion(u, "hasComparisonIndex", str(pair)))
            store.add(ObjectAssertion(u, "contains", k))
            if len(record.path) > 1:
                store.add(ObjectAssertion(k, "hasParentKey", m.key(record.path.parent)))
        for index, group in enumerate(pair_groups, start=1):
            g = group_individual(pair, index)
            groups[g] = (pair, group)
            ck = m.key(group.common_key)
            store.add(ConceptAssertion(g, "RPCGroupObject"))
            store.add(ObjectAssertion(g, "hasCommonKey", ck))
            store.add(DataAssertion(g, "hasComparisonIndex", str(pair)))
            # attribution inherited from an annotated ancestor
            if group.owning_software and not store.values(ck, "belongsToSoftware"):
                store.add(ObjectAssertion(ck, "belongsToSoftware", group.owning_software))
            for record in group.records:
                store.add(ObjectAssertion(g, "containsUnit", unit_of[record.path.folded]))
    return store, units, groups


def classify_activity(
    diffsets: Sequence[DiffSet],
    groups: Optional[Sequence[tuple[list[DiffGroup], list[DiffRecord]]]],
    kb: KnowledgeBase,
    rules: Optional[Sequence[Rule]] = None,
    max_passes: Optional[int] = None,
) -> Classification:
    """Materialize comparison results and run the activity rules over them.

    *groups* holds the ``group_diffs`` result for each diff set; pass None to
    group with the knowledge base's grouping keys and annotations.
    """
    if groups is None:
        groups = [group_diffs(d, kb.grouping_specs, kb.annotations) for d in diffsets]
    store, units, group_map = materialize(diffsets, groups, kb)
    kwargs = {} if max_passes is None else {"max_passes": max_passes}
    result = infer(store, kb.rules if rules is None else rules, **kwargs)
    return Classification(result.facts, result, units, group_map)
