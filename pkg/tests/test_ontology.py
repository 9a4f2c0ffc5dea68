import random
import re
import threading

import pytest

from regdialog.errors import DisjointnessConflict, IsaCycle, OntologyParseError, UndeclaredTerm
from regdialog.ontology import (
    ConceptAssertion,
    ConceptGraph,
    DataAssertion,
    FactStore,
    ObjectAssertion,
    ViolationKind,
    check_consistency,
    dump_ontology,
    load_ontology,
    parse_statements,
)

from generators import bfs_reachable, floyd_warshall, random_dag

SMALL = """
concept Thing
concept Animal
concept Dog
concept Cat
isa Animal Thing
isa Dog Animal
isa Cat Animal
disjoint Dog Cat
objprop owns
dataprop name
restrict Animal name max 1
ind rex Dog
data rex name "Rex"
"""


def test_small_ontology_loads():
    g, store = load_ontology(SMALL)
    assert g.subsumes("Thing", "Dog")
    assert not g.subsumes("Dog", "Thing")
    assert g.subsumes("Dog", "Dog")
    assert g.ancestors("Dog") == {"Dog", "Animal", "Thing"}
    assert g.descendants("Animal") == {"Animal", "Dog", "Cat"}
    assert store.is_instance("rex", "Thing")
    assert store.values("rex", "name") == ["Rex"]
    assert check_consistency(store) == []


def test_disjointness_is_inherited():
    g, _ = load_ontology(SMALL + "concept Puppy\nisa Puppy Dog\n")
    assert g.is_disjoint("Puppy", "Cat")
    assert not g.is_disjoint("Puppy", "Animal")


def test_concept_under_two_disjoint_concepts_is_rejected():
    with pytest.raises(DisjointnessConflict):
        load_ontology(SMALL + "concept CatDog\nisa CatDog Cat\nisa CatDog Dog\n")


def test_cycle_rejected():
    with pytest.raises(IsaCycle) as info:
        load_ontology("concept A\nconcept B\nconcept C\nisa A B\nisa B C\nisa C A\n")
    assert set(info.value.cycle) >= {"A", "B", "C"}


def test_undeclared_terms_rejected():
    with pytest.raises(UndeclaredTerm):
        load_ontology("concept A\nisa A B\n")
    with pytest.raises(UndeclaredTerm):
        load_ontology("concept A\nind x B\n")
    with pytest.raises(UndeclaredTerm):
        load_ontology("concept A\nind x A\nrel x p x\n")


def test_parse_errors():
    with pytest.raises(OntologyParseError) as info:
        parse_statements("concept A\nconcept\n", "t.onto")
    assert info.value.lineno == 2
    with pytest.raises(OntologyParseError):
        parse_statements("frobnicate A\n")
    with pytest.raises(OntologyParseError):
        parse_statements('data x p unquoted\n')
    with pytest.raises(OntologyParseError):
        parse_statements("restrict A p most 1\n")


def test_literal_with_hash_and_spaces():
    g, store = load_ontology('concept A\ndataprop p\nind x A\ndata x p "a # b  c"  # trailing\n')
    assert store.values("x", "p") == ["a # b  c"]


def test_dump_round_trip():
    g, store = load_ontology(SMALL)
    g2, store2 = load_ontology(dump_ontology(g, store))
    assert g2.concepts == g.concepts and g2.isa_edges == g.isa_edges
    assert g2.disjoint_pairs == g.disjoint_pairs and g2.restrictions == g.restrictions
    assert store2.assertions == store.assertions


def test_disjointness_violation_reported_once_per_pair():
    g, store = load_ontology(SMALL)
    store.add(ConceptAssertion("rex", "Cat"))
    store.add(ConceptAssertion("rex", "Cat"))
    v = check_consistency(store)
    assert [x.kind for x in v] == [ViolationKind.DisjointnessViolation]
    assert v[0].subject == "rex"


def test_cardinality_counts_explicit_values():
    g, store = load_ontology(SMALL)
    store.add(DataAssertion("rex", "name", "Rexy"))
    v = check_consistency(store)
    assert [x.kind for x in v] == [ViolationKind.CardinalityViolation]


def test_fact_store_rejects_wrong_property_kind():
    g, store = load_ontology(SMALL)
    with pytest.raises(UndeclaredTerm):
        store.add(ObjectAssertion("rex", "name", "rex"))
    with pytest.raises(UndeclaredTerm):
        store.add(DataAssertion("rex", "owns", "x"))


def test_fact_store_concurrent_adds():
    g, store = load_ontology(SMALL)

    def work(k):
        for i in range(200):
            store.add(ConceptAssertion(f"d{k}_{i}", "Dog"))

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(store.instances_of("Animal")) == 801


# -- oracles -------------------------------------------------------------------------

def test_subsumes_matches_bfs_and_floyd_warshall():
    rng = random.Random(2024)
    for _ in range(100):
        names, edges = random_dag(rng, rng.randrange(2, 25))
        g = ConceptGraph(names, edges)
        closure = floyd_warshall(names, edges)
        for a in names:
            up = bfs_reachable(edges, a)
            assert g.ancestors(a) == up
            for b in names:
                assert g.subsumes(b, a) == (b in up) == ((a, b) in closure)


# -- shipped DIALOG data -------------------------------------------------------------

def test_seed_kb_is_consistent(kb):
    assert check_consistency(kb.facts) == []


@pytest.mark.parametrize("ancestor, descendant", [
    ("IdentityTheftCase", "PhishingCase"),
    ("HackingCase", "CrackingCase"),
    ("DisruptiveCrimeCase", "CrackingCase"),
    ("TheftCase", "CyberTheftCase"),
    ("CyberCrimeCase", "CyberTheftCase"),
    ("CrimeCase", "PhishingCase"),
    ("EvidenceObject", "DocumentEvidence"),
    ("RegistryKeyObject", "ObservedRegistryKeyObject"),
    ("RPCContainerObject", "RPCUnitObject"),
])
def test_seed_edges(kb, ancestor, descendant):
    assert kb.graph.subsumes(ancestor, descendant)
    assert ancestor == descendant or not kb.graph.subsumes(descendant, ancestor)


def test_unlawful_material_disjointness(kb):
    store = kb.facts.copy()
    store.add(ConceptAssertion("case1", "PropagationOfUnlawfulMaterialCase"))
    store.add(ConceptAssertion("case1", "PossessionOfUnlawfulMaterialCase"))
    v = check_consistency(store)
    assert len(v) == 1 and v[0].kind is ViolationKind.DisjointnessViolation


def test_documented_concepts_are_declared(kb):
    """Every concept named in the reference taxonomy listing is in the seed graph."""
    expected = set(re.findall(r"\b[A-Z][A-Za-z]+(?:Case|Object|Evidence|Location|Device|Resource)\b", _TAXONOMY))
    missing = sorted(c for c in expected if c not in kb.graph.concepts)
    assert missing == []


# concept names collected from the reference taxonomy
_TAXONOMY = """
CrimeCase NonCyberCrimeCase CyberCrimeCase TheftCase CyberTheftCase IdentityTheftCase PhishingCase
HackingCase CrackingCase DisruptiveCrimeCase PropagationOfUnlawfulMaterialCase
PossessionOfUnlawfulMaterialCase EvidenceObject DocumentEvidence RegistryKeyObject
SoftwareEvidenceObject SystemStartupEvidenceObject RPCUnitObject RPCGroupObject
SoftwareInstallationActivityObject SoftwareUninstallationActivityObject
SoftwareConfigurationActivityObject UserFileActivityObject UserFolderActivityObject
DigitalLocation ConventionalLocation SmallScaleDigitalDevice LargeScaleDigitalDevice
ForensicServiceObject ComparerSoftwareObject DataObject ServiceObject SoftwareObject
"""
