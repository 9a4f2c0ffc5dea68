import pytest

from regdialog.activity import ACTIVITY_CONCEPTS, classify_activity
from regdialog.diff import group_diffs
from regdialog.ontology import ConceptAssertion, ObjectAssertion, check_consistency, format_onto
from regdialog.rules import parse_rules

from case_expected import ACRO, ACTIVITIES, INSTALL, expected_derived


@pytest.fixture(scope="module")
def result(case_diffsets, kb):
    return classify_activity(case_diffsets, None, kb)


def test_fixpoint_matches_hand_computation(result):
    got = {}
    for unit, (pair, record) in result.units.items():
        acts = result.activities_of(unit)
        if acts:
            got[pair, str(record.path)] = acts
    assert got == {k: [activity] for k, (activity, _) in ACTIVITIES.items()}


def test_derived_set_is_exactly_the_hand_computed_one(result):
    got = {format_onto(a) for a in result.inference.derived}
    assert got == expected_derived(result.unit_for, result.group_for)


def test_software_attribution(result):
    f = result.facts
    assert f.values(result.unit_for(1, ACRO + r"\7.0"), "hasSoftwareInstalled") == ["AcrobatReader"]
    assert f.values(result.unit_for(2, r"\Software\Grisoft\Avg7\Config"), "hasSoftwareUninstalled") == \
        ["AVG7AntiVirus"]
    assert f.values(result.unit_for(1, r"\Software\Microsoft\Office\12.0\Common"), "hasSoftwareConfigured") == \
        ["MicrosoftOffice"]


def test_evidence_of_software(result):
    evidence = {
        (result.groups[a.subject][0], str(result.groups[a.subject][1].common_key), a.obj)
        for a in result.inference.derived
        if isinstance(a, ObjectAssertion) and a.prop == "isEvidenceOfSoftware"
    }
    assert evidence == {
        (1, ACRO, "AcrobatReader"),
        (1, r"\Software\Microsoft\Office", "MicrosoftOffice"),
        (2, ACRO, "AcrobatReader"),
        (2, r"\Software\Grisoft\Avg7", "AVG7AntiVirus"),
    }


def test_installation_provenance(result):
    unit = result.unit_for(1, ACRO + r"\7.0")
    rule, binding = result.inference.provenance[ConceptAssertion(unit, INSTALL)]
    b = dict(binding)
    assert rule == "software_installation"
    assert b["x"] == unit and b["software"] == "AcrobatReader"
    assert b["obj"] == result.group_for(1, ACRO)


def test_result_is_consistent(result):
    assert check_consistency(result.facts) == []


def test_every_unit_materialized(result, case_diffsets):
    assert len(result.units) == sum(len(d) for d in case_diffsets)
    for unit in result.units:
        assert result.facts.is_instance(unit, "RPCUnitObject")
        assert len(result.facts.values(unit, "hasComparisonState")) == 1


def test_explicit_groups_and_rules_arguments(case_diffsets, kb):
    groups = [group_diffs(d, kb.grouping_specs, kb.annotations) for d in case_diffsets]
    only_rule_one = [r for r in kb.rules if r.name == "evidence_of_software"]
    res = classify_activity(case_diffsets, groups, kb, only_rule_one)
    assert all(not res.activities_of(u) for u in res.units)
    assert {a.prop for a in res.inference.derived} == {"isEvidenceOfSoftware"}


def test_no_changes_no_activity(case_snapshots, kb):
    from regdialog.diff import compare_chain

    same = compare_chain([case_snapshots[0], case_snapshots[0]])
    res = classify_activity(same, None, kb)
    assert res.units == {} and res.groups == {}
    assert not any(res.facts.instances_of(c) for c in ACTIVITY_CONCEPTS)


def test_custom_rule_over_materialized_facts(case_diffsets, kb):
    rules = parse_rules('rule added: RPCUnitObject(?u) & hasComparisonState(?u, "Added") => TemporalEvidenceObject(?u)\n')
    res = classify_activity(case_diffsets, None, kb, rules)
    added = sum(1 for _, (p, r) in res.units.items() if r.state.value == "Added")
    assert len(res.facts.instances_of("TemporalEvidenceObject") & set(res.units)) == added
