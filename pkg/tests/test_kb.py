import random
import shutil
from importlib import resources

import pytest

from regdialog.errors import AnnotationError
from regdialog.kb import (
    GroupingKeySpec,
    KB_ENV,
    key_individual,
    lookup_key,
    parse_annotations,
    seed_knowledge_base,
)
from regdialog.snapshot import RegistryPath

RECENT_DOCS = r"HKLM\Software\Microsoft\Windows\CurrentVersion\Explorer\RecentDocs"
RUN = r"HKLM\Software\Microsoft\Windows\CurrentVersion\Run"


def test_recentdocs_lookup(kb):
    anno = kb.lookup(RECENT_DOCS)
    assert anno.evidence_concepts - {"RegistryKeyObject"} == {"DocumentEvidence", "DocumentActivity"}
    assert not anno.inherited


@pytest.mark.parametrize("spelling", [
    RECENT_DOCS.upper(),
    RECENT_DOCS.lower(),
    r"\Software\Microsoft\Windows\CurrentVersion\Explorer\RecentDocs",
    r"HKEY_CURRENT_USER\SOFTWARE\microsoft\windows\currentversion\explorer\recentdocs",
])
def test_lookup_ignores_case_and_alias(kb, spelling):
    assert kb.lookup(spelling).path == kb.lookup(RECENT_DOCS).path


def test_run_key_lookup(kb):
    assert {"SoftwareEvidenceObject", "SystemStartupEvidenceObject"} <= kb.lookup(RUN).evidence_concepts


def test_inherited_software(kb):
    anno = kb.lookup(r"\Software\Adobe\Acrobat Reader\7.0\AVGeneral\RecentFiles")
    assert anno.inherited
    assert anno.owning_software == "AcrobatReader"
    assert anno.evidence_concepts == frozenset()
    assert anno.inherited_from.hive_relative() == RegistryPath.parse(r"\Software\Adobe\Acrobat Reader\7.0")


def test_unknown_key(kb):
    assert kb.lookup(r"\Software\Nobody\Nothing") is None


def test_annotations_reference_known_terms(kb):
    for anno in kb.annotations:
        for c in anno.evidence_concepts:
            assert c in kb.graph.concepts
        if anno.owning_software:
            assert kb.facts.is_instance(anno.owning_software, "SoftwareObject")


def test_key_individual_stable_and_distinct():
    a = key_individual(r"HKCU\Software\Adobe")
    assert a == key_individual(r"\software\ADOBE")
    assert a != key_individual(r"\Software\Adobe\x")
    assert a.startswith("key_software_adobe_")


def test_lookup_agrees_with_brute_force_on_generated_corpus():
    rng = random.Random(5)
    segs = ["A", "b", "C", "d"]
    for _ in range(100):
        paths = {tuple(rng.choice(segs) for _ in range(rng.randrange(1, 4))) for _ in range(6)}
        text = _corpus(paths)
        annos = parse_annotations(text)
        for _ in range(20):
            q = tuple(rng.choice(segs + ["a", "B"]) for _ in range(rng.randrange(1, 5)))
            got = lookup_key(annos, "\\".join(q))
            fq = tuple(s.casefold() for s in q)
            matches = [a for a in annos if a.path.folded == fq[: len(a.path.folded)]]
            if not matches:
                assert got is None
                continue
            best = max(matches, key=lambda a: len(a.path.folded))
            assert got.description == best.description
            assert got.inherited == (len(best.path.folded) < len(fq))


def _corpus(paths):
    seen, lines = set(), []
    for i, p in enumerate(sorted(paths)):
        f = tuple(s.casefold() for s in p)
        if f in seen:
            continue
        seen.add(f)
        lines.append("anno " + "\\".join(p) + f"\tH\tRegistryKeyObject\t-\tk{i}")
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("text", [
    "anno A\tH\tX\n",
    "note A\tH\tX\t-\td\n",
    "anno A\tH\tX\t-\td\nanno a\tH\tX\t-\td\n",
])
def test_bad_annotation_lines(text):
    with pytest.raises(AnnotationError):
        parse_annotations(text)


def test_grouping_specs():
    spec = GroupingKeySpec.prefix("Software", 2)
    assert str(spec.match(r"\Software\Adobe\Acrobat Reader\7.0")) == r"\Software\Adobe\Acrobat Reader"
    assert str(spec.match(r"\Software\Adobe")) == r"\Software\Adobe"
    assert spec.match(r"\Software") is None
    assert spec.match(r"\System\Foo\Bar") is None
    exp = GroupingKeySpec.explicit(r"Software\Microsoft\Windows\ShellNoRoam")
    assert str(exp.match(r"\Software\Microsoft\Windows\ShellNoRoam\Bags\1")) == \
        r"\Software\Microsoft\Windows\ShellNoRoam"
    assert str(exp.match(r"\Software\Microsoft\Windows\ShellNoRoam")) == r"\Software\Microsoft\Windows\ShellNoRoam"
    with pytest.raises(ValueError):
        GroupingKeySpec.prefix("Software", 0)


def test_kb_directory_from_environment(tmp_path, monkeypatch):
    src = resources.files("regdialog") / "data"
    for entry in src.iterdir():
        shutil.copy(str(entry), tmp_path / entry.name)
    with open(tmp_path / "annotations.txt", "a") as fh:
        fh.write("anno HKCU\\Software\\Extra\tNTUSER.DAT\tRegistryKeyObject\t-\tadded for the test\n")
    monkeypatch.setenv(KB_ENV, str(tmp_path))
    kb = seed_knowledge_base()
    assert kb.lookup(r"\Software\Extra").description == "added for the test"


def test_annotation_with_unknown_concept_is_rejected(tmp_path):
    src = resources.files("regdialog") / "data"
    for entry in src.iterdir():
        shutil.copy(str(entry), tmp_path / entry.name)
    (tmp_path / "annotations.txt").write_text("anno X\tH\tNoSuchConcept\t-\td\n")
    with pytest.raises(AnnotationError):
        seed_knowledge_base(tmp_path)
