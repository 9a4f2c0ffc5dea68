"""Command-line front end: validate, diff and analyze registry snapshots.

Exit status is 0 on success, 1 when domain violations were found, 2 for
unreadable or malformed input, and 3 when a looked-up key is unknown.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from regdialog import __version__
from regdialog.activity import ACTIVITY_CONCEPTS, Classification, classify_activity
from regdialog.diff import SCHEMA, DiffOptions, DiffRecord, DiffSet, compare_chain, compare_snapshots, group_diffs
from regdialog.errors import IterationLimitExceeded, LineError, RegDialogError
from regdialog.kb import KnowledgeBase, seed_knowledge_base
from regdialog.ontology import check_consistency, format_onto
from regdialog.rules import infer
from regdialog.snapshot import RegistrySnapshot, format_timestamp, parse_snapshot, validate_axioms

TOOL = "regdialog"

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INPUT = 2
EXIT_NOT_FOUND = 3


class CliError(Exception):
    def __init__(self, message: str, status: int = EXIT_INPUT):
        super().__init__(message)
        self.status = status


def _read_snapshot(path: str) -> RegistrySnapshot:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_snapshot(data)
    except LineError as exc:
        if not exc.source:
            exc.source = path
        raise CliError(str(exc)) from exc


def _snapshot_ids(paths: Sequence[str], snapshots: Sequence[RegistrySnapshot]) -> list[str]:
    # captured time when known, otherwise the file name as given
    return [
        f"{s.hive_name}@{format_timestamp(s.captured_at)}" if s.captured_at else p
        for p, s in zip(paths, snapshots)
    ]


def _load_kb(args, extra=()) -> KnowledgeBase:
    try:
        return seed_knowledge_base(args.kb, args.rules, extra)
    except OSError as exc:
        raise CliError(f"cannot read knowledge base: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)


# -- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    snapshot = _read_snapshot(args.file)
    violations = validate_axioms(snapshot)
    if args.json:
        print(_dump({
            "schema": SCHEMA,
            "file": args.file,
            "violations": [{"kind": v.kind.value, "path": str(v.path), "detail": v.detail} for v in violations],
        }))
    else:
        for v in violations:
            print(v)
        if not violations:
            print(f"{args.file}: ok")
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_diff(args) -> int:
    older, newer = _read_snapshot(args.older), _read_snapshot(args.newer)
    ids = _snapshot_ids([args.older, args.newer], [older, newer])
    diffset = compare_snapshots(older, newer, DiffOptions(args.touch_as_modified), ids[0], ids[1])
    if args.json:
        print(diffset.dumps())
    else:
        for line in diffset.text_lines():
            print(line)
    return EXIT_OK


def cmd_diff_chain(args) -> int:
    snapshots = [_read_snapshot(p) for p in args.files]
    diffsets = compare_chain(snapshots, DiffOptions(args.touch_as_modified), _snapshot_ids(args.files, snapshots))
    if args.json:
        print(_dump({"schema": SCHEMA, "pairs": [d.to_json() for d in diffsets]}))
    else:
        for i, d in enumerate(diffsets, start=1):
            print(f"# pair {i}: {d.older_id} -> {d.newer_id}")
            for line in d.text_lines():
                print(line)
    return EXIT_OK


def _record_entry(result: Classification, unit: str, record: DiffRecord) -> dict:
    entry = record.to_json()
    entry["unit"] = unit
    entry["activities"] = result.activities_of(unit)
    return entry


def build_report(
    diffsets: Sequence[DiffSet],
    kb: KnowledgeBase,
    case_id: str = "",
    stamp: Optional[str] = None,
) -> tuple[dict, Classification]:
    """Run grouping and classification over *diffsets* and assemble the report."""
    grouped = [group_diffs(d, kb.grouping_specs, kb.annotations) for d in diffsets]
    result = classify_activity(diffsets, grouped, kb)
    violations = check_consistency(result.facts)
    unit_names = {(pair, rec.path.folded): u for u, (pair, rec) in result.units.items()}
    pairs = []
    for pair, (diffset, (groups, ungrouped)) in enumerate(zip(diffsets, grouped), start=1):
        group_entries = []
        for g in groups:
            name = result.group_for(pair, g.common_key)
            records = [_record_entry(result, unit_names[pair, r.path.folded], r) for r in g.records]
            activities = sorted({a for r in records for a in r["activities"]}, key=ACTIVITY_CONCEPTS.index)
            group_entries.append({
                "group": name,
                "commonKey": str(g.common_key),
                "software": g.owning_software,
                "evidenceOf": sorted(result.facts.values(name, "isEvidenceOfSoftware")),
                "derivedActivities": activities,
                "records": records,
            })
        pairs.append({
            "index": pair,
            "older": diffset.older_id,
            "newer": diffset.newer_id,
            "groups": group_entries,
            "ungrouped": [_record_entry(result, unit_names[pair, r.path.folded], r) for r in ungrouped],
        })
    inf = result.inference
    report = {
        "schema": SCHEMA,
        "caseId": case_id,
        "tool": {"name": TOOL, "version": __version__},
        "inputs": [diffsets[0].older_id] + [d.newer_id for d in diffsets] if diffsets else [],
        "pairs": pairs,
        "derived": [
            {"assertion": format_onto(a), "rule": inf.provenance[a][0]} for a in inf.sorted_derived()
        ],
        "iterations": inf.iterations,
        "violations": [v.to_json() for v in violations],
    }
    if stamp is not None:
        report["generatedAt"] = stamp
    return report, result


def _print_report_text(report: dict):
    print(f"case: {report['caseId'] or '-'}")
    print(f"inputs: {', '.join(report['inputs'])}")
    for pair in report["pairs"]:
        print(f"# pair {pair['index']}: {pair['older']} -> {pair['newer']}")
        for g in pair["groups"]:
            software = f" [{g['software']}]" if g["software"] else ""
            print(f"group {g['commonKey']}{software}")
            for r in g["records"]:
                _print_record(r)
        if pair["ungrouped"]:
            print("ungrouped")
            for r in pair["ungrouped"]:
                _print_record(r)
    if report["violations"]:
        print("violations:")
        for v in report["violations"]:
            print(f"  {v['kind']}: {v['subject']}: {v['detail']}")
    if "generatedAt" in report:
        print(f"generated: {report['generatedAt']}")


def _print_record(r: dict):
    label = {"Added": "ADDED", "Removed": "REM", "Modified": "MODIFIED"}[r["state"]]
    tail = f"  => {', '.join(r['activities'])}" if r["activities"] else ""
    print(f"  {label}: {r['path']}{tail}")


def cmd_analyze(args) -> int:
    snapshots = [_read_snapshot(p) for p in args.files]
    kb = _load_kb(args)
    diffsets = compare_chain(snapshots, DiffOptions(args.touch_as_modified), _snapshot_ids(args.files, snapshots))
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ") if args.stamp else None
    report, _ = build_report(diffsets, kb, args.case_id, stamp)
    if args.json:
        print(_dump(report))
    else:
        _print_report_text(report)
    return EXIT_VIOLATIONS if report["violations"] else EXIT_OK


def cmd_kb_lookup(args) -> int:
    kb = _load_kb(args)
    anno = kb.lookup(args.path)
    if anno is None:
        print(f"unknown key: {args.path}", file=sys.stderr)
        return EXIT_NOT_FOUND
    concepts = sorted(anno.evidence_concepts)
    if args.json:
        print(_dump({
            "schema": SCHEMA,
            "path": str(anno.path),
            "hive": anno.hive,
            "concepts": concepts,
            "software": anno.owning_software,
            "description": anno.description,
            "inheritedFrom": str(anno.inherited_from) if anno.inherited else None,
        }))
        return EXIT_OK
    print(f"path: {anno.path}")
    print(f"hive: {anno.hive}")
    print(f"concepts: {', '.join(concepts) if concepts else '-'}")
    print(f"software: {anno.owning_software or '-'}")
    print(f"description: {anno.description}")
    if anno.inherited:
        print(f"inherited from: {anno.inherited_from}")
    return EXIT_OK


def cmd_infer(args) -> int:
    extra = []
    for p in args.files:
        try:
            extra.append((Path(p).read_text(encoding="utf-8"), p))
        except OSError as exc:
            raise CliError(f"{p}: {exc.strerror or exc}") from exc
    kb = _load_kb(args, extra)
    result = infer(kb.facts, kb.rules)
    violations = check_consistency(result.facts)
    derived = result.sorted_derived()
    if args.json:
        print(_dump({
            "schema": SCHEMA,
            "derived": [
                {"assertion": format_onto(a), "rule": result.provenance[a][0],
                 "binding": {k: str(v) for k, v in result.provenance[a][1]}}
                for a in derived
            ],
            "iterations": result.iterations,
            "violations": [v.to_json() for v in violations],
        }))
    else:
        for a in derived:
            print(f"{format_onto(a)}  # {result.provenance[a][0]}")
        for v in violations:
            print(f"violation: {v}")
    return EXIT_VIOLATIONS if violations else EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _output_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true", help="emit JSON")
    g.add_argument("--text", dest="json", action="store_false", help="emit plain text (default)")


def _kb_flags(p: argparse.ArgumentParser):
    p.add_argument("--kb", metavar="DIR", help="knowledge base directory (default: $REGDIALOG_KB or the shipped one)")
    p.add_argument("--rules", metavar="FILE", help="rule file replacing the knowledge base's rules.txt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a snapshot and check its structural axioms")
    p.add_argument("file")
    _output_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("diff", help="compare two snapshots of one hive")
    p.add_argument("older")
    p.add_argument("newer")
    p.add_argument("--touch-as-modified", action="store_true",
                   help="report keys whose timestamp alone changed as Modified")
    _output_flags(p)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("diff-chain", help="compare each consecutive pair of snapshots")
    p.add_argument("files", nargs="+", metavar="snapshot")
    p.add_argument("--touch-as-modified", action="store_true")
    _output_flags(p)
    p.set_defaults(func=cmd_diff_chain)

    p = sub.add_parser("analyze", help="diff, group, annotate and classify a snapshot chain")
    p.add_argument("files", nargs="+", metavar="snapshot")
    p.add_argument("--touch-as-modified", action="store_true")
    p.add_argument("--case-id", default="", help="case identifier recorded in the report")
    p.add_argument("--stamp", action="store_true", help="record the generation time in the report")
    _kb_flags(p)
    _output_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("kb-lookup", help="show what the knowledge base knows about a key")
    p.add_argument("path")
    _kb_flags(p)
    _output_flags(p)
    p.set_defaults(func=cmd_kb_lookup)

    p = sub.add_parser("infer", help="run the rules over the knowledge base plus extra ONTO-TXT files")
    p.add_argument("files", nargs="*", metavar="onto")
    _kb_flags(p)
    _output_flags(p)
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return exc.status
    except IterationLimitExceeded as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS
    except RegDialogError as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
