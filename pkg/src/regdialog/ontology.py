"""Concept graph (TBox) and fact store (ABox).

ONTO-TXT v1 is one statement per line; ``#`` starts a comment::

    concept CrackingCase
    isa CrackingCase HackingCase
    disjoint PropagationOfUnlawfulMaterialCase PossessionOfUnlawfulMaterialCase
    objprop belongsToSoftware
    dataprop hasRegistryPath
    restrict RegistryKeyObject hasName max 1
    ind AcrobatReader ApplicationSoftwareObject
    rel someKey belongsToSoftware AcrobatReader
    data someKey hasRegistryPath "HKCU\\Software\\Adobe"

Literals are double quoted and taken verbatim (no escape sequences), so a
literal cannot contain a double quote or a newline.
"""

from __future__ import annotations

import enum
import re
import threading
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, NamedTuple, Optional, Union

from regdialog.errors import DisjointnessConflict, IsaCycle, OntologyParseError, UndeclaredTerm

IDENT_RE = re.compile(r"^[A-Za-z0-9_]+$")
_TOKEN_RE = re.compile(r'\s*(?:("[^"\n]*")|(#.*)|([^\s"#]+))')

OBJECT = "object"
DATA = "data"
CARDINALITY_OPS = ("min", "max", "exactly")


class ConceptAssertion(NamedTuple):
    individual: str
    concept: str

    def __str__(self):
        return f"{self.concept}({self.individual})"


class ObjectAssertion(NamedTuple):
    subject: str
    prop: str
    obj: str

    def __str__(self):
        return f"{self.prop}({self.subject}, {self.obj})"


class DataAssertion(NamedTuple):
    subject: str
    prop: str
    value: str

    def __str__(self):
        return f'{self.prop}({self.subject}, "{self.value}")'


Assertion = Union[ConceptAssertion, ObjectAssertion, DataAssertion]
_ORDER = {ConceptAssertion: 0, ObjectAssertion: 1, DataAssertion: 2}


def assertion_sort_key(a: Assertion):
    return (_ORDER[type(a)], tuple(a))


def format_onto(a: Assertion) -> str:
    """Render an assertion as an ONTO-TXT line."""
    if isinstance(a, ConceptAssertion):
        return f"ind {a.individual} {a.concept}"
    if isinstance(a, ObjectAssertion):
        return f"rel {a.subject} {a.prop} {a.obj}"
    return f'data {a.subject} {a.prop} "{a.value}"'


@dataclass(frozen=True)
class Restriction:
    concept: str
    prop: str
    op: str
    bound: int

    def holds(self, count: int) -> bool:
        if self.op == "min":
            return count >= self.bound
        if self.op == "max":
            return count <= self.bound
        return count == self.bound

    def __str__(self):
        return f"{self.concept} {self.prop} {self.op} {self.bound}"


class ConceptGraph:
    """An immutable, validated is-a DAG with disjointness and restrictions."""

    def __init__(
        self,
        concepts: Iterable[str],
        isa_edges: Iterable[tuple[str, str]] = (),
        disjoint_pairs: Iterable[tuple[str, str]] = (),
        properties: Optional[dict[str, str]] = None,
        restrictions: Iterable[Restriction] = (),
    ):
        self.concepts = frozenset(concepts)
        self.isa_edges = frozenset(isa_edges)
        self.disjoint_pairs = frozenset(frozenset(p) for p in disjoint_pairs)
        self.properties = dict(properties or {})
        self.restrictions = tuple(sorted(set(restrictions), key=lambda r: (r.concept, r.prop, r.op, r.bound)))

        for child, parent in sorted(self.isa_edges):
            self._require_concept(child)
            self._require_concept(parent)
        for pair in self.disjoint_pairs:
            for c in pair:
                self._require_concept(c)
        for r in self.restrictions:
            self._require_concept(r.concept)
            self._require_property(r.prop)

        parents: dict[str, set[str]] = {c: set() for c in self.concepts}
        for child, parent in self.isa_edges:
            parents[child].add(parent)
        self._parents = {c: frozenset(p) for c, p in parents.items()}
        try:
            order = list(TopologicalSorter(parents).static_order())
        except CycleError as e:
            raise IsaCycle(list(reversed(e.args[1]))) from None

        ancestors: dict[str, frozenset[str]] = {}
        for c in order:
            acc = {c}
            for p in parents[c]:
                acc |= ancestors[p]
            ancestors[c] = frozenset(acc)
        self._ancestors = ancestors
        descendants: dict[str, set[str]] = {c: set() for c in self.concepts}
        for c, ancs in ancestors.items():
            for a in ancs:
                descendants[a].add(c)
        self._descendants = {c: frozenset(d) for c, d in descendants.items()}

        for pair in self.disjoint_pairs:
            if len(pair) == 1:
                (c,) = pair
                raise DisjointnessConflict(f"{c} declared disjoint with itself")
            a, b = sorted(pair)
            if a in ancestors[b] or b in ancestors[a]:
                raise DisjointnessConflict(f"{a} and {b} are related by isa but declared disjoint")
        for c in sorted(self.concepts):
            clash = self.disjoint_pair_within(ancestors[c])
            if clash:
                raise DisjointnessConflict(
                    f"{c} is subsumed by disjoint concepts {' and '.join(sorted(clash))}")

    def _require_concept(self, c):
        if c not in self.concepts:
            raise UndeclaredTerm(c, "concept")

    def _require_property(self, p, kind=None):
        if p not in self.properties:
            raise UndeclaredTerm(p, "property")
        if kind is not None and self.properties[p] != kind:
            raise UndeclaredTerm(p, f"{kind} property")

    def parents(self, c: str) -> frozenset[str]:
        self._require_concept(c)
        return self._parents[c]

    def ancestors(self, c: str) -> frozenset[str]:
        """Reflexive-transitive superconcepts of *c*."""
        self._require_concept(c)
        return self._ancestors[c]

    def descendants(self, c: str) -> frozenset[str]:
        """Reflexive-transitive subconcepts of *c*."""
        self._require_concept(c)
        return self._descendants[c]

    def subsumes(self, ancestor: str, descendant: str) -> bool:
        self._require_concept(ancestor)
        return ancestor in self.ancestors(descendant)

    def disjoint_pair_within(self, concepts) -> Optional[frozenset[str]]:
        """Return the first declared disjoint pair fully inside *concepts*."""
        for pair in sorted(self.disjoint_pairs, key=sorted):
            if pair <= concepts:
                return pair
        return None

    def is_disjoint(self, a: str, b: str) -> bool:
        # inherited: descendants of disjoint concepts are disjoint
        aa, bb = self.ancestors(a), self.ancestors(b)
        for pair in self.disjoint_pairs:
            x, y = sorted(pair)
            if (x in aa and y in bb) or (y in aa and x in bb):
                return True
        return False

    def property_kind(self, p: str) -> str:
        self._require_property(p)
        return self.properties[p]

    def __repr__(self):
        return f"<ConceptGraph {len(self.concepts)} concepts, {len(self.isa_edges)} isa edges>"


class FactStore:
    """Individuals and their assertions, checked against a ConceptGraph.

    Writes are serialized by a lock; the accessor properties return frozen
    copies so readers never observe a half-applied write.
    """

    def __init__(self, graph: ConceptGraph, assertions: Iterable[Assertion] = ()):
        self.graph = graph
        self._lock = threading.RLock()
        self._individuals: set[str] = set()
        self._assertions: set[Assertion] = set()
        self._members: dict[str, set[str]] = {}
        for a in assertions:
            self.add(a)

    def _check(self, a: Assertion):
        g = self.graph
        if isinstance(a, ConceptAssertion):
            g._require_concept(a.concept)
        elif isinstance(a, ObjectAssertion):
            g._require_property(a.prop, OBJECT)
        elif isinstance(a, DataAssertion):
            g._require_property(a.prop, DATA)
        else:
            raise TypeError(f"not an assertion: {a!r}")

    def add(self, a: Assertion) -> bool:
        """Add one assertion; returns False if it was already present."""
        self._check(a)
        with self._lock:
            if a in self._assertions:
                return False
            self._assertions.add(a)
            if isinstance(a, ConceptAssertion):
                self._individuals.add(a.individual)
                for anc in self.graph.ancestors(a.concept):
                    self._members.setdefault(anc, set()).add(a.individual)
            elif isinstance(a, ObjectAssertion):
                self._individuals.update((a.subject, a.obj))
            else:
                self._individuals.add(a.subject)
            return True

    def update(self, assertions: Iterable[Assertion]) -> int:
        return sum(self.add(a) for a in assertions)

    def declare(self, individual: str):
        with self._lock:
            self._individuals.add(individual)

    def copy(self) -> FactStore:
        with self._lock:
            new = FactStore(self.graph)
            new._individuals = set(self._individuals)
            new._assertions = set(self._assertions)
            new._members = {c: set(m) for c, m in self._members.items()}
            return new

    @property
    def individuals(self) -> frozenset[str]:
        with self._lock:
            return frozenset(self._individuals)

    @property
    def assertions(self) -> frozenset[Assertion]:
        with self._lock:
            return frozenset(self._assertions)

    def _of_type(self, cls):
        with self._lock:
            return frozenset(a for a in self._assertions if isinstance(a, cls))

    @property
    def concept_assertions(self) -> frozenset[ConceptAssertion]:
        return self._of_type(ConceptAssertion)

    @property
    def object_assertions(self) -> frozenset[ObjectAssertion]:
        return self._of_type(ObjectAssertion)

    @property
    def data_assertions(self) -> frozenset[DataAssertion]:
        return self._of_type(DataAssertion)

    def instances_of(self, concept: str) -> frozenset[str]:
        self.graph._require_concept(concept)
        with self._lock:
            return frozenset(self._members.get(concept, ()))

    def is_instance(self, individual: str, concept: str) -> bool:
        with self._lock:
            return individual in self._members.get(concept, ())

    def types_of(self, individual: str) -> frozenset[str]:
        """All concepts the individual belongs to, via subsumption."""
        out: set[str] = set()
        with self._lock:
            for a in self._assertions:
                if isinstance(a, ConceptAssertion) and a.individual == individual:
                    out |= self.graph.ancestors(a.concept)
        return frozenset(out)

    def values(self, subject: str, prop: str) -> list[str]:
        """Objects or literals asserted for (subject, prop), sorted."""
        with self._lock:
            return sorted(
                a[2] for a in self._assertions
                if not isinstance(a, ConceptAssertion) and a.subject == subject and a.prop == prop
            )

    def __contains__(self, a):
        with self._lock:
            return a in self._assertions

    def __len__(self):
        with self._lock:
            return len(self._assertions)

    def __iter__(self):
        return iter(sorted(self.assertions, key=assertion_sort_key))

    def __eq__(self, other):
        if not isinstance(other, FactStore):
            return NotImplemented
        return self.assertions == other.assertions and self.individuals == other.individuals

    __hash__ = None


def assert_fact(store: FactStore, assertion: Assertion) -> FactStore:
    """Add *assertion* to *store* (set semantics) and return the store."""
    store.add(assertion)
    return store


# -- consistency --------------------------------------------------------------

class ViolationKind(str, enum.Enum):
    DisjointnessViolation = "DisjointnessViolation"
    CardinalityViolation = "CardinalityViolation"
    UndeclaredTerm = "UndeclaredTerm"
    IsaCycle = "IsaCycle"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: str
    detail: str

    def __str__(self):
        return f"{self.kind.value}: {self.subject}: {self.detail}"

    def to_json(self):
        return {"kind": self.kind.value, "subject": self.subject, "detail": self.detail}


def check_consistency(store: FactStore) -> list[Violation]:
    """Report disjointness clashes and cardinality restriction failures.

    Disjointness is checked against every superconcept of the individual's
    asserted concepts, one violation per declared disjoint pair. Cardinality
    counts explicitly asserted property values only.
    """
    graph = store.graph
    out: list[Violation] = []
    types: dict[str, set[str]] = {}
    counts: dict[tuple[str, str], int] = {}
    for a in store.assertions:
        if isinstance(a, ConceptAssertion):
            types.setdefault(a.individual, set()).update(graph.ancestors(a.concept))
        else:
            counts[a.subject, a.prop] = counts.get((a.subject, a.prop), 0) + 1

    for ind in sorted(types):
        for pair in sorted(graph.disjoint_pairs, key=sorted):
            if pair <= types[ind]:
                a, b = sorted(pair)
                out.append(Violation(
                    ViolationKind.DisjointnessViolation, ind, f"member of disjoint concepts {a} and {b}"))

    for r in graph.restrictions:
        if r.op == "min" and r.bound == 0:
            continue
        for ind in sorted(store.instances_of(r.concept)):
            n = counts.get((ind, r.prop), 0)
            if not r.holds(n):
                out.append(Violation(
                    ViolationKind.CardinalityViolation, ind,
                    f"{r.concept} requires {r.prop} {r.op} {r.bound}, found {n}"))
    return out


# -- ONTO-TXT -----------------------------------------------------------------

@dataclass(frozen=True)
class Statement:
    keyword: str
    args: tuple[str, ...]
    lineno: int
    source: Optional[str] = None


_ARITY = {
    "concept": 1, "isa": 2, "disjoint": 2, "objprop": 1, "dataprop": 1,
    "restrict": 4, "ind": 2, "rel": 3, "data": 3,
}


def tokenize(line: str, lineno: int, source=None, error=OntologyParseError) -> list[str]:
    """Split a line into bare words and quoted literals, dropping comments."""
    tokens = []
    pos = 0
    line = line.rstrip()
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if not m or m.end() == pos:
            raise error(f"cannot tokenize near {line[pos:pos + 20]!r}", lineno, source)
        if m.group(2) is not None:
            break
        tokens.append(m.group(1) if m.group(1) is not None else m.group(3))
        pos = m.end()
    return tokens


def parse_statements(text, source: Optional[str] = None) -> list[Statement]:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise OntologyParseError(f"input is not UTF-8: {e}", None, source) from None
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        tokens = tokenize(line, lineno, source)
        if not tokens:
            continue
        keyword, args = tokens[0], tuple(tokens[1:])
        if keyword not in _ARITY:
            raise OntologyParseError(f"unknown statement {keyword!r}", lineno, source)
        if len(args) != _ARITY[keyword]:
            raise OntologyParseError(f"{keyword} takes {_ARITY[keyword]} arguments", lineno, source)
        literal_pos = 2 if keyword == "data" else None
        for i, arg in enumerate(args):
            if i == literal_pos:
                if not (len(arg) >= 2 and arg[0] == arg[-1] == '"'):
                    raise OntologyParseError("data literal must be double quoted", lineno, source)
                args = args[:i] + (arg[1:-1],)
            elif keyword == "restrict" and i == 2:
                if arg not in CARDINALITY_OPS:
                    raise OntologyParseError(f"bad cardinality operator {arg!r}", lineno, source)
            elif keyword == "restrict" and i == 3:
                if not arg.isdigit():
                    raise OntologyParseError(f"bad cardinality bound {arg!r}", lineno, source)
            elif not IDENT_RE.match(arg):
                raise OntologyParseError(f"bad identifier {arg!r}", lineno, source)
        out.append(Statement(keyword, args, lineno, source))
    return out


def build_ontology(statements: Iterable[Statement]) -> tuple[ConceptGraph, FactStore]:
    """Build and validate a graph and store; nothing is returned on failure."""
    concepts, edges, disjoint, restrictions = set(), set(), set(), set()
    properties: dict[str, str] = {}
    facts: list[tuple[Statement, Assertion]] = []
    for st in statements:
        k, a = st.keyword, st.args
        if k == "concept":
            concepts.add(a[0])
        elif k == "isa":
            edges.add((a[0], a[1]))
        elif k == "disjoint":
            disjoint.add((a[0], a[1]))
        elif k in ("objprop", "dataprop"):
            kind = OBJECT if k == "objprop" else DATA
            if properties.get(a[0], kind) != kind:
                raise OntologyParseError(f"property {a[0]} declared with two kinds", st.lineno, st.source)
            properties[a[0]] = kind
        elif k == "restrict":
            restrictions.add(Restriction(a[0], a[1], a[2], int(a[3])))
        elif k == "ind":
            facts.append((st, ConceptAssertion(a[0], a[1])))
        elif k == "rel":
            facts.append((st, ObjectAssertion(*a)))
        else:
            facts.append((st, DataAssertion(*a)))
    graph = ConceptGraph(concepts, edges, disjoint, properties, restrictions)
    store = FactStore(graph)
    for st, fact in facts:
        store.add(fact)
    return graph, store


def load_ontology(*texts, sources: Optional[list[str]] = None) -> tuple[ConceptGraph, FactStore]:
    """Load one or more ONTO-TXT documents as a single ontology."""
    statements: list[Statement] = []
    for i, text in enumerate(texts):
        src = sources[i] if sources else None
        statements.extend(parse_statements(text, src))
    return build_ontology(statements)


def dump_ontology(graph: ConceptGraph, store: Optional[FactStore] = None) -> str:
    """Render a graph (and optionally a store) as canonical ONTO-TXT."""
    out = [f"concept {c}" for c in sorted(graph.concepts)]
    out += [f"isa {c} {p}" for c, p in sorted(graph.isa_edges)]
    out += ["disjoint {} {}".format(*sorted(p)) for p in sorted(graph.disjoint_pairs, key=sorted)]
    for p in sorted(graph.properties):
        out.append(f"{'objprop' if graph.properties[p] == OBJECT else 'dataprop'} {p}")
    out += [f"restrict {r}" for r in graph.restrictions]
    if store is not None:
        out += [format_onto(a) for a in store]
    return "\n".join(out) + "\n"
