"""Safe Horn rules over a FactStore, evaluated by naive forward chaining.

RULE-TXT v1::

    rule name: C(?x) & p(?x, ?y) & q(?x, "lit") & builtin:pathPrefixOf(?a, ?b) => D(?x) & r(?x, ?y)

A rule may continue on following lines as long as they are indented. Bare
identifiers in argument position are individual constants, double-quoted
strings are literals taken verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Union

from regdialog.errors import (
    IterationLimitExceeded,
    RuleError,
    RuleParseError,
    UndeclaredTerm,
    UnknownBuiltin,
    UnsafeRule,
)
from regdialog.ontology import (
    DATA,
    OBJECT,
    Assertion,
    ConceptAssertion,
    ConceptGraph,
    DataAssertion,
    FactStore,
    ObjectAssertion,
    assertion_sort_key,
)
from regdialog.snapshot import RegistryPath

DEFAULT_MAX_PASSES = 10_000


class Var(NamedTuple):
    name: str

    def __str__(self):
        return f"?{self.name}"


class Literal(NamedTuple):
    value: str

    def __str__(self):
        return f'"{self.value}"'


# individuals are plain strings
Term = Union[Var, Literal, str]


def _is_var(t) -> bool:
    return isinstance(t, Var)


@dataclass(frozen=True)
class ConceptAtom:
    concept: str
    term: Term

    @property
    def terms(self):
        return (self.term,)

    def __str__(self):
        return f"{self.concept}({self.term})"


@dataclass(frozen=True)
class ObjectAtom:
    prop: str
    subject: Term
    obj: Term

    @property
    def terms(self):
        return (self.subject, self.obj)

    def __str__(self):
        return f"{self.prop}({self.subject}, {self.obj})"


@dataclass(frozen=True)
class DataAtom:
    prop: str
    subject: Term
    value: Term

    @property
    def terms(self):
        return (self.subject, self.value)

    def __str__(self):
        return f"{self.prop}({self.subject}, {self.value})"


@dataclass(frozen=True)
class Builtin:
    name: str
    args: tuple

    @property
    def terms(self):
        return self.args

    def __str__(self):
        return f"builtin:{self.name}({', '.join(str(a) for a in self.args)})"


Atom = Union[ConceptAtom, ObjectAtom, DataAtom, Builtin]


def atom_vars(atom) -> set[str]:
    return {t.name for t in atom.terms if _is_var(t)}


@dataclass(frozen=True)
class Rule:
    name: str
    body: tuple
    head: tuple

    def __post_init__(self):
        _check_safety(self)

    def variables(self) -> set[str]:
        out: set[str] = set()
        for a in self.body + self.head:
            out |= atom_vars(a)
        return out

    def __str__(self):
        return format_rule(self)


def format_rule(rule: Rule) -> str:
    body = " & ".join(str(a) for a in rule.body)
    head = " & ".join(str(a) for a in rule.head)
    return f"rule {rule.name}: {body} => {head}"


def _check_safety(rule: Rule, lineno=None, source=None):
    if not rule.head:
        raise RuleParseError(f"rule {rule.name} has an empty head", lineno, source)
    bound: set[str] = set()
    for a in rule.body:
        if not isinstance(a, Builtin):
            bound |= atom_vars(a)
    for a in rule.head:
        if isinstance(a, Builtin):
            raise RuleParseError(f"rule {rule.name}: builtin in head", lineno, source)
        missing = atom_vars(a) - bound
        if missing:
            raise UnsafeRule(
                f"rule {rule.name}: head variable(s) {', '.join(sorted(missing))} not bound in body",
                lineno, source)
    for a in rule.body:
        if isinstance(a, Builtin):
            missing = atom_vars(a) - bound
            if missing:
                raise UnsafeRule(
                    f"rule {rule.name}: builtin variable(s) {', '.join(sorted(missing))} not bound",
                    lineno, source)


# -- builtins -----------------------------------------------------------------

def _text(v) -> str:
    return v.value if isinstance(v, Literal) else v


def _path(v) -> RegistryPath:
    return RegistryPath.parse(_text(v))


def _path_prefix_of(prefix, path) -> bool:
    return _path(path).startswith(_path(prefix))


def _direct_child_of(child, parent) -> bool:
    c, p = _path(child), _path(parent)
    return len(c) == len(p) + 1 and c.startswith(p)


def _path_equals(a, b) -> bool:
    return _path(a).folded == _path(b).folded


def _state_equals(a, b) -> bool:
    return _text(a) == _text(b)


BUILTINS = {
    "pathPrefixOf": _path_prefix_of,
    "directChildOf": _direct_child_of,
    "pathEquals": _path_equals,
    "stateEquals": _state_equals,
}


# -- parsing ------------------------------------------------------------------

_NAME_RE = re.compile(r"\s*(builtin:)?([A-Za-z0-9_]+)\s*\(")
_ARG_RE = re.compile(r'\s*(?:\?([A-Za-z0-9_]+)|"([^"\n]*)"|([A-Za-z0-9_]+))\s*')
_HEADER_RE = re.compile(r"^rule\s+([A-Za-z0-9_]+)\s*:(.*)$")


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _parse_atom_list(text: str, pos: int, lineno, source, stop: Optional[str]):
    atoms = []
    while True:
        m = _NAME_RE.match(text, pos)
        if not m:
            raise RuleParseError(f"expected an atom near {text[pos:pos + 30]!r}", lineno, source)
        is_builtin, name = bool(m.group(1)), m.group(2)
        pos = m.end()
        args = []
        while True:
            a = _ARG_RE.match(text, pos)
            if not a or a.end() == pos:
                raise RuleParseError(f"bad argument near {text[pos:pos + 30]!r}", lineno, source)
            if a.group(1) is not None:
                args.append(Var(a.group(1)))
            elif a.group(2) is not None:
                args.append(Literal(a.group(2)))
            else:
                args.append(a.group(3))
            pos = a.end()
            if text.startswith(",", pos):
                pos += 1
                continue
            if text.startswith(")", pos):
                pos += 1
                break
            raise RuleParseError(f"expected ',' or ')' near {text[pos:pos + 30]!r}", lineno, source)
        atoms.append(_make_atom(is_builtin, name, args, lineno, source))
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if text.startswith("&", pos):
            pos += 1
            continue
        if stop and text.startswith(stop, pos):
            return atoms, pos + len(stop)
        if pos == len(text) and stop is None:
            return atoms, pos
        expected = f"'&' or '{stop}'" if stop else "'&' or end of rule"
        raise RuleParseError(f"expected {expected} near {text[pos:pos + 30]!r}", lineno, source)


def _make_atom(is_builtin, name, args, lineno, source):
    if is_builtin:
        if name not in BUILTINS:
            raise UnknownBuiltin(f"unknown builtin {name!r}", lineno, source)
        if len(args) != 2:
            raise RuleParseError(f"builtin {name} takes 2 arguments", lineno, source)
        return Builtin(name, tuple(args))
    if isinstance(args[0], Literal):
        raise RuleParseError(f"{name}: first argument cannot be a literal", lineno, source)
    if len(args) == 1:
        return ConceptAtom(name, args[0])
    if len(args) == 2:
        if isinstance(args[1], Literal):
            return DataAtom(name, args[0], args[1])
        return ObjectAtom(name, args[0], args[1])
    raise RuleParseError(f"{name}: atoms take 1 or 2 arguments", lineno, source)


def _parse_rule(name: str, text: str, lineno, source) -> Rule:
    stripped = text.strip()
    if stripped.startswith("=>"):
        body, pos = [], text.index("=>") + 2
    else:
        body, pos = _parse_atom_list(text, 0, lineno, source, "=>")
    head, _ = _parse_atom_list(text, pos, lineno, source, None)
    try:
        return Rule(name, tuple(body), tuple(head))
    except RuleParseError as e:
        raise type(e)(e.message, lineno, source) from None


def parse_rules(text, source: Optional[str] = None) -> list[Rule]:
    """Parse RULE-TXT into validated rules."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise RuleParseError(f"input is not UTF-8: {e}", None, source) from None
    pending: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        if line[0].isspace():
            if not pending:
                raise RuleParseError("continuation line outside a rule", lineno, source)
            start, acc = pending[-1]
            pending[-1] = (start, acc + " " + line.strip())
        else:
            pending.append((lineno, line))

    rules, names = [], set()
    for lineno, line in pending:
        m = _HEADER_RE.match(line)
        if not m:
            raise RuleParseError("expected 'rule <name>: ...'", lineno, source)
        name = m.group(1)
        if name in names:
            raise RuleParseError(f"duplicate rule name {name!r}", lineno, source)
        names.add(name)
        rules.append(_parse_rule(name, m.group(2), lineno, source))
    return rules


# -- evaluation ---------------------------------------------------------------

Binding = tuple  # sorted ((var name, value), ...)


@dataclass
class InferenceResult:
    derived: frozenset
    iterations: int
    provenance: dict = field(default_factory=dict)
    facts: Optional[FactStore] = None

    def sorted_derived(self) -> list[Assertion]:
        return sorted(self.derived, key=assertion_sort_key)


def _resolve(rule: Rule, graph: ConceptGraph) -> Rule:
    """Check vocabulary and turn property atoms into the kind the graph declares."""
    def fix(atom):
        if isinstance(atom, ConceptAtom):
            if atom.concept not in graph.concepts:
                raise UndeclaredTerm(atom.concept, "concept")
            return atom
        if isinstance(atom, (ObjectAtom, DataAtom)):
            kind = graph.properties.get(atom.prop)
            if kind is None:
                raise UndeclaredTerm(atom.prop, "property")
            s, o = atom.terms
            if kind == DATA:
                if isinstance(o, str):
                    o = Literal(o)
                return DataAtom(atom.prop, s, o)
            if isinstance(o, Literal):
                raise UndeclaredTerm(atom.prop, "data property")
            return ObjectAtom(atom.prop, s, o)
        return atom

    return Rule(rule.name, tuple(fix(a) for a in rule.body), tuple(fix(a) for a in rule.head))


class _Index:
    def __init__(self, store: FactStore):
        self.store = store
        self.obj_s: dict[str, dict] = {}
        self.obj_o: dict[str, dict] = {}
        self.data_s: dict[str, dict] = {}
        self.data_o: dict[str, dict] = {}
        for a in store.assertions:
            self._index(a)

    def _index(self, a):
        if isinstance(a, ObjectAssertion):
            self.obj_s.setdefault(a.prop, {}).setdefault(a.subject, set()).add(a.obj)
            self.obj_o.setdefault(a.prop, {}).setdefault(a.obj, set()).add(a.subject)
        elif isinstance(a, DataAssertion):
            v = Literal(a.value)
            self.data_s.setdefault(a.prop, {}).setdefault(a.subject, set()).add(v)
            self.data_o.setdefault(a.prop, {}).setdefault(v, set()).add(a.subject)

    def add(self, a) -> bool:
        if not self.store.add(a):
            return False
        self._index(a)
        return True

    def match(self, atom, binding: dict) -> Iterator[dict]:
        def val(t):
            if _is_var(t):
                return binding.get(t.name)
            return t

        if isinstance(atom, ConceptAtom):
            x = val(atom.term)
            if x is not None:
                if isinstance(x, str) and self.store.is_instance(x, atom.concept):
                    yield binding
                return
            for ind in self.store.instances_of(atom.concept):
                yield {**binding, atom.term.name: ind}
            return

        if isinstance(atom, ObjectAtom):
            by_s, by_o = self.obj_s.get(atom.prop, {}), self.obj_o.get(atom.prop, {})
        else:
            by_s, by_o = self.data_s.get(atom.prop, {}), self.data_o.get(atom.prop, {})
        s_term, o_term = atom.terms
        s, o = val(s_term), val(o_term)
        if s is not None:
            objs = by_s.get(s, ())
            if o is not None:
                if o in objs:
                    yield binding
                return
            for obj in objs:
                yield {**binding, o_term.name: obj}
        elif o is not None:
            for subj in by_o.get(o, ()):
                yield {**binding, s_term.name: subj}
        else:
            same = s_term == o_term
            for subj, objs in by_s.items():
                for obj in objs:
                    if same and subj != obj:
                        continue
                    b = {**binding, s_term.name: subj}
                    if not same:
                        b[o_term.name] = obj
                    yield b


def _plan(rule: Rule) -> list:
    """Order body atoms so joins start from bound terms; builtins run as soon as possible."""
    remaining = [a for a in rule.body if not isinstance(a, Builtin)]
    builtins = [a for a in rule.body if isinstance(a, Builtin)]
    bound: set[str] = set()
    plan = []

    def flush():
        for b in list(builtins):
            if atom_vars(b) <= bound:
                plan.append(b)
                builtins.remove(b)

    flush()
    while remaining:
        def score(i_atom):
            i, atom = i_atom
            ts = atom.terms
            n_bound = sum(1 for t in ts if not _is_var(t) or t.name in bound)
            return (-n_bound, 0 if isinstance(atom, ConceptAtom) else 1, i)

        i, atom = min(enumerate(remaining), key=score)
        remaining.pop(i)
        plan.append(atom)
        bound |= atom_vars(atom)
        flush()
    return plan


def _instantiate(atom, binding: dict, rule_name: str) -> Assertion:
    def val(t):
        return binding[t.name] if _is_var(t) else t

    def individual(t):
        v = val(t)
        if isinstance(v, Literal):
            raise RuleError(f"rule {rule_name}: literal {v} used as an individual")
        return v

    if isinstance(atom, ConceptAtom):
        return ConceptAssertion(individual(atom.term), atom.concept)
    if isinstance(atom, ObjectAtom):
        return ObjectAssertion(individual(atom.subject), atom.prop, individual(atom.obj))
    v = val(atom.value)
    return DataAssertion(individual(atom.subject), atom.prop, v.value if isinstance(v, Literal) else v)


def _bindings(plan, index: _Index, binding: dict, i: int = 0) -> Iterator[dict]:
    if i == len(plan):
        yield binding
        return
    atom = plan[i]
    if isinstance(atom, Builtin):
        args = [binding[t.name] if _is_var(t) else t for t in atom.args]
        if BUILTINS[atom.name](*args):
            yield from _bindings(plan, index, binding, i + 1)
        return
    for b in index.match(atom, binding):
        yield from _bindings(plan, index, b, i + 1)


def _binding_key(binding: dict) -> Binding:
    return tuple(sorted(binding.items(), key=lambda kv: kv[0]))


def _entailed(store: FactStore, a: Assertion) -> bool:
    if isinstance(a, ConceptAssertion):
        return store.is_instance(a.individual, a.concept)
    return a in store


def infer(store: FactStore, rules: Iterable[Rule], max_passes: int = DEFAULT_MAX_PASSES) -> InferenceResult:
    """Compute the least fixpoint of *rules* over *store*.

    Each pass evaluates every rule against the facts known at the start of the
    pass, so the pass in which an assertion first appears does not depend on
    rule order; among several derivations in that pass the smallest
    (rule name, binding) is kept as provenance. A concept assertion already
    entailed through subsumption is not counted as new. *store* is left
    untouched; the result carries an augmented copy.
    """
    graph = store.graph
    resolved = sorted((_resolve(r, graph) for r in rules), key=lambda r: r.name)
    plans = [(r, _plan(r)) for r in resolved]
    facts = store.copy()
    index = _Index(facts)
    derived: set[Assertion] = set()
    provenance: dict = {}
    passes = 0
    while True:
        passes += 1
        if passes > max_passes:
            raise IterationLimitExceeded(f"no fixpoint after {max_passes} passes")
        found: dict[Assertion, tuple] = {}
        for rule, plan in plans:
            for binding in _bindings(plan, index, {}):
                for atom in rule.head:
                    a = _instantiate(atom, binding, rule.name)
                    if _entailed(facts, a):
                        continue
                    why = (rule.name, _binding_key(binding))
                    if a not in found or _prov_key(why) < _prov_key(found[a]):
                        found[a] = why
        added = False
        for a in sorted(found, key=assertion_sort_key):
            # an earlier addition in this pass may already entail a concept assertion
            if _entailed(facts, a):
                continue
            index.add(a)
            derived.add(a)
            provenance[a] = found[a]
            added = True
        if not added:
            break
    return InferenceResult(frozenset(derived), passes, provenance, facts)


def _prov_key(why):
    name, binding = why
    return (name, tuple((k, str(v)) for k, v in binding))


def replay(rule: Rule, binding: Binding, graph: ConceptGraph) -> list[Assertion]:
    """Instantiate the head of *rule* under *binding*."""
    rule = _resolve(rule, graph)
    b = dict(binding)
    return [_instantiate(a, b, rule.name) for a in rule.head]


def body_holds(rule: Rule, binding: Binding, store: FactStore) -> bool:
    """Check that every body atom of *rule* is satisfied under *binding*."""
    rule = _resolve(rule, store.graph)
    index = _Index(store)
    b = dict(binding)
    for atom in rule.body:
        if isinstance(atom, Builtin):
            args = [b[t.name] if _is_var(t) else t for t in atom.args]
            if not BUILTINS[atom.name](*args):
                return False
        elif not any(True for _ in index.match(atom, b)):
            return False
    return True
