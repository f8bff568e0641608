"""Functional programs: operation table, concrete syntax, parser and printer.

A program is written in parenthesized prefix form::

    (count (filter_charged (objects)))
    (query_attribute (unique (filter_static_attr (objects) cube)) color)

Parenthesized forms are operation calls; bare tokens are literals (attribute
values, orders, event kinds, attribute names). Internally a program is a
post-order list of nodes; each node's ``args`` holds either an ``int`` (index
of an earlier node) or a ``str`` literal, in signature order.

Grammar::

    program  := call
    call     := "(" NAME arg* ")"
    arg      := call | LITERAL
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, Union

from . import vocab

# value types
OBJECTS, OBJECT = "objects", "object"
EVENTS, EVENT = "events", "event"
FRAME, INT, BOOL, ATTR = "frame", "int", "bool", "attr"

# literal categories
LITERAL_SETS: dict[str, tuple[str, ...]] = {
    "static_attr": vocab.STATIC_ATTRS,
    "dynamic_attr": vocab.DYNAMIC_ATTRS,
    "order": vocab.ORDERS,
    "attr_name": vocab.ATTR_NAMES,
    "kind": vocab.EVENT_KINDS,
}

# A singleton is accepted where a set is expected.
_ACCEPTS = {
    OBJECTS: {OBJECTS, OBJECT},
    EVENTS: {EVENTS, EVENT},
}


@dataclass(frozen=True)
class Signature:
    params: tuple[tuple[str, ...], ...]  # allowed types (or one literal category) per position
    output: Union[str, Callable[[tuple[str, ...]], str]]
    description: str
    table_row: bool = True  # False for operations added beyond the published table

    def out_type(self, arg_types: tuple[str, ...]) -> str:
        return self.output(arg_types) if callable(self.output) else self.output


def _sig(params, output, description, table_row=True):
    return Signature(tuple(p if isinstance(p, tuple) else (p,) for p in params), output, description, table_row)


def _singular(types):
    return {OBJECTS: OBJECT, OBJECT: OBJECT, EVENTS: EVENT, EVENT: EVENT}[types[0]]


OPERATIONS: dict[str, Signature] = {
    # counterfactual
    "counterfactual_mass_heavy": _sig([OBJECT], EVENTS, "all events after making the object heavy"),
    "counterfactual_mass_light": _sig([OBJECT], EVENTS, "all events after making the object light"),
    "counterfactual_uncharged": _sig([OBJECT], EVENTS, "all events after making the object uncharged"),
    "counterfactual_opposite_charged": _sig([OBJECT], EVENTS, "all events after making the object oppositely charged"),
    # object properties
    "filter_heavy": _sig([OBJECTS], OBJECTS, "select all the heavy objects"),
    "filter_light": _sig([OBJECTS], OBJECTS, "select all the light objects"),
    "filter_charged": _sig([OBJECTS], OBJECTS, "select all the charged objects"),
    "filter_uncharged": _sig([OBJECTS], OBJECTS, "select all the uncharged objects"),
    # appearance
    "filter_static_attr": _sig([OBJECTS, "static_attr"], OBJECTS, "objects with the static attribute"),
    "filter_dynamic_attr": _sig([OBJECTS, "dynamic_attr", FRAME], OBJECTS, "objects with the dynamic attribute at a frame"),
    # events
    "filter_event": _sig([EVENTS, OBJECTS], EVENTS, "events that involve any of the input objects"),
    "get_col_partner": _sig([EVENT, OBJECT], OBJECT, "collision partner of the input object"),
    "filter_before": _sig([EVENTS, EVENTS], EVENTS, "events before the reference event"),
    "filter_after": _sig([EVENTS, EVENTS], EVENTS, "events after the reference event"),
    "filter_order": _sig([EVENTS, "order"], EVENT, "event at a chronological position"),
    "get_frame": _sig([EVENT], FRAME, "frame of the event"),
    # others
    "unique": _sig([(OBJECTS, EVENTS)], _singular, "the only element of the input set"),
    # inputs
    "start": _sig([], EVENT, "the special start event"),
    "end": _sig([], EVENT, "the special end event"),
    "objects": _sig([], OBJECTS, "all objects in the video"),
    "events": _sig([], EVENTS, "all events in the video"),
    "unseen_events": _sig([], EVENTS, "all future events"),
    # outputs
    "query_both_attribute": _sig([OBJECTS, "attr_name"], ATTR, "attribute of exactly two objects"),
    "query_direction": _sig([OBJECT, FRAME], ATTR, "heading of the object at a frame"),
    "is_heavier": _sig([OBJECT, OBJECT], BOOL, "first object heavier than second"),
    "is_lighter": _sig([OBJECT, OBJECT], BOOL, "first object lighter than second"),
    "query_attribute": _sig([OBJECT, "attr_name"], ATTR, "attribute of the object"),
    "count": _sig([(OBJECTS, EVENTS)], INT, "number of objects or events"),
    "exist": _sig([(OBJECTS, EVENTS)], BOOL, "input set is nonempty"),
    "belong_to": _sig([EVENT, EVENTS], BOOL, "event belongs to the event set"),
    "negate": _sig([BOOL], BOOL, "boolean negation"),
    # additions needed to express every template
    "filter_kind": _sig([EVENTS, "kind"], EVENTS, "events of one kind", table_row=False),
    "is_same_charged": _sig([OBJECT, OBJECT], BOOL, "both charged with the same sign", table_row=False),
    "is_opposite_charged": _sig([OBJECT, OBJECT], BOOL, "both charged with opposite signs", table_row=False),
}

ANSWER_TYPES = {INT, BOOL, ATTR, FRAME, OBJECT, OBJECTS, EVENT, EVENTS}

Arg = Union[int, str]


@dataclass(frozen=True)
class Node:
    name: str
    args: tuple[Arg, ...] = ()


@dataclass(frozen=True)
class Program:
    nodes: tuple[Node, ...]

    @property
    def output(self) -> int:
        return len(self.nodes) - 1

    def __str__(self) -> str:
        return format_program(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def inputs(self, index: int) -> list[int]:
        return [a for a in self.nodes[index].args if isinstance(a, int)]

    def subprogram(self, index: int) -> "Program":
        """The program rooted at node ``index``, re-indexed."""
        keep: list[int] = []

        def visit(i):
            for a in self.nodes[i].args:
                if isinstance(a, int):
                    visit(a)
            keep.append(i)

        visit(index)
        remap = {old: new for new, old in enumerate(keep)}
        return Program(tuple(
            Node(self.nodes[i].name, tuple(remap[a] if isinstance(a, int) else a for a in self.nodes[i].args))
            for i in keep
        ))

    def output_type(self) -> str:
        return infer_types(self)[-1]


class ProgramError(ValueError):
    category = "program"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")


class ProgramSyntaxError(ProgramError):
    category = "syntax"


class UnknownOperationError(ProgramError):
    category = "unknown_op"


class ArityError(ProgramError):
    category = "arity"


class ProgramTypeError(ProgramError):
    category = "type"


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def _tokenize(text: str) -> Iterator[tuple[str, str, int, int]]:
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def locate(pos):
        line = max(i for i, s in enumerate(line_starts) if s <= pos)
        return line + 1, pos - line_starts[line] + 1

    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == m.start() and pos >= len(text):
            break
        if m.group(1):
            yield ("open", "(", *locate(m.start(1)))
        elif m.group(2):
            yield ("close", ")", *locate(m.start(2)))
        elif m.group(3):
            yield ("atom", m.group(3), *locate(m.start(3)))
        else:
            break
        pos = m.end()
    yield ("eof", "", *locate(len(text)))


def _accepts(expected: tuple[str, ...], actual: str) -> bool:
    return any(actual in _ACCEPTS.get(e, {e}) for e in expected)


def parse_program(text: str) -> Program:
    """Parse and type-check a program in concrete syntax."""
    tokens = list(_tokenize(text))
    nodes: list[Node] = []
    types: list[str] = []
    pos = 0

    def parse_call() -> int:
        nonlocal pos
        kind, tok, line, col = tokens[pos]
        if kind == "eof":
            raise ProgramSyntaxError("unexpected end of input", line, col)
        if kind != "open":
            raise ProgramSyntaxError(f"expected '(' but found {tok!r}", line, col)
        pos += 1
        kind, name, nline, ncol = tokens[pos]
        if kind != "atom":
            raise ProgramSyntaxError("expected operation name", nline, ncol)
        if name not in OPERATIONS:
            raise UnknownOperationError(f"unknown operation {name!r}", nline, ncol)
        pos += 1
        sig = OPERATIONS[name]
        args: list[Arg] = []
        arg_types: list[str] = []
        while True:
            kind, tok, line, col = tokens[pos]
            if kind == "close":
                pos += 1
                break
            if kind == "eof":
                raise ProgramSyntaxError("unexpected end of input", line, col)
            i = len(args)
            if i >= len(sig.params):
                raise ArityError(f"{name} takes {len(sig.params)} argument(s)", line, col)
            expected = sig.params[i]
            if kind == "open":
                child = parse_call()
                if expected[0] in LITERAL_SETS or not _accepts(expected, types[child]):
                    raise ProgramTypeError(
                        f"argument {i + 1} of {name} must be {'/'.join(expected)}, got {types[child]}", line, col)
                args.append(child)
                arg_types.append(types[child])
            else:
                pos += 1
                category = expected[0]
                if category not in LITERAL_SETS:
                    raise ProgramTypeError(
                        f"argument {i + 1} of {name} must be {'/'.join(expected)}, got literal {tok!r}", line, col)
                if tok not in LITERAL_SETS[category]:
                    raise ProgramTypeError(f"{tok!r} is not a valid {category}", line, col)
                args.append(tok)
                arg_types.append(category)
        if len(args) != len(sig.params):
            raise ArityError(f"{name} takes {len(sig.params)} argument(s), got {len(args)}", nline, ncol)
        nodes.append(Node(name, tuple(args)))
        types.append(sig.out_type(tuple(arg_types)))
        return len(nodes) - 1

    parse_call()
    kind, tok, line, col = tokens[pos]
    if kind != "eof":
        raise ProgramSyntaxError(f"trailing input {tok!r}", line, col)
    return Program(tuple(nodes))


def format_program(program: Program, index: int | None = None) -> str:
    if index is None:
        index = program.output
    node = program.nodes[index]
    parts = [node.name]
    for a in node.args:
        parts.append(format_program(program, a) if isinstance(a, int) else a)
    return "(" + " ".join(parts) + ")"


def infer_types(program: Program) -> list[str]:
    """Output type of every node; raises the same error categories as the parser."""
    types: list[str] = []
    for i, node in enumerate(program.nodes):
        sig = OPERATIONS.get(node.name)
        if sig is None:
            raise UnknownOperationError(f"unknown operation {node.name!r} (node {i})")
        if len(node.args) != len(sig.params):
            raise ArityError(f"{node.name} takes {len(sig.params)} argument(s) (node {i})")
        arg_types = []
        for j, (a, expected) in enumerate(zip(node.args, sig.params)):
            if isinstance(a, int):
                if not 0 <= a < i:
                    raise ProgramError(f"node {i} references node {a} out of order")
                if expected[0] in LITERAL_SETS or not _accepts(expected, types[a]):
                    raise ProgramTypeError(f"argument {j + 1} of {node.name} must be {'/'.join(expected)} (node {i})")
                arg_types.append(types[a])
            else:
                if expected[0] not in LITERAL_SETS or a not in LITERAL_SETS[expected[0]]:
                    raise ProgramTypeError(f"bad literal {a!r} for {node.name} (node {i})")
                arg_types.append(expected[0])
        types.append(sig.out_type(tuple(arg_types)))
    return types


def build(name: str, *args: Union[Program, str]) -> Program:
    """Compose a program from sub-programs and literals: ``build('count', build('objects'))``."""
    nodes: list[Node] = []
    refs: list[Arg] = []
    for a in args:
        if isinstance(a, Program):
            offset = len(nodes)
            nodes.extend(Node(n.name, tuple(x + offset if isinstance(x, int) else x for x in n.args)) for n in a.nodes)
            refs.append(len(nodes) - 1)
        else:
            refs.append(a)
    nodes.append(Node(name, tuple(refs)))
    return Program(tuple(nodes))


def table_operations() -> list[str]:
    return [name for name, sig in OPERATIONS.items() if sig.table_row]


def used_operations(programs: Sequence[Program]) -> set[str]:
    return {n.name for p in programs for n in p.nodes}
