"""Scenario language: line-oriented, indentation-scoped sections with
s-expression tree bodies.

Five sections: `schemas`, `trees`, `templates`, `world`, `npcs`, `run` (any
subset, any order, each at most once). Comments run from `#` to end of line.
Identifiers are `[a-z][a-z0-9-]*`; numbers are decimal; `$name` references a
shared context variable. S-expressions may span lines while parentheses are
open. The full grammar ships in docs/grammar.ebnf.

Parsing never partially succeeds: the first error is reported with line,
column, and the expected token set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .bt import Var
from .errors import ParseError

SECTIONS = ("schemas", "trees", "templates", "world", "npcs", "run")

_TOKEN_RE = re.compile(r"""
    (?P<range>\d+\.\.(?:\d+|n))
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<var>\$[a-z][a-z0-9-]*)
  | (?P<ident>[a-z_][a-z0-9_-]*)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<equals>=)
  | (?P<colon>:)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    type: str
    value: object
    line: int
    col: int


@dataclass
class SNode:
    """One parenthesized tree form: (head pos-args... key=value... )"""
    head: str
    pos: list = field(default_factory=list)
    kw: dict = field(default_factory=dict)
    line: int = 0
    col: int = 0

    def children(self):
        return [a for a in self.pos if isinstance(a, SNode)]

    def atoms(self):
        return [a for a in self.pos if not isinstance(a, SNode)]


@dataclass
class Statement:
    """One keyword-led line: words plus an optional nested block."""
    words: list
    line: int
    block: list = field(default_factory=list)   # nested Statements
    expr: SNode | None = None                   # trailing s-expression


@dataclass
class ScenarioDef:
    schemas: list = field(default_factory=list)     # Statement
    trees: list = field(default_factory=list)       # (name, SNode, line)
    templates: list = field(default_factory=list)   # Statement (with blocks)
    world: list = field(default_factory=list)       # Statement
    npcs: list = field(default_factory=list)        # Statement (with blocks)
    run: list = field(default_factory=list)         # Statement

    def section(self, name: str) -> list:
        return getattr(self, name)


def tokenize_line(text: str, line_no: int) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        ch = text[pos]
        if ch == "#":
            break
        if ch in " \t":
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(line_no, pos + 1, f"unexpected character {ch!r}")
        kind = match.lastgroup
        raw = match.group()
        if kind == "number":
            value = float(raw) if "." in raw else int(raw)
        elif kind == "var":
            value = Var(raw[1:])
        elif kind == "ident":
            value = {"true": True, "false": False}.get(raw, raw)
            if isinstance(value, bool):
                kind = "bool"
        elif kind == "range":
            lo, hi = raw.split("..")
            value = (int(lo), None if hi == "n" else int(hi))
        else:
            value = raw
        tokens.append(Token(kind, value, line_no, match.start() + 1))
        pos = match.end()
    return tokens


@dataclass
class Line:
    indent: int
    tokens: list
    line_no: int


def _physical_lines(text: str) -> list[Line]:
    """Tokenized, comment-stripped lines with paren-continuation folding."""
    out: list[Line] = []
    pending: Line | None = None
    depth = 0
    for idx, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        if "\t" in raw[:len(raw) - len(raw.lstrip())]:
            raise ParseError(idx, 1, "tabs are not allowed in indentation")
        indent = len(stripped) - len(stripped.lstrip(" "))
        tokens = tokenize_line(stripped, idx)
        if not tokens:
            continue
        if pending is not None:
            pending.tokens.extend(tokens)
        else:
            pending = Line(indent, tokens, idx)
        depth += sum(1 for t in tokens if t.type == "lparen")
        depth -= sum(1 for t in tokens if t.type == "rparen")
        if depth < 0:
            tok = next(t for t in tokens if t.type == "rparen")
            raise ParseError(tok.line, tok.col, "unbalanced ')'", ("(",))
        if depth == 0:
            out.append(pending)
            pending = None
    if pending is not None:
        last = pending.tokens[-1]
        raise ParseError(last.line, last.col, "unexpected end of input "
                         "inside expression", (")",))
    return out


class _LineParser:
    """Turns one folded line's token list into words and an s-expression."""

    def __init__(self, tokens: list[Token], line_no: int):
        self.tokens = tokens
        self.i = 0
        self.line_no = line_no

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            raise ParseError(self.line_no,
                             (last.col + 1) if last else 1,
                             "unexpected end of line")
        self.i += 1
        return tok

    def parse_statement(self) -> Statement:
        words = []
        expr = None
        block_marker = False
        while (tok := self.peek()) is not None:
            if tok.type == "lparen":
                expr = self.parse_sexpr()
                continue
            if tok.type == "colon":
                self.next()
                if self.peek() is not None:
                    bad = self.peek()
                    raise ParseError(bad.line, bad.col,
                                     "':' must end the line", ("newline",))
                block_marker = True
                break
            if tok.type == "rparen":
                raise ParseError(tok.line, tok.col, "unbalanced ')'", ("(",))
            if tok.type == "equals":
                raise ParseError(tok.line, tok.col,
                                 "'=' is only valid inside expressions")
            words.append(self.next().value)
        stmt = Statement(words, self.line_no, expr=expr)
        stmt.block_marker = block_marker
        return stmt

    def parse_sexpr(self) -> SNode:
        open_tok = self.next()
        assert open_tok.type == "lparen"
        head_tok = self.peek()
        if head_tok is None or head_tok.type != "ident":
            where = head_tok or open_tok
            raise ParseError(where.line, where.col,
                             "expression must start with a form name",
                             ("identifier",))
        self.next()
        node = SNode(head=head_tok.value, line=head_tok.line, col=head_tok.col)
        while True:
            tok = self.peek()
            if tok is None:
                raise ParseError(self.line_no, (self.tokens[-1].col + 1),
                                 "unexpected end of input inside expression",
                                 (")",))
            if tok.type == "rparen":
                self.next()
                return node
            if tok.type == "lparen":
                node.pos.append(self.parse_sexpr())
                continue
            if tok.type in ("ident", "number", "var", "bool", "range"):
                nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
                if tok.type == "ident" and nxt is not None and nxt.type == "equals":
                    key_tok = self.next()
                    self.next()  # '='
                    val_tok = self.peek()
                    if val_tok is None:
                        raise ParseError(tok.line, tok.col + len(str(tok.value)) + 1,
                                         "missing value after '='",
                                         ("value",))
                    if val_tok.type == "lparen":
                        node.kw[key_tok.value] = self.parse_sexpr()
                    elif val_tok.type in ("ident", "number", "var", "bool"):
                        node.kw[key_tok.value] = self.next().value
                    else:
                        raise ParseError(val_tok.line, val_tok.col,
                                         "bad value after '='", ("value",))
                    continue
                node.pos.append(self.next().value)
                continue
            raise ParseError(tok.line, tok.col,
                             f"unexpected {tok.type} inside expression",
                             (")", "identifier", "number"))


def _build_blocks(lines: list[Line], start: int, indent: int):
    """Group statements by indentation, attaching deeper lines as blocks."""
    statements = []
    i = start
    while i < len(lines):
        line = lines[i]
        if line.indent < indent:
            break
        if line.indent > indent:
            raise ParseError(line.line_no, line.indent + 1,
                             "unexpected indentation")
        parser = _LineParser(line.tokens, line.line_no)
        stmt = parser.parse_statement()
        i += 1
        if getattr(stmt, "block_marker", False):
            if i < len(lines) and lines[i].indent > indent:
                stmt.block, i = _build_blocks(lines, i, lines[i].indent)
            else:
                stmt.block = []
        statements.append(stmt)
    return statements, i


def parse(text: str) -> ScenarioDef:
    lines = _physical_lines(text)
    top, consumed = _build_blocks(lines, 0, lines[0].indent if lines else 0)
    if consumed != len(lines):
        stray = lines[consumed]
        raise ParseError(stray.line_no, 1, "unexpected indentation")
    scenario = ScenarioDef()
    seen = set()
    for stmt in top:
        if len(stmt.words) != 1 or stmt.words[0] not in SECTIONS or stmt.expr:
            raise ParseError(stmt.line, 1,
                             f"expected a section header, got {stmt.words!r}",
                             SECTIONS)
        if not getattr(stmt, "block_marker", False):
            raise ParseError(stmt.line, 1, "section header needs ':'", (":",))
        name = stmt.words[0]
        if name in seen:
            raise ParseError(stmt.line, 1, f"duplicate section {name}")
        seen.add(name)
        if name == "trees":
            for sub in stmt.block:
                if sub.words[:1] != ["tree"] or len(sub.words) != 2 or sub.expr is None:
                    raise ParseError(sub.line, 1,
                                     "expected: tree <name> (<expr>)", ("tree",))
                scenario.trees.append((sub.words[1], sub.expr, sub.line))
        else:
            scenario.section(name).extend(stmt.block)
    return scenario


# -- pretty printing ----------------------------------------------------------------


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Var):
        return f"${value.name}"
    if isinstance(value, tuple):  # cardinality range
        lo, hi = value
        return f"{lo}..{'n' if hi is None else hi}"
    return str(value)


def format_sexpr(node: SNode) -> str:
    parts = [node.head]
    for item in node.pos:
        parts.append(format_sexpr(item) if isinstance(item, SNode)
                     else format_value(item))
    for key in node.kw:
        val = node.kw[key]
        rendered = format_sexpr(val) if isinstance(val, SNode) else format_value(val)
        parts.append(f"{key}={rendered}")
    return "(" + " ".join(parts) + ")"


def format_statement(stmt: Statement, depth: int) -> list[str]:
    pad = "  " * depth
    line = pad + " ".join(format_value(w) for w in stmt.words)
    if stmt.expr is not None:
        line += " " + format_sexpr(stmt.expr)
    if stmt.block or getattr(stmt, "block_marker", False):
        line += ":"
    out = [line]
    for sub in stmt.block:
        out.extend(format_statement(sub, depth + 1))
    return out


def format_scenario(scenario: ScenarioDef) -> str:
    out = []
    for name in SECTIONS:
        if name == "trees":
            if scenario.trees:
                out.append("trees:")
                for tree_name, expr, _line in scenario.trees:
                    out.append(f"  tree {tree_name} {format_sexpr(expr)}")
            continue
        body = scenario.section(name)
        if body:
            out.append(f"{name}:")
            for stmt in body:
                out.extend(format_statement(stmt, 1))
    return "\n".join(out) + "\n"
