"""UIL abstract syntax, concrete text format, parser, printer, and validator.

UIL is a first-order statement language: a program is a `letrec` of
fixed-arity procedures over flat statements (assignments, memory reads
and writes, two-way branches, calls, and value returns).  The concrete
syntax is parenthesized prefix form; comments run from `;` to end of
line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

Operand = str | int  # identifier or signed 64-bit immediate

WORD_MIN = -(1 << 63)
WORD_MAX = (1 << 63) - 1

BINOPS = ("+", "-", "*")
RELATIONS = ("<", "<=", "=", ">=", ">")

RESERVED_NAME = "RET"
KEYWORDS = frozenset(
    {"letrec", "lambda", "set!", "mset!", "mref", "if", "begin", "return"}
)

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_?!-]*$")
_INT_RE = re.compile(r"^-?[0-9]+$")

Pos = tuple[int, int]  # (line, column), 1-based


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class BinExpr:
    op: str
    a: Operand
    b: Operand


@dataclass(frozen=True)
class MemRead:
    base: Operand
    index: Operand


Rhs = BinExpr | MemRead | Operand


@dataclass(frozen=True)
class Cmp:
    rel: str
    a: Operand
    b: Operand


@dataclass(frozen=True)
class Assign:
    dst: str
    rhs: Rhs
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class MemWrite:
    base: Operand
    index: Operand
    src: Operand
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class If:
    test: Cmp
    then_body: tuple["Statement", ...]
    else_body: tuple["Statement", ...]
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    callee: str
    args: tuple[Operand, ...]
    # `(set! x (f a b))` sugar: the call's result is bound to `dst`.
    dst: str | None = None
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ReturnValue:
    value: Operand
    pos: Pos | None = field(default=None, compare=False)


Statement = Assign | MemWrite | If | Call | ReturnValue


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple[str, ...]
    body: tuple[Statement, ...]
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    definitions: tuple[Definition, ...]
    body: tuple[Statement, ...]


@dataclass(frozen=True)
class Diagnostic:
    message: str
    pos: Pos | None = None

    def __str__(self) -> str:
        if self.pos is None:
            return self.message
        return f"{self.pos[0]}:{self.pos[1]}: {self.message}"


# ---------------------------------------------------------------------------
# Tokenizer / s-expression reader


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append(_Token(c, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


class _Sexpr:
    """List node of the reader; atoms are _Token."""

    def __init__(self, items: list, line: int, col: int):
        self.items = items
        self.line = line
        self.col = col


def _read_all(tokens: list[_Token]) -> list:
    forms = []
    i = 0

    def read(i: int):
        tok = tokens[i]
        if tok.text == "(":
            items = []
            j = i + 1
            while True:
                if j >= len(tokens):
                    raise ParseError("unclosed parenthesis", tok.line, tok.col)
                if tokens[j].text == ")":
                    return _Sexpr(items, tok.line, tok.col), j + 1
                item, j = read(j)
                items.append(item)
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        return tok, i + 1

    while i < len(tokens):
        form, i = read(i)
        forms.append(form)
    return forms


# ---------------------------------------------------------------------------
# Parser


def _err(node, message: str) -> ParseError:
    return ParseError(message, node.line, node.col)


def _is_list(node, head: str | None = None) -> bool:
    if not isinstance(node, _Sexpr):
        return False
    if head is None:
        return True
    return (
        len(node.items) > 0
        and isinstance(node.items[0], _Token)
        and node.items[0].text == head
    )


def _parse_operand(node) -> Operand:
    if isinstance(node, _Sexpr):
        raise _err(node, "expected an identifier or integer")
    text = node.text
    if _INT_RE.match(text):
        value = int(text)
        if not (WORD_MIN <= value <= WORD_MAX):
            raise _err(node, f"immediate {text} does not fit a 64-bit word")
        return value
    if _IDENT_RE.match(text) and text not in KEYWORDS:
        return text
    raise _err(node, f"bad operand {text!r}")


def _parse_ident(node, what: str) -> str:
    if isinstance(node, _Sexpr):
        raise _err(node, f"expected {what}")
    text = node.text
    if _IDENT_RE.match(text) and text not in KEYWORDS:
        return text
    raise _err(node, f"bad {what} {text!r}")


def _parse_rhs(node) -> Rhs | Call:
    if not isinstance(node, _Sexpr):
        return _parse_operand(node)
    if not node.items:
        raise _err(node, "empty expression")
    head = node.items[0]
    if isinstance(head, _Sexpr):
        raise _err(node, "malformed expression")
    if head.text in BINOPS:
        if len(node.items) != 3:
            raise _err(node, f"'{head.text}' takes two operands")
        return BinExpr(head.text, _parse_operand(node.items[1]), _parse_operand(node.items[2]))
    if head.text == "mref":
        if len(node.items) != 3:
            raise _err(node, "'mref' takes base and index")
        return MemRead(_parse_operand(node.items[1]), _parse_operand(node.items[2]))
    # call-with-result sugar
    callee = _parse_ident(head, "procedure name")
    args = tuple(_parse_operand(a) for a in node.items[1:])
    return Call(callee, args, pos=(node.line, node.col))


def _parse_body(nodes, where) -> tuple[Statement, ...]:
    if not nodes:
        raise _err(where, "empty statement body")
    return tuple(_parse_statement(n) for n in nodes)


def _parse_statement(node) -> Statement:
    if not isinstance(node, _Sexpr) or not node.items:
        raise _err(node if isinstance(node, _Sexpr) else node, "expected a statement")
    pos = (node.line, node.col)
    head = node.items[0]
    if isinstance(head, _Sexpr):
        raise _err(node, "malformed statement")
    kind = head.text

    if kind == "set!":
        if len(node.items) != 3:
            raise _err(node, "'set!' takes a destination and a value")
        dst = _parse_ident(node.items[1], "variable")
        rhs = _parse_rhs(node.items[2])
        if isinstance(rhs, Call):
            return Call(rhs.callee, rhs.args, dst=dst, pos=pos)
        return Assign(dst, rhs, pos=pos)

    if kind == "mset!":
        if len(node.items) != 4:
            raise _err(node, "'mset!' takes base, index, and source")
        return MemWrite(
            _parse_operand(node.items[1]),
            _parse_operand(node.items[2]),
            _parse_operand(node.items[3]),
            pos=pos,
        )

    if kind == "if":
        if len(node.items) != 4:
            raise _err(node, "'if' takes a test and two begin blocks")
        test_node = node.items[1]
        if not _is_list(test_node) or len(test_node.items) != 3:
            raise _err(node, "'if' test must be (rel a b)")
        rel = test_node.items[0]
        if isinstance(rel, _Sexpr) or rel.text not in RELATIONS:
            raise _err(test_node, "unknown relation in test")
        test = Cmp(
            rel.text,
            _parse_operand(test_node.items[1]),
            _parse_operand(test_node.items[2]),
        )
        branches = []
        for branch in node.items[2:4]:
            if not _is_list(branch, "begin"):
                raise _err(node, "'if' branches must be (begin ...) blocks")
            branches.append(tuple(_parse_statement(s) for s in branch.items[1:]))
        return If(test, branches[0], branches[1], pos=pos)

    if kind == "return":
        if len(node.items) != 2:
            raise _err(node, "'return' takes one value")
        return ReturnValue(_parse_operand(node.items[1]), pos=pos)

    if kind in KEYWORDS or kind in BINOPS or kind in RELATIONS:
        raise _err(node, f"'{kind}' is not a statement here")

    callee = _parse_ident(head, "procedure name")
    args = tuple(_parse_operand(a) for a in node.items[1:])
    return Call(callee, args, pos=pos)


def _parse_definition(node) -> Definition:
    # ((name (lambda (params...) stmt...)))
    if not _is_list(node) or len(node.items) != 2:
        raise _err(node, "definition must be (name (lambda (params...) stmt...))")
    name = _parse_ident(node.items[0], "procedure name")
    lam = node.items[1]
    if not _is_list(lam, "lambda") or len(lam.items) < 3:
        raise _err(node, "definition body must be a lambda with statements")
    params_node = lam.items[1]
    if not _is_list(params_node):
        raise _err(lam, "lambda parameter list must be parenthesized")
    params = tuple(_parse_ident(p, "parameter") for p in params_node.items)
    body = _parse_body(lam.items[2:], lam)
    return Definition(name, params, body, pos=(node.line, node.col))


def parse(text: str) -> Program:
    """Parse concrete UIL text into a Program.

    Raises ParseError with line/column on malformed input.
    """
    forms = _read_all(_tokenize(text))
    if len(forms) != 1:
        if not forms:
            raise ParseError("empty input", 1, 1)
        extra = forms[1]
        raise ParseError(
            "expected a single (letrec ...) form",
            getattr(extra, "line", 1),
            getattr(extra, "col", 1),
        )
    top = forms[0]
    if not _is_list(top, "letrec") or len(top.items) < 2:
        node = top if isinstance(top, _Sexpr) else _Sexpr([], 1, 1)
        raise _err(node, "program must be (letrec (definitions...) stmt...)")
    defs_node = top.items[1]
    if not _is_list(defs_node):
        raise _err(top, "letrec definitions must be parenthesized")
    definitions = tuple(_parse_definition(d) for d in defs_node.items)
    seen = set()
    for d in definitions:
        if d.name in seen:
            raise ParseError(f"duplicate definition of '{d.name}'", d.pos[0], d.pos[1])
        seen.add(d.name)
    body = _parse_body(top.items[2:], top)
    return Program(definitions, body)


# ---------------------------------------------------------------------------
# Pretty printer (canonical form: one statement per line, two-space indent)


def _fmt_operand(v: Operand) -> str:
    return str(v)


def _fmt_rhs(rhs: Rhs) -> str:
    if isinstance(rhs, BinExpr):
        return f"({rhs.op} {_fmt_operand(rhs.a)} {_fmt_operand(rhs.b)})"
    if isinstance(rhs, MemRead):
        return f"(mref {_fmt_operand(rhs.base)} {_fmt_operand(rhs.index)})"
    return _fmt_operand(rhs)


def _fmt_statement(s: Statement, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(s, Assign):
        out.append(f"{pad}(set! {s.dst} {_fmt_rhs(s.rhs)})")
    elif isinstance(s, MemWrite):
        out.append(
            f"{pad}(mset! {_fmt_operand(s.base)} {_fmt_operand(s.index)} {_fmt_operand(s.src)})"
        )
    elif isinstance(s, If):
        t = s.test
        out.append(f"{pad}(if ({t.rel} {_fmt_operand(t.a)} {_fmt_operand(t.b)})")
        out.append(f"{pad}  (begin")
        for sub in s.then_body:
            _fmt_statement(sub, indent + 2, out)
        out[-1] += ")" if s.then_body else ""
        if not s.then_body:
            out[-1] = f"{pad}  (begin)"
        out.append(f"{pad}  (begin")
        for sub in s.else_body:
            _fmt_statement(sub, indent + 2, out)
        if s.else_body:
            out[-1] += "))"
        else:
            out[-1] = f"{pad}  (begin))"
    elif isinstance(s, Call):
        call = f"({s.callee}" + "".join(f" {_fmt_operand(a)}" for a in s.args) + ")"
        if s.dst is not None:
            out.append(f"{pad}(set! {s.dst} {call})")
        else:
            out.append(f"{pad}{call}")
    elif isinstance(s, ReturnValue):
        out.append(f"{pad}(return {_fmt_operand(s.value)})")
    else:  # pragma: no cover
        raise TypeError(f"unknown statement {s!r}")


def format_program(p: Program) -> str:
    out: list[str] = []
    if p.definitions:
        out.append("(letrec")
        out.append("  (")
        for d in p.definitions:
            params = " ".join(d.params)
            out.append(f"   ({d.name} (lambda ({params})")
            for s in d.body:
                _fmt_statement(s, 3, out)
            out[-1] += "))"
        out[-1] += ")"
    else:
        out.append("(letrec ()")
    for s in p.body:
        _fmt_statement(s, 1, out)
    out[-1] += ")"
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validator


def _operand_vars(*operands: Operand) -> list[str]:
    return [v for v in operands if isinstance(v, str)]


def _check_defined(
    operands: list[str],
    defined: set[str],
    proc_names: set[str],
    pos: Pos | None,
    diags: list[Diagnostic],
) -> None:
    for v in operands:
        if v == RESERVED_NAME:
            diags.append(Diagnostic(f"'{RESERVED_NAME}' is a reserved name", pos))
        elif v in proc_names:
            diags.append(Diagnostic(f"procedure '{v}' used as a value", pos))
        elif v not in defined:
            diags.append(Diagnostic(f"variable '{v}' may be used before assignment", pos))


def _is_tail_form(s: Statement) -> bool:
    if isinstance(s, ReturnValue):
        return True
    if isinstance(s, Call):
        return s.dst is None
    if isinstance(s, If):
        return (
            bool(s.then_body)
            and bool(s.else_body)
            and _is_tail_form(s.then_body[-1])
            and _is_tail_form(s.else_body[-1])
        )
    return False


def _validate_body(
    body: tuple[Statement, ...],
    defined: set[str],
    arities: dict[str, int],
    where: str,
    diags: list[Diagnostic],
    tail: bool,
) -> set[str]:
    """Walk a statement sequence checking defined-before-use on all paths.

    Returns the set of variables definitely assigned after the sequence.
    """
    proc_names = set(arities)
    for idx, s in enumerate(body):
        is_tail = tail and idx == len(body) - 1
        if isinstance(s, Assign):
            rhs = s.rhs
            if isinstance(rhs, BinExpr):
                _check_defined(_operand_vars(rhs.a, rhs.b), defined, proc_names, s.pos, diags)
            elif isinstance(rhs, MemRead):
                _check_defined(
                    _operand_vars(rhs.base, rhs.index), defined, proc_names, s.pos, diags
                )
            else:
                _check_defined(_operand_vars(rhs), defined, proc_names, s.pos, diags)
            if s.dst == RESERVED_NAME:
                diags.append(Diagnostic(f"cannot assign reserved name '{RESERVED_NAME}'", s.pos))
            if s.dst in proc_names:
                diags.append(Diagnostic(f"cannot assign procedure name '{s.dst}'", s.pos))
            defined = defined | {s.dst}
        elif isinstance(s, MemWrite):
            _check_defined(
                _operand_vars(s.base, s.index, s.src), defined, proc_names, s.pos, diags
            )
        elif isinstance(s, If):
            _check_defined(
                _operand_vars(s.test.a, s.test.b), defined, proc_names, s.pos, diags
            )
            if not s.then_body or not s.else_body:
                diags.append(Diagnostic("'if' branches must be nonempty", s.pos))
            then_defined = _validate_body(s.then_body, set(defined), arities, where, diags, is_tail)
            else_defined = _validate_body(s.else_body, set(defined), arities, where, diags, is_tail)
            defined = then_defined & else_defined
        elif isinstance(s, Call):
            _check_defined(_operand_vars(*s.args), defined, proc_names, s.pos, diags)
            if s.callee not in arities:
                diags.append(Diagnostic(f"call to undefined procedure '{s.callee}'", s.pos))
            elif len(s.args) != arities[s.callee]:
                diags.append(
                    Diagnostic(
                        f"'{s.callee}' takes {arities[s.callee]} argument(s), got {len(s.args)}",
                        s.pos,
                    )
                )
            if s.dst is not None:
                if s.dst == RESERVED_NAME:
                    diags.append(
                        Diagnostic(f"cannot assign reserved name '{RESERVED_NAME}'", s.pos)
                    )
                if is_tail:
                    diags.append(
                        Diagnostic("result-binding call cannot sit in tail position", s.pos)
                    )
                defined = defined | {s.dst}
        elif isinstance(s, ReturnValue):
            _check_defined(_operand_vars(s.value), defined, proc_names, s.pos, diags)
            if not is_tail:
                diags.append(Diagnostic("return outside tail position", s.pos))
    return defined


def validate(p: Program) -> list[Diagnostic]:
    """Check program invariants; an empty list means the program is valid."""
    diags: list[Diagnostic] = []
    arities: dict[str, int] = {}
    for d in p.definitions:
        if d.name == RESERVED_NAME:
            diags.append(Diagnostic(f"'{RESERVED_NAME}' is a reserved name", d.pos))
        arities[d.name] = len(d.params)
        if len(set(d.params)) != len(d.params):
            diags.append(Diagnostic(f"duplicate parameter in '{d.name}'", d.pos))
        if RESERVED_NAME in d.params:
            diags.append(Diagnostic(f"'{RESERVED_NAME}' is a reserved name", d.pos))

    for d in p.definitions:
        if not d.body:
            diags.append(Diagnostic(f"procedure '{d.name}' has an empty body", d.pos))
            continue
        if not _is_tail_form(d.body[-1]):
            diags.append(
                Diagnostic(f"procedure '{d.name}' must end in a return or tail call", d.pos)
            )
        _validate_body(d.body, set(d.params), arities, d.name, diags, tail=True)

    if not p.body:
        diags.append(Diagnostic("program body is empty", None))
    else:
        if not _is_tail_form(p.body[-1]):
            diags.append(
                Diagnostic("program body must end in a return or tail call", p.body[-1].pos)
            )
        _validate_body(p.body, set(), arities, "<entry>", diags, tail=True)
    return diags
