"""Backward liveness analysis: live-range endings and next-use positions.

One backward sweep per procedure body annotates every statement with the
set of variables whose live range ends there, and records, for every
program point, where each live variable is referenced next.  No
interference graph is built.  UIL has no loop form, so branch joins need
no fixpoint iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .uil import (
    Assign,
    BinExpr,
    Call,
    If,
    MemRead,
    MemWrite,
    Program,
    ReturnValue,
    Statement,
    format_program,
)

INF = math.inf


@dataclass(frozen=True)
class AnnotatedStatement:
    stmt: Statement
    point: int
    ends: frozenset[str]
    # Variables referenced (before redefinition) strictly after this
    # statement, on some path.  For an If this is join liveness.
    live_after: frozenset[str]
    then_body: tuple["AnnotatedStatement", ...] = ()
    else_body: tuple["AnnotatedStatement", ...] = ()
    # live sets on entry to each branch; a variable used in only one
    # branch has no statement to carry its ending on the other path
    then_live: frozenset[str] = frozenset()
    else_live: frozenset[str] = frozenset()


class NextUseTable:
    """Maps (program point, variable) to the next reference position.

    The entry for (p, v) is the first point q > p at which the value v
    holds at p is referenced on some path; infinity when that value is
    dead (never referenced again, or redefined before every reference).
    Unknown variables are reported dead.
    """

    def __init__(self) -> None:
        self._after: dict[int, dict[str, float]] = {}

    def next_use(self, point: int, var: str) -> float:
        return self._after.get(point, {}).get(var, INF)

    def _record(self, point: int, uses: dict[str, float]) -> None:
        self._after[point] = dict(uses)


def next_use(table: NextUseTable, point: int, var: str) -> float:
    return table.next_use(point, var)


@dataclass(frozen=True)
class AnnotatedProc:
    name: str
    params: tuple[str, ...]
    body: tuple[AnnotatedStatement, ...]
    table: NextUseTable = field(compare=False)
    # parameters never referenced at all have no ending to record
    entry_live: frozenset[str] = frozenset()


@dataclass(frozen=True)
class AnnotatedProgram:
    program: Program
    entry: tuple[AnnotatedStatement, ...]
    entry_table: NextUseTable = field(compare=False)
    procs: tuple[AnnotatedProc, ...] = ()


def stmt_refs(s: Statement) -> list[str]:
    """Variables (and callee names) referenced by a statement itself."""
    if isinstance(s, Assign):
        rhs = s.rhs
        if isinstance(rhs, BinExpr):
            ops = [rhs.a, rhs.b]
        elif isinstance(rhs, MemRead):
            ops = [rhs.base, rhs.index]
        else:
            ops = [rhs]
        return [v for v in ops if isinstance(v, str)]
    if isinstance(s, MemWrite):
        return [v for v in (s.base, s.index, s.src) if isinstance(v, str)]
    if isinstance(s, If):
        return [v for v in (s.test.a, s.test.b) if isinstance(v, str)]
    if isinstance(s, Call):
        # The callee name counts as a reference and shows up in ending sets.
        return [s.callee] + [v for v in s.args if isinstance(v, str)]
    if isinstance(s, ReturnValue):
        return [s.value] if isinstance(s.value, str) else []
    raise TypeError(f"unknown statement {s!r}")


def stmt_defs(s: Statement) -> list[str]:
    if isinstance(s, Assign):
        return [s.dst]
    if isinstance(s, Call) and s.dst is not None:
        return [s.dst]
    return []


def _number(stmts: tuple[Statement, ...], counter: list[int]) -> list:
    """Pre-order numbering skeleton: (stmt, point, then_skel, else_skel)."""
    skeleton = []
    for s in stmts:
        point = counter[0]
        counter[0] += 1
        if isinstance(s, If):
            then_skel = _number(s.then_body, counter)
            else_skel = _number(s.else_body, counter)
            skeleton.append((s, point, then_skel, else_skel))
        else:
            skeleton.append((s, point, None, None))
    return skeleton


def _annotate_body(
    skeleton: list, cont: dict[str, float], table: NextUseTable
) -> tuple[tuple[AnnotatedStatement, ...], dict[str, float]]:
    """Backward walk; `cont` maps live variables to their next reference.

    Returns the annotated statements and the map holding at body entry.
    A variable's entry is removed when a definition kills it, so the key
    set of the map is exactly the live set.
    """
    annotated: list[AnnotatedStatement] = []
    uses = dict(cont)
    for s, point, then_skel, else_skel in reversed(skeleton):
        if isinstance(s, If):
            then_body, then_uses = _annotate_body(then_skel, uses, table)
            else_body, else_uses = _annotate_body(else_skel, uses, table)
            after = _merge_min(then_uses, else_uses)
            table._record(point, after)
            live_after = frozenset(uses)  # join liveness
            live_out = set(after)
            before = dict(after)
            for v in stmt_refs(s):
                before[v] = min(before.get(v, INF), point)
            ends = frozenset(set(before) - live_out)
            annotated.append(
                AnnotatedStatement(
                    s,
                    point,
                    ends,
                    live_after,
                    tuple(then_body),
                    tuple(else_body),
                    frozenset(then_uses),
                    frozenset(else_uses),
                )
            )
            uses = before
        else:
            table._record(point, uses)
            live_after = frozenset(uses)
            live_out = set(uses)
            before = dict(uses)
            defs = stmt_defs(s)
            for v in defs:
                before.pop(v, None)
            for v in stmt_refs(s):
                before[v] = min(before.get(v, INF), point)
            # Endings: live into the statement (or defined by it) but not
            # live after it.  A dead definition ends immediately.
            ends = frozenset((set(before) | set(defs)) - live_out)
            annotated.append(AnnotatedStatement(s, point, ends, live_after))
            uses = before
    annotated.reverse()
    return tuple(annotated), uses


def _merge_min(a: dict[str, float], b: dict[str, float]) -> dict[str, float]:
    merged = dict(a)
    for v, q in b.items():
        merged[v] = min(merged.get(v, INF), q)
    return merged


def annotate(p: Program) -> AnnotatedProgram:
    """Annotate a validated program with ending sets and next-use tables.

    Each procedure body (and the entry body) is numbered independently in
    pre-order, branches then-before-else.
    """
    procs = []
    for d in p.definitions:
        table = NextUseTable()
        skeleton = _number(d.body, [0])
        body, entry_uses = _annotate_body(skeleton, {}, table)
        procs.append(
            AnnotatedProc(d.name, d.params, body, table, frozenset(entry_uses))
        )
    entry_table = NextUseTable()
    skeleton = _number(p.body, [0])
    entry, _ = _annotate_body(skeleton, {}, entry_table)
    return AnnotatedProgram(p, entry, entry_table, tuple(procs))


def annotate_statements(stmts: tuple[Statement, ...]) -> tuple[
    tuple[AnnotatedStatement, ...], NextUseTable
]:
    """Annotate a bare statement sequence (a body fragment)."""
    table = NextUseTable()
    skeleton = _number(stmts, [0])
    body, _ = _annotate_body(skeleton, {}, table)
    return body, table


def _fmt_ends(ends: frozenset[str]) -> str:
    return "{" + ", ".join(sorted(ends)) + "}"


def dump_annotated(body: tuple[AnnotatedStatement, ...], indent: int = 0) -> str:
    """Debug listing: each statement suffixed with its ending set."""
    lines: list[str] = []
    _dump_into(body, indent, lines)
    return "\n".join(lines)


def _dump_into(body, indent: int, lines: list[str]) -> None:
    from .uil import _fmt_statement  # canonical statement text

    pad = "  " * indent
    for a in body:
        if isinstance(a.stmt, If):
            t = a.stmt.test
            lines.append(f"{pad}(if ({t.rel} {t.a} {t.b}), {_fmt_ends(a.ends)}")
            lines.append(f"{pad}  then:")
            _dump_into(a.then_body, indent + 2, lines)
            lines.append(f"{pad}  else:")
            _dump_into(a.else_body, indent + 2, lines)
        else:
            buf: list[str] = []
            _fmt_statement(a.stmt, 0, buf)
            lines.append(f"{pad}{buf[0]}, {_fmt_ends(a.ends)}")


def max_live(body: tuple[AnnotatedStatement, ...]) -> int:
    """Peak simultaneous liveness: live-through plus defined, per statement."""
    peak = 0
    for a in _walk(body):
        live = set(a.live_after) | set(stmt_refs(a.stmt)) | set(stmt_defs(a.stmt))
        peak = max(peak, len(live))
    return peak


def _walk(body):
    for a in body:
        yield a
        yield from _walk(a.then_body)
        yield from _walk(a.else_body)


def walk_statements(body: tuple[AnnotatedStatement, ...]):
    """Iterate annotated statements in pre-order, branches included."""
    return _walk(body)
