"""Executable semantics: target simulator, reference interpreter, checkers.

The simulator runs target instructions over registers, a frame-pointer
relative stack, and a flat word heap, counting register-memory traffic
as it goes.  The reference interpreter gives UIL programs their meaning
directly, environment style.  Agreement between the two on the same
observation (return value plus ordered heap writes) is the correctness
criterion for an allocation; an exhaustive eviction-choice search over
small straight-line programs provides a lower bound that the default
replacement policy is expected to meet.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .analysis import (
    AnnotatedProgram,
    AnnotatedStatement,
    stmt_defs,
    stmt_refs,
    walk_statements,
)
from .isa import (
    BinOpInst,
    CondJump,
    FrameAdjust,
    Halt,
    Inst,
    Jump,
    LabelDef,
    Load,
    LoadImm,
    LoadLabel,
    MemLoad,
    MemStore,
    Move,
    Store,
    TargetProgram,
)
from .model import MachineConfig, Reg
from .uil import Assign, BinExpr, Call, Cmp, If, MemRead, MemWrite, Program, ReturnValue

_WORD_MASK = (1 << 64) - 1
_SIGN_BIT = 1 << 63

DEFAULT_HEAP_WORDS = 64


def wrap64(v: int) -> int:
    v &= _WORD_MASK
    return v - (1 << 64) if v & _SIGN_BIT else v


def _binop(op: str, a: int, b: int) -> int:
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    raise MachineFault(f"unknown operator {op!r}")


def _compare(rel: str, a: int, b: int) -> bool:
    if rel == "<":
        return a < b
    if rel == "<=":
        return a <= b
    if rel == "=":
        return a == b
    if rel == ">=":
        return a >= b
    if rel == ">":
        return a > b
    raise MachineFault(f"unknown relation {rel!r}")


class MachineFault(Exception):
    pass


class OutOfFuel(Exception):
    pass


@dataclass(frozen=True)
class Observation:
    value: int
    writes: tuple[tuple[int, int], ...]


@dataclass
class TrafficStats:
    static_loads: int = 0
    static_stores: int = 0
    static_moves: int = 0
    dynamic_loads: int = 0
    dynamic_stores: int = 0
    dynamic_moves: int = 0
    instructions: int = 0
    steps: int = 0
    call_rounds: int = 0  # completed non-tail call frame round-trips

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def default_heap(size: int = DEFAULT_HEAP_WORDS) -> list[int]:
    return [0] * size


def heap_from_seed(seed: int, size: int = DEFAULT_HEAP_WORDS) -> list[int]:
    rng = random.Random(seed)
    return [rng.randrange(-(1 << 31), 1 << 31) for _ in range(size)]


# ---------------------------------------------------------------------------
# Target machine


class _Machine:
    def __init__(self, insts: list[Inst], cfg: MachineConfig, heap: list[int]):
        self.insts = insts
        self.cfg = cfg
        self.regs = [0] * cfg.registers
        self.fp = 0
        self.stack: list[int] = []
        self.heap = heap
        self.pc = 0
        self.writes: list[tuple[int, int]] = []
        self.stats = TrafficStats()
        self._fp_checkpoints: list[int] = []

        self.labels: list[str] = []
        self.label_pc: dict[str, int] = {}
        self.label_ordinal: dict[str, int] = {}
        for i, inst in enumerate(insts):
            if isinstance(inst, LabelDef):
                if inst.label in self.label_pc:
                    raise MachineFault(f"duplicate label {inst.label}")
                self.label_ordinal[inst.label] = len(self.labels)
                self.label_pc[inst.label] = i
                self.labels.append(inst.label)

        self.stats.static_loads = sum(1 for i in insts if isinstance(i, Load))
        self.stats.static_stores = sum(1 for i in insts if isinstance(i, Store))
        self.stats.static_moves = sum(1 for i in insts if isinstance(i, Move))
        self.stats.instructions = len(insts)

    def _reg(self, r: int) -> int:
        if not 0 <= r < self.cfg.registers:
            raise MachineFault(f"register r{r} out of range")
        return self.regs[r]

    def _set_reg(self, r: int, v: int) -> None:
        if not 0 <= r < self.cfg.registers:
            raise MachineFault(f"register r{r} out of range")
        self.regs[r] = v

    def _src(self, s) -> int:
        return self._reg(s.i) if isinstance(s, Reg) else s

    def _slot_index(self, slot: int) -> int:
        if slot < 0:
            raise MachineFault(f"negative frame slot fv{slot}")
        return self.fp + slot

    def _read_slot(self, slot: int) -> int:
        idx = self._slot_index(slot)
        if idx >= len(self.stack):
            self.stack.extend([0] * (idx + 1 - len(self.stack)))
        return self.stack[idx]

    def _write_slot(self, slot: int, v: int) -> None:
        idx = self._slot_index(slot)
        if idx >= len(self.stack):
            self.stack.extend([0] * (idx + 1 - len(self.stack)))
        self.stack[idx] = v

    def _heap_addr(self, base: int, index: int) -> int:
        addr = base + index
        if not 0 <= addr < len(self.heap):
            raise MachineFault(f"heap access out of range: {base}+{index}")
        return addr

    def _goto(self, label: str) -> None:
        if label not in self.label_pc:
            raise MachineFault(f"jump to unknown label {label}")
        self.pc = self.label_pc[label]

    def run(self, fuel: int) -> Observation:
        while True:
            if self.pc >= len(self.insts):
                raise MachineFault("execution ran off the end of the program")
            if fuel <= 0:
                raise OutOfFuel("instruction budget exhausted")
            fuel -= 1
            inst = self.insts[self.pc]
            self.pc += 1
            self.stats.steps += 1
            if isinstance(inst, Halt):
                return Observation(self.regs[self.cfg.ret_val_reg], tuple(self.writes))
            self._step(inst)

    def _step(self, inst: Inst) -> None:
        if isinstance(inst, LabelDef):
            return
        if isinstance(inst, Move):
            self._set_reg(inst.dst, self._reg(inst.src))
            self.stats.dynamic_moves += 1
        elif isinstance(inst, LoadImm):
            self._set_reg(inst.dst, inst.imm)
        elif isinstance(inst, Load):
            self._set_reg(inst.dst, self._read_slot(inst.slot))
            self.stats.dynamic_loads += 1
        elif isinstance(inst, Store):
            self._write_slot(inst.slot, self._reg(inst.src))
            self.stats.dynamic_stores += 1
        elif isinstance(inst, BinOpInst):
            self._set_reg(inst.dst, _binop(inst.op, self._src(inst.a), self._src(inst.b)))
        elif isinstance(inst, MemLoad):
            addr = self._heap_addr(self._src(inst.base), self._src(inst.index))
            self._set_reg(inst.dst, self.heap[addr])
        elif isinstance(inst, MemStore):
            addr = self._heap_addr(self._src(inst.base), self._src(inst.index))
            value = self._src(inst.src)
            self.heap[addr] = value
            self.writes.append((addr, value))
        elif isinstance(inst, CondJump):
            if _compare(inst.rel, self._src(inst.a), self._src(inst.b)):
                self._goto(inst.target)
        elif isinstance(inst, Jump):
            if isinstance(inst.target, Reg):
                ordinal = self._reg(inst.target.i)
                if not 0 <= ordinal < len(self.labels):
                    raise MachineFault(f"indirect jump to bad label value {ordinal}")
                self._goto(self.labels[ordinal])
            else:
                self._goto(inst.target)
        elif isinstance(inst, LoadLabel):
            if inst.label not in self.label_ordinal:
                raise MachineFault(f"unknown label {inst.label}")
            self._set_reg(inst.dst, self.label_ordinal[inst.label])
        elif isinstance(inst, FrameAdjust):
            if inst.delta > 0:
                self._fp_checkpoints.append(self.fp)
                self.fp += inst.delta
            else:
                self.fp += inst.delta
                if self.fp < 0:
                    raise MachineFault("frame pointer went negative")
                if not self._fp_checkpoints:
                    raise MachineFault("frame release without matching advance")
                expected = self._fp_checkpoints.pop()
                if self.fp != expected:
                    raise MachineFault(
                        f"unbalanced frame adjustment: fp {self.fp} != {expected}"
                    )
                self.stats.call_rounds += 1
        else:  # pragma: no cover
            raise MachineFault(f"unknown instruction {inst!r}")


def run_target(
    prog: TargetProgram | list[Inst],
    cfg: MachineConfig,
    heap: list[int] | None = None,
    fuel: int = 10**6,
) -> tuple[Observation, TrafficStats]:
    """Execute until halt; the observation reads the return-value register."""
    insts = prog.flatten() if isinstance(prog, TargetProgram) else list(prog)
    machine = _Machine(insts, cfg, heap if heap is not None else default_heap())
    obs = machine.run(fuel)
    return obs, machine.stats


def run_insts(
    insts: list[Inst],
    cfg: MachineConfig,
    regs: list[int] | None = None,
    stack: list[int] | None = None,
    heap: list[int] | None = None,
    fuel: int = 10**5,
) -> _Machine:
    """Run a bare instruction list from a prepared state (test harness)."""
    machine = _Machine(list(insts) + [Halt()], cfg, heap if heap is not None else default_heap())
    if regs is not None:
        machine.regs = list(regs) + [0] * (cfg.registers - len(regs))
    if stack is not None:
        machine.stack = list(stack)
    machine.run(fuel)
    return machine


# ---------------------------------------------------------------------------
# Reference interpreter


@dataclass
class _Frame:
    env: dict[str, int]
    blocks: list[list]  # stack of [statements, next_index]
    ret_action: tuple[str, str] | None  # ("bind", name), ("discard", ""), None=result


def run_uil(p: Program, heap: list[int] | None = None, fuel: int = 10**6) -> Observation:
    """Environment-based interpretation of a validated program."""
    heap = heap if heap is not None else default_heap()
    defs = {d.name: d for d in p.definitions}
    writes: list[tuple[int, int]] = []

    def operand(env, v) -> int:
        if isinstance(v, int):
            return v
        if v not in env:
            raise MachineFault(f"unbound variable '{v}'")
        return env[v]

    def heap_addr(base: int, index: int) -> int:
        addr = base + index
        if not 0 <= addr < len(heap):
            raise MachineFault(f"heap access out of range: {base}+{index}")
        return addr

    frames = [_Frame({}, [[p.body, 0]], None)]
    while frames:
        fr = frames[-1]
        while fr.blocks and fr.blocks[-1][1] >= len(fr.blocks[-1][0]):
            fr.blocks.pop()
        if not fr.blocks:
            raise MachineFault("body ended without a return or tail call")
        block = fr.blocks[-1]
        s = block[0][block[1]]
        block[1] += 1
        if fuel <= 0:
            raise OutOfFuel("statement budget exhausted")
        fuel -= 1

        if isinstance(s, Assign):
            rhs = s.rhs
            if isinstance(rhs, BinExpr):
                value = _binop(rhs.op, operand(fr.env, rhs.a), operand(fr.env, rhs.b))
            elif isinstance(rhs, MemRead):
                value = heap[heap_addr(operand(fr.env, rhs.base), operand(fr.env, rhs.index))]
            else:
                value = operand(fr.env, rhs)
            fr.env[s.dst] = value
        elif isinstance(s, MemWrite):
            addr = heap_addr(operand(fr.env, s.base), operand(fr.env, s.index))
            value = operand(fr.env, s.src)
            heap[addr] = value
            writes.append((addr, value))
        elif isinstance(s, If):
            taken = _compare(s.test.rel, operand(fr.env, s.test.a), operand(fr.env, s.test.b))
            block = [s.then_body if taken else s.else_body, 0]
            fr.blocks.append(block)
        elif isinstance(s, Call):
            d = defs.get(s.callee)
            if d is None:
                raise MachineFault(f"call to unknown procedure '{s.callee}'")
            if len(d.params) != len(s.args):
                raise MachineFault(f"arity mismatch calling '{s.callee}'")
            env = {p_: operand(fr.env, a) for p_, a in zip(d.params, s.args)}
            exhausted = all(i >= len(b) for b, i in fr.blocks)
            if s.dst is None and exhausted:
                action = fr.ret_action
                frames.pop()
                frames.append(_Frame(env, [[d.body, 0]], action))
            else:
                action = ("bind", s.dst) if s.dst is not None else ("discard", "")
                frames.append(_Frame(env, [[d.body, 0]], action))
        elif isinstance(s, ReturnValue):
            value = operand(fr.env, s.value)
            action = fr.ret_action
            frames.pop()
            if action is None:
                return Observation(value, tuple(writes))
            if action[0] == "bind":
                frames[-1].env[action[1]] = value
        else:  # pragma: no cover
            raise MachineFault(f"unknown statement {s!r}")
    raise MachineFault("program ended without producing a value")


# ---------------------------------------------------------------------------
# Differential equivalence


@dataclass
class EquivReport:
    ok: bool
    checked: int = 0
    detail: str = ""
    source_obs: Observation | None = None
    target_obs: Observation | None = None

    def __bool__(self) -> bool:
        return self.ok


def equivalent(
    p: Program,
    tp: TargetProgram,
    cfg: MachineConfig,
    heaps: list[list[int]] | None = None,
    fuel: int = 10**6,
) -> EquivReport:
    """Check that source and allocated program observe the same behavior.

    Runs both on each heap; reports the first diverging observation with
    both sides attached.
    """
    if heaps is None:
        heaps = [default_heap()]
    checked = 0
    for i, heap in enumerate(heaps):
        source = run_uil(p, list(heap), fuel)
        target, _ = run_target(tp, cfg, list(heap), fuel)
        checked += 1
        if source != target:
            return EquivReport(
                False,
                checked,
                f"divergence on heap #{i}: source {source.value} / {len(source.writes)} writes, "
                f"target {target.value} / {len(target.writes)} writes",
                source,
                target,
            )
    return EquivReport(True, checked)


# ---------------------------------------------------------------------------
# Exhaustive eviction-choice lower bound (straight-line programs)

ORACLE_MAX_STMTS = 10
ORACLE_MAX_VARS = 6
ORACLE_MAX_REGS = 3


def belady_oracle(body, R: int) -> int:
    """Minimum achievable dynamic load count over all eviction choices.

    Searches every victim decision at every pressure point of a single
    straight-line body, counting one load per register fill from the
    stack.  Guarded to small instances; raises ValueError beyond them.
    """
    if isinstance(body, AnnotatedProgram):
        if body.procs:
            raise ValueError("oracle handles single straight-line bodies only")
        body = body.entry
    steps: list[tuple[list[str], frozenset[str], str | None]] = []
    variables: set[str] = set()
    for a in body:
        if isinstance(a.stmt, (If, Call)):
            raise ValueError("oracle handles straight-line code only")
        reads = list(dict.fromkeys(stmt_refs(a.stmt)))
        defs = stmt_defs(a.stmt)
        variables.update(reads)
        variables.update(defs)
        steps.append((reads, a.ends, defs[0] if defs else None))
    if len(steps) > ORACLE_MAX_STMTS:
        raise ValueError(f"oracle bound exceeded: {len(steps)} statements")
    if len(variables) > ORACLE_MAX_VARS:
        raise ValueError(f"oracle bound exceeded: {len(variables)} variables")
    if R > ORACLE_MAX_REGS:
        raise ValueError(f"oracle bound exceeded: R={R}")

    memo: dict[tuple[int, frozenset[str]], int] = {}

    def per_stmt(i: int, resident: frozenset[str]) -> int:
        if i == len(steps):
            return 0
        key = (i, resident)
        if key in memo:
            return memo[key]
        reads, ends, dst = steps[i]
        if len(set(reads)) > R:
            raise ValueError(f"statement needs {len(set(reads))} registers, R={R}")

        def fill(j: int, res: frozenset[str]) -> int:
            if j == len(reads):
                return finish(res)
            v = reads[j]
            if v in res:
                return fill(j + 1, res)
            if len(res) < R:
                return 1 + fill(j + 1, res | {v})
            best = None
            for victim in sorted(res - set(reads)):
                cost = 1 + fill(j + 1, (res - {victim}) | {v})
                if best is None or cost < best:
                    best = cost
            if best is None:
                raise ValueError("operands alone exceed the register count")
            return best

        def finish(res: frozenset[str]) -> int:
            res = res - (ends - ({dst} if dst else set()))
            if dst is None:
                return per_stmt(i + 1, res)
            if dst in res:
                after = res
            elif len(res) < R:
                after = res | {dst}
            else:
                best = None
                for victim in sorted(res):
                    cost = per_stmt(i + 1, ((res - {victim}) | {dst}) - ({dst} & ends))
                    if best is None or cost < best:
                        best = cost
                return best
            if dst in ends:
                after = after - {dst}
            return per_stmt(i + 1, after)

        result = fill(0, resident)
        memo[key] = result
        return result

    return per_stmt(0, frozenset())


# ---------------------------------------------------------------------------
# Static pressure profile (which programs must allocate spill-free)


def spill_free_shape(ap: AnnotatedProgram, cfg: MachineConfig) -> bool:
    """True when no statement can force register-memory traffic.

    Requires peak liveness (plus the return address inside procedures)
    within the register count, all parameters and arguments within the
    argument registers, and no values live across a non-tail call: every
    call-live, the caller's return address included, must be saved.
    """
    proc_names = {d.name for d in ap.program.definitions}
    for d in ap.program.definitions:
        if len(d.params) > len(cfg.arg_regs):
            return False

    def body_ok(body: tuple[AnnotatedStatement, ...], in_proc: bool) -> bool:
        budget = cfg.registers - (1 if in_proc else 0)
        for a in walk_statements(body):
            live = (set(a.live_after) | set(stmt_refs(a.stmt)) | set(stmt_defs(a.stmt)))
            live -= proc_names
            if len(live) > budget:
                return False
            if isinstance(a.stmt, Call):
                if len(a.stmt.args) > len(cfg.arg_regs):
                    return False
        return _calls_ok(body, in_proc, tail=True)

    def _calls_ok(body, in_proc: bool, tail: bool) -> bool:
        for i, a in enumerate(body):
            last = i == len(body) - 1
            if isinstance(a.stmt, If):
                if not _calls_ok(a.then_body, in_proc, tail and last):
                    return False
                if not _calls_ok(a.else_body, in_proc, tail and last):
                    return False
            elif isinstance(a.stmt, Call):
                is_tail_call = tail and last and a.stmt.dst is None
                if is_tail_call:
                    continue
                if in_proc:
                    return False  # the return address is live across the call
                across = (set(a.live_after) - set(stmt_defs(a.stmt))) - proc_names
                if across:
                    return False
        return True

    if not body_ok(ap.entry, in_proc=False):
        return False
    for proc in ap.procs:
        if not body_ok(proc.body, in_proc=True):
            return False
    return True
