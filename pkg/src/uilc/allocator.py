"""Register allocation by forward abstract interpretation over models.

The allocator walks each annotated procedure body once, threading a
model through three primitive transformers:

* ``save``    - give variables a stack home (elided when already homed)
* ``load``    - bring variables into registers, evicting a victim chosen
                by the configured replacement policy when none are free
* ``shuffle`` - realize a set of simultaneous location-to-location moves,
                decomposed into paths and loops

Live-range splitting falls out of save/load: a variable may live in a
register, migrate to the stack under pressure, and come back into a
different register later.  Victim choice is a static analogue of cache
replacement; the default policy evicts the candidate whose next use is
furthest away.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analysis import (
    AnnotatedProgram,
    AnnotatedStatement,
    NextUseTable,
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
from .model import (
    RET,
    MachineConfig,
    Model,
    ModelError,
    Reg,
    Slot,
    initial_model,
)
from .uil import Assign, BinExpr, Call, If, MemRead, MemWrite, ReturnValue, _fmt_statement

POLICIES = ("furthest", "lifo", "fifo")

HALT_LABEL = ".halt"

Ctx = str  # "tail" | "nontail"


class AllocError(Exception):
    """Internal allocator invariant violation."""


class PressureError(Exception):
    """Register pressure exceeds the machine's register count."""

    def __init__(self, message: str, stmt: str | None = None, point: int | None = None):
        super().__init__(message)
        self.message = message
        self.stmt = stmt
        self.point = point

    def __str__(self) -> str:
        if self.stmt is not None:
            return f"{self.message} (at statement {self.point}: {self.stmt})"
        return self.message


@dataclass(frozen=True)
class LabelArg:
    """A label used as a move source (return addresses, halt continuation)."""

    label: str


MoveSrc = Reg | Slot | int | LabelArg
MoveDst = Reg | Slot


@dataclass
class TraceEntry:
    scope: str
    point: int
    stmt: str
    pre: str
    insts: list[Inst]
    post: str


# ---------------------------------------------------------------------------
# Primitive transformers


def save(m: Model, vs) -> tuple[Model, list[Inst]]:
    """Give each variable a stack home, in order.

    Variables that already have one are skipped with no instructions, so
    repeated saves are free.  Register bindings are kept: after a save
    the variable lives in both places.
    """
    insts: list[Inst] = []
    for v in vs:
        if not m.is_bound(v):
            raise ModelError(f"cannot save unbound variable '{v}'")
        if m.slot_of(v) is not None:
            continue
        s = m.free_slot()
        insts.append(Store(s, m.reg_of(v)))
        m = m.bind_slot(v, s)
    return m, insts


def pick_victim(
    m: Model,
    protected: frozenset[str] | set[str],
    table: NextUseTable,
    point: int,
    policy: str,
) -> str:
    """Choose the register-resident variable to evict.

    furthest: maximal next-use position, ties to the lowest register.
    lifo/fifo: most/least recently register-bound.
    """
    candidates = [(r, v) for v, r in m.register_residents() if v not in protected]
    if not candidates:
        raise PressureError("no evictable register: all residents are in use")
    if policy == "furthest":
        best_r, best_v = candidates[0]
        best_use = table.next_use(point, best_v)
        for r, v in candidates[1:]:
            use = table.next_use(point, v)
            if use > best_use:
                best_r, best_v, best_use = r, v, use
        return best_v
    if policy == "lifo":
        return max(candidates, key=lambda rv: m.bind_seq(rv[1]))[1]
    if policy == "fifo":
        return min(candidates, key=lambda rv: m.bind_seq(rv[1]))[1]
    raise ValueError(f"unknown policy {policy!r}")


def _pick_free(m: Model, var: str, cfg: MachineConfig, prefs: dict[str, int] | None) -> int | None:
    if prefs:
        r = prefs.get(var)
        if r is not None and r < cfg.registers and r not in m.regmap.values():
            return r
    return m.free_register(cfg)


def load(
    m: Model,
    vs,
    protected,
    table: NextUseTable,
    point: int,
    policy: str,
    cfg: MachineConfig,
    prefs: dict[str, int] | None = None,
) -> tuple[Model, list[Inst]]:
    """Bring each variable into a register, in order.

    Register-resident variables cost nothing.  Others are loaded from
    their slot into a free register, or into an evicted victim's
    register; the victim is saved first (for free when multi-homed).
    Neither the listed variables nor the protected set may be evicted.
    """
    vs = list(dict.fromkeys(vs))
    prot = frozenset(protected) | set(vs)
    needed = set(vs) | {v for v in prot if m.reg_of(v) is not None}
    if len(needed) > cfg.registers:
        raise PressureError(
            f"{len(needed)} values must be register-resident at once, "
            f"but the machine has {cfg.registers} register(s)"
        )
    insts: list[Inst] = []
    for v in vs:
        if m.reg_of(v) is not None:
            continue
        if not m.is_bound(v):
            raise ModelError(f"cannot load unbound variable '{v}'")
        r = _pick_free(m, v, cfg, prefs)
        if r is None:
            victim = pick_victim(m, prot, table, point, policy)
            m, saves = save(m, [victim])
            insts.extend(saves)
            r = m.reg_of(victim)
            m = m.unbind_reg(victim)
        insts.append(Load(r, m.slot_of(v)))
        m = m.bind_reg(v, r)
    return m, insts


# ---------------------------------------------------------------------------
# Parallel-move sequencing


def _loc_key(loc) -> tuple[int, int]:
    return (0, loc.i) if isinstance(loc, Reg) else (1, loc.i)


def _sequence_moves(
    moves: list[tuple[MoveSrc, MoveDst]],
    cfg: MachineConfig,
    pinned_regs=(),
    busy_slots=(),
) -> list[Inst]:
    """Emit instructions realizing the moves as if simultaneous.

    The mapping is broken into paths and loops.  A path of k locations
    costs k-1 single moves, emitted deepest destination first; each loop
    costs one extra instruction through a temporary (a free register
    when one exists, else a scratch stack slot).  Slot-to-slot legs
    route through a register temporary; when every register holds a
    needed value, one is borrowed around the leg.

    ``pinned_regs`` hold values that must survive the whole sequence;
    ``busy_slots`` are occupied frame slots scratch must avoid.
    """
    pending: dict[MoveDst, MoveSrc] = {}
    written: set[int] = set()
    identity_slots: set[int] = set()
    for src, dst in moves:
        if dst in pending:
            raise AllocError(f"overlapping shuffle destinations at {dst}")
        if src == dst:
            # already holds its final value; the location must survive
            if isinstance(dst, Reg):
                written.add(dst.i)
            else:
                identity_slots.add(dst.i)
            continue
        pending[dst] = src

    src_count: dict[MoveSrc, int] = {}
    for src in pending.values():
        if isinstance(src, (Reg, Slot)):
            src_count[src] = src_count.get(src, 0) + 1

    live_regs = set(pinned_regs) | {s.i for s in src_count if isinstance(s, Reg)}
    pending_dst_regs = {d.i for d in pending if isinstance(d, Reg)}
    used_slots = set(busy_slots) | identity_slots
    for loc in list(pending) + list(src_count):
        if isinstance(loc, Slot):
            used_slots.add(loc.i)

    insts: list[Inst] = []

    def fresh_slot() -> int:
        s = 0
        while s in used_slots:
            s += 1
        used_slots.add(s)
        return s

    def temp_reg() -> int | None:
        for r in range(cfg.registers):
            if r not in live_regs and r not in pending_dst_regs and r not in written:
                return r
        return None

    def value_into_reg(r: int, src: MoveSrc) -> Inst:
        if isinstance(src, Reg):
            return Move(r, src.i)
        if isinstance(src, Slot):
            return Load(r, src.i)
        if isinstance(src, LabelArg):
            return LoadLabel(r, src.label)
        return LoadImm(r, src)

    def emit_leg(dst: MoveDst, src: MoveSrc) -> None:
        if isinstance(dst, Reg):
            insts.append(value_into_reg(dst.i, src))
            return
        if isinstance(src, Reg):
            insts.append(Store(dst.i, src.i))
            return
        # value must pass through a register on its way to the slot
        t = temp_reg()
        if t is not None:
            insts.append(value_into_reg(t, src))
            insts.append(Store(dst.i, t))
            return
        # borrow: every register is needed; spill one around the leg
        b = 0
        keep = fresh_slot()
        insts.append(Store(keep, b))
        insts.append(value_into_reg(b, src))
        insts.append(Store(dst.i, b))
        insts.append(Load(b, keep))

    def consume(src: MoveSrc) -> None:
        if not isinstance(src, (Reg, Slot)):
            return
        src_count[src] -= 1
        if src_count[src] == 0:
            del src_count[src]
            if isinstance(src, Reg) and src.i not in pinned_regs:
                live_regs.discard(src.i)

    while pending:
        ready = [d for d in pending if src_count.get(d, 0) == 0]
        if ready:
            d = min(ready, key=_loc_key)
            s = pending.pop(d)
            emit_leg(d, s)
            consume(s)
            if isinstance(d, Reg):
                pending_dst_regs.discard(d.i)
                written.add(d.i)
                live_regs.add(d.i)
            continue
        # Every pending destination is still someone's source: a loop.
        # Park the entry value in a temporary and redirect its readers.
        d0 = min(pending, key=_loc_key)
        t = temp_reg()
        temp: MoveSrc = Reg(t) if t is not None else Slot(fresh_slot())
        emit_leg(temp, d0)
        if isinstance(temp, Reg):
            live_regs.add(temp.i)
        for dst, src in list(pending.items()):
            if src == d0:
                pending[dst] = temp
                src_count[temp] = src_count.get(temp, 0) + 1
                consume(d0)

    return insts


def shuffle(
    m: Model, moves: list[tuple[MoveSrc, MoveDst]], cfg: MachineConfig
) -> tuple[Model, list[Inst]]:
    """Realize simultaneous moves and rebind affected variables.

    Destinations must be pairwise distinct (sources may repeat).  The
    result model binds each moved variable to its destination(s);
    variables whose location was overwritten without a move lose that
    binding.
    """
    dsts = [d for _, d in moves]
    if len(set(dsts)) != len(dsts):
        raise AllocError("overlapping shuffle destinations")

    reg_owner = {r: v for v, r in m.regmap.items()}
    slot_owner = {s: v for v, s in m.stackmap.items()}

    def owner(loc: MoveSrc) -> str | None:
        if isinstance(loc, Reg):
            return reg_owner.get(loc.i)
        if isinstance(loc, Slot):
            return slot_owner.get(loc.i)
        return None

    moved: dict[str, list[MoveDst]] = {}
    for src, dst in moves:
        if src == dst:
            continue
        v = owner(src)
        if v is not None:
            moved.setdefault(v, []).append(dst)

    result = m
    # moved variables land exactly at their destinations; anything else
    # sitting at an overwritten location loses that binding
    result = result.drop(moved)
    for src, dst in moves:
        if src == dst:
            continue
        v = owner(dst)
        if v is not None and v not in moved:
            result = result.unbind_reg(v) if isinstance(dst, Reg) else result.unbind_slot(v)
    for v, dsts in moved.items():
        for dst in dsts:
            if isinstance(dst, Reg):
                result = result.bind_reg(v, dst.i)
            else:
                result = result.bind_slot(v, dst.i)

    insts = _sequence_moves(
        moves,
        cfg,
        pinned_regs=set(result.regmap.values()),
        busy_slots=set(m.stackmap.values()) | set(result.stackmap.values()),
    )
    return result, insts


# ---------------------------------------------------------------------------
# Compound transformers (dispatch on statement syntax)


class _LabelGen:
    def __init__(self) -> None:
        self.n = 0

    def fresh(self) -> str:
        label = f".L{self.n}"
        self.n += 1
        return label


def _stmt_text(stmt) -> str:
    buf: list[str] = []
    _fmt_statement(stmt, 0, buf)
    return buf[0]


class _BodyAllocator:
    """Allocates one procedure body (or the entry body), model threaded."""

    def __init__(
        self,
        cfg: MachineConfig,
        policy: str,
        table: NextUseTable,
        labels: _LabelGen,
        is_entry: bool,
        scope: str,
        trace: list[TraceEntry] | None = None,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.cfg = cfg
        self.policy = policy
        self.table = table
        self.labels = labels
        self.is_entry = is_entry
        self.scope = scope
        self.trace = trace
        self.prefs: dict[str, int] = {}
        self.need_halt = False

    # -- helpers -----------------------------------------------------------

    def _load(self, m: Model, vs, protected, point: int) -> tuple[Model, list[Inst]]:
        return load(m, vs, protected, self.table, point, self.policy, self.cfg, self.prefs)

    def _operand_value(self, m: Model, op) -> Reg | int:
        if isinstance(op, str):
            r = m.reg_of(op)
            if r is None:
                raise AllocError(f"operand '{op}' not register-resident")
            return Reg(r)
        return op

    def _dest_reg(self, m: Model, var: str, point: int) -> tuple[Model, list[Inst], int]:
        """Bind a freshly assigned variable to a register.

        Under pressure any resident may be evicted, operands of the
        current statement included: their registers are read before the
        destination is written, and the save keeps their value reachable.
        """
        insts: list[Inst] = []
        r = _pick_free(m, var, self.cfg, self.prefs)
        if r is None:
            victim = pick_victim(m, frozenset(), self.table, point, self.policy)
            m, saves = save(m, [victim])
            insts.extend(saves)
            r = m.reg_of(victim)
            m = m.unbind_reg(victim)
        m = m.bind_reg(var, r)
        return m, insts, r

    def _seq(self, moves, m: Model, pinned_regs=()) -> list[Inst]:
        return _sequence_moves(
            moves,
            self.cfg,
            pinned_regs=pinned_regs,
            busy_slots=set(m.stackmap.values()),
        )

    # -- statement dispatch --------------------------------------------------

    def run(self, body, m: Model, ctx: Ctx) -> tuple[list[Inst], Model]:
        insts: list[Inst] = []
        last = len(body) - 1
        for i, a in enumerate(body):
            stmt_ctx = ctx if i == last else "nontail"
            new_insts, m = self.stmt(a, m, stmt_ctx)
            insts.extend(new_insts)
        return insts, m

    def stmt(self, a: AnnotatedStatement, m: Model, ctx: Ctx) -> tuple[list[Inst], Model]:
        pre = m.dump() if self.trace is not None else ""
        try:
            s = a.stmt
            if isinstance(s, Assign):
                insts, m2 = self._assign(a, m)
            elif isinstance(s, MemWrite):
                insts, m2 = self._memwrite(a, m)
            elif isinstance(s, If):
                insts, m2 = self._if(a, m, ctx)
            elif isinstance(s, Call):
                insts, m2 = self._call(a, m, ctx)
            elif isinstance(s, ReturnValue):
                insts, m2 = self._return(a, m)
            else:  # pragma: no cover
                raise AllocError(f"unknown statement {s!r}")
        except PressureError as e:
            if e.stmt is None:
                e.stmt = _stmt_text(a.stmt)
                e.point = a.point
            raise
        if self.trace is not None:
            self.trace.append(
                TraceEntry(self.scope, a.point, _stmt_text(a.stmt), pre, insts, m2.dump())
            )
        return insts, m2

    def _assign(self, a: AnnotatedStatement, m: Model) -> tuple[list[Inst], Model]:
        s = a.stmt
        rhs = s.rhs
        if isinstance(rhs, BinExpr):
            ops = [rhs.a, rhs.b]
        elif isinstance(rhs, MemRead):
            ops = [rhs.base, rhs.index]
        else:
            ops = [rhs]
        opvars = [o for o in ops if isinstance(o, str)]
        m1, insts = self._load(m, opvars, frozenset(opvars), a.point)
        vals = [self._operand_value(m1, o) for o in ops]

        m2 = m1.drop(a.ends - {s.dst})
        m2 = m2.drop({s.dst})  # implicit renaming: the old binding dies here
        m2, evict_insts, d = self._dest_reg(m2, s.dst, a.point)
        insts.extend(evict_insts)

        if isinstance(rhs, BinExpr):
            insts.append(BinOpInst(rhs.op, d, vals[0], vals[1]))
        elif isinstance(rhs, MemRead):
            insts.append(MemLoad(d, vals[0], vals[1]))
        elif isinstance(rhs, str):
            if vals[0].i != d:
                insts.append(Move(d, vals[0].i))
        else:
            insts.append(LoadImm(d, rhs))

        if s.dst in a.ends:  # dead destination: never occupy a register
            m2 = m2.drop({s.dst})
        return insts, m2

    def _memwrite(self, a: AnnotatedStatement, m: Model) -> tuple[list[Inst], Model]:
        s = a.stmt
        ops = [s.base, s.index, s.src]
        opvars = [o for o in ops if isinstance(o, str)]
        m1, insts = self._load(m, opvars, frozenset(opvars), a.point)
        vals = [self._operand_value(m1, o) for o in ops]
        insts.append(MemStore(vals[0], vals[1], vals[2]))
        return insts, m1.drop(a.ends)

    def _if(self, a: AnnotatedStatement, m: Model, ctx: Ctx) -> tuple[list[Inst], Model]:
        s = a.stmt
        testvars = [o for o in (s.test.a, s.test.b) if isinstance(o, str)]
        m1, insts = self._load(m, testvars, frozenset(testvars), a.point)
        va = self._operand_value(m1, s.test.a)
        vb = self._operand_value(m1, s.test.b)
        m1 = m1.drop(a.ends)

        then_label = self.labels.fresh()
        insts.append(CondJump(s.test.rel, va, vb, then_label))

        # a variable referenced on only one side dies entering the other;
        # no statement there carries its ending, so drop it here
        m_then = m1.restrict(set(a.then_live) | {RET})
        m_else = m1.restrict(set(a.else_live) | {RET})

        then_insts, m2 = self.run(a.then_body, m_then, ctx)
        saved_prefs = self.prefs
        if self.cfg.use_preferences:
            # steer the other branch toward the allocations already made
            self.prefs = dict(m2.regmap)
        try:
            else_insts, m3 = self.run(a.else_body, m_else, ctx)
        finally:
            self.prefs = saved_prefs

        if ctx == "tail":
            # both branches leave the procedure; no join to reconcile
            insts.extend(else_insts)
            insts.append(LabelDef(then_label))
            insts.extend(then_insts)
            return insts, m3

        join_live = set(a.live_after)
        if m3.is_bound(RET):
            join_live.add(RET)
        m2l = m2.restrict(join_live)
        m3l = m3.restrict(join_live)

        # make the then side conform to the else side's final model
        moves: list[tuple[MoveSrc, MoveDst]] = []
        for v in sorted(m3l.variables()):
            if not m2l.is_bound(v):
                raise AllocError(f"'{v}' live at join but unbound in the then branch")
            src = m2l.whereis(v)
            rdst = m3l.reg_of(v)
            sdst = m3l.slot_of(v)
            if rdst is not None and m2l.reg_of(v) != rdst:
                moves.append((src, Reg(rdst)))
            if sdst is not None and m2l.slot_of(v) != sdst:
                moves.append((src, Slot(sdst)))
        shuffle_insts = self._seq(moves, m2l, pinned_regs=set(m3l.regmap.values()))

        end_label = self.labels.fresh()
        insts.extend(else_insts)
        insts.append(Jump(end_label))
        insts.append(LabelDef(then_label))
        insts.extend(then_insts)
        insts.extend(shuffle_insts)
        insts.append(LabelDef(end_label))
        return insts, m3l

    def _call(self, a: AnnotatedStatement, m: Model, ctx: Ctx) -> tuple[list[Inst], Model]:
        s = a.stmt
        cfg = self.cfg
        arg_srcs: list[MoveSrc] = []
        for arg in s.args:
            arg_srcs.append(m.whereis(arg) if isinstance(arg, str) else arg)

        m1 = m.drop(a.ends)  # dropping the callee label is a no-op
        if s.dst is not None:
            # the result rebinds the destination; its old value dies here
            m1 = m1.drop({s.dst})
        n_reg_args = min(len(cfg.arg_regs), len(s.args))
        n_stack_args = len(s.args) - n_reg_args

        if ctx == "tail":
            # the callee takes over this frame: no call-lives to keep
            moves: list[tuple[MoveSrc, MoveDst]] = []
            for i in range(n_reg_args):
                moves.append((arg_srcs[i], Reg(cfg.arg_regs[i])))
            for j in range(n_stack_args):
                moves.append((arg_srcs[n_reg_args + j], Slot(j)))
            if m1.is_bound(RET):
                ret_src: MoveSrc = m1.whereis(RET)
            else:
                self.need_halt = True  # entry frame returns to the halt stub
                ret_src = LabelArg(HALT_LABEL)
            moves.append((ret_src, Reg(cfg.ret_addr_reg)))
            insts = self._seq(moves, m1)
            insts.append(Jump(s.callee))
            return insts, m1

        # call-lives survive in compacted slots 0..k-1 of this frame
        call_lives = m1.variables()
        slotted = sorted(
            (v for v in call_lives if m1.slot_of(v) is not None),
            key=lambda v: m1.stackmap[v],
        )
        reg_only = sorted(
            (v for v in call_lives if m1.slot_of(v) is None),
            key=lambda v: m1.regmap[v],
        )
        home = {v: i for i, v in enumerate(slotted + reg_only)}
        k = len(home)

        moves = []
        for v, slot_i in home.items():
            if m1.slot_of(v) == slot_i:
                continue  # already saved in place: nothing to emit
            moves.append((m1.whereis(v), Slot(slot_i)))
        for i in range(n_reg_args):
            moves.append((arg_srcs[i], Reg(cfg.arg_regs[i])))
        for j in range(n_stack_args):
            # outgoing stack args become the callee's fv0.. once fp advances
            moves.append((arg_srcs[n_reg_args + j], Slot(k + j)))
        lab1 = self.labels.fresh()
        moves.append((LabelArg(lab1), Reg(cfg.ret_addr_reg)))

        insts = self._seq(moves, m1)
        if k:
            insts.append(FrameAdjust(k))
        insts.append(Jump(s.callee))
        insts.append(LabelDef(lab1))
        if k:
            insts.append(FrameAdjust(-k))

        # registers do not survive the call; the result arrives in ret_val
        m2 = Model()
        for v, slot_i in home.items():
            m2 = m2.bind_slot(v, slot_i)
        if s.dst is not None and s.dst not in a.ends:
            m2 = m2.bind_reg(s.dst, cfg.ret_val_reg)
        return insts, m2

    def _return(self, a: AnnotatedStatement, m: Model) -> tuple[list[Inst], Model]:
        s = a.stmt
        cfg = self.cfg
        val_src: MoveSrc = m.whereis(s.value) if isinstance(s.value, str) else s.value

        if self.is_entry:
            m1 = m.drop(a.ends)
            insts = self._seq([(val_src, Reg(cfg.ret_val_reg))], m1)
            insts.append(Halt())
            return insts, m1

        ret_src = m.whereis(RET)
        keep = {RET} | ({s.value} if isinstance(s.value, str) else set())
        m1 = m.restrict(keep)

        if isinstance(ret_src, Reg) and ret_src.i != cfg.ret_val_reg:
            target = ret_src.i
        else:
            target = next(
                (r for r in range(cfg.registers) if r != cfg.ret_val_reg), None
            )
            if target is None:
                raise PressureError(
                    "cannot hold both the return value and the return address"
                )
        moves = [(val_src, Reg(cfg.ret_val_reg)), (ret_src, Reg(target))]
        insts = self._seq(moves, m1)
        insts.append(Jump(Reg(target)))
        return insts, m1


# ---------------------------------------------------------------------------
# Whole-program entry points


def alloc_stmt(
    a: AnnotatedStatement,
    m: Model,
    ctx: Ctx,
    cfg: MachineConfig,
    table: NextUseTable,
    policy: str = "furthest",
) -> tuple[list[Inst], Model]:
    """Allocate a single annotated statement against a model."""
    labels = _LabelGen()
    body = _BodyAllocator(cfg, policy, table, labels, is_entry=False, scope="<stmt>")
    return body.stmt(a, m, ctx)


def alloc_fragment(
    body: tuple[AnnotatedStatement, ...],
    table: NextUseTable,
    cfg: MachineConfig,
    policy: str = "furthest",
    m: Model | None = None,
    ctx: Ctx = "nontail",
) -> tuple[list[Inst], Model]:
    """Allocate a bare statement sequence starting from a given model."""
    labels = _LabelGen()
    alloc = _BodyAllocator(cfg, policy, table, labels, is_entry=True, scope="<fragment>")
    return alloc.run(body, m if m is not None else Model(), ctx)


def alloc_program(
    ap: AnnotatedProgram,
    cfg: MachineConfig,
    policy: str = "furthest",
    trace: list[TraceEntry] | None = None,
) -> TargetProgram:
    """Allocate every procedure independently, entry body first.

    Procedures start from the calling convention's initial model.  The
    entry body starts from an empty model, returns by halting, and
    passes a halt continuation to tail calls.
    """
    labels = _LabelGen()
    entry_alloc = _BodyAllocator(
        cfg, policy, ap.entry_table, labels, is_entry=True, scope="<entry>", trace=trace
    )
    entry_insts, _ = entry_alloc.run(ap.entry, Model(), "tail")
    if entry_alloc.need_halt:
        entry_insts.append(LabelDef(HALT_LABEL))
        entry_insts.append(Halt())

    procs = []
    for proc in ap.procs:
        proc_alloc = _BodyAllocator(
            cfg, policy, proc.table, labels, is_entry=False, scope=proc.name, trace=trace
        )
        m0 = initial_model(proc.params, cfg)
        # parameters the body never references die on arrival
        m0 = m0.restrict(set(proc.entry_live) | {RET})
        insts, _ = proc_alloc.run(proc.body, m0, "tail")
        procs.append((proc.name, insts))
    return TargetProgram(entry_insts, procs)
