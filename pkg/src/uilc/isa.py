"""Target instruction set and its assembly text format.

A small RISC-flavored register machine: loads and stores move words
between registers and frame slots, ALU and compare operands may be
registers or immediates, and control flow goes through labels.  Return
addresses are label values produced by `loadlabel` and consumed by
indirect jumps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import Reg

Src = Reg | int  # register operand or immediate


@dataclass(frozen=True)
class Move:
    dst: int
    src: int


@dataclass(frozen=True)
class LoadImm:
    dst: int
    imm: int


@dataclass(frozen=True)
class Load:
    dst: int
    slot: int


@dataclass(frozen=True)
class Store:
    slot: int
    src: int


@dataclass(frozen=True)
class BinOpInst:
    op: str  # + - *
    dst: int
    a: Src
    b: Src


@dataclass(frozen=True)
class MemLoad:
    dst: int
    base: Src
    index: Src


@dataclass(frozen=True)
class MemStore:
    base: Src
    index: Src
    src: Src


@dataclass(frozen=True)
class CondJump:
    rel: str  # < <= = >= >
    a: Src
    b: Src
    target: str


@dataclass(frozen=True)
class Jump:
    target: str | Reg  # direct label or indirect through a register


@dataclass(frozen=True)
class LoadLabel:
    dst: int
    label: str


@dataclass(frozen=True)
class LabelDef:
    label: str


@dataclass(frozen=True)
class FrameAdjust:
    delta: int


@dataclass(frozen=True)
class Halt:
    pass


Inst = (
    Move
    | LoadImm
    | Load
    | Store
    | BinOpInst
    | MemLoad
    | MemStore
    | CondJump
    | Jump
    | LoadLabel
    | LabelDef
    | FrameAdjust
    | Halt
)


@dataclass
class TargetProgram:
    """Entry code followed by one labeled instruction block per procedure."""

    entry: list[Inst] = field(default_factory=list)
    procs: list[tuple[str, list[Inst]]] = field(default_factory=list)

    def flatten(self) -> list[Inst]:
        insts = list(self.entry)
        for name, body in self.procs:
            insts.append(LabelDef(name))
            insts.extend(body)
        return insts


_BINOP_MNEMONIC = {"+": "add", "-": "sub", "*": "mul"}
_MNEMONIC_BINOP = {v: k for k, v in _BINOP_MNEMONIC.items()}
_REL_MNEMONIC = {"<": "blt", "<=": "ble", "=": "beq", ">=": "bge", ">": "bgt"}
_MNEMONIC_REL = {v: k for k, v in _REL_MNEMONIC.items()}


def _fmt_src(s: Src) -> str:
    return f"r{s.i}" if isinstance(s, Reg) else str(s)


def format_inst(inst: Inst) -> str:
    if isinstance(inst, Move):
        return f"move r{inst.dst}, r{inst.src}"
    if isinstance(inst, LoadImm):
        return f"loadimm r{inst.dst}, {inst.imm}"
    if isinstance(inst, Load):
        return f"load r{inst.dst}, fv{inst.slot}"
    if isinstance(inst, Store):
        return f"store fv{inst.slot}, r{inst.src}"
    if isinstance(inst, BinOpInst):
        op = _BINOP_MNEMONIC[inst.op]
        return f"{op} r{inst.dst}, {_fmt_src(inst.a)}, {_fmt_src(inst.b)}"
    if isinstance(inst, MemLoad):
        return f"mload r{inst.dst}, {_fmt_src(inst.base)}, {_fmt_src(inst.index)}"
    if isinstance(inst, MemStore):
        return f"mstore {_fmt_src(inst.base)}, {_fmt_src(inst.index)}, {_fmt_src(inst.src)}"
    if isinstance(inst, CondJump):
        op = _REL_MNEMONIC[inst.rel]
        return f"{op} {_fmt_src(inst.a)}, {_fmt_src(inst.b)}, {inst.target}"
    if isinstance(inst, Jump):
        if isinstance(inst.target, Reg):
            return f"jmp r{inst.target.i}"
        return f"jmp {inst.target}"
    if isinstance(inst, LoadLabel):
        return f"loadlabel r{inst.dst}, {inst.label}"
    if isinstance(inst, LabelDef):
        return f"{inst.label}:"
    if isinstance(inst, FrameAdjust):
        return f"fp+= {inst.delta}"
    if isinstance(inst, Halt):
        return "halt"
    raise TypeError(f"unknown instruction {inst!r}")


def format_insts(insts: list[Inst]) -> str:
    lines = []
    for inst in insts:
        text = format_inst(inst)
        if not isinstance(inst, LabelDef):
            text = "  " + text
        lines.append(text)
    return "\n".join(lines) + ("\n" if lines else "")


def format_target(tp: TargetProgram) -> str:
    return format_insts(tp.flatten())


_REG_RE = re.compile(r"^r([0-9]+)$")
_SLOT_RE = re.compile(r"^fv([0-9]+)$")
_INT_RE = re.compile(r"^-?[0-9]+$")


class AsmError(Exception):
    pass


def _parse_reg(tok: str) -> int:
    m = _REG_RE.match(tok)
    if not m:
        raise AsmError(f"expected a register, got {tok!r}")
    return int(m.group(1))


def _parse_slot(tok: str) -> int:
    m = _SLOT_RE.match(tok)
    if not m:
        raise AsmError(f"expected a frame slot, got {tok!r}")
    return int(m.group(1))


def _parse_src(tok: str) -> Src:
    m = _REG_RE.match(tok)
    if m:
        return Reg(int(m.group(1)))
    if _INT_RE.match(tok):
        return int(tok)
    raise AsmError(f"expected a register or immediate, got {tok!r}")


def parse_asm(text: str) -> list[Inst]:
    """Parse assembly text back into instructions (inverse of format_insts)."""
    insts: list[Inst] = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.endswith(":"):
            insts.append(LabelDef(line[:-1]))
            continue
        if line.startswith("fp+="):
            insts.append(FrameAdjust(int(line[len("fp+=") :].strip())))
            continue
        parts = line.replace(",", " ").split()
        op, args = parts[0], parts[1:]
        if op == "move":
            insts.append(Move(_parse_reg(args[0]), _parse_reg(args[1])))
        elif op == "loadimm":
            insts.append(LoadImm(_parse_reg(args[0]), int(args[1])))
        elif op == "load":
            insts.append(Load(_parse_reg(args[0]), _parse_slot(args[1])))
        elif op == "store":
            insts.append(Store(_parse_slot(args[0]), _parse_reg(args[1])))
        elif op in _MNEMONIC_BINOP:
            insts.append(
                BinOpInst(
                    _MNEMONIC_BINOP[op],
                    _parse_reg(args[0]),
                    _parse_src(args[1]),
                    _parse_src(args[2]),
                )
            )
        elif op == "mload":
            insts.append(MemLoad(_parse_reg(args[0]), _parse_src(args[1]), _parse_src(args[2])))
        elif op == "mstore":
            insts.append(MemStore(_parse_src(args[0]), _parse_src(args[1]), _parse_src(args[2])))
        elif op in _MNEMONIC_REL:
            insts.append(
                CondJump(_MNEMONIC_REL[op], _parse_src(args[0]), _parse_src(args[1]), args[2])
            )
        elif op == "jmp":
            if _REG_RE.match(args[0]):
                insts.append(Jump(Reg(int(_REG_RE.match(args[0]).group(1)))))
            else:
                insts.append(Jump(args[0]))
        elif op == "loadlabel":
            insts.append(LoadLabel(_parse_reg(args[0]), args[1]))
        elif op == "halt":
            insts.append(Halt())
        else:
            raise AsmError(f"unknown mnemonic {op!r}")
    return insts


def static_traffic(insts: list[Inst]) -> tuple[int, int, int]:
    """(loads, stores, register moves) present in the instruction list."""
    loads = sum(1 for i in insts if isinstance(i, Load))
    stores = sum(1 for i in insts if isinstance(i, Store))
    moves = sum(1 for i in insts if isinstance(i, Move))
    return loads, stores, moves


def opcode_name(inst: Inst) -> str:
    """Coarse opcode kind, used by golden tests: loadimm, store, binop, ..."""
    if isinstance(inst, BinOpInst):
        return "binop"
    if isinstance(inst, LoadImm):
        return "loadimm"
    return type(inst).__name__.lower()
