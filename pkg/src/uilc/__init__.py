"""Register allocation toolkit for the UIL intermediate language."""

from .allocator import (
    POLICIES,
    AllocError,
    PressureError,
    alloc_fragment,
    alloc_program,
    alloc_stmt,
    load,
    pick_victim,
    save,
    shuffle,
)
from .analysis import AnnotatedProgram, NextUseTable, annotate, annotate_statements, next_use
from .isa import TargetProgram, format_target, parse_asm
from .machine import (
    MachineFault,
    Observation,
    OutOfFuel,
    TrafficStats,
    belady_oracle,
    equivalent,
    run_target,
    run_uil,
)
from .model import (
    RET,
    Location,
    MachineConfig,
    Model,
    ModelError,
    Reg,
    Slot,
    initial_model,
    make_config,
)
from .uil import Diagnostic, ParseError, Program, format_program, parse, validate

__all__ = [
    "POLICIES",
    "AllocError",
    "AnnotatedProgram",
    "Diagnostic",
    "Location",
    "MachineConfig",
    "MachineFault",
    "Model",
    "ModelError",
    "NextUseTable",
    "Observation",
    "OutOfFuel",
    "ParseError",
    "PressureError",
    "Program",
    "RET",
    "Reg",
    "Slot",
    "TargetProgram",
    "TrafficStats",
    "alloc_fragment",
    "alloc_program",
    "alloc_stmt",
    "annotate",
    "annotate_statements",
    "belady_oracle",
    "equivalent",
    "format_program",
    "format_target",
    "initial_model",
    "load",
    "make_config",
    "next_use",
    "parse",
    "parse_asm",
    "pick_victim",
    "run_target",
    "run_uil",
    "save",
    "shuffle",
    "validate",
]
