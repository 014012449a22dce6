import pytest

from uilc.allocator import alloc_program
from uilc.analysis import annotate, annotate_statements
from uilc.gen import generate_program, generate_straight_line
from uilc.isa import (
    BinOpInst,
    FrameAdjust,
    Halt,
    Jump,
    LabelDef,
    Load,
    LoadImm,
    LoadLabel,
    MemStore,
    Move,
    Store,
    format_insts,
    parse_asm,
    static_traffic,
)
from uilc.machine import (
    MachineFault,
    Observation,
    OutOfFuel,
    belady_oracle,
    default_heap,
    equivalent,
    heap_from_seed,
    run_insts,
    run_target,
    run_uil,
    spill_free_shape,
    wrap64,
)
from uilc.model import Reg, make_config
from uilc.uil import parse, validate

from conftest import SPLIT_SRC, load_program

# The golden two-register allocation: fill both registers, spill one,
# compute, load it back, and sum.
SPLIT_SEQUENCE = [
    LoadImm(0, 1),
    LoadImm(1, 2),
    Store(0, 0),
    BinOpInst("+", 0, Reg(1), 1),
    Load(0, 0),
    BinOpInst("+", 0, Reg(0), Reg(1)),
]


def test_split_sequence_computes_sum_with_one_load_one_store():
    cfg = make_config(2)
    machine = run_insts(SPLIT_SEQUENCE, cfg)
    assert machine.regs[0] == 1 + 2
    assert machine.stats.dynamic_loads == 1
    assert machine.stats.dynamic_stores == 1


def test_empty_program_returns_zero_with_no_traffic():
    cfg = make_config(2)
    obs, stats = run_target([Halt()], cfg)
    assert obs == Observation(0, ())
    assert stats.dynamic_loads == stats.dynamic_stores == stats.dynamic_moves == 0


def test_run_uil_four_statement_example(chain_call):
    program, _ = chain_call
    obs = run_uil(program)
    assert obs.value == 3  # f(0, 3) = 0 + (0 + 1 + 2)
    assert obs.writes == ()


def test_run_uil_return_immediate():
    obs = run_uil(parse("(letrec () (return 7))"))
    assert obs == Observation(7, ())


def test_run_uil_memory_write_trace():
    obs = run_uil(parse("(letrec () (mset! 0 0 5) (return 0))"))
    assert obs.writes == ((0, 5),)


def test_run_uil_heap_out_of_range_faults():
    with pytest.raises(MachineFault):
        run_uil(parse("(letrec () (mset! 9999 0 1) (return 0))"))


def test_run_uil_diverging_recursion_exhausts_fuel():
    src = "(letrec ((loop (lambda () (loop)))) (loop))"
    program = parse(src)
    assert validate(program) == []
    with pytest.raises(OutOfFuel):
        run_uil(program, fuel=10_000)


def test_run_target_diverging_recursion_exhausts_fuel():
    src = "(letrec ((loop (lambda () (loop)))) (loop))"
    program, ap = load_program(src)
    cfg = make_config(4)
    tp = alloc_program(ap, cfg)
    with pytest.raises(OutOfFuel):
        run_target(tp, cfg, fuel=10_000)


def test_arithmetic_wraps_at_64_bits():
    src = (
        "(letrec () (set! a 4611686018427387904) (set! b (* a 4))"
        " (mset! 0 0 b) (return b))"
    )
    program, ap = load_program(src)
    obs = run_uil(program)
    assert obs.value == wrap64(4611686018427387904 * 4) == 0
    cfg = make_config(4)
    tp = alloc_program(ap, cfg)
    target, _ = run_target(tp, cfg)
    assert target == obs


def test_equivalent_on_split_example(split_prog):
    program, ap = split_prog
    cfg = make_config(2)
    tp = alloc_program(ap, cfg)
    assert equivalent(program, tp, cfg).ok


def test_equivalent_no_spills_at_eight_registers(split_prog):
    program, ap = split_prog
    cfg = make_config(8)
    tp = alloc_program(ap, cfg)
    assert equivalent(program, tp, cfg).ok
    loads, stores, _ = static_traffic(tp.flatten())
    assert loads == 0 and stores == 0


def test_equivalent_detects_dropped_store(split_prog):
    program, ap = split_prog
    cfg = make_config(2)
    tp = alloc_program(ap, cfg)
    mutated = [i for i in tp.flatten() if not isinstance(i, Store)]
    from uilc.isa import TargetProgram

    broken = TargetProgram(entry=mutated, procs=[])
    report = equivalent(program, broken, cfg)
    assert not report.ok
    assert report.source_obs is not None and report.target_obs is not None
    assert "divergence" in report.detail


def test_equivalent_runs_every_seed_heap():
    src = "(letrec () (set! x (mref 5 0)) (mset! 6 0 x) (return x))"
    program, ap = load_program(src)
    cfg = make_config(4)
    tp = alloc_program(ap, cfg)
    heaps = [heap_from_seed(s) for s in range(5)]
    report = equivalent(program, tp, cfg, heaps)
    assert report.ok and report.checked == 5


def test_belady_split_core_needs_one_load(split_prog):
    program, _ = split_prog
    body, table = annotate_statements(program.body[:4])
    assert belady_oracle(body, 2) == 1


def test_belady_no_pressure_needs_no_loads():
    p = parse("(letrec () (set! a 1) (set! b (+ a 1)) (return b))")
    ap = annotate(p)
    assert belady_oracle(ap, 2) == 0


def test_belady_oracle_strictly_below_lifo():
    # v0 stays live to the end while fresh bindings are reused right away,
    # so evicting the most recent resident cascades into extra reloads
    src = (
        "(letrec ()"
        " (set! v0 95)"
        " (set! v1 76)"
        " (set! v2 (+ v0 v1))"
        " (mset! 1 15 v1)"
        " (set! v1 (+ v2 v2))"
        " (set! v3 (mref 28 0))"
        " (set! v2 (- v2 v0))"
        " (return v2))"
    )
    program, ap = load_program(src)
    cfg = make_config(2)
    lifo_tp = alloc_program(ap, cfg, "lifo")
    _, lifo_stats = run_target(lifo_tp, cfg)
    best = belady_oracle(ap, 2)
    assert best == 1
    assert lifo_stats.dynamic_loads == 3
    furthest_tp = alloc_program(ap, cfg, "furthest")
    _, furthest_stats = run_target(furthest_tp, cfg)
    assert furthest_stats.dynamic_loads == best


def test_belady_guards_reject_large_instances():
    stmts = " ".join(f"(set! v{i} {i})" for i in range(12))
    p = parse(f"(letrec () {stmts} (return v0))")
    ap = annotate(p)
    with pytest.raises(ValueError):
        belady_oracle(ap, 2)
    with pytest.raises(ValueError):
        belady_oracle(annotate(generate_straight_line(0)), 4)
    branchy = parse(
        "(letrec () (set! a 1) (if (> a 0) (begin (set! b 1)) (begin (set! b 2))) (return b))"
    )
    with pytest.raises(ValueError):
        belady_oracle(annotate(branchy), 2)


def test_determinism_identical_observations_and_stats():
    p = generate_program(23)
    ap = annotate(p)
    cfg = make_config(3)
    tp1 = alloc_program(ap, cfg)
    tp2 = alloc_program(ap, cfg)
    assert tp1.flatten() == tp2.flatten()
    heap = heap_from_seed(23)
    obs1, stats1 = run_target(tp1, cfg, list(heap))
    obs2, stats2 = run_target(tp2, cfg, list(heap))
    assert obs1 == obs2
    assert stats1.as_dict() == stats2.as_dict()


def test_frame_imbalance_is_a_fault():
    cfg = make_config(2)
    with pytest.raises(MachineFault):
        run_insts([FrameAdjust(2), FrameAdjust(-1)], cfg)
    with pytest.raises(MachineFault):
        run_insts([FrameAdjust(-1)], cfg)


def test_indirect_jump_validates_label_values():
    cfg = make_config(2)
    with pytest.raises(MachineFault):
        run_target([LoadImm(0, 99), Jump(Reg(0)), Halt()], cfg)


def test_running_off_the_end_is_a_fault():
    cfg = make_config(2)
    with pytest.raises(MachineFault):
        run_target([LoadImm(0, 1)], cfg)


def test_asm_round_trip_on_generated_programs():
    for seed in range(12):
        p = generate_program(seed)
        ap = annotate(p)
        tp = alloc_program(ap, make_config(4))
        insts = tp.flatten()
        assert parse_asm(format_insts(insts)) == insts


def test_asm_round_trip_covers_every_instruction_form():
    insts = [
        Move(1, 2),
        LoadImm(0, -7),
        Load(1, 0),
        Store(3, 1),
        BinOpInst("*", 2, Reg(1), -4),
        LabelDef("f"),
        LoadLabel(0, ".L1"),
        Jump("f"),
        Jump(Reg(0)),
        FrameAdjust(2),
        FrameAdjust(-2),
        LabelDef(".L1"),
        MemStore(Reg(0), 3, Reg(1)),
        Halt(),
    ]
    from uilc.isa import CondJump, MemLoad

    insts += [MemLoad(1, Reg(0), 0), CondJump("<=", Reg(0), 5, ".L1")]
    assert parse_asm(format_insts(insts)) == insts


def test_spill_free_shape_accepts_low_pressure(split_prog):
    program, ap = split_prog
    assert spill_free_shape(ap, make_config(8))
    assert not spill_free_shape(ap, make_config(2))  # four values live at once


def test_spill_free_shape_rejects_live_across_call():
    src = (
        "(letrec ((f (lambda () (return 1))))"
        " (set! a 5) (set! b (f)) (set! c (+ a b)) (return c))"
    )
    _, ap = load_program(src)
    assert not spill_free_shape(ap, make_config(8))


def test_spill_free_shape_accepts_result_chaining():
    src = "(letrec ((f (lambda (n) (return n)))) (set! a (f 5)) (return a))"
    _, ap = load_program(src)
    assert spill_free_shape(ap, make_config(8))
