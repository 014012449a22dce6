import pytest

from uilc import annotate, parse, validate

# Two-register live-range splitting example: x and y fill the machine,
# allocating z forces x out, and the final sum brings x back.
SPLIT_SRC = """
(letrec ()
  (set! x 1)
  (set! y 2)
  (set! z (+ y 1))
  (set! w (+ x y))
  (return w))
"""

# Four-statement body ending in a tail call, with its callee defined.
CHAIN_SRC = """
(letrec ((f (lambda (a b)
  (set! c (+ a b))
  (return c))))
  (set! x 0)
  (set! y (+ x 1))
  (set! z (+ y 2))
  (f x z))
"""


def load_program(src):
    program = parse(src)
    diags = validate(program)
    assert not diags, diags
    return program, annotate(program)


@pytest.fixture
def split_prog():
    return load_program(SPLIT_SRC)


@pytest.fixture
def chain_call():
    return load_program(CHAIN_SRC)
