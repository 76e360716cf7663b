"""Evaluator for the toy language with a simulated, reusable stack.

Every activation record lives in the stack row for its call depth; slot 0 of
a frame is the return slot, followed by parameters and then locals in
declaration order.  What a freshly pushed frame contains is decided by the
memory model:

* ``zero``    -- every cell is cleared on push,
* ``residue`` -- cells keep whatever the previous occupant of that depth left
  behind (the stack starts out zeroed),
* ``canary``  -- cells are filled from a PRNG seeded per run.

The program is compiled to nested closures once per run; closures take the
machine and the current frame row as arguments.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass

from .parser import (
    Assign,
    Binary,
    Call,
    Decl,
    ExprStmt,
    Function,
    If,
    Num,
    Print,
    Return,
    ToyProgram,
    Unary,
    Var,
    While,
)

DEFAULT_STEP_BUDGET = 10**7
MAX_DEPTH = 512

_MASK = (1 << 64) - 1
_SIGN = 1 << 63


def wrap(value: int) -> int:
    value &= _MASK
    return value - (1 << 64) if value & _SIGN else value


@dataclass(frozen=True)
class MemoryModel:
    kind: str  # "zero" | "residue" | "canary"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "residue", "canary"):
            raise ValueError(f"unknown memory model {self.kind!r}")
        if self.kind == "canary" and self.seed is None:
            raise ValueError("canary model needs a seed")

    def __str__(self) -> str:
        return f"canary:{self.seed}" if self.kind == "canary" else self.kind


ZERO = MemoryModel("zero")
RESIDUE = MemoryModel("residue")


class ToyRuntimeError(Exception):
    """Division by zero, stack overflow: the run crashed."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class ToyTimeout(Exception):
    """Step budget exhausted (or a provably infinite loop was detected)."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class _Machine:
    __slots__ = ("rows", "depth", "steps", "budget", "out", "inp", "inpos", "model", "rng", "draws")

    def __init__(self, model: MemoryModel, stdin: bytes, budget: int):
        self.rows: list[list[int]] = []
        self.depth = -1
        self.steps = 0
        self.budget = budget
        self.out: list[str] = []
        self.inp = stdin
        self.inpos = 0
        self.model = model
        self.rng = random.Random(model.seed) if model.kind == "canary" else None
        self.draws = 0

    def push(self, size: int) -> list[int]:
        self.depth += 1
        if self.depth >= MAX_DEPTH:
            raise ToyRuntimeError(f"stack overflow (depth {MAX_DEPTH})")
        if len(self.rows) <= self.depth:
            self.rows.append([])
        row = self.rows[self.depth]
        if len(row) < size:
            row.extend([0] * (size - len(row)))
        if self.model.kind == "zero":
            for i in range(size):
                row[i] = 0
        elif self.model.kind == "canary":
            for i in range(size):
                row[i] = wrap(self.rng.getrandbits(64))
            self.draws += size
        return row

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise ToyTimeout(f"step budget of {self.budget} exceeded")

    def snapshot(self):
        return (tuple(tuple(r) for r in self.rows), self.inpos, self.draws)

    def getc(self) -> int:
        if self.inpos >= len(self.inp):
            return -1
        c = self.inp[self.inpos]
        self.inpos += 1
        return c

    def read(self) -> int:
        data, pos = self.inp, self.inpos
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        self.inpos = pos
        try:
            return wrap(int(data[start:pos]))
        except ValueError:
            return -1


def _cdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _div(a: int, b: int) -> int:
    if b == 0:
        raise ToyRuntimeError("division by zero")
    return wrap(_cdiv(a, b))


def _mod(a: int, b: int) -> int:
    if b == 0:
        raise ToyRuntimeError("division by zero")
    return wrap(a - b * _cdiv(a, b))


_BINOPS = {
    "+": lambda a, b: wrap(a + b),
    "-": lambda a, b: wrap(a - b),
    "*": lambda a, b: wrap(a * b),
    "/": _div,
    "%": _mod,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
}


class _Compiler:
    def __init__(self, program: ToyProgram):
        self.program = program
        self.compiled: dict[str, object] = {}

    def function(self, name: str):
        if name not in self.compiled:
            fn: Function = self.program.functions[name]
            self.compiled[name] = None  # placeholder for recursion
            body = self.block(fn.body)
            size = fn.frame_size
            nparams = len(fn.params)

            def call(m: _Machine, args: list[int]) -> int:
                row = m.push(size)
                row[1 : nparams + 1] = args
                body(m, row)
                # Falling off the end leaves whatever the return slot holds.
                result = row[0]
                m.depth -= 1
                return result

            self.compiled[name] = call
        return name

    def expr(self, e):
        if isinstance(e, Num):
            v = wrap(e.value)
            return lambda m, row: v
        if isinstance(e, Var):
            off = e.offset
            return lambda m, row: row[off]
        if isinstance(e, Unary):
            inner = self.expr(e.operand)
            if e.op == "-":
                return lambda m, row: wrap(-inner(m, row))
            return lambda m, row: int(not inner(m, row))
        if isinstance(e, Binary):
            left, right = self.expr(e.left), self.expr(e.right)
            if e.op == "&&":
                return lambda m, row: int(bool(left(m, row)) and bool(right(m, row)))
            if e.op == "||":
                return lambda m, row: int(bool(left(m, row)) or bool(right(m, row)))
            op = _BINOPS[e.op]
            return lambda m, row: op(left(m, row), right(m, row))
        if isinstance(e, Call):
            if e.name == "getc":
                return lambda m, row: m.getc()
            if e.name == "read":
                return lambda m, row: m.read()
            name = self.function(e.name)
            args = [self.expr(a) for a in e.args]
            compiled = self.compiled

            def call(m, row):
                values = [a(m, row) for a in args]
                return compiled[name](m, values)

            return call
        raise TypeError(f"unknown expression node {e!r}")

    def block(self, stmts: list):
        compiled = [self.stmt(s) for s in stmts]

        def run(m: _Machine, row: list[int]) -> bool:
            for s in compiled:
                m.tick()
                if s(m, row):
                    return True
            return False

        return run

    def stmt(self, s):
        if isinstance(s, Decl):
            return lambda m, row: False
        if isinstance(s, Assign):
            off = s.target.offset
            value = self.expr(s.value)

            def assign(m, row):
                row[off] = value(m, row)
                return False

            return assign
        if isinstance(s, Print):
            items = [(True, it) if isinstance(it, str) else (False, self.expr(it)) for it in s.items]

            def pr(m, row):
                parts = []
                prev_int = False
                for is_text, it in items:
                    if is_text:
                        parts.append(it)
                        prev_int = False
                    else:
                        if prev_int:
                            parts.append(" ")
                        parts.append(str(it(m, row)))
                        prev_int = True
                m.out.append("".join(parts) + "\n")
                return False

            return pr
        if isinstance(s, Return):
            if s.value is None:
                return lambda m, row: True
            value = self.expr(s.value)

            def ret(m, row):
                row[0] = value(m, row)
                return True

            return ret
        if isinstance(s, If):
            cond = self.expr(s.cond)
            then = self.block(s.then)
            orelse = self.block(s.orelse) if s.orelse is not None else None

            def if_(m, row):
                if cond(m, row):
                    return then(m, row)
                if orelse is not None:
                    return orelse(m, row)
                return False

            return if_
        if isinstance(s, While):
            cond = self.expr(s.cond)
            body = self.block(s.body)

            def while_(m, row):
                # Brent cycle detection on the full machine state at the back
                # edge: a repeated state means the loop can never terminate.
                saved = None
                power = lam = 1
                while True:
                    m.tick()
                    if not cond(m, row):
                        return False
                    if body(m, row):
                        return True
                    snap = m.snapshot()
                    if snap == saved:
                        raise ToyTimeout(f"infinite loop at line {s.line}")
                    if lam == power:
                        saved = snap
                        power *= 2
                        lam = 0
                    lam += 1

            return while_
        if isinstance(s, ExprStmt):
            inner = self.expr(s.expr)

            def expr_stmt(m, row):
                inner(m, row)
                return False

            return expr_stmt
        raise TypeError(f"unknown statement node {s!r}")


def eval_toy(
    program: ToyProgram,
    model: MemoryModel,
    stdin: bytes = b"",
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> tuple[str, int]:
    """Run ``program`` and return ``(stdout text, exit status)``.

    Raises :class:`ToyRuntimeError` or :class:`ToyTimeout`; both carry the
    output produced so far.
    """
    compiler = _Compiler(program)
    main = compiler.compiled[compiler.function("main")]
    m = _Machine(model, stdin, step_budget)
    limit = sys.getrecursionlimit()
    if limit < 30000:
        sys.setrecursionlimit(30000)
    try:
        status = main(m, [])
    except (ToyRuntimeError, ToyTimeout) as exc:
        exc.output = "".join(m.out)
        raise
    except RecursionError:
        raise ToyRuntimeError("host recursion limit exceeded", "".join(m.out)) from None
    out = "".join(m.out)
    return out, (status & 0xFF) if program.main.returns_value else 0
