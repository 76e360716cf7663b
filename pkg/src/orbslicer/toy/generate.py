"""Seeded generator of small, terminating toy programs with a slicing criterion.

Used to build randomized corpora for soundness and minimality checks.  Every
variable is assigned before it is read and every helper returns on all
paths, so the original program means the same thing under every memory
model; only candidates produced by deletion can expose the differences.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


@dataclass(frozen=True)
class GeneratedProgram:
    text: str
    criterion_line: int
    variable: str
    inputs: tuple[str, ...]


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.lines: list[str] = []

    def emit(self, text: str, depth: int) -> int:
        self.lines.append("  " * depth + text)
        return len(self.lines)

    def operand(self, names: list[str]) -> str:
        if names and self.rng.random() < 0.75:
            return self.rng.choice(names)
        return str(self.rng.randint(0, 9))

    def expr(self, names: list[str]) -> str:
        r = self.rng.random()
        a = self.operand(names)
        if r < 0.2:
            return a
        if r < 0.85:
            op = self.rng.choice(["+", "-", "*", "+"])
            return f"{a} {op} {self.operand(names)}"
        return f"{a} % {self.rng.randint(2, 9)}"

    def cond(self, names: list[str]) -> str:
        op = self.rng.choice(["<", ">", "==", "!=", "<=", ">="])
        return f"{self.operand(names)} {op} {self.operand(names)}"

    def helper(self, name: str) -> int:
        nparams = self.rng.randint(1, 2)
        params = [f"p{i}" for i in range(nparams)]
        nlocals = self.rng.randint(1, 3)
        locs = [f"t{i}" for i in range(nlocals)]
        self.emit(f"int {name}({', '.join(params)}) {{", 0)
        for t in locs:
            self.emit(f"int {t};", 1)
        ready = list(params)
        for t in locs:
            if self.rng.random() < 0.25:
                self.emit(f"{t} = 0;", 1)
                ready.append(t)
                self.emit(f"{t} = {t} + {self.expr(ready)};", 1)
            else:
                self.emit(f"{t} = {self.expr(ready)};", 1)
                ready.append(t)
        if self.rng.random() < 0.3:
            self.emit(f"if ({self.cond(ready)}) {{", 1)
            self.emit(f"return {self.rng.choice(ready)};", 2)
            self.emit("}", 1)
        self.emit(f"return {locs[-1]};", 1)
        self.emit("}", 0)
        return nparams

    def program(self) -> GeneratedProgram:
        rng = self.rng
        helpers = {}
        for k in range(rng.randint(1, 2)):
            helpers[f"h{k}"] = self.helper(f"h{k}")
        self.emit("main() {", 0)
        nvars = rng.randint(4, 6)
        names = [f"v{i}" for i in range(nvars)]
        for v in names:
            self.emit(f"int {v};", 1)
        self.emit("int k;", 1)
        ready: list[str] = []
        assigns: list[tuple[int, str]] = []

        def assign(target: str, value: str, depth: int) -> None:
            assigns.append((self.emit(f"{target} = {value};", depth), target))

        for v in names[:2]:
            assign(v, "read()", 1)
            ready.append(v)
        for _ in range(rng.randint(6, 10)):
            target = rng.choice(names)
            kind = rng.random()
            if kind < 0.35:
                if target not in ready and rng.random() < 0.5:
                    assign(target, "0", 1)
                    ready.append(target)
                assign(target, self.expr(ready), 1)
            elif kind < 0.55:
                h = rng.choice(sorted(helpers))
                args = ", ".join(self.expr(ready) for _ in range(helpers[h]))
                assign(target, f"{h}({args})", 1)
            elif kind < 0.8:
                self.emit(f"if ({self.cond(ready)}) {{", 1)
                assign(target, self.expr(ready), 2)
                self.emit("} else {", 1)
                assign(target, self.expr(ready), 2)
                self.emit("}", 1)
            else:
                if target not in ready:
                    assign(target, "0", 1)
                self.emit("k = 0;", 1)
                self.emit(f"while (k < {rng.randint(2, 4)}) {{", 1)
                assign(target, f"{target} + {self.expr(ready + ['k'])}", 2)
                self.emit("k = k + 1;", 2)
                self.emit("}", 1)
            if target not in ready:
                ready.append(target)
        self.emit("}", 0)
        late = assigns[len(assigns) // 2 :]
        line, var = rng.choice(late)
        inputs = tuple(f"{rng.randint(-9, 20)} {rng.randint(0, 30)}" for _ in range(2))
        return GeneratedProgram("\n".join(self.lines) + "\n", line, var, inputs)


def generate_program(seed: int) -> GeneratedProgram:
    return _Gen(random.Random(seed)).program()
