"""Lexer, parser and resolution pass for the toy language.

The grammar is C-like and small enough that every declaration and statement
usually sits on its own physical line, which gives line deletion statement
granularity.  See ``docs/toy-lang.md`` for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

BUILTINS = {"read": 0, "getc": 0}
KEYWORDS = {"int", "void", "if", "else", "while", "return", "print"}


class ToySyntaxError(Exception):
    """Raised for lexical, syntactic and resolution errors ("build failures")."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, kw, str, op, eof
    text: str
    line: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){},;])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def tokenize(text: str) -> list[Token]:
    tokens = []
    line = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ToySyntaxError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        value = m.group()
        pos = m.end()
        if kind == "nl":
            line += 1
        elif kind in ("ws", "comment"):
            pass
        elif kind == "name" and value in KEYWORDS:
            tokens.append(Token("kw", value, line))
        elif kind == "str":
            body = re.sub(r"\\(.)", lambda e: _ESCAPES.get(e.group(1), e.group(1)), value[1:-1])
            tokens.append(Token("str", body, line))
        else:
            tokens.append(Token(kind, value, line))
    tokens.append(Token("eof", "", line))
    return tokens


# --- AST -------------------------------------------------------------------


@dataclass
class Num:
    value: int
    line: int


@dataclass
class Var:
    name: str
    line: int
    offset: int = -1


@dataclass
class Unary:
    op: str
    operand: object
    line: int


@dataclass
class Binary:
    op: str
    left: object
    right: object
    line: int


@dataclass
class Call:
    name: str
    args: list
    line: int


@dataclass
class Decl:
    names: list[str]
    line: int


@dataclass
class Assign:
    target: Var
    value: object
    line: int


@dataclass
class Print:
    items: list  # str literals or expressions
    line: int


@dataclass
class Return:
    value: object | None
    line: int


@dataclass
class If:
    cond: object
    then: list
    orelse: list | None
    line: int


@dataclass
class While:
    cond: object
    body: list
    line: int
    loop_id: int = -1


@dataclass
class ExprStmt:
    expr: object
    line: int


@dataclass
class Function:
    name: str
    params: list[str]
    body: list
    returns_value: bool
    line: int
    # filled in by resolve(): variable name -> frame offset (0 is the return slot)
    layout: dict[str, int] = field(default_factory=dict)

    @property
    def frame_size(self) -> int:
        return len(self.layout) + 1


@dataclass
class ToyProgram:
    functions: dict[str, Function]

    @property
    def main(self) -> Function:
        return self.functions["main"]


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise ToySyntaxError(f"expected {text!r}, got {self.tok.text or 'end of input'!r}", self.tok.line)
        return self.advance()

    def expect_name(self) -> Token:
        if self.tok.kind != "name":
            raise ToySyntaxError(f"expected identifier, got {self.tok.text or 'end of input'!r}", self.tok.line)
        return self.advance()

    def program(self) -> ToyProgram:
        functions: dict[str, Function] = {}
        while self.tok.kind != "eof":
            fn = self.function()
            if fn.name in functions:
                raise ToySyntaxError(f"function {fn.name!r} redefined", fn.line)
            if fn.name in BUILTINS:
                raise ToySyntaxError(f"function {fn.name!r} shadows a builtin", fn.line)
            functions[fn.name] = fn
        if "main" not in functions:
            raise ToySyntaxError("program has no main function")
        if functions["main"].params:
            raise ToySyntaxError("main takes no parameters", functions["main"].line)
        return ToyProgram(functions)

    def function(self) -> Function:
        line = self.tok.line
        returns_value = False
        if self.at("int"):
            self.advance()
            returns_value = True
        elif self.at("void"):
            self.advance()
        name = self.expect_name()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                if self.at("int"):
                    self.advance()
                params.append(self.expect_name().text)
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        body = self.block()
        return Function(name.text, params, body, returns_value, line)

    def block(self) -> list:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise ToySyntaxError("unterminated block", self.tok.line)
            stmts.append(self.statement())
        self.expect("}")
        return stmts

    def statement(self):
        tok = self.tok
        if self.at("int"):
            self.advance()
            names = [self.expect_name().text]
            while self.at(","):
                self.advance()
                names.append(self.expect_name().text)
            self.expect(";")
            return Decl(names, tok.line)
        if self.at("if"):
            return self.if_statement()
        if self.at("while"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), tok.line)
        if self.at("return"):
            self.advance()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(value, tok.line)
        if self.at("print"):
            self.advance()
            items = [self.print_item()]
            while self.at(","):
                self.advance()
                items.append(self.print_item())
            if self.at(";"):  # optional terminator
                self.advance()
            return Print(items, tok.line)
        if tok.kind == "name" and self.tokens[self.pos + 1].text == "=" and self.tokens[self.pos + 1].kind == "op":
            self.advance()
            self.advance()
            value = self.expr()
            self.expect(";")
            return Assign(Var(tok.text, tok.line), value, tok.line)
        if tok.kind == "name" and self.tokens[self.pos + 1].text == "(":
            call = self.expr()
            self.expect(";")
            return ExprStmt(call, tok.line)
        raise ToySyntaxError(f"unexpected {tok.text or 'end of input'!r}", tok.line)

    def if_statement(self) -> If:
        line = self.expect("if").line
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse = None
        if self.at("else"):
            self.advance()
            orelse = [self.if_statement()] if self.at("if") else self.block()
        return If(cond, then, orelse, line)

    def print_item(self):
        if self.tok.kind == "str":
            return self.advance().text
        return self.expr()

    # precedence climbing, lowest first
    _LEVELS = [("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/", "%")]

    def expr(self, level: int = 0):
        if level == len(self._LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in self._LEVELS[level]:
            op = self.advance()
            right = self.expr(level + 1)
            left = Binary(op.text, left, right, op.line)
        return left

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in ("-", "!"):
            op = self.advance()
            return Unary(op.text, self.unary(), op.line)
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(int(tok.text), tok.line)
        if tok.kind == "name":
            self.advance()
            if self.at("("):
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return Call(tok.text, args, tok.line)
            return Var(tok.text, tok.line)
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        raise ToySyntaxError(f"expected expression, got {tok.text or 'end of input'!r}", tok.line)


# --- resolution ------------------------------------------------------------


def _resolve_function(fn: Function, functions: dict[str, Function], loop_ids: list[int]) -> None:
    layout: dict[str, int] = {}
    for p in fn.params:
        if p in layout:
            raise ToySyntaxError(f"duplicate parameter {p!r}", fn.line)
        layout[p] = len(layout) + 1

    def expr(e) -> None:
        if isinstance(e, Var):
            if e.name not in layout:
                raise ToySyntaxError(f"undeclared variable {e.name!r}", e.line)
            e.offset = layout[e.name]
        elif isinstance(e, Unary):
            expr(e.operand)
        elif isinstance(e, Binary):
            expr(e.left)
            expr(e.right)
        elif isinstance(e, Call):
            if e.name in BUILTINS:
                arity = BUILTINS[e.name]
            elif e.name in functions:
                arity = len(functions[e.name].params)
            else:
                raise ToySyntaxError(f"undefined function {e.name!r}", e.line)
            if len(e.args) != arity:
                raise ToySyntaxError(f"{e.name!r} expects {arity} argument(s), got {len(e.args)}", e.line)
            for a in e.args:
                expr(a)

    def stmts(body: list) -> None:
        for s in body:
            if isinstance(s, Decl):
                for name in s.names:
                    if name in layout:
                        raise ToySyntaxError(f"redeclaration of {name!r}", s.line)
                    layout[name] = len(layout) + 1
            elif isinstance(s, Assign):
                expr(s.value)
                expr(s.target)
            elif isinstance(s, Print):
                for item in s.items:
                    if not isinstance(item, str):
                        expr(item)
            elif isinstance(s, Return):
                if s.value is not None:
                    expr(s.value)
            elif isinstance(s, If):
                expr(s.cond)
                stmts(s.then)
                if s.orelse is not None:
                    stmts(s.orelse)
            elif isinstance(s, While):
                expr(s.cond)
                s.loop_id = len(loop_ids)
                loop_ids.append(s.line)
                stmts(s.body)
            elif isinstance(s, ExprStmt):
                expr(s.expr)

    stmts(fn.body)
    fn.layout = layout


def _always_returns(body: list) -> bool:
    for s in body:
        if isinstance(s, Return):
            return True
        if isinstance(s, If) and s.orelse is not None and _always_returns(s.then) and _always_returns(s.orelse):
            return True
    return False


def check_returns(program: ToyProgram) -> None:
    """Reject value-returning functions with a control-flow path that lacks a ``return``.

    This is the stricter validation applied by the ``toy-typed`` environment.
    """
    for fn in program.functions.values():
        if fn.returns_value and not _always_returns(fn.body):
            raise ToySyntaxError(f"function {fn.name!r}: not all paths return a value", fn.line)


def parse_toy(text: str) -> ToyProgram:
    """Parse and resolve a toy program; raises :class:`ToySyntaxError`."""
    program = _Parser(tokenize(text)).program()
    loop_ids: list[int] = []
    for fn in program.functions.values():
        _resolve_function(fn, program.functions, loop_ids)
    return program
