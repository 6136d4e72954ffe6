"""Parser for coefficient expressions such as ``1 + 0.5*sin(2*pi*x1/eps)``.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("+" | "-") unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | name | name "(" expr ")" | "(" expr ")" ;
    name    = "x1" | "x2" | "x3" | "eps" | "pi" ;
    func    = "sin" | "cos" | "exp" | "sqrt" ;

Positions in error messages are 0-based character offsets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ExpressionSyntaxError, UnknownIdentifier

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
CONSTANTS = {"pi": np.pi}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\S))")


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # only trailing whitespace left
            break
        num, name, op = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            tokens.append(Token("num", num, start))
        elif name is not None:
            tokens.append(Token("name", name, start))
        else:
            if op not in "+-*/^()":
                raise ExpressionSyntaxError(f"unexpected character {op!r}", start)
            tokens.append(Token("op", op, start))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: set[str]):
        self.tokens = tokenize(text)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def take(self, text=None):
        tok = self.tok
        if text is not None and tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExpressionSyntaxError(f"expected {text!r}, found {what}", tok.pos)
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.take().text
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.take().text
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.take().text
            operand = self.unary()
            return operand if op == "+" else ("neg", operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return ("num", float(tok.text))
        if tok.kind == "name":
            self.take()
            if tok.text in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", tok.text, arg)
            if tok.text in CONSTANTS:
                return ("num", CONSTANTS[tok.text])
            if tok.text in self.variables:
                return ("var", tok.text)
            raise UnknownIdentifier(tok.text, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionSyntaxError(f"unexpected {what}", tok.pos)


def parse(text: str, dim: int = 3):
    """Parse ``text`` into a nested-tuple syntax tree."""
    variables = {f"x{i + 1}" for i in range(dim)} | {"eps"}
    return _Parser(text, variables).parse()


def variables_used(tree) -> set[str]:
    kind = tree[0]
    if kind == "var":
        return {tree[1]}
    if kind == "num":
        return set()
    if kind == "neg":
        return variables_used(tree[1])
    if kind == "call":
        return variables_used(tree[2])
    return variables_used(tree[1]) | variables_used(tree[2])


def evaluate(tree, env: dict):
    kind = tree[0]
    if kind == "num":
        return tree[1]
    if kind == "var":
        return env[tree[1]]
    if kind == "neg":
        return -evaluate(tree[1], env)
    if kind == "call":
        return FUNCTIONS[tree[1]](evaluate(tree[2], env))
    a = evaluate(tree[1], env)
    b = evaluate(tree[2], env)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return a / b
    return a ** b
