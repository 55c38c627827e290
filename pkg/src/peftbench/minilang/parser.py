"""Recursive-descent parser for the mini-language.

Grammar:

    program  := (fn-def | stmt)*
    fn-def   := "fn" name "(" [name ("," name)*] ")" block
    block    := "{" stmt* "}"
    stmt     := "let" name "=" expr
              | name "=" expr
              | "if" "(" expr ")" block ["else" block]
              | "while" "(" expr ")" block
              | "return" expr
              | call
    expr     := or-expr with precedence
                ||  <  &&  <  == != < <= > >=  <  + -  <  * / %  <  unary - !  <  call/atom
    atom     := int | float | string | true | false | name | name "(" args ")" | "(" expr ")"

All binary operators are left-associative. Statements are self-delimiting
(no terminator). Top-level statements are accepted so code fragments can be
analyzed; only functions are executable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lexer import LexError, Token, tokenize


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        loc = f" at line {line}, col {col}" if line else ""
        exp = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message}{loc}{exp}")
        self.line = line
        self.col = col
        self.expected = expected


@dataclass(frozen=True)
class Node:
    """AST node.

    kind is one of: Program, FnDef, Let, Assign, If, While, Return, Call,
    BinOp, UnOp, Literal, Var. Identifier names live in `name`, operator
    symbols in `op`, literal payloads in `value`, parameter names in
    `params` (FnDef only).
    """

    kind: str
    children: tuple["Node", ...] = ()
    name: str | None = None
    op: str | None = None
    value: object = None
    params: tuple[str, ...] = ()

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


LEAF_KINDS = frozenset({"Literal", "Var"})


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def error(self, message: str, expected: tuple[str, ...] = ()):
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            line, col = (last.line, last.col) if last else (0, 0)
            raise ParseError(f"{message}, found end of input", line, col, expected)
        raise ParseError(f"{message}, found {tok.lexeme!r}", tok.line, tok.col, expected)

    def take(self, kind: str, lexeme: str | None = None) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind or (lexeme is not None and tok.lexeme != lexeme):
            self.error("unexpected token", expected=(lexeme or kind,))
        self.pos += 1
        return tok

    def match(self, kind: str, lexeme: str | None = None) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == kind and (lexeme is None or tok.lexeme == lexeme)

    # -- toplevel --

    def program(self) -> Node:
        items = []
        names = set()
        while not self.at_end():
            if self.match("keyword", "fn"):
                at = self.peek()
                fn = self.fn_def()
                if fn.name in names:
                    raise ParseError(f"duplicate function name {fn.name!r}",
                                     at.line, at.col)
                names.add(fn.name)
                items.append(fn)
            else:
                items.append(self.statement())
        return Node("Program", tuple(items))

    def fn_def(self) -> Node:
        self.take("keyword", "fn")
        name = self.take("identifier").lexeme
        self.take("punctuation", "(")
        params: list[str] = []
        if not self.match("punctuation", ")"):
            params.append(self.take("identifier").lexeme)
            while self.match("punctuation", ","):
                self.take("punctuation", ",")
                params.append(self.take("identifier").lexeme)
        self.take("punctuation", ")")
        body = self.block()
        return Node("FnDef", tuple(body), name=name, params=tuple(params))

    def block(self) -> list[Node]:
        self.take("punctuation", "{")
        stmts = []
        while not self.match("punctuation", "}"):
            if self.at_end():
                self.error("unterminated block", expected=("}",))
            stmts.append(self.statement())
        self.take("punctuation", "}")
        return stmts

    # -- statements --

    def statement(self) -> Node:
        if self.match("keyword", "let"):
            self.take("keyword", "let")
            name = self.take("identifier").lexeme
            self.take("operator", "=")
            return Node("Let", (self.expr(),), name=name)
        if self.match("keyword", "if"):
            self.take("keyword", "if")
            self.take("punctuation", "(")
            cond = self.expr()
            self.take("punctuation", ")")
            then = Node("Block", tuple(self.block()))
            if self.match("keyword", "else"):
                self.take("keyword", "else")
                other = Node("Block", tuple(self.block()))
                return Node("If", (cond, then, other))
            return Node("If", (cond, then))
        if self.match("keyword", "while"):
            self.take("keyword", "while")
            self.take("punctuation", "(")
            cond = self.expr()
            self.take("punctuation", ")")
            body = Node("Block", tuple(self.block()))
            return Node("While", (cond, body))
        if self.match("keyword", "return"):
            self.take("keyword", "return")
            return Node("Return", (self.expr(),))
        if self.match("identifier"):
            nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if nxt is not None and nxt.kind == "operator" and nxt.lexeme == "=":
                name = self.take("identifier").lexeme
                self.take("operator", "=")
                return Node("Assign", (self.expr(),), name=name)
            if nxt is not None and nxt.kind == "punctuation" and nxt.lexeme == "(":
                return self.call_expr()
        self.error("expected a statement",
                   expected=("let", "if", "while", "return", "assignment", "call"))

    # -- expressions --

    _BIN_LEVELS = [
        ("||",),
        ("&&",),
        ("==", "!=", "<", "<=", ">", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    ]

    def expr(self) -> Node:
        return self._binary(0)

    def _binary(self, level: int) -> Node:
        if level == len(self._BIN_LEVELS):
            return self.unary()
        ops = self._BIN_LEVELS[level]
        left = self._binary(level + 1)
        while self.match("operator") and self.peek().lexeme in ops:
            op = self.take("operator").lexeme
            right = self._binary(level + 1)
            left = Node("BinOp", (left, right), op=op)
        return left

    def unary(self) -> Node:
        if self.match("operator", "-") or self.match("operator", "!"):
            op = self.take("operator").lexeme
            return Node("UnOp", (self.unary(),), op=op)
        return self.atom()

    def call_expr(self) -> Node:
        name = self.take("identifier").lexeme
        self.take("punctuation", "(")
        args = []
        if not self.match("punctuation", ")"):
            args.append(self.expr())
            while self.match("punctuation", ","):
                self.take("punctuation", ",")
                args.append(self.expr())
        self.take("punctuation", ")")
        return Node("Call", tuple(args), name=name)

    def atom(self) -> Node:
        tok = self.peek()
        if tok is None:
            self.error("expected an expression")
        if tok.kind == "int":
            self.pos += 1
            return Node("Literal", value=int(tok.lexeme))
        if tok.kind == "float":
            self.pos += 1
            return Node("Literal", value=float(tok.lexeme))
        if tok.kind == "string":
            self.pos += 1
            return Node("Literal", value=tok.value)
        if tok.kind == "bool":
            self.pos += 1
            return Node("Literal", value=(tok.lexeme == "true"))
        if tok.kind == "identifier":
            nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if nxt is not None and nxt.kind == "punctuation" and nxt.lexeme == "(":
                return self.call_expr()
            self.pos += 1
            return Node("Var", name=tok.lexeme)
        if tok.kind == "punctuation" and tok.lexeme == "(":
            self.take("punctuation", "(")
            inner = self.expr()
            self.take("punctuation", ")")
            return inner
        self.error("expected an expression",
                   expected=("literal", "identifier", "call", "("))


def parse(tokens: list[Token]) -> Node:
    """Parse a token stream into a Program node."""
    return _Parser(tokens).program()


def parse_source(source: str) -> Node:
    """Tokenize strictly and parse; lexing failures surface as ParseError."""
    try:
        return parse(tokenize(source))
    except LexError as e:
        raise ParseError(str(e), e.line, e.col) from e


# -- printing ----------------------------------------------------------------


def _fmt_literal(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
        return f'"{escaped}"'
    return repr(v)


def pretty(node: Node, indent: int = 0) -> str:
    """Emit canonical source that re-parses to a structurally identical tree."""
    pad = "    " * indent
    k = node.kind
    if k == "Program":
        return "\n".join(pretty(c, indent) for c in node.children)
    if k == "FnDef":
        body = "\n".join(pretty(c, indent + 1) for c in node.children)
        return f"{pad}fn {node.name}({', '.join(node.params)}) {{\n{body}\n{pad}}}"
    if k == "Block":
        return "\n".join(pretty(c, indent) for c in node.children)
    if k == "Let":
        return f"{pad}let {node.name} = {_expr_str(node.children[0])}"
    if k == "Assign":
        return f"{pad}{node.name} = {_expr_str(node.children[0])}"
    if k == "Return":
        return f"{pad}return {_expr_str(node.children[0])}"
    if k == "If":
        out = f"{pad}if ({_expr_str(node.children[0])}) {{\n{pretty(node.children[1], indent + 1)}\n{pad}}}"
        if len(node.children) == 3:
            out += f" else {{\n{pretty(node.children[2], indent + 1)}\n{pad}}}"
        return out
    if k == "While":
        return f"{pad}while ({_expr_str(node.children[0])}) {{\n{pretty(node.children[1], indent + 1)}\n{pad}}}"
    if k == "Call":
        return pad + _expr_str(node)
    raise ValueError(f"cannot pretty-print node kind {k}")


def _expr_str(node: Node) -> str:
    k = node.kind
    if k == "Literal":
        return _fmt_literal(node.value)
    if k == "Var":
        return node.name
    if k == "Call":
        return f"{node.name}({', '.join(_expr_str(a) for a in node.children)})"
    if k == "BinOp":
        left, right = node.children
        return f"({_expr_str(left)} {node.op} {_expr_str(right)})"
    if k == "UnOp":
        return f"({node.op}{_expr_str(node.children[0])})"
    raise ValueError(f"not an expression node: {k}")


def to_sexpr(node: Node) -> str:
    """S-expression dump for debugging."""
    parts = [node.kind]
    if node.name is not None:
        parts.append(node.name)
    if node.op is not None:
        parts.append(node.op)
    if node.kind == "Literal":
        parts.append(_fmt_literal(node.value))
    if node.params:
        parts.append("(" + " ".join(node.params) + ")")
    parts.extend(to_sexpr(c) for c in node.children)
    return "(" + " ".join(parts) + ")"
