"""A tiny deterministic imperative language: lexer, parser, structural
analysis and a step-budgeted sandboxed interpreter."""

from .lexer import KEYWORDS, LexError, Token, lexemes, tokenize, tokenize_lenient
from .parser import Node, ParseError, parse, parse_source, pretty, to_sexpr
from .analysis import DataflowGraph, dataflow, subtrees
from .interp import (
    DEFAULT_STEP_BUDGET,
    ExecOutcome,
    execute,
    format_value,
    run_source,
    values_equal,
)

__all__ = [
    "KEYWORDS",
    "LexError",
    "Token",
    "lexemes",
    "tokenize",
    "tokenize_lenient",
    "Node",
    "ParseError",
    "parse",
    "parse_source",
    "pretty",
    "to_sexpr",
    "DataflowGraph",
    "dataflow",
    "subtrees",
    "DEFAULT_STEP_BUDGET",
    "ExecOutcome",
    "execute",
    "format_value",
    "run_source",
    "values_equal",
]
