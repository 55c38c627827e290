"""Step-budgeted tree-walking interpreter.

Values are 64-bit ints (overflow is a runtime error, never a wrap), floats,
bools, strings and lists. Every evaluated node costs one step; exceeding
the budget or any runtime fault is reported in the ExecOutcome rather than
raised, so candidate programs can never crash or hang the harness. There is
no clock, no randomness and no I/O: identical calls give identical
outcomes, including steps_used.
"""

from __future__ import annotations

from dataclasses import dataclass

from .parser import Node, ParseError, parse_source

DEFAULT_STEP_BUDGET = 100_000
MAX_CALL_DEPTH = 200  # runtime error beyond this, keeping verdicts platform-independent

_INT_MIN = -(1 << 63)
_INT_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class ExecOutcome:
    status: str  # value | runtime-error | step-budget-exceeded | parse-error
    value: object = None
    error: str | None = None
    steps_used: int = 0
    output: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "value"


class _RuntimeFault(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class _BudgetExceeded(Exception):
    pass


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


def _check_int(v: int) -> int:
    if v < _INT_MIN or v > _INT_MAX:
        raise _RuntimeFault("integer overflow")
    return v


def format_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    if isinstance(v, str):
        return v
    return repr(v)


def values_equal(a: object, b: object) -> bool:
    """Strict equality used for test verdicts: bool, int, float, str and
    list are distinct kinds; no cross-kind coercion."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if type(a) is not type(b):
        return False
    return a == b


class _Interp:
    def __init__(self, program: Node, budget: int):
        self.functions = {c.name: c for c in program.children if c.kind == "FnDef"}
        self.budget = budget
        self.steps = 0
        self.depth = 0
        self.out: list[str] = []

    def charge(self):
        if self.steps >= self.budget:
            raise _BudgetExceeded()
        self.steps += 1

    def call(self, name: str, args: list):
        if name == "len":
            if len(args) != 1 or not isinstance(args[0], (str, list)):
                raise _RuntimeFault("len expects one string or list argument")
            return len(args[0])
        if name == "print":
            self.out.append(" ".join(format_value(a) for a in args) + "\n")
            return 0
        fn = self.functions.get(name)
        if fn is None:
            raise _RuntimeFault(f"undefined function {name!r}")
        if len(args) != len(fn.params):
            raise _RuntimeFault(
                f"function {name!r} expects {len(fn.params)} arguments, got {len(args)}"
            )
        if self.depth >= MAX_CALL_DEPTH:
            raise _RuntimeFault("call depth limit exceeded")
        self.depth += 1
        env = dict(zip(fn.params, args))
        try:
            for stmt in fn.children:
                self.exec_stmt(stmt, env)
        except _ReturnSignal as r:
            return r.value
        finally:
            self.depth -= 1
        raise _RuntimeFault(f"function {name!r} ended without returning a value")

    def exec_stmt(self, stmt: Node, env: dict):
        self.charge()
        k = stmt.kind
        if k == "Let" or k == "Assign":
            if k == "Assign" and stmt.name not in env:
                raise _RuntimeFault(f"assignment to undeclared variable {stmt.name!r}")
            env[stmt.name] = self.eval(stmt.children[0], env)
        elif k == "Return":
            raise _ReturnSignal(self.eval(stmt.children[0], env))
        elif k == "If":
            cond = self.eval(stmt.children[0], env)
            if not isinstance(cond, bool):
                raise _RuntimeFault("if condition must be a bool")
            if cond:
                self.exec_block(stmt.children[1], env)
            elif len(stmt.children) == 3:
                self.exec_block(stmt.children[2], env)
        elif k == "While":
            while True:
                cond = self.eval(stmt.children[0], env)
                if not isinstance(cond, bool):
                    raise _RuntimeFault("while condition must be a bool")
                if not cond:
                    break
                self.exec_block(stmt.children[1], env)
        elif k == "Call":
            self.eval_call(stmt, env, charged=True)
        else:
            raise _RuntimeFault(f"cannot execute node kind {k}")

    def exec_block(self, block: Node, env: dict):
        for stmt in block.children:
            self.exec_stmt(stmt, env)

    def eval_call(self, node: Node, env: dict, charged: bool = False):
        if not charged:
            self.charge()
        args = [self.eval(a, env) for a in node.children]
        return self.call(node.name, args)

    def eval(self, node: Node, env: dict):
        k = node.kind
        if k == "Call":
            return self.eval_call(node, env)
        self.charge()
        if k == "Literal":
            return node.value
        if k == "Var":
            if node.name not in env:
                raise _RuntimeFault(f"undefined variable {node.name!r}")
            return env[node.name]
        if k == "UnOp":
            v = self.eval(node.children[0], env)
            if node.op == "-":
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise _RuntimeFault("unary - expects a number")
                return _check_int(-v) if isinstance(v, int) else -v
            if node.op == "!":
                if not isinstance(v, bool):
                    raise _RuntimeFault("! expects a bool")
                return not v
        if k == "BinOp":
            return self.eval_binop(node, env)
        raise _RuntimeFault(f"cannot evaluate node kind {k}")

    def eval_binop(self, node: Node, env: dict):
        op = node.op
        if op == "&&" or op == "||":
            left = self.eval(node.children[0], env)
            if not isinstance(left, bool):
                raise _RuntimeFault(f"{op} expects bools")
            # short-circuit: the right operand is only evaluated when needed
            if op == "&&" and not left:
                return False
            if op == "||" and left:
                return True
            right = self.eval(node.children[1], env)
            if not isinstance(right, bool):
                raise _RuntimeFault(f"{op} expects bools")
            return right

        a = self.eval(node.children[0], env)
        b = self.eval(node.children[1], env)
        if op == "==":
            return values_equal(a, b) or self._numeric_eq(a, b)
        if op == "!=":
            return not (values_equal(a, b) or self._numeric_eq(a, b))

        if op in ("<", "<=", ">", ">="):
            if self._both_numbers(a, b):
                pass
            elif isinstance(a, str) and isinstance(b, str):
                pass
            else:
                raise _RuntimeFault(f"{op} expects two numbers or two strings")
            if op == "<":
                return a < b
            if op == "<=":
                return a <= b
            if op == ">":
                return a > b
            return a >= b

        if op == "+":
            if isinstance(a, str) and isinstance(b, str):
                return a + b
            if not self._both_numbers(a, b):
                raise _RuntimeFault("+ expects two numbers or two strings")
            r = a + b
            return _check_int(r) if isinstance(a, int) and isinstance(b, int) else r
        if op in ("-", "*"):
            if not self._both_numbers(a, b):
                raise _RuntimeFault(f"{op} expects two numbers")
            r = a - b if op == "-" else a * b
            return _check_int(r) if isinstance(a, int) and isinstance(b, int) else r
        if op == "/":
            if not self._both_numbers(a, b):
                raise _RuntimeFault("/ expects two numbers")
            if b == 0:
                raise _RuntimeFault("division by zero")
            if isinstance(a, int) and isinstance(b, int):
                # C-style: truncate toward zero
                q = abs(a) // abs(b)
                return _check_int(q if (a >= 0) == (b >= 0) else -q)
            return a / b
        if op == "%":
            if not (isinstance(a, int) and isinstance(b, int)) or isinstance(a, bool) or isinstance(b, bool):
                raise _RuntimeFault("% expects two integers")
            if b == 0:
                raise _RuntimeFault("modulo by zero")
            # remainder takes the sign of the dividend (C-style)
            r = abs(a) % abs(b)
            return _check_int(r if a >= 0 else -r)
        raise _RuntimeFault(f"unknown operator {op!r}")

    @staticmethod
    def _both_numbers(a, b) -> bool:
        if isinstance(a, bool) or isinstance(b, bool):
            return False
        return isinstance(a, (int, float)) and isinstance(b, (int, float))

    @staticmethod
    def _numeric_eq(a, b) -> bool:
        if isinstance(a, bool) or isinstance(b, bool):
            return False
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            return a == b
        return False


def execute(program: Node, entry_point: str, args: list,
            step_budget: int = DEFAULT_STEP_BUDGET) -> ExecOutcome:
    """Run entry_point(*args) under the step budget and report the outcome."""
    interp = _Interp(program, step_budget)
    try:
        value = interp.call(entry_point, list(args))
        return ExecOutcome("value", value=value, steps_used=interp.steps,
                           output="".join(interp.out))
    except _BudgetExceeded:
        return ExecOutcome("step-budget-exceeded", steps_used=interp.steps,
                           error=f"step budget of {step_budget} exceeded",
                           output="".join(interp.out))
    except _RuntimeFault as e:
        return ExecOutcome("runtime-error", error=e.message, steps_used=interp.steps,
                           output="".join(interp.out))
    except RecursionError:
        return ExecOutcome("runtime-error", error="host recursion limit reached",
                           steps_used=interp.steps, output="".join(interp.out))


def run_source(source: str, entry_point: str, args: list,
               step_budget: int = DEFAULT_STEP_BUDGET) -> ExecOutcome:
    """Parse then execute; malformed source yields a parse-error outcome."""
    try:
        program = parse_source(source)
    except (ParseError, RecursionError) as e:
        return ExecOutcome("parse-error", error=str(e), steps_used=0)
    return execute(program, entry_point, args, step_budget)
