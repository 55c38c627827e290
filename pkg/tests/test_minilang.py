import pytest

from peftbench.minilang import (
    LexError,
    ParseError,
    dataflow,
    execute,
    lexemes,
    parse_source,
    pretty,
    run_source,
    subtrees,
    to_sexpr,
    tokenize,
    tokenize_lenient,
    values_equal,
)
from peftbench.minilang.analysis import UNKNOWN_DEF
from peftbench.minilang.parser import LEAF_KINDS, Node
from peftbench.tensor import SeededRng


class TestLexer:
    def test_let_statement(self):
        kinds = [(t.kind, t.lexeme) for t in tokenize("let x = 1")]
        assert kinds == [("keyword", "let"), ("identifier", "x"),
                         ("operator", "="), ("int", "1")]

    def test_longest_match_identifier(self):
        toks = tokenize("xy12")
        assert len(toks) == 1 and toks[0].kind == "identifier" and toks[0].lexeme == "xy12"

    def test_scientific_float(self):
        toks = tokenize("1.5e3")
        assert len(toks) == 1 and toks[0].kind == "float"
        assert float(toks[0].lexeme) == 1500.0

    def test_two_char_operators_win(self):
        assert [t.lexeme for t in tokenize("a==b<=c")] == ["a", "==", "b", "<=", "c"]

    def test_comments_dropped(self):
        assert [t.lexeme for t in tokenize("let x = 1 # trailing words\nreturn x")] == \
            ["let", "x", "=", "1", "return", "x"]

    def test_string_escapes(self):
        toks = tokenize('"a\\nb\\"c"')
        assert toks[0].kind == "string"
        assert toks[0].value == 'a\nb"c'
        assert toks[0].lexeme == '"a\\nb\\"c"'

    def test_positions(self):
        toks = tokenize("let x = 1\nreturn x")
        assert (toks[0].line, toks[0].col) == (1, 1)
        assert (toks[4].line, toks[4].col) == (2, 1)

    def test_illegal_character_raises_with_position(self):
        with pytest.raises(LexError, match="line 1, col 5"):
            tokenize("let @ = 1")

    def test_lenient_mode_never_fails(self):
        toks = tokenize_lenient("let @ = $ 1")
        assert [t.kind for t in toks] == ["keyword", "error", "operator", "error", "int"]

    def test_bool_words_are_bool_kind(self):
        assert [t.kind for t in tokenize("true false")] == ["bool", "bool"]


class TestParser:
    def test_precedence_mul_binds_tighter(self):
        ast = parse_source("fn f(){return 1+2*3}")
        ret = ast.children[0].children[0]
        assert ret.kind == "Return"
        top = ret.children[0]
        assert top.kind == "BinOp" and top.op == "+"
        assert top.children[0].value == 1
        assert top.children[1].op == "*"

    def test_left_associativity(self):
        ast = parse_source("fn f(){return 1+2+3}")
        top = ast.children[0].children[0].children[0]
        assert top.op == "+"
        assert top.children[0].kind == "BinOp"  # (1+2) on the left
        assert top.children[1].value == 3

    def test_comparison_below_additive(self):
        ast = parse_source("fn f(a,b){return a+1 < b*2}")
        top = ast.children[0].children[0].children[0]
        assert top.op == "<"

    def test_logical_precedence(self):
        ast = parse_source("fn f(a,b,c){return a || b && c}")
        top = ast.children[0].children[0].children[0]
        assert top.op == "||"
        assert top.children[1].op == "&&"

    def test_unary_tighter_than_mul(self):
        ast = parse_source("fn f(x){return -x*2}")
        top = ast.children[0].children[0].children[0]
        assert top.op == "*" and top.children[0].kind == "UnOp"

    def test_syntax_error_has_position_and_expectation(self):
        with pytest.raises(ParseError) as exc:
            parse_source("fn f( { return 1 }")
        assert "line 1" in str(exc.value)
        assert exc.value.expected

    def test_duplicate_function_names_rejected(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_source("fn f(){return 1} fn f(){return 2}")

    def test_top_level_statements_allowed(self):
        ast = parse_source("let a = 1 return a")
        assert [c.kind for c in ast.children] == ["Let", "Return"]

    def test_else_branch(self):
        ast = parse_source("fn f(x){if (x > 0) { return 1 } else { return 2 }}")
        if_node = ast.children[0].children[0]
        assert if_node.kind == "If" and len(if_node.children) == 3


def random_program(rng: SeededRng) -> str:
    """Small random program generator used for the round-trip check."""
    names = ["a", "b", "c", "u", "v"]

    def expr(depth):
        roll = rng.randint(6 if depth < 3 else 3)
        if roll == 0:
            return str(rng.randint(100))
        if roll == 1:
            return names[rng.randint(len(names))]
        if roll == 2:
            return ["true", "false", '"s"', "2.5"][rng.randint(4)]
        if roll == 3:
            op = ["+", "-", "*", "/", "%", "==", "<", "&&", "||"][rng.randint(9)]
            return f"({expr(depth + 1)} {op} {expr(depth + 1)})"
        if roll == 4:
            return f"(-{expr(depth + 1)})"
        return f"helper({expr(depth + 1)})"

    def stmt(depth):
        roll = rng.randint(5 if depth < 2 else 3)
        name = names[rng.randint(len(names))]
        if roll == 0:
            return f"let {name} = {expr(depth)}"
        if roll == 1:
            return f"return {expr(depth)}"
        if roll == 2:
            return f"{name} = {expr(depth)}"
        if roll == 3:
            body = " ".join(stmt(depth + 1) for _ in range(1 + rng.randint(2)))
            other = " ".join(stmt(depth + 1) for _ in range(1 + rng.randint(2)))
            return f"if ({expr(depth)}) {{ {body} }} else {{ {other} }}"
        body = " ".join(stmt(depth + 1) for _ in range(1 + rng.randint(2)))
        return f"while ({expr(depth)}) {{ {body} }}"

    fns = []
    for i in range(1 + rng.randint(2)):
        stmts = " ".join(stmt(0) for _ in range(1 + rng.randint(3)))
        params = ", ".join(names[:rng.randint(3)])
        fns.append(f"fn g{i}({params}) {{ {stmts} }}")
    return "\n".join(fns)


def structurally_equal(a: Node, b: Node) -> bool:
    if (a.kind, a.name, a.op, a.value, a.params) != (b.kind, b.name, b.op, b.value, b.params):
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


class TestPrettyRoundTrip:
    def test_100_generated_programs(self):
        rng = SeededRng(2024)
        for _ in range(100):
            source = random_program(rng)
            tree = parse_source(source)
            reparsed = parse_source(pretty(tree))
            assert structurally_equal(tree, reparsed)

    def test_sexpr_smoke(self):
        s = to_sexpr(parse_source("fn f(x){return x+1}"))
        assert s.startswith("(Program (FnDef f (x)")


class TestSubtrees:
    def test_identical_programs_identical_multisets(self):
        a = subtrees(parse_source("fn f(x){let y = x return y}"))
        b = subtrees(parse_source("fn f(x){let y = x return y}"))
        assert a == b

    def test_alpha_rename_invariance(self):
        a = subtrees(parse_source("fn f(x){let y = x return y + 1}"))
        b = subtrees(parse_source("fn g(q){let z = q return z + 1}"))
        assert a == b

    def test_operator_difference_localizes_to_binop(self):
        plus = subtrees(parse_source("fn f(){return 1+2}"))
        times = subtrees(parse_source("fn f(){return 1*2}"))
        only_plus = plus - times
        only_times = times - plus
        assert set(only_plus) == {"BinOp:+(Literal,Literal)"}
        assert set(only_times) == {"BinOp:*(Literal,Literal)"}

    def test_multiset_size_equals_internal_node_count(self):
        tree = parse_source(
            "fn f(a){if (a>0) { return a } else { a = a-1 } return f(a)}")
        internal = sum(1 for n in tree.walk() if n.kind not in LEAF_KINDS)
        assert sum(subtrees(tree).values()) == internal


class TestDataflow:
    def test_single_def_use_edge(self):
        g = dataflow(parse_source("let a = 1 return a"))
        assert len(g.edges) == 1
        ((def_id, use_id, slot),) = g.edges
        assert slot == 0
        assert g.kinds[def_id] == "Let"
        assert g.kinds[use_id] == "Var"

    def test_straight_line_kill_semantics(self):
        g = dataflow(parse_source("let a = 1 let a = 2 return a"))
        assert len(g.edges) == 1
        ((def_id, _, _),) = g.edges
        # the surviving def is the second Let (later in preorder)
        let_ids = [i for i, k in g.kinds.items() if k == "Let"]
        assert def_id == max(let_ids)

    def test_branch_join_links_both_arms(self):
        src = """
        fn f(x) {
            let b = 0
            if (x > 0) { b = 1 } else { b = 2 }
            return b
        }
        """
        g = dataflow(parse_source(src))
        assign_ids = {i for i, k in g.kinds.items() if k == "Assign"}
        edges_to_use_of_b = [e for e in g.edges if e[0] in assign_ids]
        assert len(edges_to_use_of_b) == 2

    def test_loop_back_edge(self):
        src = "fn f() { let i = 0 while (i < 3) { i = i + 1 } return i }"
        g = dataflow(parse_source(src))
        assign_id = next(i for i, k in g.kinds.items() if k == "Assign")
        # the assignment inside the loop reaches the condition through the back edge
        cond_uses = [e for e in g.edges if e[0] == assign_id]
        assert len(cond_uses) >= 2  # condition use and body use at least

    def test_undefined_use_links_to_unknown(self):
        g = dataflow(parse_source("return q"))
        ((def_id, _, slot),) = g.edges
        assert def_id == UNKNOWN_DEF
        assert slot == 0
        assert g.edge_signatures()[(0, "Unknown", "Var")] == 1

    def test_params_define_at_fndef(self):
        g = dataflow(parse_source("fn f(a, b) { return a + b }"))
        assert len(g.edges) == 2
        for def_id, _, _ in g.edges:
            assert g.kinds[def_id] == "FnDef"
        slots = sorted(slot for _, _, slot in g.edges)
        assert slots == [0, 1]


class TestExecute:
    def test_add(self):
        out = run_source("fn add(a,b){return a+b}", "add", [2, 3])
        assert out.status == "value" and out.value == 5

    def test_infinite_loop_hits_budget(self):
        out = run_source("fn f(){while(true){}}", "f", [], step_budget=10_000)
        assert out.status == "step-budget-exceeded"
        assert out.steps_used == 10_000  # never exceeds the budget

    def test_recursive_fib_matches_iterative_oracle(self):
        src = "fn fib(n){if(n<2){return n} return fib(n-1)+fib(n-2)}"
        a, b = 0, 1
        for _ in range(10):
            a, b = b, a + b
        out = run_source(src, "fib", [10])
        assert out.status == "value" and out.value == 55 == a

    def test_division_by_zero(self):
        out = run_source("fn f(x){return x/0}", "f", [3])
        assert out.status == "runtime-error" and "zero" in out.error

    def test_modulo_by_zero(self):
        out = run_source("fn f(x){return x%0}", "f", [3])
        assert out.status == "runtime-error"

    def test_float_division(self):
        out = run_source("fn f(){return 7.0/2}", "f", [])
        assert out.value == 3.5

    def test_int_division_truncates_toward_zero(self):
        assert run_source("fn f(){return 7/2}", "f", []).value == 3
        assert run_source("fn f(){return (0-7)/2}", "f", []).value == -3
        assert run_source("fn f(){return (0-7)%2}", "f", []).value == -1

    def test_integer_overflow_is_runtime_error(self):
        src = "fn f(x){return x*x}"
        out = run_source(src, "f", [2**62])
        assert out.status == "runtime-error" and "overflow" in out.error

    def test_string_concat_and_len(self):
        out = run_source('fn f(name){return "hello " + name}', "f", ["bob"])
        assert out.value == "hello bob"
        assert run_source("fn f(s){return len(s)}", "f", ["abcd"]).value == 4

    def test_print_to_buffer(self):
        out = run_source('fn f(){print("x", 1, true) return 0}', "f", [])
        assert out.output == "x 1 true\n"

    def test_missing_entry_point(self):
        out = run_source("fn f(){return 1}", "g", [])
        assert out.status == "runtime-error" and "undefined function" in out.error

    def test_arity_mismatch(self):
        out = run_source("fn f(a){return a}", "f", [1, 2])
        assert out.status == "runtime-error" and "expects 1" in out.error

    def test_fall_off_end_is_error(self):
        out = run_source("fn f(){let a = 1}", "f", [])
        assert out.status == "runtime-error" and "without returning" in out.error

    def test_condition_must_be_bool(self):
        out = run_source("fn f(){if (1) { return 2 } return 3}", "f", [])
        assert out.status == "runtime-error"

    def test_undefined_variable(self):
        out = run_source("fn f(){return zz}", "f", [])
        assert out.status == "runtime-error" and "undefined variable" in out.error

    def test_parse_error_status(self):
        out = run_source("fn f( { return 1 }", "f", [])
        assert out.status == "parse-error"
        assert out.steps_used == 0

    def test_call_depth_capped(self):
        out = run_source("fn f(n){return f(n+1)}", "f", [0])
        assert out.status == "runtime-error" and "depth" in out.error

    def test_determinism_including_steps(self):
        src = "fn f(n){let s = 0 let i = 0 while (i < n) { s = s + i i = i + 1 } return s}"
        a = run_source(src, "f", [25])
        b = run_source(src, "f", [25])
        assert a == b
        assert a.value == 300

    def test_logical_operators_short_circuit(self):
        # the right operand would fault; short-circuiting must skip it
        assert run_source("fn f(){return false && (1/0 == 0)}", "f", []).value is False
        assert run_source("fn f(){return true || (1/0 == 0)}", "f", []).value is True

    def test_bool_ops(self):
        assert run_source("fn f(){return !(1 == 2) && (3 < 4)}", "f", []).value is True

    def test_execute_on_parsed_tree(self):
        tree = parse_source("fn inc(x){return x+1}")
        out = execute(tree, "inc", [41])
        assert out.value == 42


class TestSandboxTotality:
    def test_random_garbage_always_yields_a_verdict(self):
        # any byte soup must come back as an outcome, never an exception
        rng = SeededRng(999)
        alphabet = 'fnletifwhruc(){}=+-*/%<>!&|,"0123456789abc \n\t@$~'
        statuses = set()
        for _ in range(300):
            n = 1 + rng.randint(60)
            src = "".join(alphabet[rng.randint(len(alphabet))] for _ in range(n))
            out = run_source(src, "f", [1], step_budget=2000)
            assert out.status in {"value", "runtime-error",
                                  "step-budget-exceeded", "parse-error"}
            assert out.steps_used <= 2000
            statuses.add(out.status)
        assert "parse-error" in statuses  # the fuzz actually exercised failures

    def test_mutated_valid_programs(self):
        rng = SeededRng(555)
        base = "fn f(x){let s = 0 let i = 0 while (i < x) { s = s + i i = i + 1 } return s}"
        for _ in range(200):
            chars = list(base)
            for _ in range(1 + rng.randint(3)):
                pos = rng.randint(len(chars))
                chars[pos] = "fnletwhir(){}=+-<>0123456789 x"[rng.randint(30)]
            out = run_source("".join(chars), "f", [5], step_budget=5000)
            assert out.status in {"value", "runtime-error",
                                  "step-budget-exceeded", "parse-error"}

    def test_deep_nesting_does_not_crash_host(self):
        # pathologically deep expressions map to a verdict, not a host error
        deep = "fn f(){return " + "(" * 4000 + "1" + ")" * 4000 + "}"
        out = run_source(deep, "f", [])
        assert out.status in {"value", "parse-error", "runtime-error"}


class TestConcurrency:
    def test_parallel_executions_match_serial_outcomes(self):
        # executions are pure, so fanning candidates across threads must
        # reproduce the serial verdicts exactly, steps included
        from concurrent.futures import ThreadPoolExecutor

        src = "fn fib(n){if(n<2){return n} return fib(n-1)+fib(n-2)}"
        jobs = [(src, "fib", [n]) for n in range(12)] * 4
        serial = [run_source(s, e, a) for s, e, a in jobs]
        with ThreadPoolExecutor(max_workers=8) as pool:
            parallel = list(pool.map(lambda j: run_source(*j), jobs))
        assert parallel == serial


class TestValuesEqual:
    def test_bool_is_not_int(self):
        assert not values_equal(True, 1)
        assert not values_equal(0, False)

    def test_int_is_not_float(self):
        assert not values_equal(5, 5.0)

    def test_lists_compare_elementwise(self):
        assert values_equal([1, "a", True], [1, "a", True])
        assert not values_equal([1], [1, 2])


class TestLexemes:
    def test_code_token_stream(self):
        assert lexemes("fn f(){return 1}") == ["fn", "f", "(", ")", "{", "return", "1", "}"]

    def test_lenient_on_garbage(self):
        assert lexemes("@#!") == ["@"]  # '#' comments out the rest of the line
        assert lexemes("a $ b") == ["a", "$", "b"]
