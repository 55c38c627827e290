import json

import pytest

from peftbench.data import (
    BOS_ID,
    EOS_ID,
    SEP_ID,
    SPECIAL_TOKENS,
    UNK_ID,
    DataError,
    PairRecord,
    SplitSpec,
    Vocab,
    build_vocab,
    encode_example,
    frame_pairs,
    load_pairs,
    load_tasks,
    prompt_tokens,
    reverse_direction,
    save_pairs,
    split,
)
from peftbench.minilang import parse_source
from peftbench.model import IGNORE_INDEX


class TestLoadPairs:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_pairs(path) == []

    def test_missing_field_names_line_and_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"idx": 1, "code": "fn f(){return 1}"}\n')
        with pytest.raises(DataError, match="line 1.*'nl'"):
            load_pairs(path)

    def test_three_line_fixture_preserves_order(self, tmp_path):
        rows = [
            {"idx": 5, "code": "fn a(){return 1}", "nl": "one"},
            {"idx": 2, "code": "fn b(){return 2}", "nl": "two"},
            {"idx": 9, "code": "fn c(){return 3}", "nl": "three"},
        ]
        path = tmp_path / "three.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        records = load_pairs(path)
        assert [r.idx for r in records] == [5, 2, 9]

    def test_duplicate_idx_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        path.write_text(
            '{"idx": 1, "code": "fn a(){return 1}", "nl": "x"}\n'
            '{"idx": 1, "code": "fn b(){return 2}", "nl": "y"}\n')
        with pytest.raises(DataError, match="line 2.*duplicate"):
            load_pairs(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"idx": 1, "code": "c", "nl": "n"}\n{oops\n')
        with pytest.raises(DataError, match="line 2"):
            load_pairs(path)

    def test_empty_field_rejected(self, tmp_path):
        path = tmp_path / "blank.jsonl"
        path.write_text('{"idx": 1, "code": "", "nl": "x"}\n')
        with pytest.raises(DataError, match="'code'"):
            load_pairs(path)

    def test_round_trip(self, tmp_path, pairs20):
        path = tmp_path / "rt.jsonl"
        save_pairs(pairs20, path)
        assert load_pairs(path) == pairs20


class TestFixturePairs:
    def test_twenty_records(self, pairs20):
        assert len(pairs20) == 20
        assert len({r.idx for r in pairs20}) == 20

    def test_every_code_field_parses(self, pairs20):
        for r in pairs20:
            parse_source(r.code)  # must not raise


class TestFraming:
    def test_summarize_maps_code_to_nl(self, pairs20):
        framed = frame_pairs(pairs20, "summarize")
        assert framed[0].source == pairs20[0].code
        assert framed[0].target == pairs20[0].nl
        assert (framed[0].source_kind, framed[0].target_kind) == ("code", "nl")

    def test_generate_is_the_reverse(self, pairs20):
        gen = frame_pairs(pairs20, "generate")
        assert gen[0].source == pairs20[0].nl
        assert gen[0].target == pairs20[0].code

    def test_reverse_twice_is_identity(self, pairs20):
        framed = frame_pairs(pairs20, "summarize")
        assert reverse_direction(reverse_direction(framed)) == framed

    def test_reverse_swaps_targets_elementwise(self, pairs20):
        framed = frame_pairs(pairs20[:5], "summarize")
        reversed_ = reverse_direction(framed)
        for f, r in zip(framed, reversed_):
            assert r.source == f.target and r.target == f.source

    def test_unknown_task_rejected(self, pairs20):
        with pytest.raises(DataError):
            frame_pairs(pairs20, "translate")


class TestSplit:
    def test_all_to_train(self):
        records = list(range(10))
        train, valid, test = split(records, SplitSpec(1.0, 0.0, 0.0, seed=1))
        assert sorted(train) == records and valid == [] and test == []

    def test_same_seed_same_split(self):
        records = list(range(100))
        s1 = split(records, SplitSpec(0.8, 0.1, 0.1, seed=5))
        s2 = split(records, SplitSpec(0.8, 0.1, 0.1, seed=5))
        assert s1 == s2

    def test_sizes_floor_then_remainder_to_train(self):
        records = list(range(100))
        train, valid, test = split(records, SplitSpec(0.8, 0.1, 0.1, seed=2))
        assert (len(train), len(valid), len(test)) == (80, 10, 10)
        # uneven case: 0.5/0.25/0.25 over 7 -> floor gives 1/1, train gets 5
        train, valid, test = split(list(range(7)), SplitSpec(0.5, 0.25, 0.25, seed=2))
        assert (len(train), len(valid), len(test)) == (5, 1, 1)

    def test_partition_is_disjoint_and_exhaustive(self):
        records = [PairRecord(i, f"fn f{i}(){{return {i}}}", f"word {i}") for i in range(37)]
        train, valid, test = split(records, SplitSpec(0.6, 0.2, 0.2, seed=3))
        ids = [r.idx for part in (train, valid, test) for r in part]
        assert sorted(ids) == list(range(37))

    def test_bad_fractions(self):
        with pytest.raises(DataError):
            SplitSpec(0.5, 0.2, 0.2, seed=0)


class TestVocab:
    def test_empty_corpus_is_specials_only(self):
        v = build_vocab([])
        assert len(v) == 5
        assert tuple(v.id_to_token) == SPECIAL_TOKENS

    def test_min_count_one_keeps_every_token(self, pairs20):
        v = build_vocab(pairs20, min_count=1)
        for r in pairs20:
            for tok in Vocab.tokenize(r.nl, "nl"):
                assert tok in v.token_to_id

    def test_min_count_filters_rare_tokens(self):
        records = [
            PairRecord(1, "fn a(){return 1}", "alpha"),
            PairRecord(2, "fn b(){return 2}", "beta"),
            PairRecord(3, "fn c(){return zebra}", "gamma"),
        ]
        v = build_vocab(records, min_count=2)
        assert "return" in v.token_to_id  # appears 3x
        assert "zebra" not in v.token_to_id  # appears once
        assert v.encode("zebra", "nl") == [UNK_ID]

    def test_rebuild_is_stable(self, pairs20):
        v1 = build_vocab(pairs20)
        v2 = build_vocab(pairs20)
        assert v1.id_to_token == v2.id_to_token

    def test_specials_at_fixed_ids(self, pairs20):
        v = build_vocab(pairs20)
        assert v.token_to_id["<pad>"] == 0
        assert v.token_to_id["<bos>"] == BOS_ID == 1
        assert v.token_to_id["<eos>"] == EOS_ID == 2
        assert v.token_to_id["<sep>"] == SEP_ID == 3
        assert v.token_to_id["<unk>"] == UNK_ID == 4


class TestEncoding:
    def test_sequence_framing_and_mask(self, pairs20):
        v = build_vocab(pairs20)
        framed = frame_pairs(pairs20, "summarize")[0]
        tokens, targets = encode_example(v, framed, max_len=128)
        assert tokens[0] == BOS_ID
        sep_pos = tokens.index(SEP_ID)
        assert all(t == IGNORE_INDEX for t in targets[:sep_pos])
        assert all(t != IGNORE_INDEX for t in targets[sep_pos:])
        assert targets[-1] == EOS_ID
        # teacher forcing alignment: tokens[i+1] == targets[i] after the sep
        for i in range(sep_pos, len(tokens) - 1):
            assert tokens[i + 1] == targets[i]

    def test_prompt_tokens_end_with_sep(self, pairs20):
        v = build_vocab(pairs20)
        framed = frame_pairs(pairs20, "summarize")[0]
        p = prompt_tokens(v, framed)
        assert p[0] == BOS_ID and p[-1] == SEP_ID

    def test_overlong_sequence_rejected(self, pairs20):
        v = build_vocab(pairs20)
        framed = frame_pairs(pairs20, "summarize")[0]
        with pytest.raises(DataError):
            encode_example(v, framed, max_len=8)


class TestLoadTasks:
    def test_fixture_suite_contract(self, tasks16):
        assert len(tasks16) == 16
        for t in tasks16:
            assert len(t.tests) >= 3

    def test_add_two_numbers_has_five_tests(self, tasks16):
        add_task = next(t for t in tasks16 if t.task_id == "add_two_numbers")
        assert len(add_task.tests) == 5
        assert add_task.entry_point == "add"

    def test_zero_tests_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({
            "task_id": "t1", "prompt": "do a thing",
            "entry_point": "f", "tests": []}) + "\n")
        with pytest.raises(DataError, match="t1"):
            load_tasks(path)

    def test_invalid_entry_point_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({
            "task_id": "t1", "prompt": "p", "entry_point": "9bad",
            "tests": [{"args": [1], "expected": 1}]}) + "\n")
        with pytest.raises(DataError, match="identifier"):
            load_tasks(path)

    def test_null_expected_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({
            "task_id": "t1", "prompt": "p", "entry_point": "f",
            "tests": [{"args": [1], "expected": None}]}) + "\n")
        with pytest.raises(DataError):
            load_tasks(path)
