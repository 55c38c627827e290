"""JSONL ingestion, task framing, splits and vocabulary construction.

Pair records hold {idx, code, nl}; generation tasks hold {task_id, prompt,
entry_point, tests}. The model sees sequences framed as
BOS + input + SEP + target + EOS with the loss masked to positions after
the separator, so one decoder-only model serves both task directions.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .metrics import tokenize_nl
from .minilang import lexemes
from .model import IGNORE_INDEX
from .tensor import SeededRng

PAD_ID, BOS_ID, EOS_ID, SEP_ID, UNK_ID = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<sep>", "<unk>")

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class DataError(ValueError):
    """Malformed dataset input; message carries file/line context."""


@dataclass(frozen=True)
class PairRecord:
    idx: int
    code: str
    nl: str


@dataclass(frozen=True)
class TestCase:
    args: tuple
    expected: object


@dataclass(frozen=True)
class GenTask:
    task_id: str
    prompt: str
    entry_point: str
    tests: tuple[TestCase, ...]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float
    valid_frac: float
    test_frac: float
    seed: int

    def __post_init__(self):
        total = self.train_frac + self.valid_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {total}")
        if min(self.train_frac, self.valid_frac, self.test_frac) < 0:
            raise DataError("split fractions must be non-negative")


def _read_jsonl(path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            rows.append((lineno, obj))
    return rows


def load_pairs(path) -> list[PairRecord]:
    """Read pair records in file order, validating the schema."""
    records = []
    seen = set()
    for lineno, obj in _read_jsonl(path):
        for field_name in ("idx", "code", "nl"):
            if field_name not in obj:
                raise DataError(f"{path}: line {lineno}: missing field {field_name!r}")
        idx = obj["idx"]
        if not isinstance(idx, int):
            raise DataError(f"{path}: line {lineno}: idx must be an integer")
        if idx in seen:
            raise DataError(f"{path}: line {lineno}: duplicate idx {idx}")
        seen.add(idx)
        code, nl = obj["code"], obj["nl"]
        if not isinstance(code, str) or not code.strip():
            raise DataError(f"{path}: line {lineno}: field 'code' must be non-empty")
        if not isinstance(nl, str) or not nl.strip():
            raise DataError(f"{path}: line {lineno}: field 'nl' must be non-empty")
        records.append(PairRecord(idx=idx, code=code, nl=nl))
    return records


def save_pairs(records: list[PairRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"idx": r.idx, "code": r.code, "nl": r.nl},
                                sort_keys=True) + "\n")


_VALID_EXPECTED = (int, float, bool, str, list)


def _validate_value(v, ctx: str):
    if v is None or not isinstance(v, _VALID_EXPECTED):
        raise DataError(f"{ctx}: unsupported value {v!r}")
    if isinstance(v, list):
        for item in v:
            _validate_value(item, ctx)


def load_tasks(path) -> list[GenTask]:
    """Read generation tasks; every task needs at least one test."""
    tasks = []
    seen = set()
    for lineno, obj in _read_jsonl(path):
        task_id = obj.get("task_id")
        ctx = f"{path}: line {lineno} (task {task_id!r})"
        for field_name in ("task_id", "prompt", "entry_point", "tests"):
            if field_name not in obj:
                raise DataError(f"{ctx}: missing field {field_name!r}")
        if not isinstance(task_id, str) or not task_id:
            raise DataError(f"{ctx}: task_id must be a non-empty string")
        if task_id in seen:
            raise DataError(f"{ctx}: duplicate task_id")
        seen.add(task_id)
        if not isinstance(obj["prompt"], str) or not obj["prompt"].strip():
            raise DataError(f"{ctx}: prompt must be non-empty")
        if not _IDENT.match(obj.get("entry_point", "")):
            raise DataError(f"{ctx}: entry_point is not a valid identifier")
        raw_tests = obj["tests"]
        if not isinstance(raw_tests, list) or not raw_tests:
            raise DataError(f"{ctx}: tests must be a non-empty list")
        tests = []
        for t in raw_tests:
            if not isinstance(t, dict) or "args" not in t or "expected" not in t:
                raise DataError(f"{ctx}: each test needs 'args' and 'expected'")
            if not isinstance(t["args"], list):
                raise DataError(f"{ctx}: test args must be a list")
            for a in t["args"]:
                _validate_value(a, ctx)
            _validate_value(t["expected"], ctx)
            tests.append(TestCase(args=tuple(t["args"]), expected=t["expected"]))
        tasks.append(GenTask(task_id=task_id, prompt=obj["prompt"],
                             entry_point=obj["entry_point"], tests=tuple(tests)))
    return tasks


# --- task framing -------------------------------------------------------------


@dataclass(frozen=True)
class FramedExample:
    """One model example: source text maps to target text."""

    idx: int
    source: str
    target: str
    source_kind: str  # "code" or "nl"
    target_kind: str


def frame_pairs(records: list[PairRecord], task: str) -> list[FramedExample]:
    """summarize: code -> nl; generate: nl -> code."""
    if task not in ("summarize", "generate"):
        raise DataError(f"task must be 'summarize' or 'generate', got {task!r}")
    out = []
    for r in records:
        if task == "summarize":
            out.append(FramedExample(r.idx, r.code, r.nl, "code", "nl"))
        else:
            out.append(FramedExample(r.idx, r.nl, r.code, "nl", "code"))
    return out


def reverse_direction(examples: list[FramedExample]) -> list[FramedExample]:
    """Swap input and target framing; applying twice restores the original."""
    return [
        FramedExample(e.idx, e.target, e.source, e.target_kind, e.source_kind)
        for e in examples
    ]


def split(records: list, spec: SplitSpec) -> tuple[list, list, list]:
    """Deterministic shuffle then partition; sizes floor the valid and test
    fractions and the remainder goes to train."""
    order = list(range(len(records)))
    SeededRng(spec.seed).shuffle(order)
    shuffled = [records[i] for i in order]
    n = len(records)
    n_valid = int(n * spec.valid_frac)
    n_test = int(n * spec.test_frac)
    n_train = n - n_valid - n_test
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_valid],
            shuffled[n_train + n_valid:])


# --- vocabulary ----------------------------------------------------------------


class Vocab:
    """Word-level vocabulary with specials pinned at ids 0-4."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:5]) != list(SPECIAL_TOKENS):
            raise DataError("vocabulary must start with the five special tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @staticmethod
    def tokenize(text: str, kind: str) -> list[str]:
        if kind == "code":
            return lexemes(text)
        if kind == "nl":
            return tokenize_nl(text)
        raise DataError(f"unknown text kind {kind!r}")

    def encode(self, text: str, kind: str) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in self.tokenize(text, kind)]

    def decode(self, ids: list[int]) -> str:
        words = [self.id_to_token[i] for i in ids
                 if i < len(self.id_to_token) and i not in
                 (PAD_ID, BOS_ID, EOS_ID, SEP_ID)]
        return " ".join(words)


def build_vocab(records: list[PairRecord], min_count: int = 1) -> Vocab:
    """Count tokens from both fields; tokens below min_count map to UNK.

    Ordering is frequency-descending with lexicographic ties, so rebuilding
    from the same corpus always yields the same mapping.
    """
    counts: Counter = Counter()
    for r in records:
        counts.update(Vocab.tokenize(r.code, "code"))
        counts.update(Vocab.tokenize(r.nl, "nl"))
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(list(SPECIAL_TOKENS) + kept)


def encode_example(vocab: Vocab, example: FramedExample,
                   max_len: int) -> tuple[list[int], list[int]]:
    """Build (tokens, targets) with the loss masked up to the separator."""
    src = vocab.encode(example.source, example.source_kind)
    tgt = vocab.encode(example.target, example.target_kind)
    seq = [BOS_ID] + src + [SEP_ID] + tgt + [EOS_ID]
    seq = seq[:max_len]
    sep_pos = 1 + len(src)
    if sep_pos >= len(seq) - 1:
        raise DataError(
            f"record {example.idx}: sequence too long for max_len={max_len}")
    tokens = seq[:-1]
    targets = [seq[i + 1] if i >= sep_pos else IGNORE_INDEX
               for i in range(len(tokens))]
    return tokens, targets


def prompt_tokens(vocab: Vocab, example: FramedExample) -> list[int]:
    return [BOS_ID] + vocab.encode(example.source, example.source_kind) + [SEP_ID]


def encode_corpus(vocab: Vocab, examples: list[FramedExample],
                  max_len: int) -> list[tuple[list[int], list[int]]]:
    return [encode_example(vocab, e, max_len) for e in examples]


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file."""
    return Path(str(resources.files("peftbench").joinpath("fixtures", name)))
