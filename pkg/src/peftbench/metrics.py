"""Evaluation metrics for code and text generation.

Implements sentence-level smoothed BLEU-4, the four-component CodeBLEU
composite, exact-match EM@k, the unbiased pass@k estimator, and the
Wilcoxon signed-rank test, plus corpus-level evaluation over JSONL files
of {id, candidates, references}.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

from .minilang import KEYWORDS, ParseError, dataflow, lexemes, parse_source, subtrees

KEYWORD_NGRAM_WEIGHT = 4.0

_NL_TOKEN = re.compile(r"[a-z0-9_]+|[^\w\s]")


def tokenize_nl(text: str) -> list[str]:
    """Lowercased whitespace-and-punctuation split for natural language."""
    return _NL_TOKEN.findall(text.lower())


def tokenize_code(source: str) -> list[str]:
    """Mini-language lexemes; never fails (illegal chars become tokens)."""
    return lexemes(source)


# --- smoothed BLEU -----------------------------------------------------------


@dataclass(frozen=True)
class BleuConfig:
    """max_n is the largest n-gram order; epsilon floors zero-match orders.

    penalty_direction selects the brevity penalty:
      - "as-intended": min(1, exp(1 - len(R)/len(T))), which penalizes
        candidates shorter than the reference;
      - "as-printed": min(1, exp(1 - len(T)/len(R))), the literal published
        form, which never penalizes short candidates.
    """

    max_n: int = 4
    epsilon: float = 0.1
    penalty_direction: str = "as-intended"

    def __post_init__(self):
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.penalty_direction not in ("as-intended", "as-printed"):
            raise ValueError(f"unknown penalty_direction {self.penalty_direction!r}")


DEFAULT_BLEU = BleuConfig()


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def brevity_penalty(cand_len: int, ref_len: int, config: BleuConfig = DEFAULT_BLEU) -> float:
    if cand_len == 0 or ref_len == 0:
        return 0.0
    if config.penalty_direction == "as-intended":
        return min(1.0, math.exp(1.0 - ref_len / cand_len))
    return min(1.0, math.exp(1.0 - cand_len / ref_len))


def smoothed_bleu(candidate: list[str], reference: list[str],
                  config: BleuConfig = DEFAULT_BLEU) -> float:
    """Sentence-level geometric n-gram precision with an epsilon floor.

    Order n contributes m_n / l_n, where l_n = max(len(T)-n+1, 0) counts
    candidate n-grams and m_n counts reference-clipped matches; m_n is
    replaced by epsilon when zero, and an order with no candidate n-grams
    contributes the bare factor epsilon. An empty candidate scores 0.
    """
    if not candidate:
        return 0.0
    factors = []
    for n in range(1, config.max_n + 1):
        l_n = max(len(candidate) - n + 1, 0)
        if l_n == 0:
            factors.append(config.epsilon)
            continue
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        m_n = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        factors.append((m_n if m_n > 0 else config.epsilon) / l_n)
    geo = math.exp(sum(math.log(f) for f in factors) / config.max_n)
    return geo * brevity_penalty(len(candidate), len(reference), config)


def weighted_ngram_match(candidate: list[str], reference: list[str],
                         config: BleuConfig = DEFAULT_BLEU) -> float:
    """BLEU-style precision where keyword tokens weigh 4x.

    An n-gram's weight is the sum of its member-token weights; matches are
    reference-clipped. Smoothing mirrors smoothed_bleu: a zero-match order
    contributes epsilon over the raw candidate n-gram count, so uniform
    weights collapse this exactly to smoothed_bleu.
    """
    if not candidate:
        return 0.0

    def gram_weight(gram: tuple[str, ...]) -> float:
        return sum(KEYWORD_NGRAM_WEIGHT if t in KEYWORDS else 1.0 for t in gram)

    factors = []
    for n in range(1, config.max_n + 1):
        l_count = max(len(candidate) - n + 1, 0)
        if l_count == 0:
            factors.append(config.epsilon)
            continue
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        m_n = sum(min(c, ref_counts[g]) * gram_weight(g) for g, c in cand_counts.items())
        if m_n > 0:
            l_n = sum(c * gram_weight(g) for g, c in cand_counts.items())
            factors.append(m_n / l_n)
        else:
            factors.append(config.epsilon / l_count)
    geo = math.exp(sum(math.log(f) for f in factors) / config.max_n)
    return geo * brevity_penalty(len(candidate), len(reference), config)


# --- CodeBLEU ----------------------------------------------------------------


@dataclass(frozen=True)
class CodeBleuWeights:
    alpha: float = 0.25
    beta: float = 0.25
    gamma: float = 0.25
    delta: float = 0.25

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta),
                        ("gamma", self.gamma), ("delta", self.delta)):
            if v < 0:
                raise ValueError(f"{name} must be non-negative")


DEFAULT_CODEBLEU_WEIGHTS = CodeBleuWeights()


def ast_match(candidate_source: str, reference_source: str) -> float:
    """Multiset overlap of subtree fingerprints, normalized by the reference.

    The reference must parse; an unparseable candidate scores 0.
    """
    ref_fp = subtrees(parse_source(reference_source))
    try:
        cand_fp = subtrees(parse_source(candidate_source))
    except ParseError:
        return 0.0
    matched = sum((ref_fp & cand_fp).values())
    return matched / sum(ref_fp.values())


def dataflow_match(candidate_source: str, reference_source: str) -> float:
    """Fraction of reference def-use edges matched by slot and node kinds.

    A reference with no edges scores 1.0 by convention; an unparseable
    candidate scores 0.
    """
    ref_sig = dataflow(parse_source(reference_source)).edge_signatures()
    try:
        cand_sig = dataflow(parse_source(candidate_source)).edge_signatures()
    except ParseError:
        return 0.0
    total = sum(ref_sig.values())
    if total == 0:
        return 1.0
    matched = sum((ref_sig & cand_sig).values())
    return matched / total


@dataclass(frozen=True)
class CodeBleuResult:
    composite: float
    bleu: float
    weighted: float
    ast: float
    dataflow: float

    def to_dict(self) -> dict:
        return {
            "codebleu": self.composite,
            "bleu": self.bleu,
            "weighted_ngram": self.weighted,
            "ast_match": self.ast,
            "dataflow_match": self.dataflow,
        }


def codebleu(candidate_source: str, reference_source: str,
             weights: CodeBleuWeights = DEFAULT_CODEBLEU_WEIGHTS,
             bleu_config: BleuConfig = DEFAULT_BLEU) -> CodeBleuResult:
    """alpha*BLEU + beta*weighted-ngram + gamma*AST-match + delta*dataflow-match."""
    cand_tokens = tokenize_code(candidate_source)
    ref_tokens = tokenize_code(reference_source)
    b = smoothed_bleu(cand_tokens, ref_tokens, bleu_config)
    w = weighted_ngram_match(cand_tokens, ref_tokens, bleu_config)
    a = ast_match(candidate_source, reference_source)
    d = dataflow_match(candidate_source, reference_source)
    comp = weights.alpha * b + weights.beta * w + weights.gamma * a + weights.delta * d
    return CodeBleuResult(composite=comp, bleu=b, weighted=w, ast=a, dataflow=d)


# --- exact match -------------------------------------------------------------


def _canonical_text(text: str) -> str:
    """Trailing whitespace of each line is ignored; nothing else is."""
    return "\n".join(line.rstrip() for line in text.split("\n"))


def em_at_k(samples: list[str], reference: str) -> float:
    """Average exact-match rate of the samples against one reference."""
    if not samples:
        raise ValueError("em_at_k needs at least one sample")
    ref = _canonical_text(reference)
    hits = sum(1 for s in samples if _canonical_text(s) == ref)
    return hits / len(samples)


# --- pass@k ------------------------------------------------------------------


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k drawn samples passes, given that
    c of the n generated samples pass all tests.

    Computed in the numerically stable product form
    1 - prod_{i=n-c+1..n} (1 - k/i), which equals 1 - C(n-c, k)/C(n, k).
    """
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


# --- Wilcoxon signed-rank ----------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float | None  # min(W+, W-); None when all differences are zero
    p_value: float
    m: int  # pairs remaining after dropping zero differences
    degenerate: bool
    method: str  # exact | normal | degenerate


EXACT_ENUMERATION_LIMIT = 20


def _midranks(values: list[float]) -> tuple[list[float], list[int]]:
    """1-based ranks with midrank ties; also returns tie-group sizes."""
    m = len(values)
    order = sorted(range(m), key=lambda i: values[i])
    ranks = [0.0] * m
    tie_sizes = []
    i = 0
    while i < m:
        j = i
        while j + 1 < m and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0
        for p in range(i, j + 1):
            ranks[order[p]] = avg
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def wilcoxon_signed_rank(a: list[float], b: list[float]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; |d| is ranked with midrank ties and
    W = min(W+, W-). For m <= 20 the p-value is exact: the probability,
    over all 2^m equiprobable sign assignments, that min(W+, W-) is at most
    the observed W (computed by rank-sum convolution). Larger m uses the
    normal approximation with tie-corrected variance and a continuity
    correction. All differences zero is degenerate: W undefined, p = 1.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("need at least one pair")
    diffs = [x - y for x, y in zip(a, b) if x - y != 0.0]
    m = len(diffs)
    if m == 0:
        return WilcoxonResult(statistic=None, p_value=1.0, m=0,
                              degenerate=True, method="degenerate")
    ranks, tie_sizes = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)

    if m <= EXACT_ENUMERATION_LIMIT:
        # Doubled ranks are integers even with midrank ties; count, over all
        # sign assignments, how many put min(W+, W-) at or below the observed.
        doubled = [round(2 * r) for r in ranks]
        total2 = sum(doubled)
        counts = [0] * (total2 + 1)
        counts[0] = 1
        for dr in doubled:
            for s in range(total2, dr - 1, -1):
                counts[s] += counts[s - dr]
        w2 = 2 * w
        tail = sum(cnt for s, cnt in enumerate(counts)
                   if min(s, total2 - s) <= w2 + 1e-9)
        return WilcoxonResult(statistic=w, p_value=tail / (1 << m), m=m,
                              degenerate=False, method="exact")

    mean = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0
    var -= sum(t**3 - t for t in tie_sizes) / 48.0
    z = (w - mean + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    return WilcoxonResult(statistic=w, p_value=min(1.0, p), m=m,
                          degenerate=False, method="normal")


# --- corpus evaluation -------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    candidates: tuple[str, ...]
    references: tuple[str, ...]


def load_corpus_jsonl(path) -> list[CorpusEntry]:
    """Read {id, candidates: [text], references: [text]} records."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            for key in ("id", "candidates", "references"):
                if key not in obj:
                    raise ValueError(f"{path}: line {lineno}: missing field {key!r}")
            if not obj["candidates"] or not obj["references"]:
                raise ValueError(f"{path}: line {lineno}: empty candidates or references")
            entries.append(CorpusEntry(
                id=str(obj["id"]),
                candidates=tuple(obj["candidates"]),
                references=tuple(obj["references"]),
            ))
    return entries


@dataclass
class MetricReport:
    kind: str  # "nl" or "code"
    n_records: int
    bleu4: float | None = None
    codebleu: CodeBleuResult | None = None
    em_at: dict[int, float] | None = None
    pass_at: dict[int, float] | None = None

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "n_records": self.n_records}
        if self.bleu4 is not None:
            out["bleu4"] = self.bleu4
        if self.codebleu is not None:
            out.update(self.codebleu.to_dict())
        if self.em_at is not None:
            for k in sorted(self.em_at):
                out[f"em_at_{k}"] = self.em_at[k]
        if self.pass_at is not None:
            for k in sorted(self.pass_at):
                out[f"pass_at_{k}"] = self.pass_at[k]
        return out

    def to_tsv(self) -> str:
        lines = ["metric\tvalue"]
        for key, value in self.to_dict().items():
            lines.append(f"{key}\t{value}")
        return "\n".join(lines) + "\n"


def evaluate_corpus(entries: list[CorpusEntry], kind: str,
                    em_ks: tuple[int, ...] = (),
                    weights: CodeBleuWeights = DEFAULT_CODEBLEU_WEIGHTS,
                    bleu_config: BleuConfig = DEFAULT_BLEU) -> MetricReport:
    """Average sentence-level metrics over a corpus.

    BLEU and CodeBLEU judge the first candidate against the first
    reference; EM@k judges the first k candidates against any reference.
    """
    if kind not in ("nl", "code"):
        raise ValueError(f"kind must be 'nl' or 'code', got {kind!r}")
    if not entries:
        raise ValueError("corpus is empty")
    n = len(entries)
    report = MetricReport(kind=kind, n_records=n)
    if kind == "nl":
        report.bleu4 = sum(
            smoothed_bleu(tokenize_nl(e.candidates[0]), tokenize_nl(e.references[0]),
                          bleu_config)
            for e in entries) / n
        return report

    acc = {"composite": 0.0, "bleu": 0.0, "weighted": 0.0, "ast": 0.0, "dataflow": 0.0}
    for e in entries:
        r = codebleu(e.candidates[0], e.references[0], weights, bleu_config)
        acc["composite"] += r.composite
        acc["bleu"] += r.bleu
        acc["weighted"] += r.weighted
        acc["ast"] += r.ast
        acc["dataflow"] += r.dataflow
    report.codebleu = CodeBleuResult(
        composite=acc["composite"] / n, bleu=acc["bleu"] / n,
        weighted=acc["weighted"] / n, ast=acc["ast"] / n,
        dataflow=acc["dataflow"] / n)
    report.bleu4 = report.codebleu.bleu
    if em_ks:
        ems = {}
        for k in em_ks:
            per = []
            for e in entries:
                if len(e.candidates) < k:
                    raise ValueError(
                        f"record {e.id}: EM@{k} needs {k} candidates, "
                        f"got {len(e.candidates)}")
                refs = [_canonical_text(r) for r in e.references]
                hits = sum(1 for s in e.candidates[:k] if _canonical_text(s) in refs)
                per.append(hits / k)
            ems[k] = sum(per) / n
        report.em_at = ems
    return report
