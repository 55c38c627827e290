"""Command-line experiment harness.

Subcommands: train, eval, passk, merge, params, stats. Results are written
as JSON with TSV mirrors; every result file embeds the run manifest
(command, resolved config, seed, input digests, tool version, timestamps).
Exit codes: 0 success, 2 usage, 3 input data, 4 numeric abort,
5 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .adapters import count_params
from .data import (
    EOS_ID,
    DataError,
    FramedExample,
    SplitSpec,
    Vocab,
    build_vocab,
    encode_corpus,
    frame_pairs,
    load_pairs,
    load_tasks,
    prompt_tokens,
    split,
)
from .metrics import (
    CorpusEntry,
    evaluate_corpus,
    pass_at_k,
    wilcoxon_signed_rank,
)
from .minilang import run_source, values_equal
from .minilang.interp import DEFAULT_STEP_BUDGET
from .model import Microformer, ModelConfig, ModelError
from .training import TrainConfig, TrainingDiverged, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_VERIFY = 5

MERGE_PROBE_COUNT = 32
MERGE_TOLERANCE = 1e-10


class UsageError(ValueError):
    pass


def _default_seed() -> int:
    return int(os.environ.get("PEFTBENCH_SEED", "7"))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


class Manifest:
    def __init__(self, command: str, config: dict, seed: int, inputs: list):
        self.doc = {
            "command": command,
            "config": config,
            "seed": seed,
            "inputs": {str(p): _sha256(p) for p in inputs},
            "tool_version": __version__,
            "started_at": _now(),
            "finished_at": None,
        }

    def finish(self) -> dict:
        self.doc["finished_at"] = _now()
        return self.doc

    def stable(self) -> dict:
        """Manifest without timestamps, for files whose bytes must be
        reproducible run-over-run (checkpoints feed later input digests)."""
        return {k: v for k, v in self.doc.items()
                if k not in ("started_at", "finished_at")}


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise UsageError(f"--k must be a comma-separated list of integers: {e}")
    if not ks or any(k < 1 for k in ks):
        raise UsageError("--k values must be positive integers")
    return ks


# --- train -------------------------------------------------------------------


def cmd_train(args) -> int:
    records = load_pairs(args.data)
    if not records:
        raise DataError(f"{args.data}: no records")
    framed = frame_pairs(records, args.task)
    vocab = build_vocab(records, args.min_count)

    if args.val_frac > 0:
        train_ex, valid_ex, _ = split(
            framed, SplitSpec(1.0 - args.val_frac, args.val_frac, 0.0, args.seed))
        if not valid_ex:
            valid_ex = train_ex
    else:
        train_ex, valid_ex = framed, framed

    mcfg = ModelConfig(vocab_size=len(vocab), peft_method=args.method,
                       lora_rank=args.rank, compacter_n=args.phm_n)
    model = Microformer(mcfg, args.seed)
    tcfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                       batch_size=args.batch_size, seed=args.seed)

    manifest = Manifest(
        "train",
        {
            "data": str(args.data), "task": args.task, "method": args.method,
            "rank": args.rank, "phm_n": args.phm_n, "lr": args.lr,
            "epochs": tcfg.resolved_epochs(len(train_ex)),
            "batch_size": args.batch_size, "val_frac": args.val_frac,
            "min_count": args.min_count, "vocab_size": len(vocab),
        },
        args.seed, [args.data])

    encoded_train = encode_corpus(vocab, train_ex, mcfg.max_seq_len)
    encoded_valid = encode_corpus(vocab, valid_ex, mcfg.max_seq_len)
    history = train(model, encoded_train, encoded_valid, tcfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = manifest.finish()
    model.save_checkpoint(out / "model",
                          extra={"task": args.task, "vocab": vocab.id_to_token,
                                 "manifest": manifest.stable()})
    _write_json(out / "history.json", {"manifest": doc, "history": history.to_dict()})
    budget = count_params(model)
    print("param_budget " + json.dumps(budget.to_dict(), sort_keys=True))
    print(f"history written to {out / 'history.json'}")
    return EXIT_OK


# --- candidate generation ------------------------------------------------------


def _load_model(stem) -> tuple[Microformer, dict, Vocab]:
    model, manifest = Microformer.load_checkpoint(stem)
    if "vocab" not in manifest:
        raise DataError(f"{stem}.json: checkpoint carries no vocabulary")
    return model, manifest, Vocab(manifest["vocab"])


def _generate_candidates(model: Microformer, vocab: Vocab, example: FramedExample,
                         n: int, mode: str, temperature: float, seed: int,
                         max_new: int) -> list[str]:
    prompt = prompt_tokens(vocab, example)
    if mode == "greedy":
        seqs = model.generate(prompt, max_new, mode="greedy", k=1, eos_id=EOS_ID)
        seqs = seqs * n
    else:
        seqs = model.generate(prompt, max_new, mode="sampled",
                              temperature=temperature, seed=seed, k=n,
                              eos_id=EOS_ID)
    return [vocab.decode(s) for s in seqs]


# --- eval ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    ks = _parse_ks(args.k)
    model, ck_manifest, vocab = _load_model(args.ckpt)
    task = args.task or ck_manifest.get("task")
    if task not in ("summarize", "generate"):
        raise UsageError("--task is required (checkpoint does not record one)")
    records = load_pairs(args.data)
    if not records:
        raise DataError(f"{args.data}: no records")
    framed = frame_pairs(records, task)

    inputs = [args.data, str(args.ckpt) + ".json", str(args.ckpt) + ".bin"]
    if args.tasks:
        inputs.append(args.tasks)
    manifest = Manifest(
        "eval",
        {
            "ckpt": str(args.ckpt), "data": str(args.data), "task": task,
            "k": list(ks), "mode": args.mode, "temperature": args.temperature,
            "max_new": args.max_new, "n": args.n,
            "tasks": str(args.tasks) if args.tasks else None,
            "budget": args.budget,
        },
        args.seed, inputs)

    kind = "nl" if task == "summarize" else "code"
    n_cands = max(ks) if task == "generate" else 1
    entries = []
    for i, ex in enumerate(framed):
        cands = _generate_candidates(model, vocab, ex, n_cands, args.mode,
                                     args.temperature, args.seed + i, args.max_new)
        reference = " ".join(Vocab.tokenize(ex.target, ex.target_kind))
        entries.append(CorpusEntry(id=str(ex.idx), candidates=tuple(cands),
                                   references=(reference,)))

    report = evaluate_corpus(entries, kind, em_ks=ks if task == "generate" else ())
    if args.tasks:
        tasks = load_tasks(args.tasks)
        n = args.n or max(ks)
        per_task = _run_passk(model, vocab, tasks, n, ks, args, candidates=None)
        report.pass_at = {
            k: sum(row["pass_at_k"][str(k)] for row in per_task) / len(per_task)
            for k in ks
        }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = manifest.finish()
    with open(out / "candidates.jsonl", "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({"id": e.id, "candidates": list(e.candidates),
                                 "references": list(e.references)},
                                sort_keys=True) + "\n")
    _write_json(out / "metrics.json", {"manifest": doc, **report.to_dict()})
    with open(out / "metrics.tsv", "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    print(report.to_tsv(), end="")
    return EXIT_OK


# --- passk ----------------------------------------------------------------------


def _candidate_passes(source: str, task, budget: int) -> bool:
    for test in task.tests:
        outcome = run_source(source, task.entry_point, list(test.args), budget)
        if not (outcome.ok and values_equal(outcome.value, test.expected)):
            return False
    return True


def _run_passk(model, vocab, tasks, n: int, ks, args, candidates) -> list[dict]:
    if any(k > n for k in ks):
        raise UsageError(f"every k in {list(ks)} must be <= n={n}")

    per_task_sources: dict[str, list[str]] = {}
    for i, task in enumerate(tasks):
        if candidates is not None:
            srcs = candidates.get(task.task_id)
            if srcs is None:
                raise DataError(f"candidates file has no entry for {task.task_id!r}")
            if len(srcs) < n:
                raise DataError(
                    f"task {task.task_id!r}: need {n} candidates, got {len(srcs)}")
            per_task_sources[task.task_id] = list(srcs[:n])
        else:
            ex = FramedExample(idx=i, source=task.prompt, target="",
                               source_kind="nl", target_kind="code")
            per_task_sources[task.task_id] = _generate_candidates(
                model, vocab, ex, n, "sampled", args.temperature,
                args.seed + i, args.max_new)

    def verdict(item):
        task, source = item
        return task.task_id, _candidate_passes(source, task, args.budget)

    work = [(task, src) for task in tasks for src in per_task_sources[task.task_id]]
    passes: dict[str, int] = {task.task_id: 0 for task in tasks}
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for task_id, ok in pool.map(verdict, work):
            if ok:
                passes[task_id] += 1

    rows = []
    for task in tasks:
        c = passes[task.task_id]
        rows.append({
            "task_id": task.task_id,
            "n": n,
            "c": c,
            "pass_at_k": {str(k): pass_at_k(n, c, k) for k in ks},
        })
    return rows


def cmd_passk(args) -> int:
    ks = _parse_ks(args.k)
    tasks = load_tasks(args.tasks)
    if not tasks:
        raise DataError(f"{args.tasks}: no tasks")

    model = vocab = None
    candidates = None
    inputs = [args.tasks]
    if args.candidates:
        candidates = {}
        with open(args.candidates, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "task_id" not in obj or "candidates" not in obj:
                    raise DataError(
                        f"{args.candidates}: line {lineno}: need task_id and candidates")
                candidates[obj["task_id"]] = list(obj["candidates"])
        n = args.n or min(len(v) for v in candidates.values())
        inputs.append(args.candidates)
    elif args.ckpt:
        model, _, vocab = _load_model(args.ckpt)
        n = args.n or max(ks)
        inputs.extend([str(args.ckpt) + ".json", str(args.ckpt) + ".bin"])
    else:
        raise UsageError("passk needs either --ckpt or --candidates")

    manifest = Manifest(
        "passk",
        {
            "tasks": str(args.tasks),
            "ckpt": str(args.ckpt) if args.ckpt else None,
            "candidates": str(args.candidates) if args.candidates else None,
            "n": n, "k": list(ks), "budget": args.budget, "jobs": args.jobs,
        },
        args.seed, inputs)

    rows = _run_passk(model, vocab, tasks, n, ks, args, candidates)
    mean = {str(k): sum(r["pass_at_k"][str(k)] for r in rows) / len(rows) for k in ks}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = manifest.finish()
    _write_json(out / "passk.json",
                {"manifest": doc, "per_task": rows, "mean_pass_at_k": mean})
    with open(out / "passk.tsv", "w", encoding="utf-8") as fh:
        fh.write("task_id\tn\tc\t" + "\t".join(f"pass_at_{k}" for k in ks) + "\n")
        for r in rows:
            cells = [r["task_id"], str(r["n"]), str(r["c"])]
            cells += [str(r["pass_at_k"][str(k)]) for k in ks]
            fh.write("\t".join(cells) + "\n")
    for k in ks:
        print(f"mean pass@{k} = {mean[str(k)]}")
    return EXIT_OK


# --- merge ----------------------------------------------------------------------


def cmd_merge(args) -> int:
    model, ck_manifest, vocab = _load_model(args.ckpt)
    if model.peft_method != "lora":
        print(
            f"merge is defined for lora checkpoints only; this one is "
            f"{model.peft_method!r} (adapters with a nonlinearity cannot be "
            "folded into the base weights)",
            file=sys.stderr)
        return EXIT_USAGE

    manifest = Manifest("merge", {"ckpt": str(args.ckpt)}, args.seed,
                        [str(args.ckpt) + ".json", str(args.ckpt) + ".bin"])

    from .tensor import SeededRng  # local: probe construction only

    rng = SeededRng(args.seed)
    probes = [
        [rng.randint(model.config.vocab_size) for _ in range(8)]
        for _ in range(MERGE_PROBE_COUNT)
    ]
    before = [model.forward(p).array.copy() for p in probes]
    model.merge_lora()
    worst = 0.0
    for p, b in zip(probes, before):
        after = model.forward(p).array
        worst = max(worst, float(abs(after - b).max()))
    if worst > MERGE_TOLERANCE:
        print(f"merge verification failed: max logit deviation {worst:g} "
              f"exceeds {MERGE_TOLERANCE:g}", file=sys.stderr)
        return EXIT_VERIFY

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.finish()
    model.save_checkpoint(out / "merged",
                          extra={"task": ck_manifest.get("task"),
                                 "vocab": vocab.id_to_token,
                                 "manifest": manifest.stable()})
    print(f"merged checkpoint written to {out / 'merged'}.json/.bin "
          f"(max probe deviation {worst:g})")
    return EXIT_OK


# --- params and stats -------------------------------------------------------------


def cmd_params(args) -> int:
    model, _, _ = _load_model(args.ckpt)
    budget = count_params(model)
    print(json.dumps({"method": model.peft_method, **budget.to_dict()},
                     sort_keys=True))
    return EXIT_OK


def _load_scores(path) -> dict[str, float]:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj or "score" not in obj:
                raise DataError(f"{path}: line {lineno}: need id and score")
            scores[str(obj["id"])] = float(obj["score"])
    if not scores:
        raise DataError(f"{path}: no score records")
    return scores


def cmd_stats(args) -> int:
    a = _load_scores(args.a)
    b = _load_scores(args.b)
    unmatched = sorted(set(a) ^ set(b))
    if unmatched:
        raise DataError(
            f"score files do not align; first unmatched ids: {unmatched[:5]}")
    ids = sorted(a)
    result = wilcoxon_signed_rank([a[i] for i in ids], [b[i] for i in ids])
    verdict = (not result.degenerate) and result.p_value < args.alpha
    print(json.dumps({
        "w": result.statistic,
        "p_value": result.p_value,
        "m": result.m,
        "degenerate": result.degenerate,
        "method": result.method,
        "alpha": args.alpha,
        "significant": verdict,
    }, sort_keys=True))
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peftbench",
        description="Desk-scale PEFT fine-tuning and code-task evaluation harness.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="random seed (default: $PEFTBENCH_SEED or 7)")

    p = sub.add_parser("train", help="fine-tune a model on a pair dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=["summarize", "generate"])
    p.add_argument("--method", required=True, choices=["full", "lora", "compacter"])
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--phm-n", type=int, default=4, dest="phm_n")
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--val-frac", type=float, default=0.0)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="generate and score candidates")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=["summarize", "generate"])
    p.add_argument("--k", default="1,10")
    p.add_argument("--mode", choices=["greedy", "sampled"], default="greedy")
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--max-new", type=int, default=32)
    p.add_argument("--n", type=int, default=None,
                   help="samples per task for pass@k (default: max k)")
    p.add_argument("--tasks", default=None,
                   help="task JSONL; adds pass@k to the report")
    p.add_argument("--budget", type=int, default=DEFAULT_STEP_BUDGET)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("passk", help="functional-correctness evaluation")
    p.add_argument("--tasks", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--candidates", default=None,
                   help="JSONL of {task_id, candidates}")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", default="1,10")
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--max-new", type=int, default=48)
    p.add_argument("--budget", type=int, default=DEFAULT_STEP_BUDGET)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_passk)

    p = sub.add_parser("merge", help="fold lora adapters into the base weights")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("params", help="print the parameter budget of a checkpoint")
    p.add_argument("--ckpt", required=True)
    common(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("stats", help="Wilcoxon signed-rank over paired score files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    common(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
