"""peftbench: desk-scale parameter-efficient fine-tuning and evaluation.

Low-rank and Kronecker-product adapters on a small from-scratch
transformer, the code-task metric stack (smoothed BLEU-4, CodeBLEU, EM@k,
pass@k, Wilcoxon signed-rank), a sandboxed mini-language for functional
correctness, and a CLI experiment harness over JSONL datasets.
"""

__version__ = "0.1.0"
