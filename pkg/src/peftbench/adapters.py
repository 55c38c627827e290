"""Low-rank and Kronecker-product adapter mechanisms.

Two families live here. The low-rank adapter keeps a frozen base weight W
and adds a trainable delta W_A @ W_B of rank r, scaled by 1/r, which can be
folded back into W after training. The Kronecker adapter builds each of its
projection weights as a sum of n Kronecker products A_i (x) B_i, where the
small n x n A_i matrices are shared across every adapter layer in the model
and each B_i is itself a low-rank product B_down_i @ B_up_i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Matrix, SeededRng, ShapeError, kron, low_rank_product


class ConfigError(ValueError):
    """Adapter configuration violates a structural requirement."""


# --- activations -----------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation."""
    inner = _GELU_C * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def identity(x: np.ndarray) -> np.ndarray:
    return x


def identity_grad(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "gelu": (gelu, gelu_grad),
    "identity": (identity, identity_grad),
}


# --- low-rank adapter ------------------------------------------------------


@dataclass(frozen=True)
class LoraAdapter:
    """Value container for one low-rank adaptation site.

    w_a is (in x r), w_b is (r x out); scaling defaults to 1/r.
    """

    w_a: Matrix
    w_b: Matrix
    rank: int
    scaling: float

    def __post_init__(self):
        if self.rank <= 0:
            raise ConfigError(f"rank must be positive, got {self.rank}")
        if self.w_a.cols != self.rank or self.w_b.rows != self.rank:
            raise ConfigError(
                f"factor shapes {self.w_a.shape} and {self.w_b.shape} do not "
                f"share inner dimension rank={self.rank}"
            )

    @classmethod
    def create(cls, w_a: Matrix, w_b: Matrix, rank: int, scaling: float | None = None):
        return cls(w_a=w_a, w_b=w_b, rank=rank,
                   scaling=(1.0 / rank) if scaling is None else float(scaling))


def lora_forward(x: Matrix, w_frozen: Matrix, adapter: LoraAdapter) -> Matrix:
    """x @ W + scaling * (x @ W_A) @ W_B. The base W is read-only."""
    if x.cols != w_frozen.rows:
        raise ShapeError(f"input width {x.cols} does not match base {w_frozen.shape}")
    if adapter.w_a.rows != w_frozen.rows or adapter.w_b.cols != w_frozen.cols:
        raise ShapeError(
            f"adapter {adapter.w_a.shape}x{adapter.w_b.shape} does not match "
            f"base {w_frozen.shape}"
        )
    base = x.array @ w_frozen.array
    delta = (x.array @ adapter.w_a.array) @ adapter.w_b.array
    return Matrix.from_array(base + adapter.scaling * delta)


def lora_merge(w_frozen: Matrix, adapter: LoraAdapter) -> Matrix:
    """Fold the adapter into the base: W' = W + scaling * W_A @ W_B.

    Not idempotent: merging twice adds the delta twice. After a merge the
    adapter can be discarded and a plain forward with W' reproduces the
    adapter-bearing forward.
    """
    if adapter.w_a.rows != w_frozen.rows or adapter.w_b.cols != w_frozen.cols:
        raise ShapeError(
            f"adapter {adapter.w_a.shape}x{adapter.w_b.shape} does not match "
            f"base {w_frozen.shape}"
        )
    delta = low_rank_product(adapter.w_a, adapter.w_b)
    return Matrix.from_array(w_frozen.array + adapter.scaling * delta.array)


# --- Kronecker (PHM) adapter -----------------------------------------------


@dataclass(frozen=True)
class SharedKroneckerBank:
    """The n matrices A_i (each n x n) shared by every PHM layer in a model."""

    n: int
    a_mats: tuple[Matrix, ...]

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigError(f"n must be positive, got {self.n}")
        if len(self.a_mats) != self.n:
            raise ConfigError(f"bank needs {self.n} matrices, got {len(self.a_mats)}")
        for a in self.a_mats:
            if a.shape != (self.n, self.n):
                raise ConfigError(f"bank matrices must be {self.n}x{self.n}, got {a.shape}")


@dataclass(frozen=True)
class PhmLayer:
    """One parametrized-hypercomplex linear layer (k inputs, d outputs).

    The effective weight is sum_i A_i (x) (B_down_i @ B_up_i) with A_i from
    the shared bank; n must divide both k and d so the blocks compose.
    """

    n: int
    k: int
    d: int
    bank: SharedKroneckerBank
    b_down: tuple[Matrix, ...]
    b_up: tuple[Matrix, ...]
    bias: Matrix  # 1 x d

    def __post_init__(self):
        n, k, d = self.n, self.k, self.d
        if self.bank.n != n:
            raise ConfigError(f"layer n={n} does not match bank n={self.bank.n}")
        if k % n != 0 or d % n != 0:
            raise ConfigError(f"n={n} must divide both k={k} and d={d}")
        if len(self.b_down) != n or len(self.b_up) != n:
            raise ConfigError(f"need {n} B_down and B_up factors")
        kb, db = k // n, d // n
        for bd, bu in zip(self.b_down, self.b_up):
            if bd.rows != kb or bu.cols != db or bd.cols != bu.rows:
                raise ConfigError(
                    f"factor shapes {bd.shape}, {bu.shape} do not compose to {kb}x{db}"
                )
        if self.bias.shape != (1, d):
            raise ConfigError(f"bias must be 1x{d}, got {self.bias.shape}")


def phm_weight(layer: PhmLayer) -> Matrix:
    """Materialize the effective k x d weight: sum_i A_i (x) (B_down_i @ B_up_i)."""
    acc = np.zeros((layer.k, layer.d))
    for a, bd, bu in zip(layer.bank.a_mats, layer.b_down, layer.b_up):
        b = low_rank_product(bd, bu)
        acc += kron(a, b).array
    return Matrix.from_array(acc)


def phm_forward(x: Matrix, layer: PhmLayer) -> Matrix:
    if x.cols != layer.k:
        raise ShapeError(f"input width {x.cols} does not match layer k={layer.k}")
    return Matrix.from_array(x.array @ phm_weight(layer).array + layer.bias.array)


@dataclass(frozen=True)
class CompacterAdapter:
    """Down-projection PHM layer, a nonlinearity, an up-projection PHM layer.

    Output shape equals input shape so the adapter drops into a residual
    stream; two of these attach to each transformer block.
    """

    down: PhmLayer
    up: PhmLayer
    nonlinearity: str = "gelu"

    def __post_init__(self):
        if self.down.d != self.up.k:
            raise ConfigError(
                f"down output {self.down.d} does not feed up input {self.up.k}"
            )
        if self.down.k != self.up.d:
            raise ConfigError(
                f"adapter is not residual-compatible: {self.down.k} in, {self.up.d} out"
            )
        if self.nonlinearity not in ACTIVATIONS:
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")


def compacter_forward(h: Matrix, adapter: CompacterAdapter) -> Matrix:
    """h + phm_up(act(phm_down(h))): residual connection around the adapter."""
    act, _ = ACTIVATIONS[adapter.nonlinearity]
    z = phm_forward(h, adapter.down)
    mid = Matrix.from_array(act(z.array))
    out = phm_forward(mid, adapter.up)
    return Matrix.from_array(h.array + out.array)


# --- parameter accounting ---------------------------------------------------


@dataclass(frozen=True)
class ParamBudget:
    trainable: int
    total: int

    @property
    def ratio(self) -> float:
        return self.trainable / self.total

    def to_dict(self) -> dict:
        return {"trainable": self.trainable, "total": self.total, "ratio": self.ratio}


def count_params(model, method: str | None = None) -> ParamBudget:
    """Tally trainable (unfrozen) vs total parameter scalars of a model.

    Shared parameters (the Kronecker bank) appear once in the model's
    registry and are therefore counted once. When `method` is given it must
    match the model's active method.
    """
    if method is not None and getattr(model, "peft_method", method) != method:
        raise ConfigError(
            f"model uses {model.peft_method!r}, not {method!r}")
    trainable = 0
    total = 0
    for _, p in model.named_parameters():
        size = p.value.rows * p.value.cols
        total += size
        if not p.frozen:
            trainable += size
    return ParamBudget(trainable=trainable, total=total)


# --- initialization ---------------------------------------------------------

INIT_SIGMA = 0.02


def init_adapters(model, seed: int) -> None:
    """Draw fresh adapter parameters so the adapted model is an exact
    identity of the frozen base at initialization.

    Low-rank sites: W_A ~ N(0, 0.02), W_B = 0, so the delta is zero.
    Kronecker sites: A_i and B_down ~ N(0, 0.02), B_up = 0, biases 0, so each
    adapter reduces to its residual connection.
    """
    rng = SeededRng(seed)
    for site in model.lora_sites:
        a = site.w_a
        a.set_value(rng.normal_matrix(a.value.rows, a.value.cols, INIT_SIGMA))
        site.w_b.set_value(Matrix.zeros(site.w_b.value.rows, site.w_b.value.cols))
    if model.kron_bank is not None:
        for p in model.kron_bank:
            p.set_value(rng.normal_matrix(p.value.rows, p.value.cols, INIT_SIGMA))
    for site in model.compacter_sites:
        for layer in (site.down, site.up):
            for p in layer.b_down:
                p.set_value(rng.normal_matrix(p.value.rows, p.value.cols, INIT_SIGMA))
            for p in layer.b_up:
                p.set_value(Matrix.zeros(p.value.rows, p.value.cols))
            layer.bias.set_value(Matrix.zeros(1, layer.bias.value.cols))


# --- serialization -----------------------------------------------------------


def adapters_to_json(model) -> str:
    """Serialize all adapter parameters as a single JSON document.

    Values are written as decimal strings via repr so the round trip is
    value-exact.
    """
    if model.peft_method == "full":
        raise ConfigError("model has no adapters to serialize")
    params = [(name, p) for name, p in model.named_parameters() if not p.frozen]
    doc = {
        "method": model.peft_method,
        "seed": model.seed,
        "shapes": {name: [p.value.rows, p.value.cols] for name, p in params},
        "values": {
            name: [repr(float(v)) for v in p.value.data] for name, p in params
        },
    }
    return json.dumps(doc, sort_keys=True)


def adapters_from_json(model, text: str) -> None:
    """Restore adapter parameters serialized by adapters_to_json."""
    doc = json.loads(text)
    if doc["method"] != model.peft_method:
        raise ConfigError(
            f"document method {doc['method']!r} does not match model "
            f"{model.peft_method!r}"
        )
    params = {name: p for name, p in model.named_parameters() if not p.frozen}
    if set(doc["shapes"]) != set(params):
        raise ConfigError("adapter parameter names do not match the model")
    for name, p in params.items():
        rows, cols = doc["shapes"][name]
        if (rows, cols) != (p.value.rows, p.value.cols):
            raise ConfigError(f"shape mismatch for {name}")
        p.set_value(Matrix(rows, cols, [float(s) for s in doc["values"][name]]))
