"""A small decoder-only transformer with explicit analytic backpropagation,
per-parameter freeze flags and adapter injection points.

Pre-layer-norm blocks, learned positional embeddings, causal masking and a
word-level vocabulary. Forward passes cache enough intermediates for an
exact manual backward pass; gradients land only on unfrozen parameters.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import adapters as ad
from .tensor import Matrix, SeededRng, ShapeError

IGNORE_INDEX = -1  # target positions excluded from the loss


class ModelError(ValueError):
    """Model construction or usage error."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 32
    d_ff: int = 64
    max_seq_len: int = 128
    peft_method: str = "full"  # full | lora | compacter
    lora_rank: int = 4
    compacter_n: int = 4
    activation: str = "gelu"
    init_std: float = 0.08
    # The output head is drawn wider than the hidden weights so a frozen
    # head can still express confident token distributions when only
    # adapters train.
    head_init_std: float = 0.5

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ModelError("vocab_size must be positive")
        if self.d_model % self.n_heads != 0:
            raise ModelError(
                f"n_heads={self.n_heads} must divide d_model={self.d_model}")
        if self.peft_method not in ("full", "lora", "compacter"):
            raise ModelError(f"unknown peft_method {self.peft_method!r}")
        if self.peft_method == "compacter" and self.d_model % self.compacter_n != 0:
            raise ModelError(
                f"compacter_n={self.compacter_n} must divide d_model={self.d_model}")

    def bottleneck(self) -> int:
        """Compacter adapter width: d_model/4 rounded down to a multiple of n."""
        n = self.compacter_n
        width = max(n, (self.d_model // 4) // n * n)
        return width


class Parameter:
    """A named weight with its gradient buffer and a freeze flag.

    Frozen parameters never receive gradient and are never stepped; their
    grad stays exactly zero through every backward pass.
    """

    __slots__ = ("name", "value", "grad", "frozen")

    def __init__(self, name: str, value: Matrix, frozen: bool = False):
        self.name = name
        self.value = value
        self.grad = Matrix.zeros(value.rows, value.cols)
        self.frozen = frozen

    def set_value(self, value: Matrix) -> None:
        if value.shape != self.value.shape:
            raise ShapeError(
                f"{self.name}: cannot replace {self.value.shape} with {value.shape}")
        self.value = value

    def zero_grad(self) -> None:
        self.grad = Matrix.zeros(self.value.rows, self.value.cols)

    def accumulate(self, delta: np.ndarray) -> None:
        if self.frozen:
            return
        self.grad = Matrix.from_array(self.grad.array + delta)

    @property
    def size(self) -> int:
        return self.value.rows * self.value.cols


@dataclass
class LoraSite:
    """One low-rank injection point wrapping a frozen base parameter."""

    base: Parameter
    w_a: Parameter
    w_b: Parameter
    rank: int

    @property
    def scaling(self) -> float:
        return 1.0 / self.rank

    def view(self) -> ad.LoraAdapter:
        return ad.LoraAdapter.create(self.w_a.value, self.w_b.value, self.rank)


@dataclass
class PhmParams:
    """Parameter-level PHM layer; the bank is shared, the rest is local."""

    n: int
    k: int
    d: int
    bank: list[Parameter]
    b_down: list[Parameter]
    b_up: list[Parameter]
    bias: Parameter

    def view(self) -> ad.PhmLayer:
        return ad.PhmLayer(
            n=self.n, k=self.k, d=self.d,
            bank=ad.SharedKroneckerBank(
                n=self.n, a_mats=tuple(p.value for p in self.bank)),
            b_down=tuple(p.value for p in self.b_down),
            b_up=tuple(p.value for p in self.b_up),
            bias=self.bias.value,
        )


@dataclass
class CompacterSite:
    down: PhmParams
    up: PhmParams
    nonlinearity: str

    def view(self) -> ad.CompacterAdapter:
        return ad.CompacterAdapter(down=self.down.view(), up=self.up.view(),
                                   nonlinearity=self.nonlinearity)


class _Block:
    """Parameter bundle for one transformer block."""

    def __init__(self, model: "Microformer", index: int):
        cfg = model.config
        d, f = cfg.d_model, cfg.d_ff
        p = model._new_param
        pre = f"block{index}"
        self.ln1_g = p(f"{pre}.ln1.gain", Matrix.from_array(np.ones((1, d))))
        self.ln1_b = p(f"{pre}.ln1.bias", Matrix.zeros(1, d))
        self.wq = p(f"{pre}.attn.wq", model._gauss(d, d))
        self.wk = p(f"{pre}.attn.wk", model._gauss(d, d))
        self.wv = p(f"{pre}.attn.wv", model._gauss(d, d))
        self.wo = p(f"{pre}.attn.wo", model._gauss(d, d))
        self.ln2_g = p(f"{pre}.ln2.gain", Matrix.from_array(np.ones((1, d))))
        self.ln2_b = p(f"{pre}.ln2.bias", Matrix.zeros(1, d))
        self.w1 = p(f"{pre}.ffn.w1", model._gauss(d, f))
        self.b1 = p(f"{pre}.ffn.b1", Matrix.zeros(1, f))
        self.w2 = p(f"{pre}.ffn.w2", model._gauss(f, d))
        self.b2 = p(f"{pre}.ffn.b2", Matrix.zeros(1, d))
        # adapter slots, populated by apply_peft
        self.lora_q: LoraSite | None = None
        self.lora_v: LoraSite | None = None
        self.adapter_attn: CompacterSite | None = None
        self.adapter_ffn: CompacterSite | None = None


class Microformer:
    """Decoder-only causal language model at desk scale."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        self.peft_method = "full"
        self._params: list[Parameter] = []
        self._rng = SeededRng(self.seed)

        cfg = config
        self.emb_tok = self._new_param(
            "emb.tok", self._gauss(cfg.vocab_size, cfg.d_model))
        self.emb_pos = self._new_param(
            "emb.pos", self._gauss(cfg.max_seq_len, cfg.d_model))
        self.blocks = [_Block(self, i) for i in range(cfg.n_layers)]
        self.lnf_g = self._new_param(
            "final_ln.gain", Matrix.from_array(np.ones((1, cfg.d_model))))
        self.lnf_b = self._new_param("final_ln.bias", Matrix.zeros(1, cfg.d_model))
        self.w_out = self._new_param(
            "head.w_out",
            self._rng.normal_matrix(cfg.d_model, cfg.vocab_size, cfg.head_init_std))

        self.lora_sites: list[LoraSite] = []
        self.compacter_sites: list[CompacterSite] = []
        self.kron_bank: list[Parameter] | None = None

        if cfg.peft_method != "full":
            self.apply_peft(cfg.peft_method, seed=self.seed + 1)

    # -- construction helpers --

    def _gauss(self, rows: int, cols: int) -> Matrix:
        return self._rng.normal_matrix(rows, cols, self.config.init_std)

    def _new_param(self, name: str, value: Matrix, frozen: bool = False) -> Parameter:
        p = Parameter(name, value, frozen)
        self._params.append(p)
        return p

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return [(p.name, p) for p in self._params]

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    # -- adapter injection --

    def apply_peft(self, method: str, seed: int | None = None) -> None:
        """Freeze the base and attach freshly initialized adapters.

        Initialization keeps the adapted model an exact identity of the
        frozen base, so outputs before any training step are unchanged.
        """
        if self.peft_method != "full":
            raise ModelError(
                f"adapters already applied ({self.peft_method}); "
                "apply_peft requires a full-mode model")
        if method == "full":
            return
        if method not in ("lora", "compacter"):
            raise ModelError(f"unknown peft method {method!r}")
        seed = self.seed + 1 if seed is None else int(seed)

        for p in self._params:
            p.frozen = True

        cfg = self.config
        if method == "lora":
            r = cfg.lora_rank
            for i, blk in enumerate(self.blocks):
                for tag, base in (("q", blk.wq), ("v", blk.wv)):
                    w_a = self._new_param(
                        f"block{i}.attn.lora_{tag}.w_a", Matrix.zeros(cfg.d_model, r))
                    w_b = self._new_param(
                        f"block{i}.attn.lora_{tag}.w_b", Matrix.zeros(r, cfg.d_model))
                    site = LoraSite(base=base, w_a=w_a, w_b=w_b, rank=r)
                    self.lora_sites.append(site)
                    if tag == "q":
                        blk.lora_q = site
                    else:
                        blk.lora_v = site
        else:
            n = cfg.compacter_n
            bott = cfg.bottleneck()
            self.kron_bank = [
                self._new_param(f"compacter.bank.a{i}", Matrix.zeros(n, n))
                for i in range(n)
            ]
            for i, blk in enumerate(self.blocks):
                for tag in ("attn", "ffn"):
                    site = CompacterSite(
                        down=self._new_phm(f"block{i}.adapter_{tag}.down",
                                           cfg.d_model, bott),
                        up=self._new_phm(f"block{i}.adapter_{tag}.up",
                                         bott, cfg.d_model),
                        nonlinearity=cfg.activation,
                    )
                    self.compacter_sites.append(site)
                    if tag == "attn":
                        blk.adapter_attn = site
                    else:
                        blk.adapter_ffn = site

        self.peft_method = method
        self.config = ModelConfig(**{**asdict(self.config), "peft_method": method})
        ad.init_adapters(self, seed)

    def _new_phm(self, prefix: str, k: int, d: int) -> PhmParams:
        cfg = self.config
        n, r = cfg.compacter_n, cfg.lora_rank
        if k % n or d % n:
            raise ModelError(f"compacter n={n} must divide widths {k} and {d}")
        return PhmParams(
            n=n, k=k, d=d, bank=self.kron_bank,
            b_down=[self._new_param(f"{prefix}.b_down{j}", Matrix.zeros(k // n, r))
                    for j in range(n)],
            b_up=[self._new_param(f"{prefix}.b_up{j}", Matrix.zeros(r, d // n))
                  for j in range(n)],
            bias=self._new_param(f"{prefix}.bias", Matrix.zeros(1, d)),
        )

    # -- forward ---------------------------------------------------------------

    def _validate_tokens(self, tokens: list[int]) -> None:
        if not tokens:
            raise ModelError("token sequence is empty")
        if len(tokens) > self.config.max_seq_len:
            raise ModelError(
                f"sequence length {len(tokens)} exceeds max_seq_len "
                f"{self.config.max_seq_len}")
        for t in tokens:
            if not 0 <= t < self.config.vocab_size:
                raise ModelError(f"token id {t} out of range")

    @staticmethod
    def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
        mu = x.mean(axis=1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + 1e-5)
        xhat = (x - mu) * inv
        return xhat * gain + bias, xhat, inv

    @staticmethod
    def _softmax_rows(s: np.ndarray) -> np.ndarray:
        z = s - s.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def forward(self, tokens: list[int], want_cache: bool = False):
        """Causal forward pass; returns logits (len x vocab) as a Matrix."""
        self._validate_tokens(tokens)
        cfg = self.config
        L, d, H = len(tokens), cfg.d_model, cfg.n_heads
        dh = d // H
        scale = 1.0 / np.sqrt(dh)
        act, _ = ad.ACTIVATIONS[cfg.activation]
        mask = np.triu(np.full((L, L), -1e30), k=1)

        x = self.emb_tok.value.array[tokens] + self.emb_pos.value.array[:L]
        caches = [] if want_cache else None

        for blk in self.blocks:
            c: dict = {"x0": x}
            a, c["xhat1"], c["inv1"] = self._layer_norm(
                x, blk.ln1_g.value.array, blk.ln1_b.value.array)
            c["a"] = a
            q = a @ blk.wq.value.array
            if blk.lora_q is not None:
                c["u_q"] = a @ blk.lora_q.w_a.value.array
                q = q + blk.lora_q.scaling * (c["u_q"] @ blk.lora_q.w_b.value.array)
            k = a @ blk.wk.value.array
            v = a @ blk.wv.value.array
            if blk.lora_v is not None:
                c["u_v"] = a @ blk.lora_v.w_a.value.array
                v = v + blk.lora_v.scaling * (c["u_v"] @ blk.lora_v.w_b.value.array)
            c["q"], c["k"], c["v"] = q, k, v

            concat = np.empty((L, d))
            c["p"] = []
            for h in range(H):
                sl = slice(h * dh, (h + 1) * dh)
                s = (q[:, sl] @ k[:, sl].T) * scale + mask
                p = self._softmax_rows(s)
                c["p"].append(p)
                concat[:, sl] = p @ v[:, sl]
            c["concat"] = concat
            x = x + concat @ blk.wo.value.array

            if blk.adapter_attn is not None:
                x, c["ad1"] = self._adapter_forward(x, blk.adapter_attn, act)

            c["x1"] = x
            b, c["xhat2"], c["inv2"] = self._layer_norm(
                x, blk.ln2_g.value.array, blk.ln2_b.value.array)
            c["b"] = b
            f1 = b @ blk.w1.value.array + blk.b1.value.array
            c["f1"] = f1
            g = ad.gelu(f1)
            c["g"] = g
            x = x + g @ blk.w2.value.array + blk.b2.value.array

            if blk.adapter_ffn is not None:
                x, c["ad2"] = self._adapter_forward(x, blk.adapter_ffn, act)

            if want_cache:
                caches.append(c)

        xf, xhatf, invf = self._layer_norm(
            x, self.lnf_g.value.array, self.lnf_b.value.array)
        logits = xf @ self.w_out.value.array
        if want_cache:
            return Matrix.from_array(logits), {
                "tokens": tokens, "blocks": caches,
                "xf": xf, "xhatf": xhatf, "invf": invf,
            }
        return Matrix.from_array(logits)

    def _adapter_forward(self, x: np.ndarray, site: CompacterSite, act):
        wd = ad.phm_weight(site.down.view()).array
        wu = ad.phm_weight(site.up.view()).array
        z = x @ wd + site.down.bias.value.array
        a_mid = act(z)
        out = x + a_mid @ wu + site.up.bias.value.array
        return out, {"x_in": x, "z": z, "a_mid": a_mid, "wd": wd, "wu": wu}

    # -- loss and backward -------------------------------------------------------

    def loss_and_backward(self, tokens: list[int], targets: list[int]) -> float:
        """Mean token-level cross-entropy; accumulates gradients.

        Target positions equal to IGNORE_INDEX do not contribute. Gradients
        land only on unfrozen parameters; call zero_grad() between steps.
        """
        if len(tokens) != len(targets):
            raise ModelError(
                f"tokens and targets differ in length: {len(tokens)} vs {len(targets)}")
        logits_m, cache = self.forward(tokens, want_cache=True)
        logits = logits_m.array
        L, V = logits.shape

        counted = [i for i, t in enumerate(targets) if t != IGNORE_INDEX]
        if not counted:
            raise ModelError("no unmasked target positions")
        for i in counted:
            if not 0 <= targets[i] < V:
                raise ModelError(f"target id {targets[i]} out of range")

        zmax = logits.max(axis=1, keepdims=True)
        ez = np.exp(logits - zmax)
        logz = np.log(ez.sum(axis=1, keepdims=True)) + zmax
        n = len(counted)
        loss = sum(float(logz[i, 0] - logits[i, targets[i]]) for i in counted) / n

        dlogits = np.zeros_like(logits)
        probs = ez / ez.sum(axis=1, keepdims=True)
        for i in counted:
            dlogits[i] = probs[i] / n
            dlogits[i, targets[i]] -= 1.0 / n

        self._backward(dlogits, cache)
        return loss

    def _ln_backward(self, dy, xhat, inv, gain_p: Parameter, bias_p: Parameter):
        gain = gain_p.value.array
        gain_p.accumulate((dy * xhat).sum(axis=0, keepdims=True))
        bias_p.accumulate(dy.sum(axis=0, keepdims=True))
        dxhat = dy * gain
        mean1 = dxhat.mean(axis=1, keepdims=True)
        mean2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        return (dxhat - mean1 - xhat * mean2) * inv

    def _backward(self, dlogits: np.ndarray, cache: dict) -> None:
        cfg = self.config
        tokens = cache["tokens"]
        L, d, H = len(tokens), cfg.d_model, cfg.n_heads
        dh = d // H
        scale = 1.0 / np.sqrt(dh)
        _, act_grad = ad.ACTIVATIONS[cfg.activation]

        self.w_out.accumulate(cache["xf"].T @ dlogits)
        dxf = dlogits @ self.w_out.value.array.T
        dx = self._ln_backward(dxf, cache["xhatf"], cache["invf"],
                               self.lnf_g, self.lnf_b)

        for blk, c in zip(reversed(self.blocks), reversed(cache["blocks"])):
            if blk.adapter_ffn is not None:
                dx = self._adapter_backward(dx, blk.adapter_ffn, c["ad2"], act_grad)

            # FFN sublayer: x2 = x1 + gelu(ln2(x1) @ w1 + b1) @ w2 + b2
            df2 = dx
            blk.w2.accumulate(c["g"].T @ df2)
            blk.b2.accumulate(df2.sum(axis=0, keepdims=True))
            dg = df2 @ blk.w2.value.array.T
            df1 = dg * ad.gelu_grad(c["f1"])
            blk.w1.accumulate(c["b"].T @ df1)
            blk.b1.accumulate(df1.sum(axis=0, keepdims=True))
            db = df1 @ blk.w1.value.array.T
            dx = dx + self._ln_backward(db, c["xhat2"], c["inv2"],
                                        blk.ln2_g, blk.ln2_b)

            if blk.adapter_attn is not None:
                dx = self._adapter_backward(dx, blk.adapter_attn, c["ad1"], act_grad)

            # attention sublayer: x1 = x0 + concat @ wo
            dconcat = dx @ blk.wo.value.array.T
            blk.wo.accumulate(c["concat"].T @ dx)
            q, k, v = c["q"], c["k"], c["v"]
            dq = np.zeros_like(q)
            dk = np.zeros_like(k)
            dv = np.zeros_like(v)
            for h in range(H):
                sl = slice(h * dh, (h + 1) * dh)
                p = c["p"][h]
                d_oh = dconcat[:, sl]
                dp = d_oh @ v[:, sl].T
                dv[:, sl] = p.T @ d_oh
                ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
                dq[:, sl] = ds @ k[:, sl] * scale
                dk[:, sl] = ds.T @ q[:, sl] * scale

            a = c["a"]
            da = dq @ blk.wq.value.array.T
            da += dk @ blk.wk.value.array.T
            da += dv @ blk.wv.value.array.T
            blk.wq.accumulate(a.T @ dq)
            blk.wk.accumulate(a.T @ dk)
            blk.wv.accumulate(a.T @ dv)
            if blk.lora_q is not None:
                s_q = blk.lora_q.scaling
                w_b = blk.lora_q.w_b.value.array
                blk.lora_q.w_b.accumulate(s_q * c["u_q"].T @ dq)
                d_u = dq @ w_b.T
                blk.lora_q.w_a.accumulate(s_q * a.T @ d_u)
                da += s_q * d_u @ blk.lora_q.w_a.value.array.T
            if blk.lora_v is not None:
                s_v = blk.lora_v.scaling
                w_b = blk.lora_v.w_b.value.array
                blk.lora_v.w_b.accumulate(s_v * c["u_v"].T @ dv)
                d_u = dv @ w_b.T
                blk.lora_v.w_a.accumulate(s_v * a.T @ d_u)
                da += s_v * d_u @ blk.lora_v.w_a.value.array.T
            dx = dx + self._ln_backward(da, c["xhat1"], c["inv1"],
                                        blk.ln1_g, blk.ln1_b)

        if not self.emb_pos.frozen:
            dpos = np.zeros_like(self.emb_pos.value.array)
            dpos[:L] = dx
            self.emb_pos.accumulate(dpos)
        if not self.emb_tok.frozen:
            dtok = np.zeros_like(self.emb_tok.value.array)
            np.add.at(dtok, tokens, dx)
            self.emb_tok.accumulate(dtok)

    def _adapter_backward(self, dy, site: CompacterSite, c: dict, act_grad):
        # out = x + act(x @ wd + bias_d) @ wu + bias_u
        site.up.bias.accumulate(dy.sum(axis=0, keepdims=True))
        dwu = c["a_mid"].T @ dy
        da_mid = dy @ c["wu"].T
        dz = da_mid * act_grad(c["z"])
        site.down.bias.accumulate(dz.sum(axis=0, keepdims=True))
        dwd = c["x_in"].T @ dz
        self._phm_backward(site.down, dwd)
        self._phm_backward(site.up, dwu)
        return dy + dz @ c["wd"].T

    def _phm_backward(self, layer: PhmParams, dw: np.ndarray) -> None:
        """Distribute the effective-weight gradient onto the bank and the
        low-rank factors: with W = sum_i A_i (x) (Bd_i @ Bu_i),
        dA_i[p,q] = <block(p,q), B_i> and dB_i = sum_pq A_i[p,q] block(p,q).
        """
        n, kb, db = layer.n, layer.k // layer.n, layer.d // layer.n
        blocks = dw.reshape(n, kb, n, db).transpose(0, 2, 1, 3)
        for i in range(n):
            bd = layer.b_down[i].value.array
            bu = layer.b_up[i].value.array
            b_i = bd @ bu
            layer.bank[i].accumulate(np.einsum("pquv,uv->pq", blocks, b_i))
            db_i = np.einsum("pq,pquv->uv", layer.bank[i].value.array, blocks)
            layer.b_down[i].accumulate(db_i @ bu.T)
            layer.b_up[i].accumulate(bd.T @ db_i)

    # -- generation ---------------------------------------------------------------

    def generate(self, prompt: list[int], max_new: int, mode: str = "greedy",
                 temperature: float = 1.0, seed: int = 0, k: int = 1,
                 eos_id: int | None = None) -> list[list[int]]:
        """Produce k continuations of the prompt (without the prompt itself).

        Greedy decoding is deterministic; sampling is reproducible from the
        seed, and temperatures below 1e-6 fall back to argmax. Sequences end
        at eos_id (excluded) or after max_new tokens, and never extend past
        max_seq_len.
        """
        if k < 1:
            raise ModelError("k must be at least 1")
        if not prompt:
            raise ModelError("prompt must be non-empty")
        if mode not in ("greedy", "sampled"):
            raise ModelError(f"unknown generation mode {mode!r}")
        rng = SeededRng(seed)
        outs = []
        for _ in range(k):
            seq = list(prompt)
            out: list[int] = []
            for _ in range(max_new):
                if len(seq) >= self.config.max_seq_len:
                    break
                logits = self.forward(seq).array[-1]
                if mode == "greedy" or temperature < 1e-6:
                    nxt = int(np.argmax(logits))
                else:
                    probs = self._softmax_rows(logits / temperature)
                    nxt = rng.choice_index(probs.tolist())
                if eos_id is not None and nxt == eos_id:
                    break
                seq.append(nxt)
                out.append(nxt)
            outs.append(out)
        return outs

    # -- merge ----------------------------------------------------------------------

    def merge_lora(self) -> None:
        """Fold every low-rank site into its base weight and drop the
        adapters, leaving a plain full-mode model."""
        if self.peft_method != "lora":
            raise ModelError(
                f"merge is defined for lora models only, not {self.peft_method!r}")
        drop = set()
        for site in self.lora_sites:
            site.base.set_value(ad.lora_merge(site.base.value, site.view()))
            drop.add(site.w_a.name)
            drop.add(site.w_b.name)
        self._params = [p for p in self._params if p.name not in drop]
        for blk in self.blocks:
            blk.lora_q = None
            blk.lora_v = None
        self.lora_sites = []
        for p in self._params:
            p.frozen = False
        self.peft_method = "full"
        self.config = ModelConfig(**{**asdict(self.config), "peft_method": "full"})

    # -- checkpoints -------------------------------------------------------------------

    def save_checkpoint(self, stem, extra: dict | None = None) -> dict:
        """Write <stem>.json (manifest) and <stem>.bin (little-endian float64
        values in declared parameter order). Returns the manifest."""
        stem = str(stem)
        manifest = {
            "format": "peftbench-checkpoint-v1",
            "config": asdict(self.config),
            "seed": self.seed,
            "peft_method": self.peft_method,
            "params": [
                {"name": p.name, "rows": p.value.rows, "cols": p.value.cols,
                 "frozen": p.frozen}
                for p in self._params
            ],
            "total_values": sum(p.size for p in self._params),
        }
        if extra:
            manifest.update(extra)
        blob = b"".join(
            p.value.array.astype("<f8").tobytes(order="C") for p in self._params)
        manifest["bin_sha256"] = hashlib.sha256(blob).hexdigest()
        with open(stem + ".bin", "wb") as fh:
            fh.write(blob)
        with open(stem + ".json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest

    @classmethod
    def load_checkpoint(cls, stem) -> tuple["Microformer", dict]:
        stem = str(stem)
        with open(stem + ".json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != "peftbench-checkpoint-v1":
            raise ModelError(f"unrecognized checkpoint format in {stem}.json")
        config = ModelConfig(**manifest["config"])
        model = cls(config, manifest["seed"])
        declared = manifest["params"]
        if len(declared) != len(model._params):
            raise ModelError(
                f"checkpoint declares {len(declared)} parameters, model has "
                f"{len(model._params)}")
        with open(stem + ".bin", "rb") as fh:
            blob = fh.read()
        expected = manifest["total_values"] * 8
        if len(blob) != expected:
            raise ModelError(
                f"checkpoint binary is {len(blob)} bytes, expected {expected}")
        offset = 0
        for decl, p in zip(declared, model._params):
            if decl["name"] != p.name or (decl["rows"], decl["cols"]) != p.value.shape:
                raise ModelError(
                    f"checkpoint parameter {decl['name']} does not match model "
                    f"parameter {p.name}")
            count = decl["rows"] * decl["cols"]
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            p.set_value(Matrix.from_array(arr.reshape(decl["rows"], decl["cols"])))
            p.frozen = bool(decl["frozen"])
        return model, manifest
