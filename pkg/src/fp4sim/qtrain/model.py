"""Toy pre-norm transformer / MLP stack with hand-written reverse mode.

Every module caches what it needs in ``forward`` and returns the input
gradient from ``backward``, accumulating parameter gradients in ``grads``.
Only the projection and MLP linears go through the quantized path; norms,
softmax, GeLU, embeddings, attention score products and the LM head stay in
full precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..formats import NonFiniteError
from ..linalg import bmm, gemm
from .layers import QuantLinearConfig, quant_linear_backward, quant_linear_forward

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelDims:
    vocab: int = 64
    hidden: int = 64
    seq: int = 32
    layers: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    arch: str = "transformer"  # or "mlp"

    def __post_init__(self):
        if min(self.vocab, self.hidden, self.seq, self.layers, self.heads, self.mlp_ratio) <= 0:
            raise ValueError("model dimensions must be positive")
        if self.hidden % self.heads:
            raise ValueError("hidden must be divisible by heads")
        if self.arch not in ("transformer", "mlp"):
            raise ValueError(f"unknown arch {self.arch!r}")


class Module:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def children(self):
        return []

    def named_parameters(self, prefix=""):
        for k, p in self.params.items():
            yield prefix + k, self, k
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")


class QuantLinear(Module):
    def __init__(self, w: np.ndarray, cfg: QuantLinearConfig, reference: bool = False):
        super().__init__()
        self.params["weight"] = w
        self.cfg = cfg
        self.reference = reference
        self._ctx = None

    def forward(self, x):
        lead = x.shape[:-1]
        a = x.reshape(-1, x.shape[-1])
        if self.reference:
            self._ctx = a
            y = gemm(a, self.params["weight"])
        else:
            y, self._ctx = quant_linear_forward(a, self.params["weight"], self.cfg)
        return y.reshape(*lead, -1)

    def backward(self, g):
        lead = g.shape[:-1]
        g2 = g.reshape(-1, g.shape[-1])
        if self.reference:
            ga = gemm(g2, self.params["weight"].T)
            gw = gemm(self._ctx.T, g2)
        else:
            ga, gw = quant_linear_backward(g2, self._ctx, self.cfg)
        self.grads["weight"] += gw
        self._ctx = None
        return ga.reshape(*lead, -1)


class Linear(QuantLinear):
    """Full-precision linear (LM head)."""

    def __init__(self, w):
        super().__init__(w, QuantLinearConfig(), reference=True)


class LayerNorm(Module):
    eps = 1e-5

    def __init__(self, h):
        super().__init__()
        self.params["gain"] = np.ones(h)
        self.params["bias"] = np.zeros(h)

    def forward(self, x):
        mu = x.mean(-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(-1, keepdims=True)
        rstd = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * rstd
        self._cache = (xhat, rstd)
        return xhat * self.params["gain"] + self.params["bias"]

    def backward(self, g):
        xhat, rstd = self._cache
        h = xhat.shape[-1]
        self.grads["gain"] += (g * xhat).reshape(-1, h).sum(0)
        self.grads["bias"] += g.reshape(-1, h).sum(0)
        gx = g * self.params["gain"]
        return rstd * (gx - gx.mean(-1, keepdims=True) - xhat * (gx * xhat).mean(-1, keepdims=True))


def gelu(x):
    """tanh-approximate GeLU; returns (value, tanh term) so backward can reuse the tanh."""
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    return 0.5 * x * (1.0 + t), t


def gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


class Mlp(Module):
    def __init__(self, up, down):
        super().__init__()
        self.up, self.down = up, down

    def children(self):
        return [("up", self.up), ("down", self.down)]

    def forward(self, x):
        self._pre = self.up.forward(x)
        act, self._tanh = gelu(self._pre)
        return self.down.forward(act)

    def backward(self, g):
        g = self.down.backward(g)
        return self.up.backward(g * gelu_grad(self._pre, self._tanh))


class Attention(Module):
    def __init__(self, qkv, out, heads):
        super().__init__()
        self.qkv, self.out, self.heads = qkv, out, heads

    def children(self):
        return [("qkv", self.qkv), ("out", self.out)]

    def forward(self, x):
        b, s, h = x.shape
        nh, hd = self.heads, h // self.heads
        qkv = self.qkv.forward(x).reshape(b, s, 3, nh, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = (t.reshape(b * nh, s, hd) for t in qkv)
        scale = 1.0 / math.sqrt(hd)
        scores = bmm(q, k.transpose(0, 2, 1)) * scale
        mask = np.triu(np.ones((s, s), dtype=bool), 1)
        scores[:, mask] = -np.inf
        scores -= scores.max(-1, keepdims=True)
        p = np.exp(scores)
        p /= p.sum(-1, keepdims=True)
        ctx = bmm(p, v)
        self._cache = (q, k, v, p, scale, (b, s, h))
        merged = ctx.reshape(b, nh, s, hd).transpose(0, 2, 1, 3).reshape(b, s, h)
        return self.out.forward(merged)

    def backward(self, g):
        q, k, v, p, scale, (b, s, h) = self._cache
        nh, hd = self.heads, h // self.heads
        gm = self.out.backward(g)
        gctx = gm.reshape(b, s, nh, hd).transpose(0, 2, 1, 3).reshape(b * nh, s, hd)
        gp = bmm(gctx, v.transpose(0, 2, 1))
        gv = bmm(p.transpose(0, 2, 1), gctx)
        gs = p * (gp - (gp * p).sum(-1, keepdims=True)) * scale
        gq = bmm(gs, k)
        gk = bmm(gs.transpose(0, 2, 1), q)
        gqkv = np.stack([gq, gk, gv]).reshape(3, b, nh, s, hd).transpose(1, 3, 0, 2, 4)
        return self.qkv.backward(gqkv.reshape(b, s, 3 * h))


class Block(Module):
    def __init__(self, ln1, attn, ln2, mlp):
        super().__init__()
        self.ln1, self.attn, self.ln2, self.mlp = ln1, attn, ln2, mlp

    def children(self):
        out = []
        if self.attn is not None:
            out += [("ln1", self.ln1), ("attn", self.attn)]
        return out + [("ln2", self.ln2), ("mlp", self.mlp)]

    def forward(self, x):
        if self.attn is not None:
            x = x + self.attn.forward(self.ln1.forward(x))
        return x + self.mlp.forward(self.ln2.forward(x))

    def backward(self, g):
        g = g + self.ln2.backward(self.mlp.backward(g))
        if self.attn is not None:
            g = g + self.ln1.backward(self.attn.backward(g))
        return g


class ToyModel(Module):
    def __init__(self, dims: ModelDims, cfg: QuantLinearConfig, rng: np.random.Generator,
                 reference: bool = False):
        super().__init__()
        self.dims, self.cfg = dims, cfg
        h, v, L = dims.hidden, dims.vocab, dims.layers
        std = 0.02
        self.params["tok_emb"] = rng.normal(0.0, std, (v, h))
        self.params["pos_emb"] = rng.normal(0.0, std, (dims.seq, h))
        proj_std = std / math.sqrt(2 * L)
        self.blocks = []
        for _ in range(L):
            attn = None
            if dims.arch == "transformer":
                attn = Attention(
                    QuantLinear(rng.normal(0.0, std, (h, 3 * h)), cfg, reference),
                    QuantLinear(rng.normal(0.0, proj_std, (h, h)), cfg, reference),
                    dims.heads,
                )
            mlp = Mlp(
                QuantLinear(rng.normal(0.0, std, (h, dims.mlp_ratio * h)), cfg, reference),
                QuantLinear(rng.normal(0.0, proj_std, (dims.mlp_ratio * h, h)), cfg, reference),
            )
            self.blocks.append(Block(LayerNorm(h), attn, LayerNorm(h), mlp))
        self.ln_f = LayerNorm(h)
        self.head = Linear(rng.normal(0.0, std, (h, v)))
        self.zero_grad_all()

    def children(self):
        return [(f"blocks.{i}", b) for i, b in enumerate(self.blocks)] + [
            ("ln_f", self.ln_f), ("head", self.head)]

    def zero_grad_all(self):
        for _, mod, _ in self.named_parameters():
            mod.zero_grad()

    def forward(self, tokens):
        b, s = tokens.shape
        self._tokens = tokens
        x = self.params["tok_emb"][tokens] + self.params["pos_emb"][:s]
        for blk in self.blocks:
            x = blk.forward(x)
        return self.head.forward(self.ln_f.forward(x))

    def backward(self, glogits):
        g = self.ln_f.backward(self.head.backward(glogits))
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        s = g.shape[1]
        self.grads["pos_emb"][:s] += g.sum(0)
        np.add.at(self.grads["tok_emb"], self._tokens, g)

    def loss_and_backward(self, tokens, targets) -> float:
        """Mean next-token cross-entropy; accumulates gradients."""
        logits = self.forward(tokens)
        if not np.isfinite(logits).all():
            raise NonFiniteError("non-finite logits")
        z = logits - logits.max(-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
        n = targets.size
        flat = logp.reshape(n, -1)
        loss = -float(flat[np.arange(n), targets.ravel()].mean())
        g = np.exp(flat)
        g[np.arange(n), targets.ravel()] -= 1.0
        self.backward((g / n).reshape(logits.shape))
        return loss

    def loss(self, tokens, targets) -> float:
        logits = self.forward(tokens)
        z = logits - logits.max(-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
        n = targets.size
        return -float(logp.reshape(n, -1)[np.arange(n), targets.ravel()].mean())


def build_toy_model(dims: ModelDims, cfg: QuantLinearConfig | None = None, seed: int = 0,
                    reference: bool = False) -> ToyModel:
    """Build the toy model. ``reference=True`` wires plain gemm linears (no quantizer path)."""
    return ToyModel(dims, cfg or QuantLinearConfig(), np.random.default_rng(seed), reference)


def parameter_count(dims: ModelDims) -> int:
    """Closed form: embeddings + per-block (norms, projections, MLP) + final norm + head."""
    h, v, r = dims.hidden, dims.vocab, dims.mlp_ratio
    per_block = 2 * h + 2 * r * h * h  # ln2 + MLP
    if dims.arch == "transformer":
        per_block += 2 * h + 4 * h * h  # ln1 + qkv + out
    return v * h + dims.seq * h + dims.layers * per_block + 2 * h + h * v
