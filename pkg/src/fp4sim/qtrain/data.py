"""Synthetic token streams for toy pretraining."""

from __future__ import annotations

import numpy as np


class MarkovTask:
    """Next-token prediction on a fixed random Markov chain.

    Each state has ``branching`` successors with Dirichlet weights, so the
    achievable loss (the chain's entropy rate) is well below log(vocab).
    ``order`` > 1 conditions on the previous ``order`` tokens through a
    hashed context, which forces the model to use attention.
    """

    def __init__(self, vocab: int = 64, seq: int = 32, seed: int = 1234,
                 order: int = 1, branching: int = 4, concentration: float = 0.5):
        if vocab < 2 or seq < 2 or order < 1 or branching < 1:
            raise ValueError("invalid Markov task parameters")
        self.vocab, self.seq, self.order = vocab, seq, order
        rng = np.random.default_rng(seed)
        n_ctx = vocab ** order
        b = min(branching, vocab)
        self.succ = np.stack([rng.choice(vocab, b, replace=False) for _ in range(n_ctx)])
        self.prob = rng.dirichlet(np.full(b, concentration), size=n_ctx)
        self.cum = np.cumsum(self.prob, axis=1)
        self.cum[:, -1] = 1.0

    def _ctx_index(self, window):
        idx = np.zeros(window.shape[0], dtype=np.int64)
        for j in range(window.shape[1]):
            idx = idx * self.vocab + window[:, j]
        return idx

    def sample(self, rng: np.random.Generator, batch: int):
        """(inputs, targets), each (batch, seq)."""
        n = self.seq + 1
        toks = np.empty((batch, n), dtype=np.int64)
        toks[:, : self.order] = rng.integers(0, self.vocab, (batch, self.order))
        u = rng.random((batch, n))
        for t in range(self.order, n):
            ctx = self._ctx_index(toks[:, t - self.order:t])
            choice = (u[:, t, None] > self.cum[ctx]).sum(1)
            toks[:, t] = self.succ[ctx, choice]
        return toks[:, :-1], toks[:, 1:]

    def entropy_rate(self) -> float:
        """Mean per-step conditional entropy under a uniform context distribution (nats)."""
        p = self.prob
        return float(-(p * np.log(np.where(p > 0, p, 1.0))).sum(1).mean())


class InContextMarkovTask:
    """Next-token prediction where every sequence has its own random Markov chain.

    Transition rows are drawn fresh from Dirichlet(concentration) per sequence,
    so nothing about the chain can be memorized in the weights: the model has
    to estimate transition counts from the context, which needs attention
    (an induction-style lookup of earlier occurrences of the current token).
    """

    def __init__(self, vocab: int = 8, seq: int = 32, concentration: float = 1.0):
        if vocab < 2 or seq < 2 or not concentration > 0:
            raise ValueError("invalid in-context Markov task parameters")
        self.vocab, self.seq, self.concentration = vocab, seq, concentration

    def sample(self, rng: np.random.Generator, batch: int):
        v, n = self.vocab, self.seq + 1
        trans = rng.dirichlet(np.full(v, self.concentration), size=(batch, v))
        cum = np.cumsum(trans, axis=2)
        cum[:, :, -1] = 1.0
        toks = np.empty((batch, n), dtype=np.int64)
        toks[:, 0] = rng.integers(0, v, batch)
        u = rng.random((batch, n))
        rows = np.arange(batch)
        for t in range(1, n):
            toks[:, t] = (u[:, t, None] > cum[rows, toks[:, t - 1]]).sum(1)
        return toks[:, :-1], toks[:, 1:]

    def bayes_loss(self, rng: np.random.Generator, batch: int = 4096) -> float:
        """Monte-Carlo loss of the exact posterior predictive (the best any model can do)."""
        x, y = self.sample(rng, batch)
        v, c = self.vocab, self.concentration
        counts = np.zeros((batch, v, v))
        rows = np.arange(batch)
        total = 0.0
        for t in range(self.seq):
            prev, nxt = x[:, t], y[:, t]
            row = counts[rows, prev]
            p = (row[rows, nxt] + c) / (row.sum(1) + v * c)
            total -= np.log(p).sum()
            counts[rows, prev, nxt] += 1.0
        return total / (batch * self.seq)


class ByteCorpus:
    """Byte-level tokens from a raw file; random windows of length seq + 1."""

    def __init__(self, path, seq: int = 32):
        with open(path, "rb") as fh:
            self.data = np.frombuffer(fh.read(), dtype=np.uint8).astype(np.int64)
        if self.data.size < seq + 2:
            raise ValueError("corpus shorter than one training window")
        self.vocab, self.seq = 256, seq

    def sample(self, rng: np.random.Generator, batch: int):
        starts = rng.integers(0, self.data.size - self.seq - 1, batch)
        idx = starts[:, None] + np.arange(self.seq + 1)
        toks = self.data[idx]
        return toks[:, :-1], toks[:, 1:]
