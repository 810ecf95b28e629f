"""Building blocks of the scene/LoR encoder-decoder.

All layers work on unbatched float64 tensors: one scene, one source/listener
pair, one LoR waveform at a time.
"""

import math

import numpy as np
import torch
from torch import nn

from ..errors import DomainError, ShapeError


def normalized_adjacency(adj, self_loops=True):
    """Torch counterpart of :func:`auralkit.scene.normalize_adjacency`."""
    a = adj.to(torch.float64)
    if self_loops:
        a = a + torch.eye(a.shape[0], dtype=a.dtype)
    deg = a.sum(dim=1)
    if torch.any(deg <= 0):
        raise DomainError("graph has a zero-degree vertex")
    inv = deg.rsqrt()
    return inv[:, None] * a * inv[None, :]


def gcn_forward(x, a_norm, w):
    """One graph convolution, ReLU(A_norm X W)."""
    if x.ndim != 2 or a_norm.shape != (x.shape[0], x.shape[0]) or w.shape[0] != x.shape[1]:
        raise ShapeError(
            f"gcn shapes X{tuple(x.shape)} A{tuple(a_norm.shape)} W{tuple(w.shape)} do not chain"
        )
    return torch.relu(a_norm @ x @ w)


def topk_pool(x, adj, ratio, p):
    """Keep the ceil(ratio * N) highest-scoring vertices.

    Scores are ``x @ p / |p|``; ties go to the lower index. Kept features are
    gated by tanh(score) and the adjacency is the induced subgraph. Indices
    are returned in score order.
    """
    if not 0.0 < ratio <= 1.0:
        raise DomainError("pooling ratio must lie in (0, 1]")
    n = x.shape[0]
    k = math.ceil(ratio * n - 1e-9)
    if k < 1:
        raise DomainError("pooling would keep no vertices")
    score = x @ p / p.norm()
    s = score.detach().cpu().numpy()
    idx = torch.as_tensor(np.lexsort((np.arange(n), -s))[:k])
    kept = x[idx] * torch.tanh(score[idx])[:, None]
    return kept, adj[idx][:, idx], idx


class GCNBlock(nn.Module):
    """Graph convolution followed by Top-K pooling."""

    def __init__(self, d_in, d_out, ratio):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(d_in, d_out, dtype=torch.float64))
        self.score = nn.Parameter(torch.empty(d_out, dtype=torch.float64))
        self.ratio = ratio
        nn.init.xavier_uniform_(self.weight)
        nn.init.uniform_(self.score, -1.0, 1.0)

    def forward(self, x, adj):
        h = gcn_forward(x, normalized_adjacency(adj), self.weight)
        return topk_pool(h, adj, self.ratio, self.score)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model, n_heads):
        super().__init__()
        if d_model % n_heads:
            raise DomainError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        kw = dict(dtype=torch.float64)
        self.q = nn.Linear(d_model, d_model, **kw)
        self.k = nn.Linear(d_model, d_model, **kw)
        self.v = nn.Linear(d_model, d_model, **kw)
        self.out = nn.Linear(d_model, d_model, **kw)

    def _heads(self, x):
        return x.reshape(x.shape[0], self.n_heads, self.d_head).transpose(0, 1)

    def forward(self, query, memory):
        """Returns (output (Q, d), attention weights (heads, Q, K))."""
        if query.shape[-1] != self.q.in_features or memory.shape[-1] != self.k.in_features:
            raise ShapeError("attention input width does not match d_model")
        q, k, v = self._heads(self.q(query)), self._heads(self.k(memory)), self._heads(self.v(memory))
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        weights = torch.softmax(logits, dim=-1)
        mixed = (weights @ v).transpose(0, 1).reshape(query.shape[0], -1)
        return self.out(mixed), weights


def _ffn(d_model, width):
    kw = dict(dtype=torch.float64)
    return nn.Sequential(nn.Linear(d_model, width, **kw), nn.ReLU(), nn.Linear(width, d_model, **kw))


class EncoderLayer(nn.Module):
    """Pre-norm self-attention + feed-forward block."""

    def __init__(self, d_model, n_heads, ffn_width):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model, dtype=torch.float64)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model, dtype=torch.float64)
        self.ffn = _ffn(d_model, ffn_width)
        self.last_attention = None

    def forward(self, x):
        h = self.norm1(x)
        a, self.last_attention = self.attn(h, h)
        x = x + a
        return x + self.ffn(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn_width):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model, dtype=torch.float64)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model, dtype=torch.float64)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.norm3 = nn.LayerNorm(d_model, dtype=torch.float64)
        self.ffn = _ffn(d_model, ffn_width)
        self.last_cross_attention = None

    def forward(self, x, memory):
        h = self.norm1(x)
        x = x + self.self_attn(h, h)[0]
        a, self.last_cross_attention = self.cross_attn(self.norm2(x), memory)
        x = x + a
        return x + self.ffn(self.norm3(x))


class TransformerEncoder(nn.Module):
    def __init__(self, d_model, n_heads, n_layers, ffn_width):
        super().__init__()
        self.layers = nn.ModuleList(EncoderLayer(d_model, n_heads, ffn_width) for _ in range(n_layers))
        self.norm = nn.LayerNorm(d_model, dtype=torch.float64)

    def forward(self, tokens):
        if tokens.ndim != 2 or tokens.shape[0] < 1:
            raise ShapeError("encoder expects (K >= 1, d_model) tokens")
        for layer in self.layers:
            tokens = layer(tokens)
        return self.norm(tokens)


class TransformerDecoder(nn.Module):
    def __init__(self, d_model, n_heads, n_layers, ffn_width):
        super().__init__()
        self.layers = nn.ModuleList(DecoderLayer(d_model, n_heads, ffn_width) for _ in range(n_layers))
        self.norm = nn.LayerNorm(d_model, dtype=torch.float64)

    def forward(self, queries, memory):
        if queries.shape[-1] != memory.shape[-1]:
            raise ShapeError("query and memory widths differ")
        for layer in self.layers:
            queries = layer(queries, memory)
        return self.norm(queries)


def sinusoidal_encoding(coords, n_freqs, base_period=20.0):
    """Interleaved sin/cos of each coordinate at frequencies 2 pi 2^k / base_period.

    The lowest frequency has a period of ``base_period`` meters, so
    coordinates within half that range map injectively.
    """
    coords = torch.as_tensor(coords, dtype=torch.float64).reshape(-1)
    freqs = 2.0 * math.pi / base_period * 2.0 ** torch.arange(n_freqs, dtype=torch.float64)
    angles = coords[:, None] * freqs[None, :]
    return torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1).reshape(coords.shape[0], -1)


class PositionalQuery(nn.Module):
    """Source and listener coordinates -> two decoder query tokens."""

    def __init__(self, d_model, n_freqs, base_period=20.0):
        super().__init__()
        self.n_freqs = n_freqs
        self.base_period = base_period
        self.d_model = d_model
        self.proj = nn.Linear(6 * 2 * n_freqs, 2 * d_model, dtype=torch.float64)

    def encode(self, positions):
        return sinusoidal_encoding(positions, self.n_freqs, self.base_period)

    def forward(self, positions):
        enc = self.encode(positions).reshape(-1)
        return self.proj(enc).reshape(2, self.d_model)
