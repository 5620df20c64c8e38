"""Transformer encoder with attribute embeddings and a Kim-style CNN classifier.

All modules are built in float64.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..corpus import PAD_ID

DTYPE = torch.float64


class InvalidInput(ValueError):
    pass


def softmax_temperature(logits: torch.Tensor, tau: float) -> torch.Tensor:
    """softmax(logits / tau) over the last axis."""
    if not tau > 0:
        raise ValueError("temperature must be positive")
    return torch.softmax(logits / tau, dim=-1)


def embed_tokens(x: torch.Tensor, table: torch.Tensor) -> torch.Tensor:
    """Hard ids ``(B, L)`` index the table; distributions ``(B, L, V)`` mix its rows."""
    if x.dtype in (torch.int64, torch.int32):
        return F.embedding(x, table)
    return x @ table


class EncoderBlock(nn.Module):
    def __init__(self, d_model: int = 64, n_heads: int = 4, d_ff: int = 256, dropout: float = 0.0, norm_first: bool = False):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.norm_first = norm_first
        self.qkv = nn.Linear(d_model, 3 * d_model, dtype=DTYPE)
        self.proj = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.ff1 = nn.Linear(d_model, d_ff, dtype=DTYPE)
        self.ff2 = nn.Linear(d_ff, d_model, dtype=DTYPE)
        self.norm1 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.norm2 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.drop = nn.Dropout(dropout)

    def _attend(self, x, pad_mask):
        B, L, D = x.shape
        h = self.n_heads
        q, k, v = self.qkv(x).view(B, L, 3, h, D // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(D // h)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        att = self.drop(torch.softmax(scores, dim=-1))
        out = (att @ v).transpose(1, 2).reshape(B, L, D)
        return self.drop(self.proj(out))

    def _feed(self, x):
        return self.drop(self.ff2(self.drop(F.gelu(self.ff1(x)))))

    def forward(self, x, pad_mask=None):
        if self.norm_first:
            x = x + self._attend(self.norm1(x), pad_mask)
            return x + self._feed(self.norm2(x))
        x = self.norm1(x + self._attend(x, pad_mask))
        return self.norm2(x + self._feed(x))


class AcmlmNet(nn.Module):
    """Bidirectional encoder whose input is token + position + attribute embedding.

    The vocabulary projection is tied to the token table.  ``attribute=None``
    leaves the attribute embedding out (neutral pre-training).
    """

    def __init__(self, vocab_size: int, n_attributes: int = 2, max_len: int = 32, d_model: int = 64,
                 n_heads: int = 4, d_ff: int = 256, n_layers: int = 2, dropout: float = 0.0,
                 norm_first: bool = False):
        super().__init__()
        self.hyper = dict(vocab_size=vocab_size, n_attributes=n_attributes, max_len=max_len, d_model=d_model,
                          n_heads=n_heads, d_ff=d_ff, n_layers=n_layers, dropout=dropout, norm_first=norm_first)
        self.max_len = max_len
        self.tok = nn.Embedding(vocab_size, d_model, dtype=DTYPE)
        self.pos = nn.Embedding(max_len, d_model, dtype=DTYPE)
        self.attr = nn.Embedding(n_attributes, d_model, dtype=DTYPE)
        self.emb_norm = nn.LayerNorm(d_model, dtype=DTYPE)
        self.drop = nn.Dropout(dropout)
        self.blocks = nn.ModuleList(EncoderBlock(d_model, n_heads, d_ff, dropout, norm_first) for _ in range(n_layers))
        self.head = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.head_norm = nn.LayerNorm(d_model, dtype=DTYPE)
        self.out_bias = nn.Parameter(torch.zeros(vocab_size, dtype=DTYPE))
        for emb in (self.tok, self.pos, self.attr):
            nn.init.normal_(emb.weight, std=0.1)

    def forward(self, x: torch.Tensor, attribute: torch.Tensor | None = None, pad_mask: torch.Tensor | None = None):
        """Return ``(hidden, logits)`` for ids ``(B, L)`` or soft tokens ``(B, L, V)``."""
        L = x.shape[1]
        if L > self.max_len:
            raise InvalidInput(f"sequence length {L} exceeds max_len {self.max_len}")
        h = embed_tokens(x, self.tok.weight) + self.pos.weight[:L]
        if attribute is not None:
            h = h + self.attr(attribute)[:, None, :]
        h = self.drop(self.emb_norm(h))
        for block in self.blocks:
            h = block(h, pad_mask)
        z = self.head_norm(F.gelu(self.head(h)))
        logits = z @ self.tok.weight.T + self.out_bias
        return h, logits


class CnnClassifier(nn.Module):
    """Convolutions of widths 3, 4 and 5 over embeddings, max-pooled over time.

    Inputs shorter than the widest filter are treated as padded with
    ``<pad>`` up to it; windows past that point are ignored so the output
    for a sentence does not depend on how much batch padding surrounds it.
    """

    WIDTHS = (3, 4, 5)

    def __init__(self, vocab_size: int, d_emb: int = 64, n_filters: int = 32, n_attributes: int = 2, dropout: float = 0.0):
        super().__init__()
        self.hyper = dict(vocab_size=vocab_size, d_emb=d_emb, n_filters=n_filters, n_attributes=n_attributes, dropout=dropout)
        self.emb = nn.Embedding(vocab_size, d_emb, dtype=DTYPE)
        nn.init.normal_(self.emb.weight, std=0.1)
        self.convs = nn.ModuleList(nn.Conv1d(d_emb, n_filters, w, dtype=DTYPE) for w in self.WIDTHS)
        self.drop = nn.Dropout(dropout)
        self.out = nn.Linear(n_filters * len(self.WIDTHS), n_attributes, dtype=DTYPE)
        self.trained = False

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Logits for ids ``(B, L)`` or distributions ``(B, L, V)`` with true ``lengths``."""
        wmax = max(self.WIDTHS)
        L = x.shape[1]
        if L < wmax:
            if x.dim() == 2:
                x = F.pad(x, (0, wmax - L), value=PAD_ID)
            else:
                pad = torch.zeros(x.shape[0], wmax - L, x.shape[2], dtype=x.dtype)
                pad[..., PAD_ID] = 1.0
                x = torch.cat([x, pad], dim=1)
            L = wmax
        eff = torch.clamp(lengths, min=wmax)
        e = embed_tokens(x, self.emb.weight).transpose(1, 2)
        feats = []
        for w, conv in zip(self.WIDTHS, self.convs):
            c = F.relu(conv(e))
            starts = torch.arange(L - w + 1)
            invalid = starts[None, :] + w > eff[:, None]
            feats.append(c.masked_fill(invalid[:, None, :], float("-inf")).max(dim=2).values)
        return self.out(self.drop(torch.cat(feats, dim=1)))
