"""Transformer and graph-attention building blocks.

Parameter names follow the BART layer layout (``q_proj``, ``encoder_attn``,
``fc1`` ...) so pretrained weights can be copied in directly.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.dropout = dropout
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query, memory, key_mask=None, causal=False):
        """``key_mask`` is (B, S) with True for valid memory positions."""
        q = self._split(self.q_proj(query) * self.scale)
        k = self._split(self.k_proj(memory))
        v = self._split(self.v_proj(memory))
        scores = q @ k.transpose(-1, -2)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        if causal:
            t, s = scores.shape[-2:]
            future = torch.ones(t, s, dtype=torch.bool, device=scores.device).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        attn = F.dropout(scores.softmax(-1), self.dropout, self.training)
        out = (attn @ v).transpose(1, 2).reshape(query.shape)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads, dropout)
        self.self_attn_layer_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim)
        self.final_layer_norm = nn.LayerNorm(dim)
        self.dropout = dropout

    def forward(self, x, mask):
        x = self.self_attn_layer_norm(x + F.dropout(self.self_attn(x, x, mask), self.dropout, self.training))
        return self.final_layer_norm(x + F.dropout(self.ffn(x), self.dropout, self.training))


class FusionGate(nn.Module):
    """Gated fusion of text and graph states.

    z_f = GELU(W_f [z_T; z_G] + b_f), lam = sigmoid(W_lam [z_T; z_G] + b_lam),
    output lam * z_f + (1 - lam) * z_T.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.fuse_proj = nn.Linear(2 * dim, dim)
        self.gate_proj = nn.Linear(2 * dim, dim)

    def forward(self, z_text, z_graph, force_gate: float | torch.Tensor | None = None, return_parts=False):
        both = torch.cat([z_text, z_graph], dim=-1)
        z_f = F.gelu(self.fuse_proj(both))
        if force_gate is None:
            gate = torch.sigmoid(self.gate_proj(both))
        else:
            gate = torch.as_tensor(force_gate, dtype=z_text.dtype).expand_as(z_text)
        fused = gate * z_f + (1 - gate) * z_text
        if return_parts:
            return fused, z_f, gate
        return fused


class DecoderBlock(nn.Module):
    """Decoder layer with text and graph cross-attention.

    ``in_parallel``: both cross-attentions read the same self-attention output
    and their results are fused (addition or gating). ``sequential``: graph
    attention reads the output of text attention. Without graph states the
    block is a plain post-norm transformer decoder layer.
    """

    def __init__(self, dim, heads, ffn_dim, dropout, fusion="addition", mode="in_parallel"):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads, dropout)
        self.self_attn_layer_norm = nn.LayerNorm(dim)
        self.encoder_attn = MultiHeadAttention(dim, heads, dropout)
        self.encoder_attn_layer_norm = nn.LayerNorm(dim)
        self.graph_attn = MultiHeadAttention(dim, heads, dropout)
        self.graph_attn_layer_norm = nn.LayerNorm(dim)
        self.fusion = fusion
        self.mode = mode
        self.gate = FusionGate(dim) if fusion == "gating" else None
        self.ffn = FeedForward(dim, ffn_dim)
        self.final_layer_norm = nn.LayerNorm(dim)
        self.dropout = dropout

    def _drop(self, x):
        return F.dropout(x, self.dropout, self.training)

    def forward(self, x, text_states, text_mask, graph_states=None, node_mask=None, force_gate=None, trace=None):
        z = self.self_attn_layer_norm(x + self._drop(self.self_attn(x, x, causal=True)))
        z_text = self.encoder_attn_layer_norm(z + self._drop(self.encoder_attn(z, text_states, text_mask)))
        if graph_states is None:
            fused = z_text
        elif self.mode == "sequential":
            fused = self.graph_attn_layer_norm(
                z_text + self._drop(self.graph_attn(z_text, graph_states, node_mask)))
        else:
            z_graph = self.graph_attn_layer_norm(z + self._drop(self.graph_attn(z, graph_states, node_mask)))
            if self.gate is None:
                fused = z_text + z_graph
            else:
                fused = self.gate(z_text, z_graph, force_gate)
            if trace is not None:
                trace["z_graph"] = z_graph
        if trace is not None:
            trace.update(z=z, z_text=z_text, fused=fused)
        return self.final_layer_norm(fused + self._drop(self.ffn(fused)))


class GraphAttention(nn.Module):
    """Multi-head graph attention over in-neighbours given by a dense mask.

    For node i and in-neighbour j, head h scores
    LeakyReLU(a_dst . W h_i + a_src . W h_j) (slope 0.2), normalizes with a
    softmax over i's in-neighbours, and sums the transformed neighbours.
    Heads are concatenated.
    """

    def __init__(self, dim: int, heads: int, dropout: float = 0.0, slope: float = 0.2):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.proj = nn.Linear(dim, dim, bias=False)
        self.att_src = nn.Parameter(torch.empty(heads, self.head_dim))
        self.att_dst = nn.Parameter(torch.empty(heads, self.head_dim))
        nn.init.xavier_uniform_(self.att_src)
        nn.init.xavier_uniform_(self.att_dst)
        self.slope = slope
        self.dropout = dropout

    def forward(self, h, adjacency, return_attention=False):
        """``h``: (B, N, dim); ``adjacency``: (B, N, N) bool, [b, i, j] = edge j -> i."""
        b, n, _ = h.shape
        wh = self.proj(h).view(b, n, self.heads, self.head_dim)
        src = (wh * self.att_src).sum(-1)  # (B, N, H)
        dst = (wh * self.att_dst).sum(-1)
        scores = F.leaky_relu(dst.transpose(1, 2)[..., :, None] + src.transpose(1, 2)[..., None, :], self.slope)
        scores = scores.masked_fill(~adjacency[:, None], float("-inf"))  # (B, H, N_i, N_j)
        attn = scores.softmax(-1)
        out = F.dropout(attn, self.dropout, self.training) @ wh.transpose(1, 2)
        out = out.transpose(1, 2).reshape(b, n, -1)
        return (out, attn) if return_attention else out


class GraphEncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.attention = GraphAttention(dim, heads, dropout)
        self.attn_layer_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim)
        self.final_layer_norm = nn.LayerNorm(dim)
        self.dropout = dropout

    def forward(self, h, adjacency):
        h = self.attn_layer_norm(h + F.dropout(self.attention(h, adjacency), self.dropout, self.training))
        return self.final_layer_norm(h + F.dropout(self.ffn(h), self.dropout, self.training))


class GraphEncoder(nn.Module):
    def __init__(self, dim: int, heads: int, layers: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.layers = nn.ModuleList(GraphEncoderLayer(dim, heads, ffn_dim, dropout) for _ in range(layers))

    def forward(self, h, adjacency):
        squeeze = h.dim() == 2
        if squeeze:
            h, adjacency = h[None], adjacency[None]
        if not bool(adjacency.diagonal(dim1=-2, dim2=-1).all()):
            raise AssertionError("every node needs a self-loop")
        for layer in self.layers:
            h = layer(h, adjacency)
        return h[0] if squeeze else h
