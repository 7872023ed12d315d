"""The graph-augmented stance triplet generator."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import Seq2SeqBackbone, build_backbone
from .config import ModelConfig
from .features import Batch
from .layers import GraphEncoder
from .losses import loss_multi, loss_node, loss_stance


@dataclass
class ModelOutput:
    logits: torch.Tensor
    text_states: torch.Tensor
    node_states: torch.Tensor | None = None
    salience: torch.Tensor | None = None


class StanceModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, pad_id: int = 0,
                 backbone: Seq2SeqBackbone | None = None):
        super().__init__()
        self.cfg = cfg
        self.pad_id = pad_id
        m = cfg.hidden_dim
        self.backbone = backbone or build_backbone(cfg, vocab_size, pad_id)
        self.graph_encoder = GraphEncoder(m, cfg.graph_heads, cfg.graph_layers, cfg.graph_ffn_dim, cfg.dropout)
        self.wiki_mlp = nn.Sequential(nn.Linear(cfg.wiki_dim, m), nn.GELU(), nn.Linear(m, m))
        self.salience_head = nn.Linear(m, 1)

    # -- components ----------------------------------------------------------

    def encode_text(self, input_ids, segment_ids, text_mask):
        return self.backbone.encoder(input_ids, segment_ids, text_mask)

    def init_nodes(self, text_states, batch: Batch):
        """Mean-pool token states over each node's mentions; wiki rows use the MLP."""
        nodes = batch.pool.to(text_states.dtype) @ text_states
        if bool(batch.wiki_rows.any()):
            wiki = self.wiki_mlp(batch.wiki_vectors.to(text_states.dtype))
            nodes = torch.where(batch.wiki_rows[..., None], wiki, nodes)
        return nodes

    def graph_encode(self, node_states, adjacency):
        return self.graph_encoder(node_states, adjacency)

    def salience(self, node_states):
        """Per-row salience in (0, 1): sigmoid(u . h + b)."""
        return torch.sigmoid(self.salience_head(node_states)).squeeze(-1)

    @staticmethod
    def soft_mask(node_states, scores, entity_mask):
        """Scale entity rows by their salience; other rows pass through."""
        scale = torch.where(entity_mask, scores, torch.ones_like(scores))
        return node_states * scale[..., None]

    def decode(self, dec_ids, text_states, text_mask, node_states=None, node_mask=None, **kw):
        if not self.cfg.use_graph:
            node_states = node_mask = None
        return self.backbone.decoder(dec_ids, text_states, text_mask, node_states, node_mask, **kw)

    # -- full pass -----------------------------------------------------------

    def encode(self, batch: Batch):
        """Text and node states for a batch (node states are None without a graph)."""
        text_states = self.encode_text(batch.input_ids, batch.segment_ids, batch.text_mask)
        if not self.cfg.use_graph:
            return text_states, None, None
        if batch.pool is None:
            raise ValueError("graph is enabled but the batch carries no graph features")
        nodes = self.init_nodes(text_states, batch)
        scores = None
        if self.cfg.pipeline_soft_mask:
            scores = self.salience(nodes)
            nodes = self.soft_mask(nodes, scores, batch.entity_mask)
        nodes = self.graph_encode(nodes, batch.adjacency)
        if scores is None:
            scores = self.salience(nodes)
        return text_states, nodes, scores

    def forward(self, batch: Batch, **decode_kw) -> ModelOutput:
        text_states, nodes, scores = self.encode(batch)
        logits = self.decode(batch.dec_in, text_states, batch.text_mask, nodes, batch.node_mask, **decode_kw)
        return ModelOutput(logits, text_states, nodes, scores)

    def losses(self, batch: Batch, out: ModelOutput | None = None, objective: str = "stance",
               positive_weight: float = 1.0, reduction: str = "mean"):
        """(total, stance, node) losses; node is None for the plain objective."""
        out = out if out is not None else self(batch)
        stance = loss_stance(out.logits, batch.labels, reduction)
        node = None
        if objective == "multitask" and out.salience is not None:
            node = loss_node(out.salience, batch.salience_target.to(out.salience.dtype), positive_weight,
                             batch.salience_mask, reduction)
        return loss_multi(stance, node), stance, node

    @torch.no_grad()
    def sequence_log_prob(self, batch: Batch) -> torch.Tensor:
        """Total log-likelihood of each sample's target sequence."""
        out = self(batch)
        logp = F.log_softmax(out.logits, -1)
        labels = batch.labels.clamp(min=0)
        tok = logp.gather(-1, labels[..., None]).squeeze(-1)
        return (tok * (batch.labels >= 0)).sum(-1)
