"""Text encoder-decoder backbone.

Two ways to obtain one: :func:`build_backbone` creates a small randomly
initialized model, and :func:`backbone_from_bart` copies the weights of a
Hugging Face BART checkpoint into the same module layout.
"""

from __future__ import annotations

import re

import torch
from torch import nn

from .config import ModelConfig
from .layers import DecoderBlock, EncoderLayer

NUM_SEGMENTS = 4


class TextEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig, embed_tokens: nn.Embedding):
        super().__init__()
        m = cfg.hidden_dim
        self.embed_tokens = embed_tokens
        self.embed_positions = nn.Embedding(cfg.max_positions, m)
        self.embed_segments = nn.Embedding(NUM_SEGMENTS, m)
        self.layernorm_embedding = nn.LayerNorm(m)
        self.layers = nn.ModuleList(
            EncoderLayer(m, cfg.attention_heads, cfg.ffn_dim, cfg.dropout) for _ in range(cfg.encoder_layers))
        self.dropout = nn.Dropout(cfg.dropout)
        self.embed_scale = 1.0

    def forward(self, input_ids, segment_ids, mask):
        pos = torch.arange(input_ids.shape[1], device=input_ids.device)
        x = (self.embed_tokens(input_ids) * self.embed_scale + self.embed_positions(pos)
             + self.embed_segments(segment_ids))
        x = self.dropout(self.layernorm_embedding(x))
        for layer in self.layers:
            x = layer(x, mask)
        return x


class TextDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig, embed_tokens: nn.Embedding):
        super().__init__()
        m = cfg.hidden_dim
        self.embed_tokens = embed_tokens
        self.embed_positions = nn.Embedding(cfg.max_positions, m)
        self.layernorm_embedding = nn.LayerNorm(m)
        self.layers = nn.ModuleList(
            DecoderBlock(m, cfg.attention_heads, cfg.ffn_dim, cfg.dropout, cfg.fusion, cfg.attention_mode)
            for _ in range(cfg.decoder_layers))
        self.dropout = nn.Dropout(cfg.dropout)
        self.register_buffer("final_logits_bias", torch.zeros(embed_tokens.num_embeddings))
        self.embed_scale = 1.0

    def forward(self, dec_ids, text_states, text_mask, graph_states=None, node_mask=None,
                force_gate=None, traces=None):
        pos = torch.arange(dec_ids.shape[1], device=dec_ids.device)
        x = self.embed_tokens(dec_ids) * self.embed_scale + self.embed_positions(pos)
        x = self.dropout(self.layernorm_embedding(x))
        for i, layer in enumerate(self.layers):
            trace = None if traces is None else traces.setdefault(i, {})
            x = layer(x, text_states, text_mask, graph_states, node_mask, force_gate, trace)
        return x @ self.embed_tokens.weight.T + self.final_logits_bias


class Seq2SeqBackbone(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, pad_id: int = 0):
        super().__init__()
        self.shared = nn.Embedding(vocab_size, cfg.hidden_dim, padding_idx=pad_id)
        self.encoder = TextEncoder(cfg, self.shared)
        self.decoder = TextDecoder(cfg, self.shared)
        self.max_positions = cfg.max_positions

    def plain_forward(self, input_ids, segment_ids, text_mask, dec_ids):
        """Encoder-decoder pass with no graph involvement."""
        text_states = self.encoder(input_ids, segment_ids, text_mask)
        return self.decoder(dec_ids, text_states, text_mask)


def _init_weights(module: nn.Module, std: float) -> None:
    for name, p in module.named_parameters():
        if "layer_norm" in name or "layernorm" in name or name.startswith("att_"):
            continue
        if p.dim() >= 2:
            nn.init.normal_(p, std=std)
        elif name.endswith("bias"):
            nn.init.zeros_(p)


def build_backbone(cfg: ModelConfig, vocab_size: int, pad_id: int = 0) -> Seq2SeqBackbone:
    backbone = Seq2SeqBackbone(cfg, vocab_size, pad_id)
    # 1/sqrt(m) rather than BART's 0.02, which is tuned for m ~ 1024 and trains a 64-wide model very slowly
    _init_weights(backbone, cfg.hidden_dim ** -0.5)
    return backbone


# -- BART ----------------------------------------------------------------------

_POSITION_OFFSET = 2  # BART reserves two leading rows in its position tables


def bart_model_config(bart_config, **overrides) -> ModelConfig:
    """A ModelConfig whose backbone shape matches a ``BartConfig``."""
    kw = dict(
        backbone="bart",
        hidden_dim=bart_config.d_model,
        encoder_layers=bart_config.encoder_layers,
        decoder_layers=bart_config.decoder_layers,
        attention_heads=bart_config.encoder_attention_heads,
        ffn_dim=bart_config.encoder_ffn_dim,
        graph_ffn_dim=bart_config.encoder_ffn_dim,
        dropout=bart_config.dropout,
        max_positions=bart_config.max_position_embeddings,
    )
    kw.update(overrides)
    return ModelConfig(**kw)


def translate_bart_state_dict(hf_state: dict) -> dict:
    out = {}
    for name, tensor in hf_state.items():
        name = re.sub(r"^model\.", "", name)
        if name.startswith("lm_head") or name.endswith("embed_tokens.weight"):
            continue
        if name == "final_logits_bias":
            out["decoder.final_logits_bias"] = tensor.reshape(-1)
            continue
        name = re.sub(r"\.(fc1|fc2)\.", r".ffn.\1.", name)
        if name.endswith("embed_positions.weight"):
            tensor = tensor[_POSITION_OFFSET:]
        out[name] = tensor
    return out


def backbone_from_bart(bart_model, cfg: ModelConfig | None = None) -> tuple[Seq2SeqBackbone, ModelConfig]:
    """Copy a ``BartForConditionalGeneration`` (or ``BartModel``) into our layout.

    Decoder blocks gain freshly initialized graph-attention and fusion
    parameters; everything else is taken from the checkpoint.
    """
    bart_config = bart_model.config
    cfg = cfg or bart_model_config(bart_config)
    backbone = build_backbone(cfg, bart_config.vocab_size, bart_config.pad_token_id)
    missing, unexpected = backbone.load_state_dict(translate_bart_state_dict(bart_model.state_dict()), strict=False)
    if unexpected:
        raise ValueError(f"unexpected BART parameters: {unexpected[:5]}")
    # embed_tokens are tied to shared, which is loaded
    not_graph = [m for m in missing if not any(k in m for k in ("graph_attn", "gate.", "embed_segments"))
                 and not m.endswith("embed_tokens.weight")]
    if not_graph:
        raise ValueError(f"BART checkpoint lacks parameters: {not_graph[:5]}")
    scale = bart_config.d_model ** 0.5 if bart_config.scale_embedding else 1.0
    backbone.encoder.embed_scale = backbone.decoder.embed_scale = scale
    # segment embeddings start at zero so the pretrained input distribution is kept
    nn.init.zeros_(backbone.encoder.embed_segments.weight)
    return backbone, cfg


def load_bart(name_or_path: str, **overrides):
    """Load a pretrained BART checkpoint and its tokenizer."""
    from transformers import AutoTokenizer, BartForConditionalGeneration

    from .tokenizer import HFWordTokenizer

    bart = BartForConditionalGeneration.from_pretrained(name_or_path)
    tokenizer = HFWordTokenizer(AutoTokenizer.from_pretrained(name_or_path), name_or_path)
    if len(tokenizer) > bart.config.vocab_size:
        bart.resize_token_embeddings(len(tokenizer))
    cfg = bart_model_config(bart.config, backbone_path=name_or_path, **overrides)
    backbone, cfg = backbone_from_bart(bart, cfg)
    return backbone, cfg, tokenizer
