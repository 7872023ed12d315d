"""Self-describing checkpoint files (config + tokenizer + weights)."""

from __future__ import annotations

from pathlib import Path

import torch

from .config import ModelConfig
from .network import StanceModel
from .tokenizer import tokenizer_from_dict

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: StanceModel, tokenizer, extra: dict | None = None) -> None:
    torch.save({
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "tokenizer": tokenizer.to_dict(),
        "vocab_size": model.backbone.shared.num_embeddings,
        "state_dict": model.state_dict(),
        "embed_scale": model.backbone.encoder.embed_scale,
        "extra": extra or {},
    }, path)


def load_checkpoint(path: str | Path):
    """Returns (model, tokenizer, extra)."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r}")
    cfg = ModelConfig.from_dict(payload["model_config"])
    tokenizer = tokenizer_from_dict(payload["tokenizer"])
    model = StanceModel(cfg, payload["vocab_size"], tokenizer.pad_id)
    model.load_state_dict(payload["state_dict"])
    # a plain attribute, not a buffer, so it is not in the state dict
    model.backbone.encoder.embed_scale = model.backbone.decoder.embed_scale = payload.get("embed_scale", 1.0)
    return model, tokenizer, payload["extra"]
