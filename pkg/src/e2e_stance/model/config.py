from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

FUSIONS = ("addition", "gating")
ATTENTION_MODES = ("in_parallel", "sequential")
STRATEGIES = ("greedy", "beam")
BACKBONES = ("tiny", "bart")


@dataclass
class DecodeConfig:
    strategy: str = "beam"
    beam_size: int = 4
    max_len: int = 96


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    graph_layers: int = 2
    graph_heads: int = 8
    fusion: str = "addition"
    attention_mode: str = "in_parallel"
    use_graph: bool = True
    use_wiki: bool = False
    pipeline_soft_mask: bool = False
    oracle_entities: bool = False
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    # input layout
    context_window: int = 3
    include_entities: bool = True
    # text backbone
    backbone: str = "tiny"
    backbone_path: str | None = None
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_heads: int = 4
    ffn_dim: int = 256
    graph_ffn_dim: int = 256
    dropout: float = 0.1
    max_positions: int = 512
    wiki_dim: int = 500

    def __post_init__(self):
        if isinstance(self.decode, dict):
            self.decode = DecodeConfig(**self.decode)
        self.validate()

    def validate(self) -> None:
        if self.hidden_dim % self.graph_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by graph_heads {self.graph_heads}")
        if self.hidden_dim % self.attention_heads:
            raise ValueError("hidden_dim must be divisible by attention_heads")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}, got {self.attention_mode!r}")
        if self.decode.strategy not in STRATEGIES:
            raise ValueError(f"decode.strategy must be one of {STRATEGIES}")
        if self.decode.beam_size < 1 or self.decode.max_len < 1:
            raise ValueError("beam_size and max_len must be >= 1")
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
