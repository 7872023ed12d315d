from .checkpoint import load_checkpoint, save_checkpoint
from .config import DecodeConfig, ModelConfig
from .decoding import TASKB_LABELS, Prediction, generate, predict, rank_taskb
from .features import Batch, Example, collate, make_example, prepare_graph
from .losses import loss_multi, loss_node, loss_stance
from .network import ModelOutput, StanceModel
from .tokenizer import WordVocab

__all__ = [
    "Batch", "DecodeConfig", "Example", "ModelConfig", "ModelOutput", "Prediction", "StanceModel",
    "TASKB_LABELS", "WordVocab", "collate", "generate", "load_checkpoint", "loss_multi", "loss_node",
    "loss_stance", "make_example", "predict", "prepare_graph", "rank_taskb", "save_checkpoint",
]
