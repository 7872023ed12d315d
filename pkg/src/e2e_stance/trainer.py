"""Training loop with dev-loss model selection.

Defaults: Adam at lr 1e-5, batch size 4, up to 15 epochs, gradients
clipped at global norm 5, learning rate halved after 200 steps without dev
improvement, early stop after 1600 such steps.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .model.features import Example, collate
from .model.network import StanceModel

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    max_epochs: int = 15
    batch_size: int = 4
    grad_clip_norm: float = 5.0
    lr_decay_patience_steps: int = 200
    lr_decay_factor: float = 0.5
    early_stop_patience_steps: int = 1600
    eval_every: int = 50
    positive_weight: float = 1.0
    seed: int = 0
    objective: str = "stance"
    max_steps: int | None = None

    def __post_init__(self):
        for name in ("learning_rate", "max_epochs", "batch_size", "grad_clip_norm", "lr_decay_patience_steps",
                     "early_stop_patience_steps", "eval_every", "positive_weight"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be in (0, 1]")
        if self.objective not in ("stance", "multitask"):
            raise ValueError("objective must be 'stance' or 'multitask'")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    lr_events: list[dict] = field(default_factory=list)
    best_step: int | None = None
    best_dev_loss: float = math.inf
    stop_reason: str = ""

    def events(self) -> list[dict]:
        out = [{"event": "step", **s} for s in self.steps]
        out += [{"event": "eval", **e} for e in self.evals]
        out += [{"event": "lr", **e} for e in self.lr_events]
        out.sort(key=lambda e: (e["step"], e["event"] != "step"))
        out.append({"event": "done", "step": self.steps[-1]["step"] if self.steps else 0,
                    "best_step": self.best_step, "best_dev_loss": self.best_dev_loss,
                    "stop_reason": self.stop_reason})
        return out

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.events():
                f.write(json.dumps(e, sort_keys=True) + "\n")


def _batches(n: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    order = np.random.default_rng([seed, epoch]).permutation(n).tolist()
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@torch.no_grad()
def eval_dev_loss(model: StanceModel, dev_set: Sequence[Example], objective: str = "stance",
                  positive_weight: float = 1.0, batch_size: int = 4) -> float:
    """Sum of per-sample objective losses over the dev set."""
    was_training = model.training
    model.eval()
    total = 0.0
    for i in range(0, len(dev_set), batch_size):
        batch = collate(dev_set[i:i + batch_size], model.pad_id, model.cfg.wiki_dim)
        loss, _, _ = model.losses(batch, objective=objective, positive_weight=positive_weight, reduction="sum")
        total += float(loss)
    model.train(was_training)
    return total


class Trainer:
    def __init__(self, model: StanceModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        self.step = 0
        self.epoch = 0
        self.batch_in_epoch = 0
        self.best_loss = math.inf
        self.best_step: int | None = None
        self.best_params: dict | None = None
        self.last_improvement = 0
        self.last_decay = 0
        self.log = TrainLog()

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def state_dict(self) -> dict:
        return {
            "model": copy.deepcopy(self.model.state_dict()),
            "optimizer": copy.deepcopy(self.optimizer.state_dict()),
            "rng": torch.get_rng_state(),
            "step": self.step, "epoch": self.epoch, "batch_in_epoch": self.batch_in_epoch,
            "best_loss": self.best_loss, "best_step": self.best_step,
            "best_params": copy.deepcopy(self.best_params),
            "last_improvement": self.last_improvement, "last_decay": self.last_decay,
            "log": asdict(self.log),
        }

    def load_state_dict(self, state: dict) -> None:
        self.model.load_state_dict(state["model"])
        self.optimizer.load_state_dict(state["optimizer"])
        torch.set_rng_state(state["rng"])
        for key in ("step", "epoch", "batch_in_epoch", "best_loss", "best_step", "last_improvement", "last_decay"):
            setattr(self, key, state[key])
        self.best_params = copy.deepcopy(state["best_params"])
        self.log = TrainLog(**copy.deepcopy(state["log"]))

    def _evaluate(self, dev_set) -> None:
        dev_loss = eval_dev_loss(self.model, dev_set, self.cfg.objective, self.cfg.positive_weight,
                                 self.cfg.batch_size)
        self.log.evals.append({"step": self.step, "dev_loss": dev_loss, "lr": self.lr})
        if dev_loss < self.best_loss:
            self.best_loss, self.best_step = dev_loss, self.step
            self.best_params = copy.deepcopy(self.model.state_dict())
            self.last_improvement = self.last_decay = self.step
            self.log.best_step, self.log.best_dev_loss = self.step, dev_loss
        elif self.step - max(self.last_improvement, self.last_decay) >= self.cfg.lr_decay_patience_steps:
            for group in self.optimizer.param_groups:
                group["lr"] *= self.cfg.lr_decay_factor
            self.last_decay = self.step
            self.log.lr_events.append({"step": self.step, "lr": self.lr})

    def _train_step(self, batch) -> None:
        self.model.train()
        self.optimizer.zero_grad()
        loss, stance, node = self.model.losses(batch, objective=self.cfg.objective,
                                               positive_weight=self.cfg.positive_weight)
        if not torch.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss.item()} at step {self.step + 1} "
                                f"(samples {batch.sample_ids}, lr {self.lr})")
        loss.backward()
        norm = float(torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.cfg.grad_clip_norm))
        clipped = math.sqrt(sum(float(p.grad.pow(2).sum()) for p in self.model.parameters() if p.grad is not None))
        self.optimizer.step()
        self.step += 1
        self.log.steps.append({
            "step": self.step, "loss": loss.item(), "stance_loss": stance.item(),
            "node_loss": None if node is None else node.item(),
            "grad_norm": norm, "clipped_grad_norm": clipped, "lr": self.lr,
        })

    def fit(self, train_set: Sequence[Example], dev_set: Sequence[Example]) -> TrainLog:
        if not train_set:
            raise TrainingError("training set is empty")
        if not dev_set:
            raise TrainingError("dev set is empty")
        cfg = self.cfg
        while self.epoch < cfg.max_epochs:
            batches = _batches(len(train_set), cfg.batch_size, cfg.seed, self.epoch)
            while self.batch_in_epoch < len(batches):
                idx = batches[self.batch_in_epoch]
                self.batch_in_epoch += 1
                self._train_step(collate([train_set[i] for i in idx], self.model.pad_id, self.model.cfg.wiki_dim))
                if self.step % cfg.eval_every == 0:
                    self._evaluate(dev_set)
                    if self.step - self.last_improvement >= cfg.early_stop_patience_steps:
                        self.log.stop_reason = "early_stop"
                        return self.log
                if cfg.max_steps is not None and self.step >= cfg.max_steps:
                    self.log.stop_reason = "max_steps"
                    self._final_eval(dev_set)
                    return self.log
            self.epoch += 1
            self.batch_in_epoch = 0
        self.log.stop_reason = "max_epochs"
        self._final_eval(dev_set)
        return self.log

    def _final_eval(self, dev_set) -> None:
        if not self.log.evals or self.log.evals[-1]["step"] != self.step:
            self._evaluate(dev_set)

    def restore_best(self) -> None:
        if self.best_params is not None:
            self.model.load_state_dict(self.best_params)


def train(train_set: Sequence[Example], dev_set: Sequence[Example], model: StanceModel,
          cfg: TrainConfig) -> tuple[dict, TrainLog]:
    """Train and load the lowest-dev-loss parameters back into ``model``.

    Returns (best state dict, log).
    """
    trainer = Trainer(model, cfg)
    log = trainer.fit(train_set, dev_set)
    trainer.restore_best()
    return copy.deepcopy(model.state_dict()), log
