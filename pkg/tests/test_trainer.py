import math

import pytest
import torch

from _helpers import tiny_setup
from e2e_stance import trainer as trainer_mod
from e2e_stance.model import ModelConfig, collate
from e2e_stance.trainer import TrainConfig, Trainer, TrainingError, eval_dev_loss, train


def _setup(n=4, **cfg_kw):
    model, vocab, examples, _ = tiny_setup(n, cfg=ModelConfig(**cfg_kw))
    return model, examples


def test_defaults():
    cfg = TrainConfig()
    assert cfg.learning_rate == 1e-5 and cfg.max_epochs == 15 and cfg.batch_size == 4
    assert cfg.grad_clip_norm == 5.0
    assert cfg.lr_decay_patience_steps == 200 and cfg.early_stop_patience_steps == 1600
    assert cfg.lr_decay_factor == 0.5 and cfg.eval_every == 50 and cfg.positive_weight == 1.0
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"lr": 1})


def test_empty_sets_rejected():
    model, examples = _setup(2)
    with pytest.raises(TrainingError):
        train([], examples, model, TrainConfig())
    with pytest.raises(TrainingError):
        train(examples, [], model, TrainConfig())


def test_non_finite_loss_aborts():
    model, examples = _setup(2)
    with torch.no_grad():
        model.backbone.shared.weight[5, 0] = float("nan")
    with pytest.raises(TrainingError, match="non-finite loss"):
        train(examples, examples, model, TrainConfig(max_steps=3))


def test_gradient_clipping():
    model, examples = _setup(4)
    # a large lr and the multitask objective give large gradients quickly
    log = train(examples, examples[:2], model, TrainConfig(learning_rate=1e-2, grad_clip_norm=0.5, max_steps=20,
                                                            eval_every=10, objective="multitask"))[1]
    assert any(s["grad_norm"] > 0.5 for s in log.steps)
    assert all(s["clipped_grad_norm"] <= 0.5 + 1e-6 for s in log.steps)
    log = train(examples, examples[:2], _setup(4)[0], TrainConfig(learning_rate=1e-3, max_steps=20))[1]
    assert all(s["clipped_grad_norm"] <= 5 + 1e-6 for s in log.steps)


def test_best_checkpoint_selected():
    model, examples = _setup(4, dropout=0.0)
    trainer = Trainer(model, TrainConfig(learning_rate=3e-3, max_steps=40, eval_every=5, seed=1))
    log = trainer.fit(examples, examples[:3])
    assert all(log.best_dev_loss <= e["dev_loss"] for e in log.evals)
    trainer.restore_best()
    assert eval_dev_loss(model, examples[:3]) == pytest.approx(log.best_dev_loss, rel=1e-6)
    steps = [s["step"] for s in log.steps]
    assert steps == sorted(steps) == list(range(1, len(steps) + 1))


def test_resume_reproduces_losses():
    cfg = dict(learning_rate=1e-3, eval_every=10, seed=3)
    model, examples = _setup(4)
    full = Trainer(model, TrainConfig(max_steps=60, **cfg)).fit(examples, examples[:2])

    model, examples = _setup(4)
    first = Trainer(model, TrainConfig(max_steps=30, **cfg))
    first.fit(examples, examples[:2])
    state = first.state_dict()
    torch.manual_seed(12345)  # disturb the global stream; the state must restore it

    model2, _ = _setup(4)
    second = Trainer(model2, TrainConfig(max_steps=60, **cfg))
    second.load_state_dict(state)
    resumed = second.fit(examples, examples[:2])
    assert [s["loss"] for s in resumed.steps] == [s["loss"] for s in full.steps]
    assert resumed.evals == full.evals


def test_eval_dev_loss_additive_and_deterministic():
    model, examples = _setup(4)
    model.train()
    one = eval_dev_loss(model, examples[:1])
    assert model.training  # mode is restored
    model.eval()
    direct = model.losses(collate(examples[:1], model.pad_id))[0].item()
    assert one == pytest.approx(direct, abs=1e-5)
    parts = sum(eval_dev_loss(model, [ex]) for ex in examples[:3])
    assert eval_dev_loss(model, examples[:3]) == pytest.approx(parts, abs=1e-6 * max(1.0, parts))
    assert eval_dev_loss(model, examples[:3]) == eval_dev_loss(model, examples[:3])


def test_lr_decay_and_early_stop(monkeypatch):
    values = iter([10.0, 9.0] + [9.0] * 100)
    monkeypatch.setattr(trainer_mod, "eval_dev_loss", lambda *a, **k: next(values))
    model, examples = _setup(2)
    cfg = TrainConfig(learning_rate=1e-3, eval_every=1, lr_decay_patience_steps=2, early_stop_patience_steps=5,
                      max_epochs=1000)
    log = Trainer(model, cfg).fit(examples, examples)
    assert [e["step"] for e in log.lr_events] == [4, 6]
    assert [e["lr"] for e in log.lr_events] == pytest.approx([5e-4, 2.5e-4])
    assert log.steps[-1]["step"] == 7 and log.stop_reason == "early_stop"
    assert log.best_step == 2


def test_stops_at_max_epochs():
    model, examples = _setup(2)
    log = Trainer(model, TrainConfig(max_epochs=2, batch_size=2)).fit(examples, examples[:1])
    assert log.stop_reason == "max_epochs"
    assert len(log.steps) == 2 * math.ceil(len(examples) / 2)
    assert log.evals[-1]["step"] == len(log.steps)


def test_same_seed_same_trace():
    def run():
        model, examples = _setup(4)
        return [s["loss"] for s in Trainer(model, TrainConfig(learning_rate=1e-3, max_steps=25)).fit(
            examples, examples[:2]).steps]

    assert run() == run()


def test_log_jsonl(tmp_path):
    model, examples = _setup(2)
    log = Trainer(model, TrainConfig(max_steps=3, eval_every=2)).fit(examples, examples[:1])
    log.write_jsonl(tmp_path / "log.jsonl")
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert '"event": "done"' in lines[-1]
    assert sum('"event": "step"' in line for line in lines) == 3
