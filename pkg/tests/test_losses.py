import math

import pytest
import torch
import torch.nn.functional as F

from e2e_stance.model import loss_multi, loss_node, loss_stance
from e2e_stance.model.features import IGNORE


def test_loss_node_hand_value():
    got = loss_node(torch.tensor([0.5, 0.5], dtype=torch.float64), torch.tensor([1.0, 0.0], dtype=torch.float64), w=2)
    assert abs(got.item() - 3 * math.log(2)) < 1e-9


def test_loss_node_perfect_predictions():
    s = torch.tensor([1.0, 0.0, 1.0], dtype=torch.float64)
    assert loss_node(s.clone(), s).item() < 3 * 2e-7


def test_loss_node_w1_matches_bce_oracle():
    gen = torch.Generator().manual_seed(0)
    for _ in range(20):
        s_hat = torch.rand(2, 5, generator=gen, dtype=torch.float64) * 0.98 + 0.01
        s = (torch.rand(2, 5, generator=gen) < 0.5).double()
        oracle = [-sum(math.log(p) if t else math.log(1 - p) for p, t in zip(row_p.tolist(), row_s.tolist()))
                  for row_p, row_s in zip(s_hat, s)]
        assert loss_node(s_hat, s).item() == pytest.approx(sum(oracle) / 2, abs=1e-12)
        bce = F.binary_cross_entropy(s_hat, s, reduction="sum") / 2
        assert loss_node(s_hat, s).item() == pytest.approx(bce.item(), abs=1e-12)


def test_loss_node_mask_and_shape_check():
    s_hat = torch.tensor([[0.5, 0.2]])
    assert loss_node(s_hat, torch.tensor([[1.0, 1.0]]), mask=torch.tensor([[True, False]])).item() == \
        pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        loss_node(s_hat, torch.zeros(1, 3))


def test_loss_stance_uniform_logits():
    v = 37
    logits = torch.zeros(1, 1, v, dtype=torch.float64)
    assert abs(loss_stance(logits, torch.tensor([[5]])).item() - math.log(v)) < 1e-9


def test_loss_stance_confident_correct():
    logits = torch.full((1, 3, 10), -1e4)
    labels = torch.tensor([[1, 4, 2]])
    logits[0, torch.arange(3), labels[0]] = 1e4
    assert loss_stance(logits, labels).item() == 0.0


def test_loss_stance_sums_positions_and_averages_batch():
    # two-way logits whose per-token losses are exactly 0.3 and 0.7
    def logit_pair(loss):
        p = math.exp(-loss)
        return [math.log(p), math.log(1 - p)]

    logits = torch.tensor([[logit_pair(0.3), logit_pair(0.7)]], dtype=torch.float64)
    labels = torch.tensor([[0, 0]])
    assert loss_stance(logits, labels).item() == pytest.approx(1.0, abs=1e-12)
    # batch of that sample and a padded copy holding only the first token
    both = torch.cat([logits, logits])
    padded = torch.tensor([[0, 0], [0, IGNORE]])
    assert loss_stance(both, padded).item() == pytest.approx((1.0 + 0.3) / 2, abs=1e-12)
    assert loss_stance(both, padded, "none").tolist() == pytest.approx([1.0, 0.3], abs=1e-12)


def test_loss_stance_length_mismatch():
    with pytest.raises(ValueError):
        loss_stance(torch.zeros(1, 3, 5), torch.zeros(1, 4, dtype=torch.long))


def test_loss_multi():
    assert loss_multi(torch.tensor(1.5), torch.tensor(0.5)).item() == 2.0
    stance = torch.tensor(0.25)
    assert loss_multi(stance, None) is stance


def test_loss_multi_on_model_batch():
    from _helpers import tiny_setup
    from e2e_stance.model import collate

    model, vocab, examples, _ = tiny_setup(4)
    model = model.double().eval()
    batch = collate(examples[:3], vocab.pad_id, dtype=torch.float64)
    total, stance, node = model.losses(batch, objective="multitask", positive_weight=2.0)
    assert node is not None
    assert abs(total.item() - (stance.item() + node.item())) < 1e-12
    total, stance, node = model.losses(batch)
    assert node is None and total.item() == stance.item()
