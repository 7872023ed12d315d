import math

import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import finite_difference_error, random_adjacency
from e2e_stance.model.layers import DecoderBlock, FusionGate, GraphAttention, GraphEncoder, GraphEncoderLayer

M = 16


def _dec_block(fusion="addition", mode="in_parallel", seed=0):
    torch.manual_seed(seed)
    block = DecoderBlock(M, 2, 32, 0.0, fusion, mode).double().eval()
    for p in block.parameters():  # move away from the identity-ish defaults
        torch.nn.init.normal_(p, std=0.3)
    return block


# -- gradients (float64, central differences, step 1e-5) -------------------------


def test_fusion_gate_gradients():
    torch.manual_seed(0)
    gate = FusionGate(4).double()
    zt = torch.randn(2, 3, 4, dtype=torch.float64, requires_grad=True)
    zg = torch.randn(2, 3, 4, dtype=torch.float64, requires_grad=True)
    leaves = [zt, zg, *gate.parameters()]
    assert finite_difference_error(lambda: gate(zt, zg), leaves) < 1e-4


def test_graph_attention_layer_gradients():
    torch.manual_seed(1)
    layer = GraphEncoderLayer(8, 2, 12, 0.0).double().eval()
    h = torch.randn(1, 5, 8, dtype=torch.float64, requires_grad=True)
    adj = random_adjacency(5, torch.Generator().manual_seed(1), 0.5)[None]
    leaves = [h, *layer.parameters()]
    assert finite_difference_error(lambda: layer(h, adj), leaves) < 1e-4


# -- gate ---------------------------------------------------------------------------


def test_forced_gate_boundaries_exact():
    block = _dec_block("gating")
    x, text = torch.randn(1, 2, M, dtype=torch.float64), torch.randn(1, 3, M, dtype=torch.float64)
    graph = torch.randn(1, 4, M, dtype=torch.float64)
    for value in (0.0, 1.0):
        trace = {}
        block(x, text, None, graph, None, force_gate=value, trace=trace)
        _, z_f, _ = block.gate(trace["z_text"], trace["z_graph"], return_parts=True)
        expected = trace["z_text"] if value == 0.0 else z_f
        assert torch.equal(trace["fused"], expected)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 50.0), st.integers(0, 2**31 - 1))
def test_gate_bounded(scale, seed):
    gen = torch.Generator().manual_seed(seed)
    gate = FusionGate(4)
    zt, zg = scale * torch.randn(3, 4, generator=gen), scale * torch.randn(3, 4, generator=gen)
    _, _, lam = gate(zt, zg, return_parts=True)
    assert bool(((lam >= 0) & (lam <= 1)).all())


# -- decoder block against a hand-written reference -----------------------------------


def _ref_attention(mha, q_in, kv_in, causal=False):
    h, d = mha.heads, mha.head_dim
    q = (q_in @ mha.q_proj.weight.T + mha.q_proj.bias) * d ** -0.5
    k = kv_in @ mha.k_proj.weight.T + mha.k_proj.bias
    v = kv_in @ mha.v_proj.weight.T + mha.v_proj.bias
    outs = []
    for i in range(h):
        sl = slice(i * d, (i + 1) * d)
        s = q[:, sl] @ k[:, sl].T
        if causal:
            s = s.masked_fill(torch.ones_like(s, dtype=torch.bool).triu(1), -math.inf)
        outs.append(torch.softmax(s, -1) @ v[:, sl])
    return torch.cat(outs, -1) @ mha.out_proj.weight.T + mha.out_proj.bias


def _ln(norm, x):
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + norm.eps) * norm.weight + norm.bias


def _ref_block(block, x, text, graph):
    z = _ln(block.self_attn_layer_norm, x + _ref_attention(block.self_attn, x, x, causal=True))
    zt = _ln(block.encoder_attn_layer_norm, z + _ref_attention(block.encoder_attn, z, text))
    if block.mode == "sequential":
        fused = _ln(block.graph_attn_layer_norm, zt + _ref_attention(block.graph_attn, zt, graph))
    else:
        zg = _ln(block.graph_attn_layer_norm, z + _ref_attention(block.graph_attn, z, graph))
        if block.fusion == "addition":
            fused = zt + zg
        else:
            both = torch.cat([zt, zg], -1)
            zf = F.gelu(both @ block.gate.fuse_proj.weight.T + block.gate.fuse_proj.bias)
            lam = torch.sigmoid(both @ block.gate.gate_proj.weight.T + block.gate.gate_proj.bias)
            fused = lam * zf + (1 - lam) * zt
    ffn = F.gelu(fused @ block.ffn.fc1.weight.T + block.ffn.fc1.bias) @ block.ffn.fc2.weight.T + block.ffn.fc2.bias
    return _ln(block.final_layer_norm, fused + ffn)


@pytest.mark.parametrize("fusion,mode", [("addition", "in_parallel"), ("gating", "in_parallel"),
                                         ("addition", "sequential")])
def test_block_matches_reference(fusion, mode):
    block = _dec_block(fusion, mode)
    x, text = torch.randn(2, M, dtype=torch.float64), torch.randn(5, M, dtype=torch.float64)
    graph = torch.randn(3, M, dtype=torch.float64)
    got = block(x[None], text[None], None, graph[None], None)[0]
    assert torch.allclose(got, _ref_block(block, x, text, graph), atol=1e-10)


def test_addition_with_zero_graph_path():
    """Zero H_G and a zeroed graph-attention output projection: z' = z_T + LN(z)."""
    block = _dec_block("addition")
    torch.nn.init.zeros_(block.graph_attn.out_proj.weight)
    torch.nn.init.zeros_(block.graph_attn.out_proj.bias)
    x, text = torch.randn(1, 2, M, dtype=torch.float64), torch.randn(1, 3, M, dtype=torch.float64)
    trace = {}
    block(x, text, None, torch.zeros(1, 2, M, dtype=torch.float64), None, trace=trace)
    assert torch.allclose(trace["fused"], trace["z_text"] + _ln(block.graph_attn_layer_norm, trace["z"]),
                          atol=1e-12)


def test_block_without_graph_is_plain_layer():
    block = _dec_block("gating")
    x, text = torch.randn(1, 2, M, dtype=torch.float64), torch.randn(1, 3, M, dtype=torch.float64)
    trace = {}
    block(x, text, None, None, None, trace=trace)
    assert torch.equal(trace["fused"], trace["z_text"])


def test_causal_self_attention():
    block = _dec_block()
    x, text = torch.randn(1, 4, M, dtype=torch.float64), torch.randn(1, 3, M, dtype=torch.float64)
    full = block(x, text, None)
    prefix = block(x[:, :2], text, None)
    assert torch.allclose(full[:, :2], prefix, atol=1e-12)


# -- graph attention -----------------------------------------------------------------


def test_single_node_self_attention_is_one():
    gat = GraphAttention(16, 8)
    _, attn = gat(torch.randn(1, 1, 16), torch.ones(1, 1, 1, dtype=torch.bool), return_attention=True)
    assert torch.equal(attn, torch.ones_like(attn))


def test_attention_restricted_to_in_neighbours():
    gat = GraphAttention(16, 4)
    adj = torch.tensor([[1, 0, 0], [1, 1, 0], [1, 1, 1]], dtype=torch.bool)[None]
    _, attn = gat(torch.randn(1, 3, 16), adj, return_attention=True)
    assert torch.equal(attn[0, :, 0, 1:], torch.zeros(4, 2))
    assert torch.allclose(attn.sum(-1), torch.ones(1, 4, 3))


def test_leaky_relu_scores_match_formula():
    torch.manual_seed(3)
    gat = GraphAttention(4, 1).double()
    h = torch.randn(1, 3, 4, dtype=torch.float64)
    adj = torch.ones(1, 3, 3, dtype=torch.bool)
    _, attn = gat(h, adj, return_attention=True)
    wh = h[0] @ gat.proj.weight.T
    e = F.leaky_relu((wh @ gat.att_dst[0])[:, None] + (wh @ gat.att_src[0])[None, :], 0.2)
    assert torch.allclose(attn[0, 0], torch.softmax(e, -1), atol=1e-12)


def test_encoder_shape_and_self_loop_assert():
    enc = GraphEncoder(64, 8, 2, 128, 0.0)
    adj = random_adjacency(4, torch.Generator().manual_seed(0))
    out = enc(torch.randn(4, 64), adj)
    assert out.shape == (4, 64) and torch.isfinite(out).all()
    with pytest.raises(AssertionError):
        enc(torch.randn(4, 64), torch.zeros(4, 4, dtype=torch.bool))


def test_permutation_equivariance():
    torch.manual_seed(0)
    enc = GraphEncoder(64, 8, 2, 128, 0.0).double().eval()
    gen = torch.Generator().manual_seed(0)
    worst = 0.0
    for _ in range(100):
        n = int(torch.randint(1, 13, (1,), generator=gen))
        h = torch.randn(n, 64, generator=gen, dtype=torch.float64)
        adj = random_adjacency(n, gen)
        perm = torch.randperm(n, generator=gen)
        out = enc(h, adj)
        out_p = enc(h[perm], adj[perm][:, perm])
        worst = max(worst, (out_p - out[perm]).abs().max().item())
    assert worst < 1e-6
