import math

import pytest
import torch
import torch.nn.functional as F

from maskinfill.attn_classifier import AttentionClassifier, attention_pool
from maskinfill.nn import (
    DTYPE, AcmlmNet, CheckpointError, CnnClassifier, EncoderBlock, InvalidInput, embed_tokens, gradient_check,
    load_module, load_tensors, save_module, save_tensors, softmax_temperature,
)

TOL = 1e-4


def rand(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=DTYPE)


def weighted_sum(out, seed=1):
    """A random linear functional so every output coordinate feeds the gradient."""
    return (out * rand(*out.shape, seed=seed)).sum()


def small_acmlm(**kw):
    torch.manual_seed(0)
    return AcmlmNet(11, max_len=8, d_model=8, n_heads=2, d_ff=16, n_layers=2, **kw)


# -- softmax with temperature ------------------------------------------------

def test_softmax_temperature_examples():
    assert torch.allclose(softmax_temperature(torch.tensor([0.0, 0.0], dtype=DTYPE), 1.0),
                          torch.tensor([0.5, 0.5], dtype=DTYPE))
    out = softmax_temperature(torch.tensor([1.0, 0.0], dtype=DTYPE), 0.5)
    assert out.tolist() == pytest.approx([0.8808, 0.1192], abs=1e-4)


def test_softmax_temperature_limit():
    out = softmax_temperature(torch.tensor([1.0, 0.0, -0.5], dtype=DTYPE), 0.01)
    assert out.max().item() >= 1 - 1e-6


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_temperature_rejects(tau):
    with pytest.raises(ValueError):
        softmax_temperature(torch.zeros(2, dtype=DTYPE), tau)


def test_softmax_temperature_gradient():
    x = rand(3, 5).requires_grad_()
    assert gradient_check(lambda: weighted_sum(softmax_temperature(x, 0.7)), [x]) < TOL


# -- gradient_check itself -----------------------------------------------------

def test_gradient_check_constant():
    x = rand(4).requires_grad_()
    assert gradient_check(lambda: (x * 0).sum() + 3.0, [x]) == 0.0


def test_gradient_check_rejects_vector():
    x = rand(4).requires_grad_()
    with pytest.raises(ValueError):
        gradient_check(lambda: x * 2, [x])


def test_softmax_cross_entropy_closed_form():
    z = rand(6).requires_grad_()
    y = 2
    loss = F.cross_entropy(z[None], torch.tensor([y]))
    (g,) = torch.autograd.grad(loss, z)
    expected = torch.softmax(z.detach(), -1) - F.one_hot(torch.tensor(y), 6).to(DTYPE)
    assert torch.allclose(g, expected, atol=1e-14)
    assert gradient_check(lambda: F.cross_entropy(z[None], torch.tensor([y])), [z]) < 1e-6


def test_gradient_check_catches_wrong_gradient():
    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            ctx.save_for_backward(x)
            return x ** 2

        @staticmethod
        def backward(ctx, g):
            (x,) = ctx.saved_tensors
            return g * 3 * x

    x = rand(5).requires_grad_()
    assert gradient_check(lambda: Wrong.apply(x).sum(), [x]) > 0.1


# -- layer gradients -----------------------------------------------------------

def params_of(module):
    return [p for p in module.parameters() if p.requires_grad]


@pytest.mark.parametrize("norm_first", [False, True])
def test_encoder_block_gradient(norm_first):
    torch.manual_seed(1)
    block = EncoderBlock(8, 2, 16, 0.0, norm_first).eval()
    x = rand(2, 4, 8, seed=2).requires_grad_()
    pad = torch.tensor([[False] * 4, [False, False, False, True]])
    assert gradient_check(lambda: weighted_sum(block(x, pad)), params_of(block) + [x]) < TOL


def test_embedding_gradient():
    table = rand(7, 3).requires_grad_()
    ids = torch.tensor([[1, 4, 4, 6]])
    soft = torch.softmax(rand(1, 4, 7, seed=3), -1).requires_grad_()
    assert gradient_check(lambda: weighted_sum(embed_tokens(ids, table)), [table]) < TOL
    assert gradient_check(lambda: weighted_sum(embed_tokens(soft, table)), [table, soft]) < TOL


def test_acmlm_gradient_hard_and_soft():
    net = small_acmlm().eval()
    ids = torch.tensor([[3, 4, 2, 5, 6]])
    attr = torch.tensor([1])
    assert gradient_check(lambda: weighted_sum(net(ids, attr)[1]), params_of(net)) < TOL
    soft = torch.softmax(rand(1, 5, 11, seed=4), -1).requires_grad_()
    assert gradient_check(lambda: weighted_sum(net(soft, attr)[1]), params_of(net)[:3] + [soft]) < TOL


def test_cnn_gradient_hard_and_soft():
    torch.manual_seed(2)
    cnn = CnnClassifier(9, d_emb=4, n_filters=3).eval()
    ids = torch.tensor([[3, 4, 5, 6, 7, 8], [4, 4, 3, 0, 0, 0]])
    lengths = torch.tensor([6, 3])
    assert gradient_check(lambda: weighted_sum(cnn(ids, lengths)), params_of(cnn)) < TOL
    soft = torch.softmax(rand(2, 6, 9, seed=5), -1).requires_grad_()
    assert gradient_check(lambda: weighted_sum(cnn(soft, lengths)), params_of(cnn) + [soft]) < TOL


def test_attention_classifier_gradient():
    torch.manual_seed(3)
    model = AttentionClassifier(9, d_emb=4, d_hidden=3, d_attn=5).eval()
    ids = torch.tensor([[3, 4, 5, 6], [7, 8, 0, 0]])
    lengths = torch.tensor([4, 2])
    y = torch.tensor([1, 0])
    assert gradient_check(lambda: F.cross_entropy(model(ids, lengths)[0], y), params_of(model)) < TOL


def test_attention_pool_gradient():
    scores = rand(2, 5).requires_grad_()
    hidden = rand(2, 5, 3, seed=6).requires_grad_()
    pad = torch.tensor([[False] * 5, [False, False, True, True, True]])

    def f():
        w, c = attention_pool(scores, hidden, pad)
        return weighted_sum(w, 7) + weighted_sum(c, 8)

    assert gradient_check(f, [scores, hidden]) < TOL


# -- encoder behaviour ---------------------------------------------------------

def test_zero_parameters_give_uniform_prediction():
    net = small_acmlm().eval()
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    _, logits = net(torch.tensor([[3, 4, 5]]), torch.tensor([0]))
    assert torch.count_nonzero(logits) == 0
    assert torch.allclose(torch.softmax(logits, -1), torch.full_like(logits, 1 / 11))


def test_one_hot_soft_input_matches_hard():
    net = small_acmlm().eval()
    ids = torch.tensor([[3, 4, 5, 9], [6, 7, 1, 2]])
    attr = torch.tensor([0, 1])
    hard = net(ids, attr)[1]
    soft = net(F.one_hot(ids, 11).to(DTYPE), attr)[1]
    assert torch.equal(hard, soft)


@pytest.mark.parametrize("perm", [[1, 0], [2, 0, 1], [1, 2, 0]])
def test_permutation_equivariance_without_positions(perm):
    net = small_acmlm().eval()
    with torch.no_grad():
        net.pos.weight.zero_()
    ids = torch.tensor([[3, 4, 5][:len(perm)]])
    attr = torch.tensor([1])
    base = net(ids, attr)[1]
    shuffled = net(ids[:, perm], attr)[1]
    assert torch.allclose(shuffled, base[:, perm], atol=1e-12)


def test_positions_break_equivariance():
    net = small_acmlm().eval()
    ids = torch.tensor([[3, 4, 5]])
    base = net(ids, torch.tensor([1]))[1]
    assert not torch.allclose(net(ids[:, [2, 1, 0]], torch.tensor([1]))[1], base[:, [2, 1, 0]])


def test_attribute_changes_logits():
    net = small_acmlm().eval()
    ids = torch.tensor([[3, 2, 5]])
    a = net(ids, torch.tensor([0]))[1]
    b = net(ids, torch.tensor([1]))[1]
    assert not torch.allclose(a[0, 1], b[0, 1])


def test_length_overflow():
    net = small_acmlm()
    with pytest.raises(InvalidInput):
        net(torch.full((1, 9), 3), torch.tensor([0]))


def test_encoder_heads_must_divide():
    with pytest.raises(ValueError):
        EncoderBlock(10, 3)


def test_padding_does_not_leak():
    net = small_acmlm().eval()
    ids = torch.tensor([[3, 4, 5]])
    alone = net(ids, torch.tensor([0]))[1]
    padded = net(torch.tensor([[3, 4, 5, 0, 0]]), torch.tensor([0]),
                 torch.tensor([[False, False, False, True, True]]))[1]
    assert torch.allclose(alone, padded[:, :3], atol=1e-12)


# -- CNN classifier --------------------------------------------------------------

def test_cnn_distribution_and_soft_identity():
    torch.manual_seed(4)
    cnn = CnnClassifier(9, d_emb=4, n_filters=3).eval()
    ids = torch.tensor([[3, 4], [5, 6]])
    lengths = torch.tensor([2, 2])
    probs = torch.softmax(cnn(ids, lengths), -1)
    assert torch.allclose(probs.sum(-1), torch.ones(2, dtype=DTYPE), atol=1e-12)
    soft = F.one_hot(ids, 9).to(DTYPE)
    assert torch.equal(cnn(ids, lengths), cnn(soft, lengths))


def test_cnn_batch_padding_invariance():
    torch.manual_seed(5)
    cnn = CnnClassifier(9, d_emb=4, n_filters=3).eval()
    alone = cnn(torch.tensor([[3, 4, 5, 6, 7, 8]]), torch.tensor([6]))
    padded = cnn(torch.tensor([[3, 4, 5, 6, 7, 8, 0, 0, 0]]), torch.tensor([6]))
    assert torch.allclose(alone, padded, atol=1e-12)
    short = cnn(torch.tensor([[3, 4]]), torch.tensor([2]))
    short_padded = cnn(torch.tensor([[3, 4, 0, 0, 0, 0, 0]]), torch.tensor([2]))
    assert torch.allclose(short, short_padded, atol=1e-12)


# -- optimizer determinism ------------------------------------------------------

def adam_run(seed):
    torch.manual_seed(seed)
    net = small_acmlm(dropout=0.1)
    opt = torch.optim.Adam(net.parameters(), lr=1e-2)
    ids = torch.tensor([[3, 4, 5, 6]])
    for _ in range(5):
        loss = F.cross_entropy(net(ids, torch.tensor([1]))[1][0], ids[0])
        opt.zero_grad()
        loss.backward()
        opt.step()
    return net.state_dict()


def test_adam_is_deterministic():
    a, b = adam_run(7), adam_run(7)
    assert all(torch.equal(a[k], b[k]) for k in a)


# -- checkpoints ------------------------------------------------------------------

def test_checkpoint_roundtrip_and_bytes(tmp_path):
    net = small_acmlm()
    save_module(tmp_path / "a.ckpt", net, "acmlm", "v1", config_hash="c1")
    save_module(tmp_path / "b.ckpt", net, "acmlm", "v1", config_hash="c1")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    back, meta = load_module(tmp_path / "a.ckpt", AcmlmNet, "acmlm", "v1", "c1")
    assert meta["hyper"] == net.hyper
    for k, v in net.state_dict().items():
        assert torch.equal(back.state_dict()[k], v)


def test_checkpoint_refusals(tmp_path):
    net = small_acmlm()
    p = tmp_path / "a.ckpt"
    save_module(p, net, "acmlm", "v1", config_hash="c1")
    with pytest.raises(CheckpointError):
        load_module(p, AcmlmNet, "acmlm", "v2")
    with pytest.raises(CheckpointError):
        load_module(p, AcmlmNet, "acmlm", "v1", "c2")
    with pytest.raises(CheckpointError):
        load_module(p, AcmlmNet, "cnn", "v1")
    (tmp_path / "junk").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_tensors(tmp_path / "junk")


def test_checkpoint_rejects_non_finite(tmp_path):
    with pytest.raises(CheckpointError):
        save_tensors(tmp_path / "x.ckpt", {"w": torch.tensor([1.0, math.nan])}, {})
    assert not (tmp_path / "x.ckpt").exists()
