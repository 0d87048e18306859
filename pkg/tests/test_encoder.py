import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from citeneed import encoder as E
from citeneed.numerics import ParamSlot, ShapeError, grad_check, make_rng

from oracles import additive_attention, gru_scalar, gru_vector


def scalar_params(**kw):
    vals = {n: 0.0 for n in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")}
    vals.update(kw)
    return E.GruParams(**{n: np.array([[v]]) if n[0] != "b" else np.array([v]) for n, v in vals.items()})


def random_params(rng, inp, hid, scale=1.0):
    p = E.GruParams.zeros(inp, hid)
    for _, w in p.items():
        w[...] = scale * rng.standard_normal(w.shape)
    return p


# vocabulary / embeddings ----------------------------------------------------

def test_vocabulary_reserved_indices_and_order():
    v = E.Vocabulary.build([["b", "a", "b"], ["c", "a", "b"]])
    assert v.itos[:2] == [E.UNK, E.PAD]
    assert v.itos[2:] == ["b", "a", "c"]  # count desc, then alphabetical
    assert v.index("zzz") == E.UNK_INDEX
    assert all(v.index(t) == i for i, t in enumerate(v.itos))


def test_load_pretrained(tmp_path):
    p = tmp_path / "vec.txt"
    p.write_text("2 3\nthe 0.1 0.2 0.3\ncat 1 2 3\n", encoding="utf-8")
    vecs = E.load_pretrained(p, dim=3)
    assert vecs["cat"].tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        E.load_pretrained(p, dim=4)
    p.write_text("the 0.1 nan 0.3\n")
    with pytest.raises(ValueError):
        E.load_pretrained(p)


def test_unknown_rows_are_seeded_random():
    vocab = E.Vocabulary(["qqq", "rrr"])
    emb = E.WordEmbeddings.build(vocab, 4, make_rng(3))
    again = E.WordEmbeddings.build(vocab, 4, make_rng(3))
    x, mask = E.embed_tokens(["qqq", "rrr"], emb, max_len=5)
    assert np.array_equal(x[:2], again.matrix[[2, 3]])
    assert np.abs(x[:2]).max() <= 0.25
    assert mask.tolist() == [True, True, False, False, False]
    assert np.all(x[2:] == 0)


def test_pretrained_rows_copied_and_frozen():
    vocab = E.Vocabulary(["cat", "dog"])
    emb = E.WordEmbeddings.build(vocab, 2, make_rng(0), pretrained={"cat": np.array([9.0, 8.0])})
    assert emb.matrix[vocab.index("cat")].tolist() == [9.0, 8.0]
    assert not emb.trainable_mask[vocab.index("cat")]
    assert emb.trainable_mask[vocab.index("dog")] and emb.trainable_mask[E.UNK_INDEX]
    assert np.all(emb.matrix[E.PAD_INDEX] == 0)


def test_embed_tokens_truncates_and_rejects_zero_len():
    emb = E.WordEmbeddings.build(E.Vocabulary(["a"]), 2, make_rng(0))
    x, mask = E.embed_tokens(["a"] * 10, emb, max_len=4)
    assert x.shape == (4, 2) and mask.all()
    with pytest.raises(ValueError):
        E.embed_tokens(["a"], emb, max_len=0)


# GRU cell -------------------------------------------------------------------

def test_gru_zero_params_examples():
    p = E.GruParams.zeros(3, 2)
    assert E.gru_cell_step(np.ones(3), np.ones(2), p).tolist() == [0.5, 0.5]
    assert E.gru_cell_step(np.array([5.0, -1.0, 2.0]), np.zeros(2), p).tolist() == [0.0, 0.0]


def test_gru_worked_scalar_example():
    p = scalar_params(W_z=1, U_z=1, W_r=1, U_r=1, W_h=1, U_h=1)
    h = E.gru_cell_step([1.0], [0.0], p)[0]
    assert h == pytest.approx(math.tanh(1) / (1 + math.exp(-1)), abs=1e-15)
    # sigma(1) * tanh(1) = 0.731059 * 0.761594 = 0.556770 (often quoted as 0.5569)
    assert h == pytest.approx(0.556770, abs=1e-6)


def test_reset_gate_scales_recurrent_bias():
    # with W = U = 0 the candidate is tanh(r * b_h) and r = sigmoid(b_r)
    p = scalar_params(b_r=-2.0, b_h=1.5, b_z=10.0)
    r = 1 / (1 + math.exp(2.0))
    z = 1 / (1 + math.exp(-10.0))
    assert E.gru_cell_step([0.0], [0.0], p)[0] == pytest.approx(z * math.tanh(r * 1.5), abs=1e-15)


@given(st.integers(0, 10_000))
def test_gru_matches_loop_oracle(seed):
    rng = make_rng(seed)
    p = random_params(rng, 3, 4)
    x, h = rng.standard_normal(3), rng.uniform(-1, 1, 4)
    ref = gru_vector(x.tolist(), h.tolist(), {n: w.tolist() for n, w in p.items()})
    assert np.allclose(E.gru_cell_step(x, h, p), ref, atol=1e-12)


@given(st.integers(0, 10_000))
def test_gru_output_interpolates(seed):
    rng = make_rng(seed)
    p = random_params(rng, 2, 3, scale=2.0)
    x, h = rng.standard_normal(2), rng.uniform(-1, 1, 3)
    out = E.gru_cell_step(x, h, p)
    # recompute the candidate to check convexity coordinate-wise
    r = 1 / (1 + np.exp(-(p.W_r @ x + p.U_r @ h + p.b_r)))
    cand = np.tanh(p.W_h @ x + r * (p.U_h @ h + p.b_h))
    lo, hi = np.minimum(h, cand), np.maximum(h, cand)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_gru_shape_mismatch():
    with pytest.raises(ShapeError):
        E.gru_cell_step(np.ones(2), np.ones(2), E.GruParams.zeros(3, 2))
    with pytest.raises(ShapeError):
        E.GruParams(*(np.zeros((2, 3)) if i % 3 == 0 else np.zeros((2, 2)) if i % 3 == 1 else np.zeros(3)
                      for i in range(9)))


# sequence runs --------------------------------------------------------------

def test_run_gru_zero_params_and_fully_masked():
    seq = make_rng(0).standard_normal((4, 3))
    assert np.all(E.run_gru(seq, None, E.GruParams.zeros(3, 2)) == 0)
    p = random_params(make_rng(1), 3, 2)
    assert np.all(E.run_gru(seq, np.zeros(4, bool), p) == 0)


def test_run_gru_composes_cell_steps():
    p = random_params(make_rng(2), 1, 1)
    seq = np.array([[0.3], [-1.2]])
    h1 = E.gru_cell_step(seq[0], np.zeros(1), p)
    h2 = E.gru_cell_step(seq[1], h1, p)
    assert np.array_equal(E.run_gru(seq, None, p), np.stack([h1, h2]))
    b1 = E.gru_cell_step(seq[1], np.zeros(1), p)
    b0 = E.gru_cell_step(seq[0], b1, p)
    assert np.array_equal(E.run_gru(seq, None, p, "bwd"), np.stack([b0, b1]))


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(0, 4))
def test_masked_suffix_equals_truncation(seed, n, pad):
    rng = make_rng(seed)
    p = random_params(rng, 2, 3)
    seq = rng.standard_normal((n + pad, 2))
    mask = np.arange(n + pad) < n
    for direction in ("fwd", "bwd"):
        full = E.run_gru(seq, mask, p, direction)
        short = E.run_gru(seq[:n], None, p, direction)
        assert np.allclose(full[:n], short, atol=1e-14)


def test_bidirectional_is_concatenation():
    rng = make_rng(4)
    pf, pb = random_params(rng, 2, 3), random_params(rng, 2, 3)
    seq = rng.standard_normal((5, 2))
    out = E.bidirectional_encode(seq, None, pf, pb)
    assert np.array_equal(out, np.concatenate([E.run_gru(seq, None, pf), E.run_gru(seq, None, pb, "bwd")], 1))


def test_bidirectional_palindrome_symmetry():
    rng = make_rng(5)
    p = random_params(rng, 2, 3)
    half = rng.standard_normal((3, 2))
    seq = np.concatenate([half, half[-2::-1]])
    out = E.bidirectional_encode(seq, None, p, p)
    assert np.allclose(out[:, :3], out[::-1, 3:], atol=1e-14)


def test_bidirectional_zero_params_and_dim_mismatch():
    seq = np.ones((3, 2))
    assert np.all(E.bidirectional_encode(seq, None, E.GruParams.zeros(2, 3), E.GruParams.zeros(2, 3)) == 0)
    with pytest.raises(ShapeError):
        E.bidirectional_encode(seq, None, E.GruParams.zeros(2, 3), E.GruParams.zeros(2, 4))


# attention ------------------------------------------------------------------

def test_attention_identical_states_uniform():
    a = E.AttentionParams.init(make_rng(0), 4)
    states = np.tile(np.array([0.1, -0.2, 0.3, 0.4]), (5, 1))
    alpha, ctx = E.global_attention(states, None, a)
    assert np.allclose(alpha, 0.2, atol=1e-15)
    assert np.allclose(ctx, states[0], atol=1e-15)


def test_attention_single_unmasked_state():
    a = E.AttentionParams.init(make_rng(0), 3)
    states = make_rng(1).standard_normal((4, 3))
    alpha, ctx = E.global_attention(states, np.array([False, False, True, False]), a)
    assert alpha.tolist() == [0.0, 0.0, 1.0, 0.0]
    assert np.array_equal(ctx, states[2])


def test_attention_matches_direct_formula():
    W = np.array([[0.1, -0.2], [0.3, 0.05]])
    v = np.array([0.7, -0.4])
    states = np.array([[1.0, 0.5], [-0.3, 0.8], [0.2, -1.0]])
    alpha, ctx = E.global_attention(states, None, E.AttentionParams(W, v))
    ra, rc = additive_attention(states.tolist(), W.tolist(), v.tolist())
    assert np.allclose(alpha, ra, atol=1e-15) and np.allclose(ctx, rc, atol=1e-15)


def test_attention_all_masked_raises():
    with pytest.raises(ValueError):
        E.global_attention(np.ones((2, 2)), np.zeros(2, bool), E.AttentionParams.init(make_rng(0), 2))


@given(st.integers(0, 10_000))
def test_attention_permutation_equivariance(seed):
    rng = make_rng(seed)
    a = E.AttentionParams.init(rng, 4)
    states = rng.standard_normal((6, 4))
    perm = rng.permutation(6)
    alpha, ctx = E.global_attention(states, None, a)
    alpha_p, ctx_p = E.global_attention(states[perm], None, a)
    assert np.allclose(alpha_p, alpha[perm], atol=1e-14)
    assert np.allclose(ctx_p, ctx, atol=1e-14)


# sections -------------------------------------------------------------------

def test_section_keys_and_unknown():
    s = E.SectionEmbeddings.build([("Early  Life", False), ("", True)], 3, make_rng(0))
    assert s.lookup("early life", False) == s.index["early life"]
    assert s.lookup("whatever", True) == s.index[E.LEAD_KEY]
    assert s.lookup("Nowhere", False) == E.UNK_INDEX
    assert len(s.matrix) == 3


def test_encode_section():
    rng = make_rng(1)
    s = E.SectionEmbeddings.build([("History", False)], 3, rng)
    p = random_params(rng, 3, 2)
    assert np.array_equal(E.encode_section("Nowhere", False, s, p),
                          E.gru_cell_step(s.matrix[E.UNK_INDEX], np.zeros(2), p))
    assert np.array_equal(E.encode_section("History", False, s, p), E.encode_section("history", False, s, p))
    assert np.all(E.encode_section("History", False, s, E.GruParams.zeros(3, 2)) == 0)


# gradients ------------------------------------------------------------------

def test_encoder_gradients_pass_grad_check():
    rng = make_rng(7)
    pf, pb = random_params(rng, 3, 2, 0.5), random_params(rng, 3, 2, 0.5)
    a = E.AttentionParams.init(rng, 4)
    x = rng.standard_normal((2, 4, 3))
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], bool)
    target = rng.standard_normal((2, 4))

    def loss():
        H, _ = E.bidirectional_forward(x, mask, pf, pb)
        _, ctx, _ = E.attention_forward(H, mask, a)
        return float((ctx * target).sum())

    H, gcache = E.bidirectional_forward(x, mask, pf, pb)
    _, _, acache = E.attention_forward(H, mask, a)
    dH, ga = E.attention_backward(target, acache, a)
    dx, gf, gb = E.bidirectional_backward(dH, gcache, pf, pb)
    slots = [ParamSlot("x", x, dx), ParamSlot("W_a", a.W_a, ga.W_a), ParamSlot("v_a", a.v_a, ga.v_a)]
    slots += [ParamSlot(f"f.{n}", w, getattr(gf, n)) for n, w in pf.items()]
    slots += [ParamSlot(f"b.{n}", w, getattr(gb, n)) for n, w in pb.items()]
    rep = grad_check(loss, slots)
    assert rep.passed, rep.per_slot
