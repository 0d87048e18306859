"""Statement representation and sequence encoding.

All sequence functions are batched: inputs are ``(batch, time, features)``
arrays with a boolean ``(batch, time)`` mask.  Padding always sits at the
end of a row.  Each forward function returns a cache consumed by the
matching ``*_backward``, which returns input gradients plus a parameter
gradient container of the same structure as the parameters.

GRU recurrence, per step::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    hc = tanh(W_h x + r * (U_h h + b_h))
    h' = (1 - z) * h + z * hc

Masked steps carry ``h`` through unchanged.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .numerics import ShapeError, _masked_softmax, _sigmoid, as_tensor, glorot_uniform

UNK, PAD = "<unk>", "<pad>"
UNK_INDEX, PAD_INDEX = 0, 1
LEAD_KEY = "LEAD"
UNK_INIT_RANGE = 0.25
DEFAULT_MAX_LEN = 60


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [UNK, PAD]
        self.stoi = {UNK: UNK_INDEX, PAD: PAD_INDEX}
        for tok in tokens:
            self.add(tok)

    unk_index = UNK_INDEX
    pad_index = PAD_INDEX

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return idx

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK_INDEX)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @classmethod
    def build(cls, token_seqs: Iterable[Sequence[str]], min_count: int = 1) -> "Vocabulary":
        """Most frequent first, ties broken alphabetically."""
        counts = Counter(t for seq in token_seqs for t in seq)
        ranked = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(t for t in ranked if t not in (UNK, PAD))


def load_pretrained(path, dim: int | None = None) -> dict[str, np.ndarray]:
    """Read ``token f1 ... fd`` lines (UTF-8).  A leading ``count dim``
    header line, as written by word2vec/fastText, is skipped."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if ln == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise ValueError(f"{path}:{ln}: expected {dim} values for {token!r}, found {len(values)}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{ln}: non-numeric vector entry") from None
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path}:{ln}: non-finite vector entry")
            vectors.setdefault(token, vec)
    return vectors


@dataclass
class WordEmbeddings:
    matrix: np.ndarray
    vocab: Vocabulary
    trainable_mask: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def build(cls, vocab: Vocabulary, dim: int, rng: np.random.Generator,
              pretrained: dict | None = None, freeze_pretrained: bool = True) -> "WordEmbeddings":
        """Pretrained rows are copied; every other row is uniform in
        [-0.25, 0.25] drawn in vocabulary order.  The pad row is zero."""
        k = len(vocab)
        matrix = rng.uniform(-UNK_INIT_RANGE, UNK_INIT_RANGE, size=(k, dim))
        matrix[PAD_INDEX] = 0.0
        trainable = np.ones(k, dtype=bool)
        if pretrained:
            for tok, idx in vocab.stoi.items():
                vec = pretrained.get(tok)
                if vec is not None:
                    if vec.shape != (dim,):
                        raise ShapeError(f"pretrained vector for {tok!r} has dim {vec.shape}, expected {dim}")
                    matrix[idx] = vec
                    trainable[idx] = not freeze_pretrained
        return cls(matrix, vocab, trainable)


@dataclass
class SectionEmbeddings:
    matrix: np.ndarray
    index: dict[str, int]

    @staticmethod
    def key(heading: str, is_lead: bool) -> str:
        return LEAD_KEY if is_lead else " ".join(heading.lower().split())

    def lookup(self, heading: str, is_lead: bool) -> int:
        return self.index.get(self.key(heading, is_lead), UNK_INDEX)

    @classmethod
    def build(cls, sections: Iterable[tuple[str, bool]], dim: int, rng: np.random.Generator) -> "SectionEmbeddings":
        keys = sorted({cls.key(h, lead) for h, lead in sections})
        index = {UNK: UNK_INDEX}
        for k in keys:
            index.setdefault(k, len(index))
        matrix = rng.uniform(-UNK_INIT_RANGE, UNK_INIT_RANGE, size=(len(index), dim))
        return cls(matrix, index)


@dataclass
class GruParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        hidden, inp = self.W_z.shape
        for name, w in self.items():
            expect = {"W": (hidden, inp), "U": (hidden, hidden), "b": (hidden,)}[name[0]]
            if w.shape != expect:
                raise ShapeError(f"GRU {name} has shape {w.shape}, expected {expect}")

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "GruParams":
        kw = {}
        for f in fields(cls):
            shape = {"W": (hidden, input_dim), "U": (hidden, hidden), "b": (hidden,)}[f.name[0]]
            kw[f.name] = np.zeros(shape)
        return cls(**kw)

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden: int) -> "GruParams":
        p = cls.zeros(input_dim, hidden)
        for name, w in p.items():
            if name[0] != "b":
                w[...] = glorot_uniform(rng, w.shape)
        return p


@dataclass
class AttentionParams:
    W_a: np.ndarray  # (d_a, h_enc)
    v_a: np.ndarray  # (d_a,)

    def items(self):
        return [("W_a", self.W_a), ("v_a", self.v_a)]

    @classmethod
    def init(cls, rng: np.random.Generator, enc_dim: int, att_dim: int | None = None) -> "AttentionParams":
        att_dim = att_dim or enc_dim
        return cls(glorot_uniform(rng, (att_dim, enc_dim)), glorot_uniform(rng, (att_dim,)))


@dataclass
class EncodedStatement:
    states: np.ndarray
    weights: np.ndarray | None = None
    context: np.ndarray | None = None
    section: np.ndarray | None = None


# --------------------------------------------------------------------------
# token lookup


def token_ids(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> list[int]:
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    return [vocab.index(t) for t in list(tokens)[:max_len]]


def batch_ids(token_seqs: Sequence[Sequence[str]], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
              pad_to: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Index matrix and mask for a batch, padded to the longest row (or ``pad_to``)."""
    rows = [token_ids(seq, vocab, max_len) for seq in token_seqs]
    width = pad_to or max((len(r) for r in rows), default=1) or 1
    ids = np.full((len(rows), width), PAD_INDEX, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = True
    return ids, mask


def embed_tokens(tokens: Sequence[str], emb: WordEmbeddings, max_len: int = DEFAULT_MAX_LEN) -> tuple[np.ndarray, np.ndarray]:
    """``(max_len, dim)`` embedding rows and the matching mask; tail-truncated."""
    if hasattr(tokens, "tokens"):
        tokens = tokens.tokens
    ids, mask = batch_ids([tokens], emb.vocab, max_len, pad_to=max_len)
    x = emb.matrix[ids[0]]
    x[~mask[0]] = 0.0
    return x, mask[0]


# --------------------------------------------------------------------------
# GRU


def gru_cell_step(x, h_prev, p: GruParams) -> np.ndarray:
    """One GRU step for a single (unbatched) input vector."""
    x = as_tensor(x, "x")
    h_prev = as_tensor(h_prev, "h_prev")
    if x.shape != (p.input_dim,) or h_prev.shape != (p.hidden,):
        raise ShapeError(f"gru_cell_step got x{x.shape}, h{h_prev.shape} for params ({p.hidden}x{p.input_dim})")
    h, _ = _gru_step(x[None, :], h_prev[None, :], p)
    return h[0]


def _gru_step(x, h, p):
    z = _sigmoid(x @ p.W_z.T + h @ p.U_z.T + p.b_z)
    r = _sigmoid(x @ p.W_r.T + h @ p.U_r.T + p.b_r)
    a = h @ p.U_h.T + p.b_h
    hc = np.tanh(x @ p.W_h.T + r * a)
    h_new = (1.0 - z) * h + z * hc
    return h_new, (x, h, z, r, a, hc)


def gru_forward(seq, mask, p: GruParams, reverse: bool = False):
    """Run the GRU over ``seq`` (B, T, D) from h_0 = 0.

    With ``reverse`` the sequence is consumed right to left and the output
    at position t is the state after reading tokens t..end.
    """
    B, T, D = seq.shape
    if D != p.input_dim:
        raise ShapeError(f"input dim {D} != GRU input dim {p.input_dim}")
    H = np.zeros((B, T, p.hidden))
    h = np.zeros((B, p.hidden))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    caches = []
    for t in steps:
        h_new, c = _gru_step(seq[:, t], h, p)
        m = mask[:, t, None]
        h = np.where(m, h_new, h)
        H[:, t] = h
        caches.append((t, m, c))
    return H, caches


def run_gru(seq, mask, p: GruParams, direction: str = "fwd") -> np.ndarray:
    """Unbatched convenience wrapper: ``seq`` is (n, input)."""
    seq = as_tensor(seq, "seq")
    mask = np.ones(seq.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if direction not in ("fwd", "bwd"):
        raise ValueError("direction must be 'fwd' or 'bwd'")
    H, _ = gru_forward(seq[None], mask[None], p, reverse=direction == "bwd")
    return H[0]


def gru_backward(dH, caches, p: GruParams):
    """Gradients for :func:`gru_forward`.  Returns (dseq, GruParams of grads)."""
    g = GruParams.zeros(p.input_dim, p.hidden)
    B, T, _ = dH.shape
    dseq = np.zeros((B, T, p.input_dim))
    dh_next = np.zeros((B, p.hidden))
    for t, m, (x, h, z, r, a, hc) in reversed(caches):
        dh = dH[:, t] + dh_next
        dh_new = np.where(m, dh, 0.0)
        dh_carry = np.where(m, 0.0, dh)

        dhc = dh_new * z
        dz = dh_new * (hc - h)
        dh_prev = dh_new * (1.0 - z)

        dpre_h = dhc * (1.0 - hc * hc)
        dr = dpre_h * a
        da = dpre_h * r
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)

        g.W_h += dpre_h.T @ x
        g.U_h += da.T @ h
        g.b_h += da.sum(0)
        g.W_z += dpre_z.T @ x
        g.U_z += dpre_z.T @ h
        g.b_z += dpre_z.sum(0)
        g.W_r += dpre_r.T @ x
        g.U_r += dpre_r.T @ h
        g.b_r += dpre_r.sum(0)

        dseq[:, t] = dpre_h @ p.W_h + dpre_z @ p.W_z + dpre_r @ p.W_r
        dh_next = dh_carry + dh_prev + da @ p.U_h + dpre_z @ p.U_z + dpre_r @ p.U_r
    return dseq, g


def bidirectional_forward(seq, mask, p_fwd: GruParams, p_bwd: GruParams):
    if p_fwd.hidden != p_bwd.hidden:
        raise ShapeError(f"direction hidden dims differ: {p_fwd.hidden} vs {p_bwd.hidden}")
    Hf, cf = gru_forward(seq, mask, p_fwd)
    Hb, cb = gru_forward(seq, mask, p_bwd, reverse=True)
    return np.concatenate([Hf, Hb], axis=-1), (cf, cb)


def bidirectional_backward(dH, cache, p_fwd: GruParams, p_bwd: GruParams):
    cf, cb = cache
    hd = p_fwd.hidden
    dxf, gf = gru_backward(dH[..., :hd], cf, p_fwd)
    dxb, gb = gru_backward(dH[..., hd:], cb, p_bwd)
    return dxf + dxb, gf, gb


def bidirectional_encode(seq, mask, p_fwd: GruParams, p_bwd: GruParams) -> np.ndarray:
    """Unbatched: (n, input) -> (n, 2 * hidden), forward then backward halves."""
    seq = as_tensor(seq, "seq")
    mask = np.ones(seq.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    H, _ = bidirectional_forward(seq[None], mask[None], p_fwd, p_bwd)
    return H[0]


# --------------------------------------------------------------------------
# global attention


def attention_forward(states, mask, a: AttentionParams):
    """Additive scoring ``e_t = v_a . tanh(W_a h_t)``, masked softmax, weighted sum."""
    if not np.all(mask.any(axis=1)):
        raise ValueError("attention over an all-masked sequence")
    u = np.tanh(states @ a.W_a.T)
    scores = u @ a.v_a
    alpha = _masked_softmax(scores, mask)
    context = np.einsum("bt,bte->be", alpha, states)
    return alpha, context, (states, u, alpha)


def attention_backward(dcontext, cache, a: AttentionParams):
    states, u, alpha = cache
    dstates = alpha[..., None] * dcontext[:, None, :]
    dalpha = np.einsum("bte,be->bt", states, dcontext)
    dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dv = np.einsum("bt,btd->d", dscores, u)
    du = dscores[..., None] * a.v_a
    dpre = du * (1.0 - u * u)
    dW = np.einsum("btd,bte->de", dpre, states)
    dstates += dpre @ a.W_a
    return dstates, AttentionParams(dW, dv)


def global_attention(states, mask, a: AttentionParams) -> tuple[np.ndarray, np.ndarray]:
    """Unbatched: states (n, h_enc) -> (weights (n,), context (h_enc,))."""
    states = as_tensor(states, "states")
    mask = np.ones(states.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    alpha, context, _ = attention_forward(states[None], mask[None], a)
    return alpha[0], context[0]


# --------------------------------------------------------------------------
# section encoding


def section_forward(section_ids, s: SectionEmbeddings, p: GruParams):
    """Length-1 GRU run (h_0 = 0) over each section's embedding row."""
    x = s.matrix[section_ids][:, None, :]
    mask = np.ones((len(section_ids), 1), dtype=bool)
    H, caches = gru_forward(x, mask, p)
    return H[:, 0], caches


def encode_section(section_heading: str, is_lead: bool, s: SectionEmbeddings, p: GruParams) -> np.ndarray:
    idx = s.lookup(section_heading, is_lead)
    vec, _ = section_forward(np.array([idx]), s, p)
    return vec[0]
