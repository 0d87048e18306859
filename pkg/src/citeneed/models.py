"""Citation-need classifiers, the citation-reason head, training and checkpoints.

Variants:

``RNN_w``    forward GRU over words, last hidden state
``RNN_wS``   same, concatenated with a section encoding
``RNNa_w``   bidirectional GRU with global attention over the states
``RNNa_wS``  attention context concatenated with a section encoding

The section encoding is a separate length-1 GRU over a trainable
section-embedding row.  A dense layer maps the representation to one
logit (need, sigmoid) or eight logits (reason, softmax).
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoder as enc
from .analysis import EvaluationReport, confusion_matrix, precision_recall_f1
from .corpus import REASONS, LabeledInstance, ReasonInstance
from .numerics import AdamState, ParamSlot, _masked_softmax, _sigmoid, adam_step, glorot_uniform, make_rng

log = logging.getLogger(__name__)

VARIANTS = ("RNN_w", "RNN_wS", "RNNa_w", "RNNa_wS")
CLI_VARIANTS = {"rnn": "RNN_w", "rnn-s": "RNN_wS", "rnn-a": "RNNa_w", "rnn-a-s": "RNNa_wS"}
NEED_LABELS = ("negative", "positive")
THRESHOLD = 0.5
SPLITS = ("50/50", "50/30/20")

FORMAT_VERSION = 1
MAGIC = b"CITENEED"


class UnsupportedVariantError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


class CheckpointKindError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 100
    hidden_dim: int = 100
    embed_dim: int = 100
    max_len: int = enc.DEFAULT_MAX_LEN
    learning_rate: float = 0.001
    seed: int = 42
    split: str = "50/50"
    freeze_pretrained: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden_dim", "embed_dim", "max_len"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")

    def fractions(self) -> dict[str, float]:
        if self.split == "50/50":
            return {"train": 0.5, "eval": 0.5}
        return {"train": 0.5, "test": 0.3, "validation": 0.2}


def split_instances(instances: Sequence, split: str, seed: int) -> dict[str, list]:
    """Seeded random split; 50/50 -> train/eval, 50/30/20 -> train/test/validation."""
    n = len(instances)
    order = make_rng(seed).permutation(n)
    if split == "50/50":
        cut = n // 2
        parts = {"train": order[:cut], "eval": order[cut:]}
    elif split == "50/30/20":
        a, b = n // 2, n // 2 + (3 * n) // 10
        parts = {"train": order[:a], "test": order[a:b], "validation": order[b:]}
    else:
        raise ValueError(f"unknown split {split!r}")
    return {k: [instances[i] for i in v] for k, v in parts.items()}


# --------------------------------------------------------------------------
# model


class _EncoderModel:
    """Shared encoder stack; subclasses choose the output head."""

    kind = ""
    n_out = 1

    def __init__(self, variant: str, vocab: enc.Vocabulary, sections: dict | None,
                 embed_dim: int, hidden_dim: int, max_len: int = enc.DEFAULT_MAX_LEN):
        if variant not in VARIANTS:
            raise UnsupportedVariantError(f"unknown variant {variant!r}")
        self.variant = variant
        self.vocab = vocab
        self.section_index = dict(sections) if sections is not None else None
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.params: dict[str, np.ndarray] = {}
        self.frozen_rows = np.zeros(0, dtype=np.int64)
        self.config: dict = {}
        if self.uses_section and self.section_index is None:
            raise ValueError(f"{variant} needs a section index")

    # structure -----------------------------------------------------------

    @property
    def uses_attention(self) -> bool:
        return self.variant.startswith("RNNa")

    @property
    def uses_section(self) -> bool:
        return self.variant.endswith("S")

    @property
    def rep_dim(self) -> int:
        d = self.hidden_dim * (2 if self.uses_attention else 1)
        return d + (self.hidden_dim if self.uses_section else 0)

    def param_shapes(self) -> dict[str, tuple]:
        e, h = self.embed_dim, self.hidden_dim
        shapes = {"word_emb": (len(self.vocab), e)}
        gru = lambda prefix, inp: {f"{prefix}.{n}": w.shape for n, w in enc.GruParams.zeros(inp, h).items()}
        shapes.update(gru("gru_fwd", e))
        if self.uses_attention:
            shapes.update(gru("gru_bwd", e))
            shapes["att.W_a"] = (2 * h, 2 * h)
            shapes["att.v_a"] = (2 * h,)
        if self.uses_section:
            shapes["sec_emb"] = (len(self.section_index), e)
            shapes.update(gru("sec_gru", e))
        shapes["dense.W"] = (self.n_out, self.rep_dim)
        shapes["dense.b"] = (self.n_out,)
        return shapes

    def init_params(self, rng: np.random.Generator, pretrained: dict | None = None,
                    freeze_pretrained: bool = True, head_rng: np.random.Generator | None = None) -> None:
        """Encoder weights from ``rng``; the dense head from ``head_rng``
        (defaults to ``rng``) so heads can be initialized independently."""
        emb = enc.WordEmbeddings.build(self.vocab, self.embed_dim, rng, pretrained, freeze_pretrained)
        self.params = {"word_emb": emb.matrix}
        self.frozen_rows = np.flatnonzero(~emb.trainable_mask)
        for name, shape in self.param_shapes().items():
            if name == "word_emb" or name.startswith("dense."):
                continue
            if name == "sec_emb":
                self.params[name] = rng.uniform(-enc.UNK_INIT_RANGE, enc.UNK_INIT_RANGE, size=shape)
            elif name.rsplit(".", 1)[1].startswith("b"):
                self.params[name] = np.zeros(shape)
            else:
                self.params[name] = glorot_uniform(rng, shape)
        head_rng = head_rng or rng
        self.params["dense.W"] = glorot_uniform(head_rng, self.param_shapes()["dense.W"])
        self.params["dense.b"] = np.zeros(self.n_out)
        self._slots = None

    def _gru(self, prefix: str) -> enc.GruParams:
        return enc.GruParams(**{f.name: self.params[f"{prefix}.{f.name}"] for f in fields(enc.GruParams)})

    @property
    def attention(self) -> enc.AttentionParams:
        return enc.AttentionParams(self.params["att.W_a"], self.params["att.v_a"])

    def word_embeddings(self) -> enc.WordEmbeddings:
        mask = np.ones(len(self.vocab), dtype=bool)
        mask[self.frozen_rows] = False
        return enc.WordEmbeddings(self.params["word_emb"], self.vocab, mask)

    def section_embeddings(self) -> enc.SectionEmbeddings:
        return enc.SectionEmbeddings(self.params["sec_emb"], self.section_index)

    def slots(self) -> list[ParamSlot]:
        if getattr(self, "_slots", None) is None:
            self._slots = [
                ParamSlot(name, value, frozen_rows=self.frozen_rows if name == "word_emb" and self.frozen_rows.size else None)
                for name, value in self.params.items()
            ]
        return self._slots

    # forward / backward ----------------------------------------------------

    def _inputs(self, statements):
        tokens = [s.tokens for s in statements]
        ids, mask = enc.batch_ids(tokens, self.vocab, self.max_len)
        if not mask.any(axis=1).all():
            raise ValueError("statement with no tokens")
        sec_ids = None
        if self.uses_section:
            sec = self.section_embeddings()
            sec_ids = []
            for s in statements:
                heading = getattr(s, "section_heading", None)
                if heading is None:
                    raise ValueError(f"{self.variant} needs the statement's section")
                sec_ids.append(sec.lookup(heading, bool(getattr(s, "is_lead", False))))
            sec_ids = np.array(sec_ids, dtype=np.int64)
        return ids, mask, sec_ids

    def forward_batch(self, statements):
        """Logits ``(B, n_out)`` plus the cache for :meth:`backward`."""
        ids, mask, sec_ids = self._inputs(statements)
        x = self.params["word_emb"][ids]
        cache = {"ids": ids, "mask": mask, "sec_ids": sec_ids}
        if self.uses_attention:
            H, cache["gru"] = enc.bidirectional_forward(x, mask, self._gru("gru_fwd"), self._gru("gru_bwd"))
            alpha, rep, cache["att"] = enc.attention_forward(H, mask, self.attention)
            cache["alpha"] = alpha
        else:
            H, cache["gru"] = enc.gru_forward(x, mask, self._gru("gru_fwd"))
            rep = H[:, -1]
            cache["T"] = H.shape[1]
        cache["H"] = H
        if self.uses_section:
            svec, cache["sec"] = enc.section_forward(sec_ids, self.section_embeddings(), self._gru("sec_gru"))
            rep = np.concatenate([rep, svec], axis=1)
        cache["rep"] = rep
        logits = rep @ self.params["dense.W"].T + self.params["dense.b"]
        return logits, cache

    def backward(self, dlogits, cache) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream gradient ``dlogits``."""
        p = self.params
        g = {name: np.zeros_like(v) for name, v in p.items()}
        rep = cache["rep"]
        g["dense.W"] += dlogits.T @ rep
        g["dense.b"] += dlogits.sum(0)
        drep = dlogits @ p["dense.W"]
        seq_dim = self.hidden_dim * (2 if self.uses_attention else 1)
        if self.uses_section:
            dsvec = drep[:, seq_dim:]
            drep = drep[:, :seq_dim]
            dxs, gs = enc.gru_backward(dsvec[:, None, :], cache["sec"], self._gru("sec_gru"))
            for n, w in gs.items():
                g[f"sec_gru.{n}"] += w
            np.add.at(g["sec_emb"], cache["sec_ids"], dxs[:, 0])
        if self.uses_attention:
            dH, ga = enc.attention_backward(drep, cache["att"], self.attention)
            g["att.W_a"] += ga.W_a
            g["att.v_a"] += ga.v_a
            dx, gf, gb = enc.bidirectional_backward(dH, cache["gru"], self._gru("gru_fwd"), self._gru("gru_bwd"))
            for n, w in gb.items():
                g[f"gru_bwd.{n}"] += w
        else:
            B = drep.shape[0]
            dH = np.zeros((B, cache["T"], self.hidden_dim))
            dH[:, -1] = drep
            dx, gf = enc.gru_backward(dH, cache["gru"], self._gru("gru_fwd"))
        for n, w in gf.items():
            g[f"gru_fwd.{n}"] += w
        np.add.at(g["word_emb"], cache["ids"], dx)
        return g

    def accumulate(self, grads: dict) -> None:
        for slot in self.slots():
            slot.grad += grads[slot.name]

    def encode(self, statement) -> enc.EncodedStatement:
        _, cache = self.forward_batch([statement])
        n = int(cache["mask"][0].sum())
        H = cache["H"]
        seq_dim = H.shape[-1]
        rep = cache["rep"][0]
        return enc.EncodedStatement(
            states=H[0, :n],
            weights=cache["alpha"][0, :n] if self.uses_attention else None,
            context=rep[:seq_dim] if self.uses_attention else None,
            section=rep[seq_dim:] if self.uses_section else None,
        )

    def attention_weights(self, statements) -> list[np.ndarray]:
        if not self.uses_attention:
            raise UnsupportedVariantError(f"{self.variant} has no attention layer")
        _, cache = self.forward_batch(statements)
        return [cache["alpha"][i, : int(m.sum())] for i, m in enumerate(cache["mask"])]

    def _truncated_tokens(self, statement) -> list[str]:
        return list(statement.tokens)[: self.max_len]


class NeedModel(_EncoderModel):
    kind = "need"
    n_out = 1

    def predict_proba(self, statements, batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(statements), batch_size):
            logits, _ = self.forward_batch(statements[i : i + batch_size])
            out.append(_sigmoid(logits[:, 0]))
        return np.concatenate(out) if out else np.zeros(0)

    def loss_and_grads(self, statements, targets) -> tuple[float, dict]:
        """Mean binary cross-entropy and its parameter gradients."""
        y = np.asarray(targets, dtype=np.float64)
        logits, cache = self.forward_batch(statements)
        z = logits[:, 0]
        # -[y log s(z) + (1-y) log(1-s(z))] in a stable form
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dlogits = ((_sigmoid(z) - y) / len(y))[:, None]
        return loss, self.backward(dlogits, cache)

    def loss(self, statements, targets) -> float:
        y = np.asarray(targets, dtype=np.float64)
        z, _ = self.forward_batch(statements)
        return float(np.mean(np.logaddexp(0.0, z[:, 0]) - y * z[:, 0]))

    def explain(self, statements) -> list[dict]:
        probs = self.predict_proba(statements)
        weights = self.attention_weights(statements)
        return [
            {"text": s.text, "tokens": self._truncated_tokens(s), "weights": w, "probability": float(p),
             "group": "citation needed" if p >= THRESHOLD else "no citation needed"}
            for s, p, w in zip(statements, probs, weights)
        ]


class ReasonModel(_EncoderModel):
    kind = "reason"
    n_out = len(REASONS)

    def __init__(self, *args, class_weights=None, **kw):
        super().__init__(*args, **kw)
        self.class_weights = np.ones(self.n_out) if class_weights is None else np.asarray(class_weights, dtype=np.float64)

    def predict_proba(self, statements, batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(statements), batch_size):
            logits, _ = self.forward_batch(statements[i : i + batch_size])
            out.append(_masked_softmax(logits, np.ones(logits.shape, dtype=bool)))
        return np.concatenate(out) if out else np.zeros((0, self.n_out))

    def _weighted_ce(self, logits, y):
        probs = _masked_softmax(logits, np.ones(logits.shape, dtype=bool))
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        w = self.class_weights[y]
        loss = float(np.mean(-w * logp[np.arange(len(y)), y]))
        return loss, probs, w

    def loss_and_grads(self, statements, targets) -> tuple[float, dict]:
        """Class-weighted softmax cross-entropy, averaged over the batch."""
        y = np.asarray(targets, dtype=np.int64)
        logits, cache = self.forward_batch(statements)
        loss, probs, w = self._weighted_ce(logits, y)
        d = probs.copy()
        d[np.arange(len(y)), y] -= 1.0
        dlogits = d * (w / len(y))[:, None]
        return loss, self.backward(dlogits, cache)

    def loss(self, statements, targets) -> float:
        y = np.asarray(targets, dtype=np.int64)
        logits, _ = self.forward_batch(statements)
        return self._weighted_ce(logits, y)[0]

    def explain(self, statements) -> list[dict]:
        probs = self.predict_proba(statements)
        weights = self.attention_weights(statements)
        out = []
        for s, p, w in zip(statements, probs, weights):
            k = int(np.argmax(p))
            out.append({"text": s.text, "tokens": self._truncated_tokens(s), "weights": w,
                        "probability": float(p[k]), "group": REASONS[k]})
        return out


# --------------------------------------------------------------------------
# public operations


def forward_need(model: NeedModel, statement) -> float:
    return float(model.predict_proba([statement])[0])


def predict_with_attention(model: _EncoderModel, statement) -> tuple[float, np.ndarray]:
    """Probability (positive class, or top reason) and per-token attention weights."""
    if not model.uses_attention:
        raise UnsupportedVariantError(f"{model.variant} has no attention layer")
    ex = model.explain([statement])[0]
    return ex["probability"], ex["weights"]


def _need_targets(instances: Sequence[LabeledInstance]) -> np.ndarray:
    return np.array([1 if inst.label == "positive" else 0 for inst in instances])


def _reason_targets(instances: Sequence[ReasonInstance]) -> np.ndarray:
    return np.array([REASONS.index(inst.reason) for inst in instances])


def evaluate(model, instances) -> EvaluationReport:
    """P/R/F1 per class and macro average; need models threshold at 0.5."""
    if not instances:
        raise ValueError("cannot evaluate on an empty instance list")
    statements = [inst.statement for inst in instances]
    if isinstance(model, ReasonModel):
        y = _reason_targets(instances)
        pred = model.predict_proba(statements).argmax(axis=1)
        return precision_recall_f1(confusion_matrix(y, pred, len(REASONS)), REASONS)
    y = _need_targets(instances)
    pred = (model.predict_proba(statements) >= THRESHOLD).astype(int)
    return precision_recall_f1(confusion_matrix(y, pred, 2), NEED_LABELS)


def _fit(model, train_statements, train_targets, cfg: TrainConfig, eval_sets: dict, rng) -> list[dict]:
    state = AdamState(lr=cfg.learning_rate)
    slots = model.slots()
    for s in slots:
        s.zero_grad()
    n = len(train_statements)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = model.loss_and_grads([train_statements[i] for i in idx], train_targets[idx])
            model.accumulate(grads)
            adam_step(state, slots)
        row = {"epoch": epoch, "train_loss": _batched_loss(model, train_statements, train_targets)}
        for name, insts in eval_sets.items():
            if insts:
                rep = evaluate(model, insts)
                row[f"{name}_accuracy"] = rep.accuracy
                row[f"{name}_f1"] = rep.macro_f1
        log.info("epoch %d: %s", epoch, ", ".join(f"{k}={v:.4f}" for k, v in row.items() if k != "epoch"))
        history.append(row)
    return history


def _batched_loss(model, statements, targets, batch: int = 500) -> float:
    total = 0.0
    for i in range(0, len(statements), batch):
        chunk = statements[i : i + batch]
        total += model.loss(chunk, targets[i : i + batch]) * len(chunk)
    return total / max(len(statements), 1)


def _vocab_for(train, everything, pretrained):
    vocab = enc.Vocabulary.build(inst.statement.tokens for inst in train)
    if pretrained:
        for tok in sorted({t for inst in everything for t in inst.statement.tokens if t in pretrained}):
            vocab.add(tok)
    return vocab


def train_need(corpus: Sequence[LabeledInstance], cfg: TrainConfig, variant: str,
               pretrained: dict | None = None) -> tuple[NeedModel, list[dict]]:
    """Mini-batch Adam on mean binary cross-entropy; see :class:`TrainConfig`.

    ``history`` has one row per epoch with the loss over the whole training
    split and accuracy / macro-F1 on the held-out part(s).
    """
    if not corpus:
        raise ValueError("empty corpus")
    labels = {inst.label for inst in corpus}
    if labels != {"positive", "negative"}:
        raise ValueError(f"corpus needs both labels, found {sorted(labels)}")
    if variant in CLI_VARIANTS:
        variant = CLI_VARIANTS[variant]
    parts = split_instances(list(corpus), cfg.split, cfg.seed)
    train = parts["train"]
    vocab = _vocab_for(train, corpus, pretrained)
    sections = None
    if variant.endswith("S"):
        sections = enc.SectionEmbeddings.build(
            ((i.statement.section_heading, i.statement.is_lead) for i in train), 1, make_rng(0)).index
    model = NeedModel(variant, vocab, sections, cfg.embed_dim, cfg.hidden_dim, cfg.max_len)
    model.init_params(make_rng(cfg.seed + 1), pretrained, cfg.freeze_pretrained)
    model.config = asdict(cfg)
    evals = {k: v for k, v in parts.items() if k != "train"}
    history = _fit(model, [i.statement for i in train], _need_targets(train), cfg, evals, make_rng(cfg.seed + 2))
    return model, history


def reason_class_weights(instances: Sequence[ReasonInstance]) -> np.ndarray:
    """weight_c = N / (C * N_c) over the C classes present; absent classes get 0."""
    counts = Counter(inst.reason for inst in instances)
    missing = [r for r in REASONS if counts[r] == 0]
    if missing:
        log.warning("reason classes absent from training data: %s", ", ".join(missing))
    n = sum(counts.values())
    present = len(REASONS) - len(missing)
    return np.array([n / (present * counts[r]) if counts[r] else 0.0 for r in REASONS])


def reason_model_from(pretrained: NeedModel, train: Sequence[ReasonInstance], cfg: TrainConfig,
                      reinit_encoder: bool = False) -> ReasonModel:
    """Untrained reason model whose encoder is copied from ``pretrained``.

    Tokens and sections unseen by the pretrained model are appended to its
    vocabulary / section map with fresh rows.  ``reinit_encoder`` keeps the
    same structure but leaves freshly drawn encoder weights in place (the
    no-pre-training baseline); the head is initialized identically either way.
    """
    if pretrained.variant != "RNNa_wS":
        raise UnsupportedVariantError(f"reason fine-tuning starts from RNNa_wS, got {pretrained.variant}")
    if (cfg.embed_dim, cfg.hidden_dim) != (pretrained.embed_dim, pretrained.hidden_dim):
        raise ValueError(
            f"config dims (embed={cfg.embed_dim}, hidden={cfg.hidden_dim}) do not match checkpoint "
            f"(embed={pretrained.embed_dim}, hidden={pretrained.hidden_dim})")
    vocab = enc.Vocabulary(pretrained.vocab.itos[2:])
    for tok in enc.Vocabulary.build(inst.statement.tokens for inst in train).itos[2:]:
        vocab.add(tok)
    sections = dict(pretrained.section_index)
    for key in sorted({enc.SectionEmbeddings.key(i.statement.section_heading, i.statement.is_lead) for i in train}):
        sections.setdefault(key, len(sections))

    model = ReasonModel("RNNa_wS", vocab, sections, pretrained.embed_dim, pretrained.hidden_dim,
                        pretrained.max_len, class_weights=reason_class_weights(train))
    model.init_params(make_rng(cfg.seed + 1), head_rng=make_rng(cfg.seed + 3))
    if not reinit_encoder:
        for name, value in pretrained.params.items():
            if name.startswith("dense."):
                continue
            if name in ("word_emb", "sec_emb"):
                model.params[name][: len(value)] = value
            else:
                model.params[name][...] = value
        model.frozen_rows = pretrained.frozen_rows.copy()
        model._slots = None
    model.config = asdict(cfg)
    return model


def fine_tune_reason(pretrained: NeedModel, reasons: Sequence[ReasonInstance], cfg: TrainConfig,
                     reinit_encoder: bool = False) -> tuple[ReasonModel, list[dict]]:
    """Replace the need model's dense layer with an 8-way softmax head and
    train everything on the reason corpus with class-weighted cross-entropy."""
    if not reasons:
        raise ValueError("empty reason corpus")
    parts = split_instances(list(reasons), cfg.split, cfg.seed)
    train = parts["train"]
    model = reason_model_from(pretrained, train, cfg, reinit_encoder)
    evals = {k: v for k, v in parts.items() if k != "train"}
    history = _fit(model, [i.statement for i in train], _reason_targets(train), cfg, evals, make_rng(cfg.seed + 2))
    return model, history


# --------------------------------------------------------------------------
# checkpoints
#
# layout: MAGIC | u32 header length | header JSON
#         | per tensor: u16 name length, name, u8 ndim, u64 dims..., float64 LE data
#         | u32 meta length | meta JSON | sha256 of everything before


def _tensor_bytes(name: str, arr: np.ndarray) -> bytes:
    b = name.encode("utf-8")
    out = struct.pack("<H", len(b)) + b + struct.pack("<B", arr.ndim)
    out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return out + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def checkpoint_bytes(model: _EncoderModel) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "variant": model.variant,
        "dims": {"embed_dim": model.embed_dim, "hidden_dim": model.hidden_dim,
                 "max_len": model.max_len, "n_out": model.n_out, "vocab_size": len(model.vocab)},
        "config": model.config,
        "tensors": list(model.params),
    }
    meta = {
        "vocab": model.vocab.itos,
        "sections": model.section_index,
        "frozen_rows": [int(i) for i in model.frozen_rows],
    }
    if isinstance(model, ReasonModel):
        meta["class_weights"] = [float(w) for w in model.class_weights]
    buf = io.BytesIO()
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(MAGIC + struct.pack("<I", len(hb)) + hb)
    for name, arr in model.params.items():
        buf.write(_tensor_bytes(name, arr))
    mb = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    buf.write(struct.pack("<I", len(mb)) + mb)
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: _EncoderModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointIntegrityError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> _EncoderModel:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 + 32:
        raise CheckpointIntegrityError(f"{path}: file too short to be a checkpoint")
    body, digest = data[:-32], data[-32:]
    if not body.startswith(MAGIC):
        raise CheckpointIntegrityError(f"{path}: not a checkpoint file")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch (truncated or corrupted)")
    r = _Reader(body)
    r.take(len(MAGIC))
    (hlen,) = r.unpack("<I")
    header = json.loads(r.take(hlen))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {header.get('format_version')!r} "
                              f"(expected {FORMAT_VERSION})")
    params = {}
    for _ in header["tensors"]:
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    (mlen,) = r.unpack("<I")
    meta = json.loads(r.take(mlen))
    dims = header["dims"]
    cls = {"need": NeedModel, "reason": ReasonModel}.get(header["kind"])
    if cls is None:
        raise CheckpointError(f"unknown model kind {header['kind']!r}")
    kw = {"class_weights": meta["class_weights"]} if cls is ReasonModel else {}
    model = cls(header["variant"], enc.Vocabulary(meta["vocab"][2:]), meta["sections"],
                dims["embed_dim"], dims["hidden_dim"], dims["max_len"], **kw)
    expected = model.param_shapes()
    if set(expected) != set(params):
        raise CheckpointError(f"tensor set mismatch: expected {sorted(expected)}, found {sorted(params)}")
    for name, shape in expected.items():
        if params[name].shape != tuple(shape):
            raise CheckpointError(f"tensor {name} has shape {params[name].shape}, expected {tuple(shape)}")
    model.params = {name: params[name] for name in header["tensors"]}
    model.frozen_rows = np.array(meta["frozen_rows"], dtype=np.int64)
    model.config = header.get("config", {})
    return model


def load_need_checkpoint(path) -> NeedModel:
    model = load_checkpoint(path)
    if not isinstance(model, NeedModel):
        raise CheckpointKindError(f"{path} holds a {model.kind} model, expected a need model")
    return model


def load_reason_checkpoint(path) -> ReasonModel:
    model = load_checkpoint(path)
    if not isinstance(model, ReasonModel):
        raise CheckpointKindError(
            f"{path} holds a {model.kind} model; build a reason model from it with fine_tune_reason")
    return model
