"""Synthetic data with known structure, for tests and smoke runs.

The planted-cue corpus is separable by construction: a sentence is
positive exactly when it contains one of the cue tokens.
"""

from __future__ import annotations

import numpy as np

from .corpus import REASONS, LabeledInstance, ReasonInstance, Statement
from .numerics import make_rng

# inflected report/assertive verbs so the lexicon path exercises the stemmer
DEFAULT_CUES = ("claimed", "said", "reported", "argued", "stated",
                "suggested", "insisted", "believed", "announced", "estimated")
SECTIONS = ("", "History", "Career", "Reception", "Legacy", "Background")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")


def filler_words(n: int, seed: int = 0) -> list[str]:
    """``n`` distinct pronounceable nonsense words (never real cue words)."""
    rng = make_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syl))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def _sentence(rng, fillers, cue=None, min_len=6, max_len=14):
    length = int(rng.integers(min_len, max_len + 1))
    words = [fillers[i] for i in rng.integers(len(fillers), size=length)]
    if cue is not None:
        words[int(rng.integers(length))] = cue
    return words


def _statement(words, section, article_id):
    text = " ".join(words).capitalize() + "."
    return Statement(article_id=article_id, section_heading=section, is_lead=section == "",
                     text=text, tokens=tuple(words) + (".",))


def planted_cue_corpus(n: int = 2000, vocab_size: int = 500, n_cues: int = 10, seed: int = 0,
                       cues=DEFAULT_CUES, dataset: str = "FA") -> tuple[list[LabeledInstance], list[str]]:
    """Balanced binary corpus; positives carry exactly one cue token.

    The vocabulary is ``vocab_size`` word types including the cues and the
    final period; sections are drawn independently of the label.
    """
    if n_cues > len(cues):
        raise ValueError(f"at most {len(cues)} cues available")
    cue_list = list(cues[:n_cues])
    fillers = filler_words(vocab_size - n_cues - 1, seed=seed + 1000)
    rng = make_rng(seed)
    out = []
    for i in range(n):
        positive = i % 2 == 0
        cue = cue_list[int(rng.integers(n_cues))] if positive else None
        words = _sentence(rng, fillers, cue)
        section = SECTIONS[int(rng.integers(len(SECTIONS)))]
        st = _statement(words, section, f"syn{i // 10:04d}")
        if positive:
            st = Statement(**{**st.__dict__, "has_inline_citation": True})
        out.append(LabeledInstance(st, "positive" if positive else "negative", dataset))
    order = rng.permutation(n)
    return [out[i] for i in order], cue_list


def reason_cue_corpus(per_class: int = 400, cues_per_class: int = 3, n_fillers: int = 300,
                      seed: int = 0) -> tuple[list[ReasonInstance], dict[str, list[str]]]:
    """Balanced 8-class corpus; each reason has its own cue words."""
    rng = make_rng(seed)
    fillers = filler_words(n_fillers, seed=seed + 2000)
    vocab = filler_words(n_fillers + len(REASONS) * cues_per_class, seed=seed + 3000)
    pool = [w for w in vocab if w not in set(fillers)]
    cues = {r: [pool[k * cues_per_class + j] + "x" for j in range(cues_per_class)] for k, r in enumerate(REASONS)}
    out = []
    for i in range(per_class * len(REASONS)):
        reason = REASONS[i % len(REASONS)]
        cue = cues[reason][int(rng.integers(cues_per_class))]
        words = _sentence(rng, fillers, cue)
        section = SECTIONS[int(rng.integers(len(SECTIONS)))]
        st = _statement(words, section, f"rsn{i // 10:04d}")
        st = Statement(**{**st.__dict__, "has_inline_citation": True})
        out.append(ReasonInstance(st, reason))
    order = rng.permutation(len(out))
    return [out[i] for i in order], cues


def synthetic_articles(n_articles: int = 12, seed: int = 0, featured: bool = True) -> list[dict]:
    """Article records in the dump format (article_id, title, quality, markup).

    Lead and body paragraphs mix cited paragraphs (every sentence ending
    with ``<ref>``) with fully uncited ones, plus a few ``{{cn}}`` tags.
    """
    rng = make_rng(seed)
    fillers = filler_words(200, seed=seed + 4000)
    records = []
    for a in range(n_articles):
        blocks = []
        for s_idx, heading in enumerate(("", "History", "Reception")):
            if heading:
                blocks.append(f"== {heading} ==")
            for p in range(2):
                cited = (a + s_idx + p) % 2 == 0
                sents = []
                for k in range(3):
                    words = _sentence(rng, fillers, DEFAULT_CUES[int(rng.integers(len(DEFAULT_CUES)))] if cited else None)
                    text = " ".join(words).capitalize() + "."
                    if cited and k != 1:
                        text += f"<ref>Source {a}-{s_idx}-{p}-{k}</ref>"
                    elif not cited and k == 2 and (a + p) % 3 == 0:
                        text += "{{citation needed|date=May 2019}}"
                    sents.append(text)
                blocks.append(" ".join(sents))
        records.append({
            "article_id": f"art{a:03d}",
            "title": f"Article {a}",
            "quality": "featured" if featured else "other",
            "markup": "\n\n".join(blocks) + "\n",
        })
    return records


def separable_points(n: int = 200, seed: int = 0, margin: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """2-d points in the unit square labelled by the side of x + y = 1,
    with a gap of ``margin`` around the boundary."""
    rng = make_rng(seed)
    pts, labels = [], []
    while len(pts) < n:
        p = rng.uniform(0, 1, size=2)
        s = p.sum() - 1.0
        if abs(s) < margin / 2:
            continue
        pts.append(p)
        labels.append(int(s > 0))
    return np.array(pts), np.array(labels)


def blobs(centers, per_cluster: int = 30, spread: float = 0.1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    x = np.concatenate([c + spread * rng.standard_normal((per_cluster, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), per_cluster)
    return x, y
