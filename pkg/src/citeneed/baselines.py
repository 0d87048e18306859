"""Feature-based baselines: verb lexicons, coarse POS style features,
averaged word vectors and a from-scratch random forest.

Stemmer rules (``lemma_candidates``), tried in order, first lexicon hit wins:

* ``-ies`` / ``-ied`` -> ``-y``                 (studies -> study)
* ``-ing``: undoubled base, base + ``e``, base  (stopping -> stop, making -> make)
* ``-ed``:  undoubled base, base, base + ``e``, drop ``d``
                                                (stopped -> stop, claimed -> claim,
                                                 believed -> believe, agreed -> agree)
* ``-es``:  base after s/x/z/ch/sh/o, else drop ``s`` then base
* ``-s`` (not ``-ss``): drop ``s``

A doubled final consonant is undoubled unless it is l, s or z.  Words
shorter than four letters are never stemmed.  Without a lexicon,
:func:`stem` returns the first candidate.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import EvaluationReport, confusion_matrix, precision_recall_f1
from .numerics import make_rng

log = logging.getLogger(__name__)

LEXICON_CATEGORIES = ("factive", "assertive", "entailment", "report")
POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PRT", "PUNCT", "X")


# --------------------------------------------------------------------------
# lexicons


@dataclass
class VerbLexicon:
    category: str
    lemmas: frozenset

    def __post_init__(self):
        if self.category not in LEXICON_CATEGORIES:
            raise ValueError(f"unknown lexicon category {self.category!r}")
        self.lemmas = frozenset(l.lower() for l in self.lemmas)


def parse_lexicon(text: str) -> frozenset:
    """One lemma per line; ``#`` starts a comment."""
    out = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            out.add(line)
    return frozenset(out)


def load_lexicon(path, category: str | None = None) -> VerbLexicon:
    path = Path(path)
    lemmas = parse_lexicon(path.read_text(encoding="utf-8"))
    if not lemmas:
        raise ValueError(f"{path}: lexicon is empty")
    return VerbLexicon(category or path.stem, lemmas)


def load_lexicons(directory=None) -> list[VerbLexicon]:
    """Lexicons from ``<category>.txt`` files in ``directory`` (default:
    the bundled reconstruction).  Missing categories are skipped."""
    out = []
    for cat in LEXICON_CATEGORIES:
        if directory is None:
            res = resources.files("citeneed") / "resources" / "lexicons" / f"{cat}.txt"
            text = res.read_text(encoding="utf-8")
            out.append(VerbLexicon(cat, parse_lexicon(text)))
        else:
            p = Path(directory) / f"{cat}.txt"
            if p.exists():
                out.append(load_lexicon(p, cat))
    return out


# --------------------------------------------------------------------------
# stemming and POS tagging


def _undouble(base: str) -> str | None:
    if len(base) >= 3 and base[-1] == base[-2] and base[-1] not in "aeiouylsz":
        return base[:-1]
    return None


def lemma_candidates(word: str) -> list[str]:
    w = word.lower()
    if len(w) < 4 or not w.isalpha():
        return [w]
    cands: list[str] = []
    if w.endswith(("ies", "ied")) and len(w) > 4:
        cands.append(w[:-3] + "y")
    elif w.endswith("ing") and len(w) > 5:
        base = w[:-3]
        cands += [_undouble(base), base + "e", base]
    elif w.endswith("ed") and len(w) > 4:
        base = w[:-2]
        cands += [_undouble(base), base, base + "e", w[:-1]]
    elif w.endswith("es") and len(w) > 4:
        base = w[:-2]
        if base.endswith(("s", "x", "z", "ch", "sh", "o")):
            cands.append(base)
        else:
            cands += [w[:-1], base]
    elif w.endswith("s") and not w.endswith("ss"):
        cands.append(w[:-1])
    cands = [c for c in cands if c]
    seen, out = set(), []
    for c in cands + [w]:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def stem(word: str, lexicon: Iterable[str] | None = None) -> str:
    cands = lemma_candidates(word)
    if lexicon is not None:
        for c in cands:
            if c in lexicon:
                return c
    return cands[0]


_CLOSED = {
    "DET": "the a an this that these those each every some any no all both either neither another its his her their our my your whose which what",
    "PRON": "i you he she it we they me him us them myself himself herself itself ourselves themselves yourself "
            "who whom mine yours hers ours theirs someone anyone everyone nobody something anything everything nothing",
    "ADP": "of in on at by for with from to into onto upon about above below under over between among through during "
           "before after against without within across along around behind beyond near since until toward towards via per despite",
    "CONJ": "and or but nor yet because although though while whereas if unless whether than",
    "PRT": "not n't up off out 's",
    "ADV": "very also just only even still already often never always sometimes then there here now however "
           "therefore thus soon later again too quite rather almost",
    "VERB": "is are was were be been being am has have had having do does did will would shall should can could may "
            "might must said says say made make became become went go get got take took",
    "NUM": "one two three four five six seven eight nine ten eleven twelve twenty thirty forty fifty hundred thousand "
           "million billion dozen",
}
_LEXICON_TAGS = {w: tag for tag, words in _CLOSED.items() for w in words.split()}
_SUFFIX_RULES = (
    ("ly", "ADV"),
    ("ing", "VERB"), ("ed", "VERB"), ("ize", "VERB"), ("ise", "VERB"), ("ify", "VERB"), ("ate", "VERB"),
    ("tion", "NOUN"), ("sion", "NOUN"), ("ment", "NOUN"), ("ness", "NOUN"), ("ity", "NOUN"), ("ism", "NOUN"),
    ("ist", "NOUN"), ("ship", "NOUN"), ("ance", "NOUN"), ("ence", "NOUN"), ("er", "NOUN"), ("or", "NOUN"),
    ("ous", "ADJ"), ("ful", "ADJ"), ("ive", "ADJ"), ("able", "ADJ"), ("ible", "ADJ"), ("al", "ADJ"),
    ("ic", "ADJ"), ("less", "ADJ"), ("ary", "ADJ"), ("ish", "ADJ"),
)
_NUMBER_CHARS = set("0123456789.,%")


def _tag(tok: str) -> str:
    t = tok.lower()
    if t in _LEXICON_TAGS:
        return _LEXICON_TAGS[t]
    if not any(ch.isalnum() for ch in t):
        return "PUNCT"
    if t[0].isdigit() and set(t) <= _NUMBER_CHARS:
        return "NUM"
    if t.isalpha() and len(t) > 3:
        for suffix, tag in _SUFFIX_RULES:
            if t.endswith(suffix) and len(t) - len(suffix) >= 2:
                return tag
    return "X"


def pos_tag(tokens: Sequence[str]) -> list[str]:
    """Closed-class lexicon first, then digit/punctuation checks, then the
    first matching suffix rule; anything else is ``X``."""
    return [_tag(t) for t in tokens]


# --------------------------------------------------------------------------
# features


@dataclass
class FeatureConfig:
    dictionary: bool = True
    pos: bool = True
    section: bool = True
    word_vectors: bool = False


@dataclass
class FeatureExtractor:
    lexicons: Sequence[VerbLexicon]
    embeddings: dict | None = None
    config: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        self.lexicons = sorted(self.lexicons, key=lambda l: LEXICON_CATEGORIES.index(l.category))
        self.terms = sorted(set().union(*(l.lemmas for l in self.lexicons))) if self.lexicons else []
        self._all_lemmas = frozenset(self.terms)
        self._term_index = {t: i for i, t in enumerate(self.terms)}
        if self.config.word_vectors and not self.embeddings:
            raise ValueError("word-vector features need embeddings")
        self.dim = len(next(iter(self.embeddings.values()))) if self.embeddings else 0

    @property
    def names(self) -> list[str]:
        names = []
        if self.config.dictionary:
            names += [f"term:{t}" for t in self.terms]
            names += [f"lex:{l.category}" for l in self.lexicons]
        if self.config.pos:
            names += [f"pos:{t}" for t in POS_TAGS]
        if self.config.section:
            names.append("section")
        if self.config.word_vectors:
            names += [f"wv:{i}" for i in range(self.dim)]
        return names

    def lemmas(self, tokens: Sequence[str]) -> list[str | None]:
        """Lexicon lemma matched by each token, or None."""
        out = []
        for tok in tokens:
            hit = None
            if tok.isalpha():
                s = stem(tok, self._all_lemmas)
                if s in self._all_lemmas:
                    hit = s
            out.append(hit)
        return out

    def extract(self, statement) -> np.ndarray:
        tokens = list(statement.tokens)
        parts = []
        if self.config.dictionary:
            term_counts = np.zeros(len(self.terms))
            cat_counts = np.zeros(len(self.lexicons))
            for lemma in self.lemmas(tokens):
                if lemma is None:
                    continue
                term_counts[self._term_index[lemma]] += 1
                for j, lex in enumerate(self.lexicons):
                    if lemma in lex.lemmas:
                        cat_counts[j] += 1
            parts += [term_counts, cat_counts]
        if self.config.pos:
            tags = pos_tag(tokens)
            freq = np.array([tags.count(t) for t in POS_TAGS], dtype=float)
            parts.append(freq / max(len(tokens), 1))
        if self.config.section:
            parts.append(np.array([1.0 if statement.is_lead else 0.0]))
        if self.config.word_vectors:
            vs = [self.embeddings[t] for t in tokens if t in self.embeddings]
            parts.append(np.mean(vs, axis=0) if vs else np.zeros(self.dim))
        return np.concatenate(parts) if parts else np.zeros(0)

    def matrix(self, statements) -> np.ndarray:
        return np.array([self.extract(s) for s in statements]).reshape(len(statements), len(self.names))


def extract_features(statement, lexicons, embeddings=None, config: FeatureConfig | None = None) -> dict[str, float]:
    """Named feature values for one statement."""
    fx = FeatureExtractor(lexicons, embeddings, config or FeatureConfig(word_vectors=bool(embeddings)))
    return dict(zip(fx.names, fx.extract(statement)))


def write_features_csv(names: Sequence[str], matrix, labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["label"])
        for row, y in zip(np.asarray(matrix), labels):
            w.writerow([repr(float(v)) for v in row] + [y])


# --------------------------------------------------------------------------
# trees


def gini(class_counts) -> float:
    c = np.asarray(class_counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("gini of an empty node")
    p = c / total
    return float(1.0 - (p * p).sum())


@dataclass
class DecisionTree:
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[np.ndarray] = field(default_factory=list)

    def add_leaf(self, dist) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.asarray(dist, dtype=np.float64))
        return len(self.feature) - 1

    def leaf(self, x) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]

    def predict_proba(self, X) -> np.ndarray:
        return np.array([self.leaf(x) for x in np.asarray(X, dtype=np.float64)])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


def _best_split(X, y, idx, features, n_classes):
    """Highest Gini gain over candidate features and midpoint thresholds.

    Candidates are scanned in ascending feature index, then ascending
    threshold; only a strictly larger gain replaces the incumbent.
    """
    counts = np.bincount(y[idx], minlength=n_classes).astype(float)
    n = len(idx)
    parent = 1.0 - ((counts / n) ** 2).sum()
    best = (0.0, None, None)
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        if v[0] == v[-1]:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[idx][order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        nl = np.arange(1, n, dtype=float)
        valid = v[1:] > v[:-1]
        right = counts - left
        nr = n - nl
        gl = 1.0 - ((left / nl[:, None]) ** 2).sum(1)
        gr = 1.0 - ((right / nr[:, None]) ** 2).sum(1)
        gain = parent - (nl * gl + nr * gr) / n
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            best = (float(gain[k]), int(f), float((v[k] + v[k + 1]) / 2.0))
    return best


def build_tree(X, y, n_classes: int, max_depth: int, max_features: int, rng) -> DecisionTree:
    tree = DecisionTree()
    d = X.shape[1]

    def grow(idx, depth):
        counts = np.bincount(y[idx], minlength=n_classes).astype(float)
        dist = counts / counts.sum()
        if depth >= max_depth or counts.max() == len(idx):
            return tree.add_leaf(dist)
        features = np.sort(rng.choice(d, size=min(max_features, d), replace=False))
        gain, f, thr = _best_split(X, y, idx, features, n_classes)
        if f is None:
            return tree.add_leaf(dist)
        node = tree.add_leaf(dist)
        mask = X[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = grow(idx[mask], depth + 1)
        tree.right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return tree


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    max_features: int | None = None  # None -> floor(sqrt(d)), at least 1


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_classes: int
    params: ForestParams
    seed: int

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def _tree_rng(seed: int, t: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(t)])))


def train_forest(features, labels, params: ForestParams | None = None, seed: int = 0, workers: int = 1) -> RandomForest:
    """Bagged Gini trees; tree ``t`` draws its bootstrap sample and feature
    subsets from a generator seeded with ``(seed, t)``."""
    params = params or ForestParams()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("random forest needs at least two classes")
    n_classes = int(y.max()) + 1
    d = X.shape[1]
    m = params.max_features or max(1, int(math.isqrt(d)))
    if np.all(X == X[0]):
        log.warning("all feature vectors are identical; every tree is a single majority leaf")

    def one(t):
        rng = _tree_rng(seed, t)
        boot = rng.integers(len(y), size=len(y))
        return build_tree(X[boot], y[boot], n_classes, params.max_depth, m, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trees = list(pool.map(one, range(params.n_trees)))
    else:
        trees = [one(t) for t in range(params.n_trees)]
    return RandomForest(trees, n_classes, params, seed)


def predict_forest(forest: RandomForest, feature_vector) -> np.ndarray:
    return forest.predict_proba(np.asarray(feature_vector, dtype=np.float64)[None, :])[0]


DEFAULT_GRID = {"n_trees": (50, 100, 200), "max_depth": (4, 8, 16)}


@dataclass
class TunedForest:
    forest: RandomForest
    params: ForestParams
    test_scores: dict
    validation: EvaluationReport


def tune_forest(features, labels, grid=None, seed: int = 0, label_names=None, workers: int = 1) -> TunedForest:
    """50/30/20 train/test/validation protocol.

    Every grid point is fit on train and scored (macro-F1) on test; the
    best one (first in grid order on ties) is refit on train + test and
    reported on validation.
    """
    grid = grid or DEFAULT_GRID
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = len(y)
    order = make_rng(seed).permutation(n)
    a, b = n // 2, n // 2 + (3 * n) // 10
    tr, te, va = order[:a], order[a:b], order[b:]
    n_classes = int(y.max()) + 1
    scores = {}
    best = None
    for n_trees in grid["n_trees"]:
        for depth in grid["max_depth"]:
            p = ForestParams(n_trees=n_trees, max_depth=depth)
            f = train_forest(X[tr], y[tr], p, seed, workers)
            rep = precision_recall_f1(confusion_matrix(y[te], f.predict(X[te]), n_classes), label_names)
            scores[(n_trees, depth)] = rep.macro_f1
            if best is None or rep.macro_f1 > scores[best]:
                best = (n_trees, depth)
    params = ForestParams(n_trees=best[0], max_depth=best[1])
    fit_idx = np.concatenate([tr, te])
    final = train_forest(X[fit_idx], y[fit_idx], params, seed, workers)
    val = precision_recall_f1(confusion_matrix(y[va], final.predict(X[va]), n_classes), label_names)
    return TunedForest(final, params, scores, val)
