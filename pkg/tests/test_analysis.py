import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from citeneed import analysis as A
from citeneed.corpus import ReasonInstance
from citeneed.synthetic import blobs

from conftest import FIXTURES
from helpers import statement, tiny_model
from oracles import best_inertia_exhaustive, lloyd_best_of, pearson, prf_per_cell


# precision / recall / F1 ----------------------------------------------------

def test_perfect_binary():
    rep = A.precision_recall_f1(A.confusion_matrix([0, 1, 1, 0], [0, 1, 1, 0], 2))
    assert rep.f1.tolist() == [1.0, 1.0] and rep.accuracy == 1.0


def test_all_positive_prediction():
    rep = A.precision_recall_f1(A.confusion_matrix([1, 0, 1, 0], [1, 1, 1, 1], 2), ["neg", "pos"])
    assert rep.precision[1] == 0.5 and rep.recall[1] == 1.0
    assert rep.f1[1] == pytest.approx(2 / 3)
    assert rep.f1[0] == 0.0 and rep.zero_division == ["neg"]


def test_three_class_matches_oracle():
    cm = [[5, 1, 0], [2, 3, 1], [0, 4, 6]]
    rep = A.precision_recall_f1(cm)
    for c, (p, r, f) in enumerate(prf_per_cell(cm)):
        assert (rep.precision[c], rep.recall[c], rep.f1[c]) == pytest.approx((p, r, f), abs=1e-15)
    assert rep.macro_f1 == pytest.approx(sum(x[2] for x in prf_per_cell(cm)) / 3)


@given(st.lists(st.lists(st.integers(0, 20), min_size=4, max_size=4), min_size=4, max_size=4),
       st.permutations(range(4)))
def test_macro_f1_permutation_invariant(cm, perm):
    cm = np.array(cm)
    p = np.array(perm)
    assert A.precision_recall_f1(cm[p][:, p]).macro_f1 == pytest.approx(A.precision_recall_f1(cm).macro_f1, abs=1e-12)


def test_report_rejects_bad_confusion():
    with pytest.raises(ValueError):
        A.precision_recall_f1(np.ones((2, 3)))
    with pytest.raises(ValueError):
        A.precision_recall_f1([[1, -1], [0, 1]])


def test_report_csvs(tmp_path):
    rep = A.precision_recall_f1([[3, 1], [0, 4]], ["negative", "positive"])
    A.write_report_csv(rep, tmp_path / "m.csv")
    A.write_confusion_csv(rep, tmp_path / "c.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "class,precision,recall,f1,support" and lines[-1].startswith("avg.,")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "negative,3,1"


# point-biserial -------------------------------------------------------------

def test_point_biserial_worked_value():
    assert A.point_biserial([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(1 / math.sqrt(3), abs=1e-4)


def test_point_biserial_perfect():
    assert A.point_biserial([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)


@pytest.mark.parametrize("labels,values", [([1, 1, 1], [1, 2, 3]), ([0, 1, 0], [2, 2, 2])])
def test_point_biserial_undefined(labels, values):
    with pytest.raises(A.UndefinedCorrelationError):
        A.point_biserial(labels, values)


def test_point_biserial_rejects_nan():
    with pytest.raises(ValueError):
        A.point_biserial([0, 1], [0.0, float("nan")])


_vals = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=25)


@given(st.data())
def test_point_biserial_equals_pearson_and_is_affine_invariant(data):
    x = data.draw(_vals)
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(x), max_size=len(x)))
    if len(set(y)) < 2 or np.std(x) < 1e-6:
        return
    r = A.point_biserial(y, x)
    assert -1 <= r <= 1
    assert r == pytest.approx(pearson(x, y), abs=1e-9)
    a = data.draw(st.floats(0.1, 10))
    b = data.draw(st.floats(-10, 10))
    assert A.point_biserial(y, [a * v + b for v in x]) == pytest.approx(r, abs=1e-9)
    assert A.point_biserial(y, [-v for v in x]) == pytest.approx(-r, abs=1e-9)


def test_correlate_features_ranking():
    y = np.array([1, 1, 1, 0, 0, 0, 1, 0])
    cue = y.astype(float)
    noise = np.array([0.3, 0.1, 0.9, 0.5, 0.2, 0.8, 0.4, 0.6])
    const = np.ones(8)
    rep = A.correlate_features(y, np.c_[noise, cue, const, cue], ["noise", "cue", "const", "cue2"])
    assert [n for n, _ in rep.top(2)] == ["cue", "cue2"]
    assert rep.entries[0][1] == pytest.approx(1.0)
    assert rep.omitted == ["const"]


def test_correlations_csv(tmp_path):
    rep = A.CorrelationReport([("a", 0.5), ("b", -0.25)])
    A.write_correlations_csv(rep, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "feature,r_pb\na,0.500000\nb,-0.250000\n"


# k-means and elbow ----------------------------------------------------------

def test_kmeans_two_groups():
    pts = [[0, 0], [0, 1], [10, 10], [10, 11]]
    _, assign, inertia = A.kmeans(pts, 2, seed=0)
    assert assign[0] == assign[1] != assign[2] == assign[3]
    assert inertia == pytest.approx(1.0)


def test_kmeans_k_equals_n():
    assert A.kmeans(np.random.default_rng(0).normal(size=(6, 2)), 6)[2] == 0.0


def test_kmeans_single_init_is_one_farthest_point_run():
    pts = [[0.0], [1.0], [10.0], [11.0], [30.0]]
    _, assign, _ = A.kmeans(pts, 2, seed=0, n_init=1)
    # whatever the random first point, the farthest-point second centroid is an extreme
    assert len(set(assign.tolist())) == 2
    more = A.kmeans(pts, 2, seed=0, n_init=5)[2]
    assert more <= A.kmeans(pts, 2, seed=0, n_init=1)[2]


def test_kmeans_k_too_large():
    with pytest.raises(ValueError):
        A.kmeans(np.zeros((3, 2)), 4)


def test_kmeans_tiny_matches_exhaustive():
    pts = np.random.default_rng(3).normal(size=(7, 2))
    assert A.kmeans(pts, 3, seed=1)[2] == pytest.approx(best_inertia_exhaustive(pts.tolist(), 3), rel=0.05)


@pytest.mark.parametrize("fixture_seed", range(5))
def test_kmeans_near_best_of_many_restarts(fixture_seed):
    pts = np.random.default_rng(fixture_seed).normal(size=(50, 3))
    ours = A.kmeans(pts, 4, seed=0)[2]
    ref = lloyd_best_of(pts.tolist(), 4, restarts=100, seed=0)
    assert ours <= ref * 1.05


@given(st.integers(0, 10_000))
def test_kmeans_inertia_history_non_increasing(seed):
    pts = np.random.default_rng(seed).normal(size=(25, 2))
    *_, hist = A.kmeans(pts, 3, seed=seed, return_history=True)
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_elbow_examples():
    assert A.elbow_select([100, 20, 18, 17]) == (2, True)
    assert A.elbow_select([40, 30, 20, 10]) == (2, False)
    with pytest.raises(ValueError):
        A.elbow_select([3, 2])


def test_three_blobs_give_three_clusters():
    x, _ = blobs([[0, 0], [5, 0], [0, 5]], per_cluster=20, spread=0.3, seed=1)
    rep = A.cluster_sweep(x, max_k=8, seed=0)
    assert rep.k == 3 and rep.clear_elbow and len(set(rep.assignments.tolist())) == 3


def test_average_vectors():
    vec = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 3.0])}
    m, kept, dropped = A.average_vectors([["a", "b"], ["zzz"], ["b", "oov"]], vec)
    assert m.tolist() == [[0.5, 1.5], [0.0, 3.0]] and kept == [0, 2] and dropped == 1


# reason distribution --------------------------------------------------------

def _ri(section, reason, topic=None, lead=False):
    return ReasonInstance(statement("Some statement text here.", section, lead), reason, topic)


def test_reason_distribution_hand_tally():
    data = [_ri("History", "historical"), _ri("History", "historical"), _ri("Early life", "historical"),
            _ri("", "historical", lead=True), _ri("Reception", "quotation"), _ri("History", "quotation"),
            _ri("Reception", "quotation")]
    rows = A.reason_distribution(data, top_n=2)
    assert rows == [
        {"reason": "historical", "rank": 1, "group": "history", "count": 2},
        {"reason": "historical", "rank": 2, "group": "early life", "count": 1},
        {"reason": "quotation", "rank": 1, "group": "reception", "count": 2},
        {"reason": "quotation", "rank": 2, "group": "history", "count": 1},
    ]
    assert A.reason_counts(data) == [("historical", 4), ("quotation", 3)]


def test_reason_distribution_by_topic():
    rows = A.reason_distribution([_ri("X", "life", "Biology"), _ri("X", "life")], group_by="topic")
    assert {r["group"] for r in rows} == {"biology", "unknown"}
    with pytest.raises(ValueError):
        A.reason_distribution([], group_by="color")


# attention report -----------------------------------------------------------

GOLDEN_EXPLANATIONS = [
    {"text": "He claimed it.", "tokens": ["he", "claimed", "it", "."], "weights": [0.1, 0.7, 0.15, 0.05],
     "group": "positive", "probability": 0.93},
    {"text": "Rivers <flow> & bend.", "tokens": ["rivers", "<flow>", "&", "bend", "."],
     "weights": [0.2, 0.2, 0.2, 0.2, 0.2], "group": "negative", "probability": 0.12},
]


def test_attention_report_matches_golden(tmp_path):
    html, txt = A.write_attention_report(GOLDEN_EXPLANATIONS, tmp_path / "report.html")
    assert html.read_text() == (FIXTURES / "attention_golden.html").read_text()
    assert txt.read_text() == (FIXTURES / "attention_golden.txt").read_text()


def test_attention_report_from_model(tmp_path):
    m = tiny_model("RNNa_wS")
    s = statement("The mayor claimed the bridge cost millions.")
    html, txt = A.render_attention_report(m, [s], tmp_path / "r.html")
    body = txt.read_text().splitlines()
    weights = [float(p.rsplit(":", 1)[1]) for p in body[2].split()]
    assert len(weights) == len(s.tokens) and sum(weights) == pytest.approx(1.0, abs=1e-3)
    assert html.read_text().count('class="stmt"') == 1


def test_attention_report_rejects_vanilla(tmp_path):
    with pytest.raises(ValueError):
        A.render_attention_report(tiny_model("RNN_wS"), [statement("Any text here.")], tmp_path / "r.html")


def test_attention_report_length_mismatch(tmp_path):
    bad = [{**GOLDEN_EXPLANATIONS[0], "weights": [1.0]}]
    with pytest.raises(ValueError):
        A.write_attention_report(bad, tmp_path / "r.html")
