"""Independent reference computations.

Everything here is written straight from the textbook formulas with plain
Python floats and loops, sharing no code with the package under test.
"""

from __future__ import annotations

import itertools
import math


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def gru_scalar(w, h_prev, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh) -> float:
    """1-dim GRU step, one scalar operation at a time."""
    z = sigmoid(Wz * w + Uz * h_prev + bz)
    r = sigmoid(Wr * w + Ur * h_prev + br)
    h_cand = math.tanh(Wh * w + r * (Uh * h_prev + bh))
    return (1.0 - z) * h_prev + z * h_cand


def gru_vector(x, h, p) -> list[float]:
    """Multi-dim GRU step with explicit loops; ``p`` holds nested lists."""
    H = len(h)

    def lin(W, U, b, hh):
        return [sum(W[i][j] * x[j] for j in range(len(x))) + sum(U[i][j] * hh[j] for j in range(H)) + b[i]
                for i in range(H)]

    z = [sigmoid(v) for v in lin(p["W_z"], p["U_z"], p["b_z"], h)]
    r = [sigmoid(v) for v in lin(p["W_r"], p["U_r"], p["b_r"], h)]
    uh = [sum(p["U_h"][i][j] * h[j] for j in range(H)) + p["b_h"][i] for i in range(H)]
    wx = [sum(p["W_h"][i][j] * x[j] for j in range(len(x))) for i in range(H)]
    hc = [math.tanh(wx[i] + r[i] * uh[i]) for i in range(H)]
    return [(1 - z[i]) * h[i] + z[i] * hc[i] for i in range(H)]


def additive_attention(states, W_a, v_a):
    """Scores v.tanh(W h_t), softmax, weighted sum; straight-line loops."""
    scores = []
    for h in states:
        proj = [math.tanh(sum(W_a[i][j] * h[j] for j in range(len(h)))) for i in range(len(W_a))]
        scores.append(sum(v_a[i] * proj[i] for i in range(len(v_a))))
    m = max(scores)
    ex = [math.exp(s - m) for s in scores]
    tot = sum(ex)
    alpha = [e / tot for e in ex]
    ctx = [sum(alpha[t] * states[t][j] for t in range(len(states))) for j in range(len(states[0]))]
    return alpha, ctx


def adam_scalar(x: float, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8) -> float:
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
    return x


def pearson(xs, ys) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return cov / math.sqrt(vx * vy)


def gini(counts) -> float:
    n = sum(counts)
    return 1.0 - sum((c / n) ** 2 for c in counts)


def prf_per_cell(cm):
    """Per-class (precision, recall, f1) by explicit summation over cells."""
    k = len(cm)
    out = []
    for c in range(k):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(k) if r != c)
        fn = sum(cm[c][j] for j in range(k) if j != c)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out.append((p, r, f))
    return out


def best_inertia_exhaustive(points, k) -> float:
    """Exact minimum within-cluster sum of squares by enumerating
    assignments (only feasible for tiny inputs)."""
    n = len(points)
    best = math.inf
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) < k:
            continue
        tot = 0.0
        for c in range(k):
            mem = [points[i] for i in range(n) if assign[i] == c]
            cen = [sum(p[d] for p in mem) / len(mem) for d in range(len(points[0]))]
            tot += sum(sum((p[d] - cen[d]) ** 2 for d in range(len(cen))) for p in mem)
        best = min(best, tot)
    return best


def lloyd_best_of(points, k, restarts=100, seed=0, iters=100) -> float:
    """Plain Lloyd from random distinct starting points, best inertia over
    many restarts (stdlib ``random``, independent of the package RNG)."""
    import random

    rnd = random.Random(seed)
    n, d = len(points), len(points[0])

    def sq(a, b):
        return sum((a[i] - b[i]) ** 2 for i in range(d))

    best = math.inf
    for _ in range(restarts):
        cents = [list(points[i]) for i in rnd.sample(range(n), k)]
        for _ in range(iters):
            assign = [min(range(k), key=lambda c: sq(p, cents[c])) for p in points]
            new = []
            for c in range(k):
                mem = [points[i] for i in range(n) if assign[i] == c]
                new.append([sum(p[j] for p in mem) / len(mem) for j in range(d)] if mem else cents[c])
            if new == cents:
                break
            cents = new
        best = min(best, sum(min(sq(p, c) for c in cents) for p in points))
    return best
