"""Pure-Python reference implementations used as independent test oracles.

Nothing here touches the package's tensor engine: plain loops over lists.
"""
import math


def matmul(a, b):
    m, k, p = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(p)] for i in range(m)]


def softmax(xs):
    top = max(xs)
    es = [math.exp(x - top) for x in xs]
    s = sum(es)
    return [e / s for e in es]


def attention(q, k, v):
    d = len(q[0])
    out, weights = [], []
    for qi in q:
        scores = [sum(qi[c] * kj[c] for c in range(d)) / math.sqrt(d) for kj in k]
        w = softmax(scores)
        weights.append(w)
        out.append([sum(w[j] * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out, weights


def layer_norm(rows, gamma, beta, eps):
    out = []
    for r in rows:
        mu = sum(r) / len(r)
        var = sum((x - mu) ** 2 for x in r) / len(r)
        out.append([(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(r, gamma, beta)])
    return out


def cosine(u, v, eps=1e-8):
    dot = sum(a * b for a, b in zip(u, v))
    nu = max(math.sqrt(sum(a * a for a in u)), eps)
    nv = max(math.sqrt(sum(b * b for b in v)), eps)
    return dot / (nu * nv)


def bce_sum(pred, target, clamp=1e-7):
    total = 0.0
    for p, y in zip(pred, target):
        p = min(max(p, clamp), 1 - clamp)
        total -= y * math.log(p) + (1 - y) * math.log(1 - p)
    return total


def central_difference(f, xs, h):
    """Numerical gradient of scalar f over a flat list of floats."""
    grad = []
    for i in range(len(xs)):
        up = list(xs)
        dn = list(xs)
        up[i] += h
        dn[i] -= h
        grad.append((f(up) - f(dn)) / (2 * h))
    return grad
