"""Slow, loop-based reference implementations used only as test oracles.

Each one is written from the textbook definition with plain Python loops and
shares no code with the package.
"""

import itertools
import math


def kwon_trace(samples):
    """Trace of mean(diag(p) - p p^T) and of mean(p p^T) - mean(p) mean(p)^T, via full K x K matrices."""
    T = len(samples)
    K = len(samples[0])
    alea = [[0.0] * K for _ in range(K)]
    second = [[0.0] * K for _ in range(K)]
    mean = [0.0] * K
    for p in samples:
        for a in range(K):
            mean[a] += p[a] / T
            for b in range(K):
                diag = p[a] if a == b else 0.0
                alea[a][b] += (diag - p[a] * p[b]) / T
                second[a][b] += p[a] * p[b] / T
    epi = [[second[a][b] - mean[a] * mean[b] for b in range(K)] for a in range(K)]
    return sum(alea[k][k] for k in range(K)), sum(epi[k][k] for k in range(K))


def kappa(counts):
    K = len(counts)
    n = sum(sum(row) for row in counts)
    agree = sum(counts[k][k] for k in range(K)) / n
    chance = 0.0
    for k in range(K):
        row = sum(counts[k][j] for j in range(K))
        col = sum(counts[i][k] for i in range(K))
        chance += (row / n) * (col / n)
    if chance == 1.0:
        return 1.0 if agree == 1.0 else 0.0
    return (agree - chance) / (1.0 - chance)


def best_two_partition(points):
    """Smallest k=2 within-cluster sum of squares over every split into two non-empty groups."""
    n = len(points)
    best = math.inf
    for mask in range(1, 2 ** (n - 1)):
        groups = ([], [])
        for i in range(n):
            groups[(mask >> i) & 1].append(points[i])
        total = 0.0
        for g in groups:
            if not g:
                continue
            d = len(g[0])
            c = [sum(p[j] for p in g) / len(g) for j in range(d)]
            total += sum(sum((p[j] - c[j]) ** 2 for j in range(d)) for p in g)
        best = min(best, total)
    return best


def aleatoric_mc_expectation(logits, sigma, y, draws, seed):
    """Plain Monte Carlo estimate of E[softmax(z + sigma * eps)_y] with its standard error."""
    import random
    rnd = random.Random(seed)
    vals = []
    for _ in range(draws):
        z = [v + sigma * rnd.gauss(0.0, 1.0) for v in logits]
        m = max(z)
        e = [math.exp(v - m) for v in z]
        vals.append(e[y] / sum(e))
    mean = sum(vals) / draws
    var = sum((v - mean) ** 2 for v in vals) / (draws - 1)
    return mean, math.sqrt(var / draws)


def quantile_linear(values, q):
    s = sorted(values)
    pos = (len(s) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def all_permutations(n):
    return list(itertools.permutations(range(n)))
