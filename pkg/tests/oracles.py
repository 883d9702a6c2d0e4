"""Reference computations kept independent of the code paths they check."""
import math

import numpy as np


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def naive_loss(w, b, X, y, l2):
    """Loss by direct per-sample summation with the textbook sigmoid."""
    n = len(y)
    total = 0.0
    for xi, yi in zip(X, y):
        z = float(np.dot(xi, w)) + b
        p = 1.0 / (1.0 + math.exp(-z))
        total -= yi * math.log(p) + (1 - yi) * math.log(1 - p)
    return total / n + 0.5 * l2 * float(np.dot(w, w))


def central_difference_gradient(f, theta, h=1e-5):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def two_pass_mean_std(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def trapezoid_area(points):
    return sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(points, points[1:]))


def cluster_robust_covariance(X, y, weights, intercept, l2, groups):
    """Sandwich covariance of (weights, intercept) with scores summed per group.

    ``X`` is dense (n, d); the returned matrix is (d+1, d+1) with the
    intercept last.
    """
    n, d = X.shape
    Xt = np.hstack([X, np.ones((n, 1))])
    p = 1.0 / (1.0 + np.exp(-(X @ weights + intercept)))
    H = (Xt * (p * (1 - p))[:, None]).T @ Xt / n
    H[np.arange(d), np.arange(d)] += l2
    members = {}
    for i, g in enumerate(groups):
        members.setdefault(g, []).append(i)
    r = p - y
    G = np.array([(r[idx, None] * Xt[idx]).sum(axis=0) for idx in members.values()])
    meat = G.T @ G / n**2
    Hinv = np.linalg.pinv(H, hermitian=True)
    return Hinv @ meat @ Hinv
