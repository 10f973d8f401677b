"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def nnqp_enumerate(G, b):
    """Exact NNQP minimizer by checking every candidate support.

    For strictly convex problems exactly one support satisfies the KKT
    conditions; among feasible candidates we return the lowest objective.
    """
    m = len(b)
    best, best_f = None, np.inf
    for size in range(m + 1):
        for S in itertools.combinations(range(m), size):
            w = np.zeros(m)
            if S:
                S = list(S)
                w[S] = np.linalg.solve(G[np.ix_(S, S)], b[S])
                if np.any(w[S] < 0):
                    continue
            r = G @ w - b
            if np.any(r < -1e-11 * max(1.0, np.abs(b).max())):
                continue
            f = 0.5 * w @ G @ w - b @ w
            if f < best_f:
                best, best_f = w, f
    return best


def random_spd(rng, m, cond=1e3):
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    lam = np.exp(rng.uniform(0, np.log(cond), m))
    G = (Q * lam) @ Q.T
    return 0.5 * (G + G.T)


def point_outside(rng, n, r_min, r_max):
    u = rng.normal(size=n)
    u /= np.linalg.norm(u)
    return u * rng.uniform(r_min, r_max)
