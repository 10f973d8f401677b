"""Nonnegative quadratic programs ``min 1/2 w'Gw - b'w  s.t.  w >= 0``.

``solve`` runs projected gradient descent with a two-point (Barzilai-Borwein)
step, an Armijo safeguard that keeps the objective monotone, and periodic
active-set polishing: the equality-constrained problem on the current support
is solved by Cholesky and accepted along the feasible segment. ``solve_many``
handles many right-hand sides that share ``G`` by principal pivoting on a
single inverse, falling back to ``solve`` for any column it cannot certify.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised by callers that require a converged solution."""

    def __init__(self, message: str, solution: "NnqpSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class KKTReport:
    min_weight: float
    min_stationarity: float
    complementarity: float


@dataclass
class NnqpSolution:
    w: np.ndarray
    objective: float
    kkt: KKTReport
    iterations: int
    converged: bool
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    history: list = field(default_factory=list, repr=False)
    polishes: int = 0

    def diagnostics(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "polishes": int(self.polishes),
            "objective": float(self.objective),
            "min_weight": float(self.kkt.min_weight),
            "min_stationarity": float(self.kkt.min_stationarity),
            "complementarity": float(self.kkt.complementarity),
            "degenerate_cells": int(self.degenerate.size),
        }


def _matrix(G):
    return G.entries if hasattr(G, "entries") else np.asarray(G, dtype=float)


def objective(G, b, w) -> float:
    G = _matrix(G)
    return float(0.5 * w @ (G @ w) - b @ w)


def kkt_report(G, b, w) -> KKTReport:
    """``(min_i w_i, min_i (Gw - b)_i, |w'(Gw - b)|)``."""
    G = _matrix(G)
    w = np.asarray(w, dtype=float)
    r = G @ w - b
    return KKTReport(float(w.min()), float(r.min()), float(abs(w @ r)))


def _scale(b) -> float:
    return max(1.0, float(np.max(np.abs(b))))


def kkt_ok(rep: KKTReport, b, w, tol_kkt: float) -> bool:
    scale = _scale(b)
    return (
        rep.min_weight >= 0.0
        and rep.min_stationarity >= -tol_kkt * scale
        and rep.complementarity <= tol_kkt * scale * float(np.sum(w))
    )


def _degenerate(r, w, b, tol_kkt):
    scale = _scale(b)
    return np.flatnonzero((np.abs(r) <= tol_kkt * scale) & (w <= tol_kkt * np.sum(w)))


def _check_problem(G, b):
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"G must be square, got shape {G.shape}")
    if b.shape != (G.shape[0],):
        raise ValueError(f"b must have length {G.shape[0]}, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("b must be finite")


def _face_solve(G, b, S, factor):
    if factor is not None and S.size == G.shape[0]:
        return cho_solve(factor, b)
    sub = G[np.ix_(S, S)]
    return cho_solve(cho_factor(sub, check_finite=False), b[S], check_finite=False)


def solve(
    G,
    b,
    tol_kkt: float = 1e-8,
    max_iter: int | None = None,
    w0=None,
    patience: int = 5,
) -> NnqpSolution:
    """Minimize ``1/2 w'Gw - b'w`` over ``w >= 0`` for strictly positive definite G.

    Parameters
    ----------
    G : array_like (m, m) or GramMatrix
        If a GramMatrix is given, its cached Cholesky factor is reused when
        the polish step works on the full index set.
    b : array_like (m,)
    tol_kkt : float
        Relative KKT tolerance; see ``kkt_ok``.
    max_iter : int, optional
        Defaults to ``50 * m``.
    w0 : array_like, optional
        Feasible starting point (clipped to the cone); zero by default.
    patience : int
        Iterations with an unchanged support before a polish is attempted.

    Returns
    -------
    NnqpSolution
        ``converged`` is False if ``max_iter`` ran out; callers decide.
    """
    factor = getattr(G, "factor", None) if hasattr(G, "entries") else None
    G = _matrix(G)
    b = np.asarray(b, dtype=float)
    _check_problem(G, b)
    m = b.size
    if max_iter is None:
        max_iter = 50 * m

    w = np.zeros(m) if w0 is None else np.maximum(np.asarray(w0, dtype=float), 0.0)
    g = G @ w - b
    f = 0.5 * w @ (g - b)
    history = [float(f)]
    # Gershgorin bound on the largest eigenvalue gives a safe first step
    alpha = 1.0 / max(float(np.max(np.sum(np.abs(G), axis=1))), 1e-300)
    support = w > 0
    stable = 0
    since_polish = 0
    polishes = 0
    converged = False
    it = 0

    while it < max_iter:
        rep = KKTReport(float(w.min()), float(g.min()), float(abs(w @ g)))
        if kkt_ok(rep, b, w, tol_kkt):
            converged = True
            break
        it += 1

        stalled = False
        for _ in range(60):
            w_new = np.maximum(w - alpha * g, 0.0)
            d = w_new - w
            gd = g @ d
            if not np.any(d) or gd >= 0:
                stalled = True
                break
            Gd = G @ d
            f_new = f + gd + 0.5 * d @ Gd
            if f_new <= f + 1e-4 * gd:
                break
            alpha *= 0.5
        else:
            stalled = True

        if not stalled:
            w, g, f = w_new, g + Gd, f_new
            history.append(float(f))
            dGd = d @ Gd
            alpha = float(d @ d / dGd) if dGd > 0 else 2 * alpha
            new_support = w > 0
            stable = stable + 1 if np.array_equal(new_support, support) else 0
            support = new_support
            since_polish += 1

        if stalled or (stable >= patience and since_polish >= patience) or since_polish >= 100:
            since_polish = 0
            polishes += 1
            S = np.flatnonzero(w > 0)
            if S.size == 0:
                S = np.flatnonzero(g < 0)
            if S.size == 0:
                continue
            try:
                v = _face_solve(G, b, S, factor)
            except LinAlgError:
                log.warning("Cholesky failed on a face of size %d", S.size)
                continue
            target = np.zeros(m)
            target[S] = v
            step = target - w
            ratios = np.full(m, np.inf)
            neg = step < 0
            ratios[neg] = w[neg] / -step[neg]
            t = min(1.0, float(ratios.min()))
            cand = np.maximum(w + t * step, 0.0)
            if t < 1.0:
                # blocking coordinates land exactly on the boundary
                cand[ratios <= t] = 0.0
            g_c = G @ cand - b
            f_c = 0.5 * cand @ (g_c - b)
            if f_c <= f:
                w, g, f = cand, g_c, f_c
                history.append(float(f))
                support = w > 0
                stable = 0

    rep = kkt_report(G, b, w)
    if not converged:
        converged = kkt_ok(rep, b, w, tol_kkt)
    r = G @ w - b
    return NnqpSolution(
        w=w,
        objective=float(0.5 * w @ (r - b)),
        kkt=rep,
        iterations=it,
        converged=bool(converged),
        degenerate=_degenerate(r, w, b, tol_kkt),
        history=history,
        polishes=polishes,
    )


def solve_many(G, B, tol_kkt: float = 1e-8, max_pivots: int = 100) -> list[NnqpSolution]:
    """Solve the NNQP for every column of ``B`` with a shared matrix ``G``.

    Starts from the unconstrained solution of each column and runs block
    principal pivoting on the set ``Z`` of coordinates held at zero, using
    ``G^{-1}`` so that each pivot costs ``O(|Z|^3 + m |Z|)``. Columns that do
    not certify within ``max_pivots`` go through ``solve``.
    """
    factor = getattr(G, "factor", None) if hasattr(G, "entries") else None
    Gm = _matrix(G)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    m = Gm.shape[0]
    if factor is None:
        factor = cho_factor(Gm)
    Ginv = cho_solve(factor, np.eye(m))
    Ginv = 0.5 * (Ginv + Ginv.T)
    W0 = Ginv @ B
    W = np.empty_like(W0)
    pivots = np.zeros(B.shape[1], dtype=int)
    for j in range(B.shape[1]):
        w0 = W0[:, j]
        Z = np.flatnonzero(w0 < 0)
        w = w0.copy()
        for k in range(max_pivots + 1):
            if Z.size == 0:
                w = w0.copy()
                break
            mu = np.linalg.solve(Ginv[np.ix_(Z, Z)], -w0[Z])
            w = w0 + Ginv[:, Z] @ mu
            w[Z] = 0.0
            bad_w = np.flatnonzero(w < 0)
            bad_mu = Z[mu < 0]
            if bad_w.size == 0 and bad_mu.size == 0:
                break
            Z = np.union1d(np.setdiff1d(Z, bad_mu), bad_w)
        pivots[j] = k
        W[:, j] = np.maximum(w, 0.0)

    R = Gm @ W - B
    out = []
    for j in range(B.shape[1]):
        w, r, b = W[:, j], R[:, j], B[:, j]
        rep = KKTReport(float(w.min()), float(r.min()), float(abs(w @ r)))
        if kkt_ok(rep, b, w, tol_kkt):
            out.append(
                NnqpSolution(
                    w=w,
                    objective=float(0.5 * w @ (r - b)),
                    kkt=rep,
                    iterations=int(pivots[j]),
                    converged=True,
                    degenerate=_degenerate(r, w, b, tol_kkt),
                )
            )
        else:
            log.debug("column %d not certified by pivoting; running solve()", j)
            out.append(solve(G, b, tol_kkt=tol_kkt))
    return out
