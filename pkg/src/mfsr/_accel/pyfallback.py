"""Pure-numpy implementations of the hot kernels.

These are the import-time fallback when the compiled extension is missing
(and the reference its behavior is held to).  Function signatures and
semantics match ``_native`` exactly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

_TINY = 1e-14

STATUS_OK = 0
STATUS_MAX_STEPS = 1


def _chol_append(L: np.ndarray, nA: int, grow: np.ndarray, gjj: float) -> float:
    """Extend the Cholesky factor by one row; returns the new diagonal entry."""
    if nA:
        t = solve_triangular(L[:nA, :nA], grow, lower=True, check_finite=False)
    else:
        t = np.empty(0)
    d2 = gjj - t @ t
    if d2 <= max(1e-12 * gjj, 1e-300):
        return -1.0
    L[nA, :nA] = t
    L[nA, nA] = math.sqrt(d2)
    return L[nA, nA]


def _chol_drop(L: np.ndarray, nA: int, i: int) -> None:
    """Remove active position ``i`` from the factor, re-triangularizing."""
    L[i:nA - 1, :nA] = L[i + 1:nA, :nA]
    for k in range(i, nA - 1):
        a, b = L[k, k], L[k, k + 1]
        r = math.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        lo = L[k:nA - 1, k].copy()
        hi = L[k:nA - 1, k + 1]
        L[k:nA - 1, k] = c * lo + s * hi
        L[k:nA - 1, k + 1] = -s * lo + c * hi
        if L[k, k] < 0:
            L[k:nA - 1, k] *= -1.0
    L[:nA - 1, nA - 1] = 0.0
    L[nA - 1, :nA] = 0.0


def lasso_homotopy(D: np.ndarray, s: np.ndarray, eta: float, max_steps: int,
                   want_path: bool = False):
    """LARS-lasso homotopy for ``min 0.5*||D a - s||^2 + eta*||a||_1``.

    Tracks the penalty level from ``||D^T s||_inf`` down to ``eta``,
    adding atoms as their correlations reach the boundary and removing
    active atoms whose coefficients cross zero.  Atoms are not assumed
    normalized; all geometry lives in the Gram matrix.

    Returns ``(coef, status, n_steps, path)`` where ``path`` is the sequence
    of penalty levels at the visited breakpoints (or None).
    """
    q, K = D.shape
    c = D.T @ s
    coef = np.zeros(K)
    lam = float(np.max(np.abs(c))) if K else 0.0
    path = [lam] if want_path else None
    if lam <= eta or K == 0:
        return coef, STATUS_OK, 0, (np.array(path) if want_path else None)

    max_active = min(q, K)
    L = np.zeros((max_active, max_active))
    gcols = np.zeros((K, max_active), order="F")
    active: list[int] = []
    sign = np.zeros(max_active)
    alpha = np.zeros(max_active)
    is_active = np.zeros(K, dtype=bool)
    excluded = np.zeros(K, dtype=bool)

    def try_activate(j: int) -> bool:
        nA = len(active)
        if nA >= max_active:
            return False
        gj = D.T @ D[:, j]
        grow = gj[active] if nA else np.empty(0)
        if _chol_append(L, nA, grow, gj[j]) < 0:
            excluded[j] = True
            return False
        gcols[:, nA] = gj
        sign[nA] = 1.0 if c[j] > 0 else -1.0
        alpha[nA] = 0.0
        active.append(j)
        is_active[j] = True
        return True

    j0 = int(np.argmax(np.abs(c)))
    if not try_activate(j0):
        return coef, STATUS_OK, 0, (np.array(path) if want_path else None)

    n_steps = 0
    status = STATUS_OK
    while True:
        n_steps += 1
        if n_steps > max_steps:
            status = STATUS_MAX_STEPS
            break
        nA = len(active)

        # rebuild the factor when the cheap condition estimate degrades
        dg = np.diagonal(L)[:nA]
        if (dg.max() / dg.min()) ** 2 > 1e8:
            gaa = gcols[np.asarray(active), :nA]
            try:
                L[:nA, :nA] = np.linalg.cholesky(gaa)
            except np.linalg.LinAlgError:
                L[:nA, :nA] = np.linalg.cholesky(
                    gaa + np.eye(nA) * (1e-12 * np.trace(gaa) / nA))

        w = solve_triangular(L[:nA, :nA], sign[:nA], lower=True, check_finite=False)
        w = solve_triangular(L[:nA, :nA].T, w, lower=False, check_finite=False)
        adir = gcols[:, :nA] @ w

        gamma_stop = lam - eta
        gamma = gamma_stop
        event = -1  # -1 stop, 0 activate, 1 drop
        event_idx = -1

        cand = ~is_active & ~excluded
        if np.any(cand):
            cj = c[cand]
            aj = adir[cand]
            idx = np.nonzero(cand)[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = (lam - cj) / (1.0 - aj)
                g2 = (lam + cj) / (1.0 + aj)
            g1[(1.0 - aj) <= _TINY] = np.inf
            g2[(1.0 + aj) <= _TINY] = np.inf
            g1[g1 <= _TINY] = np.inf
            g2[g2 <= _TINY] = np.inf
            gact = np.minimum(g1, g2)
            k = int(np.argmin(gact))  # first minimum = lowest atom index
            if gact[k] < gamma:
                gamma = float(gact[k])
                event = 0
                event_idx = int(idx[k])

        drops = -alpha[:nA] / np.where(np.abs(w) > _TINY, w, np.nan)
        drops[~np.isfinite(drops)] = np.inf
        drops[drops <= _TINY] = np.inf
        kd = int(np.argmin(drops))
        if drops[kd] < gamma:
            gamma = float(drops[kd])
            event = 1
            event_idx = kd

        alpha[:nA] += gamma * w
        c -= gamma * adir
        lam -= gamma
        if want_path:
            path.append(lam)

        if event == -1:
            break
        if event == 0:
            try_activate(event_idx)
        else:
            j = active.pop(event_idx)
            is_active[j] = False
            coef[j] = 0.0
            alpha[event_idx:nA - 1] = alpha[event_idx + 1:nA]
            alpha[nA - 1] = 0.0
            sign[event_idx:nA - 1] = sign[event_idx + 1:nA]
            gcols[:, event_idx:nA - 1] = gcols[:, event_idx + 1:nA]
            _chol_drop(L, nA, event_idx)

    for t, j in enumerate(active):
        coef[j] = alpha[t]
    return coef, status, n_steps, (np.array(path) if want_path else None)


def block_scores(target: np.ndarray, aux: np.ndarray,
                 block_rows: np.ndarray, block_cols: np.ndarray) -> np.ndarray:
    """Cosine similarity of ``target`` against blocks of ``aux``.

    ``block_rows[i], block_cols[i]`` is the top-left corner of candidate i;
    all candidates must lie inside ``aux``.  All-zero blocks score 0.
    """
    p, q = target.shape
    rr = block_rows[:, None, None] + np.arange(p)[None, :, None]
    cc = block_cols[:, None, None] + np.arange(q)[None, None, :]
    flat = aux[rr, cc].reshape(len(block_rows), -1)
    tvec = target.reshape(-1)
    tnorm = np.linalg.norm(tvec)
    wnorm = np.linalg.norm(flat, axis=1)
    denom = tnorm * wnorm
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = (flat @ tvec) / denom
    scores[~np.isfinite(scores)] = 0.0
    return scores
