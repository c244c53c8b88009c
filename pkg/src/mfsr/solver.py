"""L1-penalized sparse coding.

``lars_lasso`` solves ``min_a 0.5*||D a - s||^2 + eta*||a||_1`` by the
LARS-lasso homotopy (with the coefficient-drop modification), dispatched
to the compiled kernel when available.  Atoms are deliberately NOT
renormalized: stacked LR atom norms encode the degradation physics and
must be preserved, so the homotopy works off the general Gram geometry.

``coordinate_descent`` is a deliberately independent solver for the same
objective, kept in plain numpy; it serves as the verification oracle and
is never routed through the compiled backend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _accel
from .core import Dictionary

__all__ = [
    "SparseCode",
    "lars_lasso",
    "coordinate_descent",
    "sparse_objective",
    "kkt_violation",
    "kkt_tolerance",
]


@dataclass(frozen=True)
class SparseCode:
    """Solution of one sparse-coding problem."""

    coefficients: np.ndarray
    active_set: np.ndarray
    objective: float


def _atom_matrix(d: Union[Dictionary, np.ndarray]) -> np.ndarray:
    m = d.atoms if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D atom matrix, got shape {m.shape}")
    return m


def sparse_objective(d, s: np.ndarray, eta: float, coef: np.ndarray) -> float:
    m = _atom_matrix(d)
    r = m @ coef - np.asarray(s, dtype=np.float64).reshape(-1)
    return 0.5 * float(r @ r) + eta * float(np.abs(coef).sum())


def _make_code(m: np.ndarray, s: np.ndarray, eta: float, coef: np.ndarray) -> SparseCode:
    active = np.nonzero(coef)[0]
    return SparseCode(coef, active, sparse_objective(m, s, eta, coef))


def lars_lasso(d, s: np.ndarray, eta: float,
               return_path: bool = False):
    """Solve the penalized problem at penalty level ``eta`` >= 0.

    With ``return_path=True`` also returns the sequence of penalty levels
    visited along the homotopy (strictly decreasing from ``||D^T s||_inf``).
    The step budget is ``4 * count``; exceeding it raises with the last
    objective value reached.
    """
    m = _atom_matrix(d)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.size != m.shape[0]:
        raise ValueError(
            f"signal length {s.size} does not match atom dimension {m.shape[0]}"
        )
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    max_steps = 4 * m.shape[1]
    coef, status, n_steps, path = _accel.lasso_homotopy(
        np.ascontiguousarray(m), s, float(eta), max_steps, return_path)
    if status == _accel.STATUS_MAX_STEPS:
        raise RuntimeError(
            f"homotopy exceeded {max_steps} steps; last objective "
            f"{sparse_objective(m, s, eta, coef):.6g}")
    code = _make_code(m, s, eta, coef)
    return (code, path) if return_path else code


def coordinate_descent(d, s: np.ndarray, eta: float, tol: float = 1e-12,
                       max_sweeps: int = 200_000) -> SparseCode:
    """Cyclic coordinate minimization of the same objective (test oracle).

    Sweeps all coordinates in index order until the largest single-
    coordinate change in a sweep falls below ``tol``.
    """
    m = _atom_matrix(d)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.size != m.shape[0]:
        raise ValueError(
            f"signal length {s.size} does not match atom dimension {m.shape[0]}"
        )
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    K = m.shape[1]
    gram = m.T @ m
    rho = m.T @ s  # stays equal to D^T (s - D a) as a evolves
    diag = np.diagonal(gram).copy()
    coef = np.zeros(K)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(K):
            gjj = diag[j]
            if gjj == 0.0:
                continue
            u = rho[j] + gjj * coef[j]
            new = np.sign(u) * max(abs(u) - eta, 0.0) / gjj
            delta = new - coef[j]
            if delta != 0.0:
                coef[j] = new
                rho -= delta * gram[:, j]
                if abs(delta) > biggest:
                    biggest = abs(delta)
        if biggest < tol:
            break
    return _make_code(m, s, eta, coef)


def kkt_violation(d, s: np.ndarray, eta: float, coef: np.ndarray) -> float:
    """Largest violation of the stationarity conditions at ``coef``.

    Zero at an exact solution: active atoms must have residual correlation
    ``eta * sign(coef)``, inactive ones at most ``eta`` in magnitude.
    """
    m = _atom_matrix(d)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    g = m.T @ (s - m @ coef)
    active = coef != 0
    worst = 0.0
    if np.any(active):
        worst = float(np.max(np.abs(g[active] - eta * np.sign(coef[active]))))
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(g[~active])) - eta))
    return max(worst, 0.0)


def kkt_tolerance(d, s: np.ndarray) -> float:
    """The acceptance bound ``1e-8 * max(1, ||D^T s||_inf)``."""
    m = _atom_matrix(d)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    return 1e-8 * max(1.0, float(np.max(np.abs(m.T @ s))))
