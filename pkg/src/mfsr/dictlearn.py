"""HR dictionary learning from training image patches.

Alternates sparse coding of all patches against the current dictionary
with a block-coordinate dictionary update under a unit-norm atom
constraint.  When an atom's unconstrained update falls inside the unit
ball it is pushed back onto the sphere and its coefficient row counter-
scaled, which leaves the data term unchanged and shrinks the L1 term, so
the total objective is non-increasing while every returned atom still has
exactly unit norm.  Unused atoms are replaced by the currently worst-
reconstructed patch.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.random import default_rng

from ._parallel import map_indexed
from .core import Dictionary, Image, dictionary_from_matrix
from .solver import lars_lasso

__all__ = ["sample_patches", "learn_dictionary"]

_MIN_VARIANCE = 1e-4


def sample_patches(images: Sequence[Image], patch_side: int, count: int,
                   rng_seed: int) -> np.ndarray:
    """Draw mean-removed training patches at uniform random locations.

    Near-constant patches (variance below 1e-4) carry no structure and are
    rejected and redrawn; if ``count`` patches cannot be collected within a
    100x oversampling budget the corpus is unusable and an error is raised.
    Returns a ``patch_side**2 x count`` matrix, one patch per column.
    """
    if not images:
        raise ValueError("need at least one training image")
    for img in images:
        if patch_side > img.height or patch_side > img.width:
            raise ValueError(
                f"patch side {patch_side} exceeds image "
                f"({img.height}, {img.width})"
            )
    rng = default_rng(rng_seed)
    dim = patch_side * patch_side
    out = np.empty((dim, count))
    got = 0
    attempts = 0
    budget = 100 * count
    while got < count:
        if attempts >= budget:
            raise ValueError(
                f"could not sample {count} patches with variance >= "
                f"{_MIN_VARIANCE} after {budget} attempts"
            )
        attempts += 1
        img = images[int(rng.integers(len(images)))]
        r = int(rng.integers(img.height - patch_side + 1))
        c = int(rng.integers(img.width - patch_side + 1))
        block = img.data[r:r + patch_side, c:c + patch_side]
        if block.var() < _MIN_VARIANCE:
            continue
        vec = block.reshape(-1)
        out[:, got] = vec - vec.mean()
        got += 1
    return out


def _init_atoms(patches: np.ndarray, k_atoms: int, rng) -> np.ndarray:
    """Pick k genuinely distinct training patches, normalized.

    Random order, greedily skipping candidates that nearly duplicate an
    already-picked atom (|correlation| >= 0.99): initializing two atoms on
    the same structure wedges the alternation in a usage-splitting local
    minimum that starves other structures of atoms.  If the corpus lacks
    diversity the filter is relaxed to plain random picks.
    """
    dim, n = patches.shape
    order = rng.permutation(n)
    chosen: list[int] = []
    cols = []
    for idx in order:
        v = patches[:, idx]
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        u = v / nv
        if cols and np.max(np.abs(np.array(cols) @ u)) >= 0.99:
            continue
        cols.append(u)
        chosen.append(idx)
        if len(chosen) == k_atoms:
            break
    while len(cols) < k_atoms:
        v = rng.normal(size=dim)
        cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols)


def _code_all(atoms: np.ndarray, patches: np.ndarray, eta: float,
              threads: int) -> np.ndarray:
    codes = map_indexed(lambda i: lars_lasso(atoms, patches[:, i], eta).coefficients,
                        range(patches.shape[1]), threads)
    return np.column_stack(codes)


def _total_objective(patches: np.ndarray, atoms: np.ndarray, codes: np.ndarray,
                     eta: float) -> float:
    resid = patches - atoms @ codes
    return 0.5 * float((resid * resid).sum()) + eta * float(np.abs(codes).sum())


def learn_dictionary(patches: np.ndarray, k_atoms: int, eta: float,
                     iterations: int, rng_seed: int, threads: int = 1,
                     return_objectives: bool = False):
    """Learn a dictionary of ``k_atoms`` unit-norm atoms from patch columns.

    Initialization picks ``k_atoms`` distinct training patches (normalized);
    each iteration sparse-codes every patch at penalty ``eta`` and then
    updates atoms one at a time.  The recorded objective sequence (one value
    per iteration, measured after the coding step) is non-increasing.
    """
    patches = np.asarray(patches, dtype=np.float64)
    dim, n = patches.shape
    if k_atoms < 1:
        raise ValueError(f"k_atoms must be >= 1, got {k_atoms}")
    if n < k_atoms:
        raise ValueError(f"need at least {k_atoms} patches, got {n}")

    rng = default_rng(rng_seed)
    atoms = _init_atoms(patches, k_atoms, rng)

    objectives: list[float] = []
    for _ in range(iterations):
        codes = _code_all(atoms, patches, eta, threads)
        objectives.append(_total_objective(patches, atoms, codes, eta))

        resid = patches - atoms @ codes
        for j in range(k_atoms):
            row = codes[j]
            used = np.nonzero(row)[0]
            if used.size:
                resid[:, used] += np.outer(atoms[:, j], row[used])
                target = resid[:, used] @ row[used] / float(row[used] @ row[used])
                norm = np.linalg.norm(target)
            else:
                norm = 0.0
            if norm == 0.0:
                # dead atom: adopt the worst-reconstructed patch; its zero
                # coefficient row leaves the objective untouched
                worst = int(np.argmax((resid * resid).sum(axis=0)))
                atom = patches[:, worst].copy()
                anorm = np.linalg.norm(atom)
                if anorm == 0.0:
                    atom = rng.normal(size=dim)
                    anorm = np.linalg.norm(atom)
                atoms[:, j] = atom / anorm
                continue
            atoms[:, j] = target / norm
            if norm < 1.0:
                # renormalizing up would leave the ball; counter-scaling the
                # coefficients keeps D A fixed and reduces the L1 term
                codes[j, used] = row[used] * norm
            resid[:, used] -= np.outer(atoms[:, j], codes[j, used])

    result = dictionary_from_matrix(atoms)
    if return_objectives:
        return result, np.array(objectives)
    return result
