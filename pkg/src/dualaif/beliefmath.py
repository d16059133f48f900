"""Categorical distributions, column-stochastic matrices and the few
information-theoretic quantities both agents need.

Probabilities live in linear space. Matrices are column-stochastic: rows are
outcomes, columns are the conditioning states.
"""
from functools import reduce

import numpy as np

STOCHASTIC_TOL = 1e-9


class DegenerateEvidenceError(ValueError):
    """Raised when a weight vector has no positive mass to normalize."""


class AbsoluteContinuityError(ValueError):
    """Raised when q puts mass where p has none, so KL(q || p) is infinite."""


def is_categorical(p, tol=STOCHASTIC_TOL):
    p = np.asarray(p, dtype=float)
    return p.ndim == 1 and bool(np.all(p >= 0.0)) and abs(p.sum() - 1.0) <= tol


def is_column_stochastic(m, tol=STOCHASTIC_TOL):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        return False
    if np.any(m < 0.0) or np.any(m > 1.0 + tol):
        return False
    return bool(np.all(np.abs(m.sum(axis=0) - 1.0) <= tol))


def check_column_stochastic(m, name="matrix", tol=STOCHASTIC_TOL):
    """Return ``m`` as a float array, raising ValueError if it is not column-stochastic."""
    m = np.asarray(m, dtype=float)
    if not is_column_stochastic(m, tol):
        if m.ndim != 2:
            raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
        sums = m.sum(axis=0)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(
            f"{name} is not column-stochastic: column {worst} sums to {sums[worst]!r}"
            f" (min entry {m.min()!r})"
        )
    return m


def normalize(weights):
    """Scale a non-negative vector to sum to one."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if not total > 0.0:
        raise DegenerateEvidenceError("cannot normalize a vector with no positive mass")
    return w / total


def kron(*factors):
    """Kronecker product of one or more matrices, left to right.

    For two factors ``out[i*b.rows + k, j*b.cols + l] == a[i, j] * b[k, l]``.
    """
    if not factors:
        raise ValueError("kron needs at least one factor")
    mats = [np.asarray(f, dtype=float) for f in factors]
    return reduce(np.kron, mats)


def entropy(p):
    """Shannon entropy in nats with 0 ln 0 taken as 0."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def column_entropies(m):
    """Entropy of every column of a column-stochastic matrix."""
    m = np.asarray(m, dtype=float)
    safe = np.where(m > 0.0, m, 1.0)
    return -(m * np.log(safe)).sum(axis=0)


def kl_divergence(q, p):
    """KL(q || p) in nats.

    Raises AbsoluteContinuityError if some q_i > 0 has p_i == 0.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"shape mismatch {q.shape} vs {p.shape}")
    support = q > 0.0
    bad = support & (p <= 0.0)
    if np.any(bad):
        idx = np.flatnonzero(bad).tolist()
        raise AbsoluteContinuityError(f"q has mass where p is zero at indices {idx}")
    qs, ps = q[support], p[support]
    return float(max((qs * (np.log(qs) - np.log(ps))).sum(), 0.0))
