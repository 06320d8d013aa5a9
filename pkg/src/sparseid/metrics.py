"""Scores for identified weight vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ZERO_TOL = 1e-4


@dataclass(frozen=True)
class Score:
    rnmse: float
    support_precision: float
    support_recall: float
    exact_support: bool


def rnmse(w_hat, w_true) -> float:
    """``||w_hat - w_true|| / ||w_true||``."""
    a = np.asarray(w_hat, dtype=float).reshape(-1)
    b = np.asarray(w_true, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("weight vectors must have equal length")
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        raise ValueError("true weight vector is zero")
    return float(np.linalg.norm(a - b)) / nb


def support_of(w, zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
    """Boolean mask of entries with ``w_j^2 / ||w||^2 >= zero_tol``.

    ``zero_tol = 0`` selects the exactly nonzero entries.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    total = float(w @ w)
    if total == 0.0:
        return np.zeros(w.size, dtype=bool)
    if zero_tol == 0:
        return w != 0
    return w * w >= zero_tol * total


def support_metrics(w_hat, w_true, zero_tol: float = DEFAULT_ZERO_TOL) -> tuple[float, float, bool]:
    """Precision, recall and exact-match flag of the estimated support.

    An empty estimate has precision 1 (it makes no false claims).  An empty
    truth has recall 1.
    """
    if zero_tol < 0:
        raise ValueError("zero_tol must be >= 0")
    a = np.asarray(w_hat, dtype=float).reshape(-1)
    b = np.asarray(w_true, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("weight vectors must have equal length")
    est = support_of(a, zero_tol)
    tru = support_of(b, zero_tol)
    tp = int(np.count_nonzero(est & tru))
    n_est = int(np.count_nonzero(est))
    n_tru = int(np.count_nonzero(tru))
    precision = tp / n_est if n_est else 1.0
    recall = tp / n_tru if n_tru else 1.0
    return precision, recall, bool(precision == 1.0 and recall == 1.0)


def score(w_hat, w_true, zero_tol: float = DEFAULT_ZERO_TOL) -> Score:
    p, r, exact = support_metrics(w_hat, w_true, zero_tol)
    return Score(rnmse(w_hat, w_true), p, r, exact)


def snr_db(signal, noise) -> float:
    """``20 log10(||signal|| / ||noise||)``."""
    return 20.0 * math.log10(float(np.linalg.norm(signal)) / float(np.linalg.norm(noise)))
