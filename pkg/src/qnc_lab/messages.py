"""Correlated near-sparse Gaussian message synthesis.

Hidden binary states pick a large or small variance for each coefficient of
S; the observed messages are X = phi @ S for an orthonormal phi, so X has the
same l2 norm as S but its energy is spread across coordinates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np


@dataclass(frozen=True)
class SourceModel:
    """Two-state Gaussian mixture source.

    sparsity_prob is the per-coordinate probability of the large state
    (k/n for an expected k large coefficients out of n).
    """

    n: int
    sparsity_prob: float
    sigma_s2: float = 1.0
    sigma_z2: float = 0.01

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 < self.sparsity_prob <= 1.0:
            raise ValueError(f"sparsity_prob {self.sparsity_prob} outside (0, 1]")
        if self.sigma_s2 <= 0 or self.sigma_z2 <= 0:
            raise ValueError("variances must be positive")

    def validate_strict(self) -> None:
        """Extra checks for user-facing configs; degenerate settings are
        still constructible for oracle tests."""
        if not self.sparsity_prob < 1.0:
            raise ValueError("sparsity_prob must be < 1")
        if self.sigma_s2 < 10.0 * self.sigma_z2:
            raise ValueError(
                f"sigma_s2={self.sigma_s2} must dominate sigma_z2={self.sigma_z2} "
                "(require sigma_s2 >= 10 * sigma_z2)")

    @property
    def coord_var(self) -> float:
        """Marginal variance of one coefficient."""
        p = self.sparsity_prob
        return p * self.sigma_s2 + (1.0 - p) * self.sigma_z2


@dataclass(frozen=True)
class MessageEnsemble:
    model: SourceModel
    Q: np.ndarray      # binary states, length n
    S: np.ndarray      # sparse-domain coefficients
    phi: np.ndarray    # orthonormal n x n
    X: np.ndarray      # messages, X = phi @ S


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_orthonormal(n: int, seed=None) -> np.ndarray:
    """Haar-distributed orthonormal matrix.

    QR of an i.i.d. standard Gaussian matrix with column signs fixed so the
    triangular factor has a non-negative diagonal; the factorization (hence
    the draw under a fixed seed) is unique.
    """
    rng = _as_rng(seed)
    G = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def sample_ensemble(model: SourceModel, phi: np.ndarray, seed=None,
                    placement: Literal["bernoulli", "exact"] = "bernoulli") -> MessageEnsemble:
    """Draw one message block.

    placement="bernoulli" gives i.i.d. large-state indicators with
    probability sparsity_prob (expected k large entries); "exact" places
    exactly round(sparsity_prob * n) large entries uniformly at random.
    """
    rng = _as_rng(seed)
    n = model.n
    if placement == "bernoulli":
        Q = (rng.random(n) < model.sparsity_prob).astype(np.int8)
    elif placement == "exact":
        k = int(round(model.sparsity_prob * n))
        Q = np.zeros(n, dtype=np.int8)
        Q[rng.choice(n, size=k, replace=False)] = 1
    else:
        raise ValueError(f"unknown placement {placement!r}")
    sigma = np.where(Q == 1, np.sqrt(model.sigma_s2), np.sqrt(model.sigma_z2))
    S = rng.standard_normal(n) * sigma
    X = phi @ S
    return MessageEnsemble(model=model, Q=Q, S=S, phi=phi, X=X)


@dataclass(frozen=True)
class NormStatsReport:
    """Empirical frequencies of the three rare-norm events.

    sq_low:    ||X||^2 <  k * sigma_s2
    sq_high:   ||X||^2 >  2k * sigma_s2 + (n-k) * sigma_z2
    linf_high: ||X||_inf >= sqrt(2k * ln(k * n^gamma)) * sigma_s
    """

    n_samples: int
    k: int
    gamma: float
    threshold_sq_low: float
    threshold_sq_high: float
    threshold_linf: float
    freq_sq_low: float
    freq_sq_high: float
    freq_linf: float

    def frequencies(self) -> tuple[float, float, float]:
        return (self.freq_sq_low, self.freq_sq_high, self.freq_linf)

    def standard_errors(self) -> tuple[float, float, float]:
        return tuple(
            float(np.sqrt(f * (1.0 - f) / self.n_samples)) for f in self.frequencies()
        )


def norm_statistics(samples: Sequence[MessageEnsemble], k: int, gamma: float) -> NormStatsReport:
    """Tail frequencies of the message-norm events over >= 1000 ensembles."""
    if len(samples) < 1000:
        raise ValueError(f"need at least 1000 samples, got {len(samples)}")
    model = samples[0].model
    n = model.n
    t_low = k * model.sigma_s2
    t_high = 2.0 * k * model.sigma_s2 + (n - k) * model.sigma_z2
    t_linf = np.sqrt(2.0 * k * np.log(k * n ** gamma)) * np.sqrt(model.sigma_s2)
    sq = np.array([float(e.X @ e.X) for e in samples])
    linf = np.array([float(np.abs(e.X).max()) for e in samples])
    return NormStatsReport(
        n_samples=len(samples),
        k=k,
        gamma=gamma,
        threshold_sq_low=t_low,
        threshold_sq_high=t_high,
        threshold_linf=float(t_linf),
        freq_sq_low=float((sq < t_low).mean()),
        freq_sq_high=float((sq > t_high).mean()),
        freq_linf=float((linf >= t_linf).mean()),
    )


def write_ensemble_csv(e: MessageEnsemble, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "Q_v", "S_v", "X_v"])
        for v in range(e.model.n):
            w.writerow([v + 1, int(e.Q[v]), repr(float(e.S[v])), repr(float(e.X[v]))])


def write_matrix(m: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, m)


def read_matrix(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path))
