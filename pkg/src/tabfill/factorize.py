"""Adaptive matrix factorization: multiplicative-update NMF for non-negative
matrices, truncated SVD otherwise.

Both paths emit two reconstructions of the pre-imputed matrix: one where only
the originally-missing positions are replaced, and one replaced everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-9  # denominator guard in the multiplicative updates

DEFAULT_NMF_TOL = 1e-4
DEFAULT_NMF_MAX_ITER = 500

# Rank selection: smallest rank capturing this share of the squared spectrum.
SPECTRAL_ENERGY_TARGET = 0.90
RANK_FLOOR = 2
RANK_CEIL = 50


@dataclass
class NmfFactors:
    """Non-negative factors W (n x r) and H (r x m) with the per-iteration
    Frobenius objective trace (non-increasing by construction)."""

    w: np.ndarray
    h: np.ndarray
    objective_trace: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.w @ self.h


@dataclass
class SvdFactors:
    """Top-r singular triplets: orthonormal U, descending singular values S,
    orthonormal V."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


@dataclass
class FactorizationOutput:
    nan_replaced: np.ndarray
    fully_transformed: np.ndarray
    method: str  # "nmf" | "svd"
    rank: int


def _frobenius_sq(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    diff = x - w @ h
    return float(np.sum(diff * diff))


def nmf(
    x: np.ndarray,
    rank: int,
    max_iter: int = DEFAULT_NMF_MAX_ITER,
    tol: float = DEFAULT_NMF_TOL,
    seed: int = 0,
) -> NmfFactors:
    """Factor a non-negative matrix by multiplicative updates on
    ||X - WH||_F^2 (H first, then W, each iteration).

    Stops when the relative objective decrease drops below ``tol`` or after
    ``max_iter`` iterations. Factors are initialized from seeded uniform
    (0, 1) draws scaled by sqrt(mean(X)/rank), W drawn before H.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("nmf expects a 2-D matrix")
    n, m = x.shape
    if np.min(x) < 0:
        raise ValueError("nmf requires a non-negative matrix")
    if not 1 <= rank <= min(n, m):
        raise ValueError(f"rank must be in [1, {min(n, m)}] (got {rank})")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(np.mean(x) / rank)
    w = rng.random((n, rank)) * scale
    h = rng.random((rank, m)) * scale
    trace = [_frobenius_sq(x, w, h)]
    for _ in range(max_iter):
        h *= (w.T @ x) / (w.T @ w @ h + _EPS)
        w *= (x @ h.T) / (w @ h @ h.T + _EPS)
        loss = _frobenius_sq(x, w, h)
        prev = trace[-1]
        trace.append(loss)
        if prev == 0.0 or (prev - loss) / prev < tol:
            break
    return NmfFactors(w=w, h=h, objective_trace=np.asarray(trace))


def _complete_orthonormal(basis: list[np.ndarray], dim: int) -> np.ndarray:
    """Deterministic unit vector orthogonal to the given orthonormal set."""
    for j in range(dim):
        cand = np.zeros(dim)
        cand[j] = 1.0
        for b in basis:
            cand -= (b @ cand) * b
        norm = np.linalg.norm(cand)
        if norm > 0.5:
            return cand / norm
    raise ValueError("cannot extend orthonormal basis")  # r <= dim rules this out


def truncated_svd(x: np.ndarray, rank: int) -> SvdFactors:
    """Top-``rank`` singular triplets via eigendecomposition of the smaller
    Gram matrix, refined through a QR projection step.

    Degenerate directions (zero singular values) get deterministic
    orthonormal completions so U and V stay orthonormal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("truncated_svd expects a 2-D matrix")
    n, m = x.shape
    if not 1 <= rank <= min(n, m):
        raise ValueError(f"rank must be in [1, {min(n, m)}] (got {rank})")
    if n < m:
        flipped = truncated_svd(x.T, rank)
        return SvdFactors(u=flipped.v, s=flipped.s, v=flipped.u)
    gram = x.T @ x  # m x m, m <= n
    eigvals, eigvecs = np.linalg.eigh(gram)
    top = np.argsort(eigvals)[::-1][:rank]
    v0 = eigvecs[:, top]
    q, _ = np.linalg.qr(x @ v0)  # n x rank, orthonormal columns
    b = q.T @ x  # rank x m; carries the top-rank structure of x
    small_vals, small_vecs = np.linalg.eigh(b @ b.T)
    order = np.argsort(small_vals)[::-1]
    s = np.sqrt(np.clip(small_vals[order], 0.0, None))
    u2 = small_vecs[:, order]
    u = q @ u2
    cutoff = max(n, m) * np.finfo(np.float64).eps * (s[0] if s[0] > 0 else 1.0)
    v_cols: list[np.ndarray] = []
    for i in range(rank):
        if s[i] > cutoff:
            col = (b.T @ u2[:, i]) / s[i]
            col /= np.linalg.norm(col)
        else:
            s[i] = 0.0
            col = _complete_orthonormal(v_cols, m)
        v_cols.append(col)
    v = np.column_stack(v_cols)
    return SvdFactors(u=u, s=s, v=v)


def choose_rank(x: np.ndarray) -> int:
    """Smallest rank whose singular values capture 90% of the squared
    spectrum, clamped into [2, min(n, m, 50)]."""
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    s = np.linalg.svd(x, compute_uv=False)
    energy = s * s
    total = float(energy.sum())
    if total == 0.0:
        raw = 1
    else:
        target = SPECTRAL_ENERGY_TARGET * total - 1e-12 * total
        raw = int(np.searchsorted(np.cumsum(energy), target) + 1)
    ceil = min(n, m, RANK_CEIL)
    return min(max(raw, min(RANK_FLOOR, ceil)), ceil)


def adaptive_factorize(
    encoded: np.ndarray,
    preimputed: np.ndarray,
    seed: int = 0,
    max_iter: int = DEFAULT_NMF_MAX_ITER,
    tol: float = DEFAULT_NMF_TOL,
) -> FactorizationOutput:
    """Factor the dense pre-imputed matrix, NMF when it has no negative
    entries and truncated SVD otherwise, and splice the reconstruction into
    the positions where ``encoded`` is missing."""
    encoded = np.asarray(encoded, dtype=np.float64)
    preimputed = np.asarray(preimputed, dtype=np.float64)
    if encoded.shape != preimputed.shape:
        raise ValueError(
            f"shape mismatch: encoded {encoded.shape} vs preimputed {preimputed.shape}"
        )
    rank = choose_rank(preimputed)
    if np.min(preimputed) >= 0:
        method = "nmf"
        recon = nmf(preimputed, rank, max_iter=max_iter, tol=tol, seed=seed).reconstruct()
    else:
        method = "svd"
        recon = truncated_svd(preimputed, rank).reconstruct()
    missing = np.isnan(encoded)
    nan_replaced = np.where(missing, recon, preimputed)
    return FactorizationOutput(
        nan_replaced=nan_replaced,
        fully_transformed=recon,
        method=method,
        rank=rank,
    )
