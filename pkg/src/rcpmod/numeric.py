"""Dense float64 primitives shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. The helpers here add the shape checks and the numerical guards the
rest of the package relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

NORM_EPS = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def row_norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def normalize_rows(a: np.ndarray, eps: float = NORM_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Return ``a`` with rows divided by ``max(norm, eps)`` and the clamped norms."""
    norms = np.maximum(row_norms(a), eps)
    return a / norms[:, None], norms


def normalize_rows_backward(grad_u: np.ndarray, u: np.ndarray, clamped: np.ndarray,
                            eps: float = NORM_EPS) -> np.ndarray:
    """Pull a gradient w.r.t. normalized rows back to the raw rows.

    For rows whose norm exceeded ``eps`` the Jacobian is the tangent projection
    ``(I - u u^T) / |a|``; clamped rows were divided by the constant ``eps``.
    """
    radial = np.einsum("ij,ij->i", grad_u, u)
    active = clamped > eps
    out = grad_u / clamped[:, None]
    out[active] -= (radial[active] / clamped[active])[:, None] * u[active]
    return out


def row_cosine(a, b, eps: float = NORM_EPS) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError(f"row_cosine length mismatch: {a.size} vs {b.size}")
    na = max(float(np.sqrt(a @ a)), eps)
    nb = max(float(np.sqrt(b @ b)), eps)
    return float(a @ b) / (na * nb)


def pairwise_cosine(a, b, eps: float = NORM_EPS) -> np.ndarray:
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"pairwise_cosine width mismatch: {a.shape[1]} vs {b.shape[1]}")
    ua, _ = normalize_rows(a, eps)
    ub, _ = normalize_rows(b, eps)
    return ua @ ub.T


def logsumexp(values) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ContractError("logsumexp of an empty vector")
    m = float(v.max())
    if v.size == 1:
        return m
    return m + float(np.log(np.exp(v - m).sum()))


def logsumexp_rows(values: np.ndarray) -> np.ndarray:
    m = values.max(axis=1)
    return m + np.log(np.exp(values - m[:, None]).sum(axis=1))


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Deterministic PCG64 generator for ``seed`` and an optional stream path.

    Different ``stream`` tuples yield statistically independent generators, so
    e.g. per-epoch shuffling can be reseeded from the master seed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))
