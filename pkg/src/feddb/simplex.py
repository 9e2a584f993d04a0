"""Small helpers for vectors on the probability simplex."""

import numpy as np

SIMPLEX_TOL = 1e-9


def uniform(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def on_simplex(p, tol: float = SIMPLEX_TOL) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(np.isfinite(p)) and np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)


def require_simplex(p, what: str = "distribution", tol: float = SIMPLEX_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if not on_simplex(p, tol):
        raise ValueError(f"{what} is not on the probability simplex: {p!r}")
    return p
