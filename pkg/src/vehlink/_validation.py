"""Input validation helpers shared by the estimator classes."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

N_PSI = 5


def check_psi_array(X) -> np.ndarray:
    """2-D float array of condensed-parameter rows (at least five columns).

    Infinite received power and K are allowed (no coverage, NLOS, LOS-only
    sentinels); NaN is rejected in the first five columns.
    """
    X = check_array(X, dtype=float, ensure_all_finite=False, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] < N_PSI:
        raise ValueError(f"expected rows with >= {N_PSI} columns, got shape {X.shape}")
    if np.isnan(X[:, :N_PSI]).any():
        raise ValueError("condensed parameters must not be NaN")
    if np.isinf(X[:, 1:3]).any() or (X[:, 1:3] < 0).any():
        raise ValueError("delay spread and Doppler bandwidth must be finite and >= 0")
    if np.isinf(X[:, 4]).any():
        raise ValueError("LOS Doppler shift must be finite")
    return X
