"""Non-neural next-value forecasting baselines."""

from __future__ import annotations

import numpy as np

BASELINE_KINDS = ("last", "patient_mean", "ar")


def fit_ar_cls(values: np.ndarray, p: int = 2) -> np.ndarray:
    """AR(p) coefficients by conditional least squares on demeaned values."""
    x = np.asarray(values, dtype=np.float64)
    mu = x.mean()
    xc = x - mu
    rows = [xc[p - 1 - j: len(xc) - 1 - j] for j in range(p)]
    design = np.stack(rows, axis=1)
    target = xc[p:]
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef


def baseline_predict(kind: str, values, p: int = 2) -> tuple[float, str]:
    """One-step point forecast; returns (forecast, kind actually used).

    The AR route treats the (possibly irregular) sequence as equally
    spaced and falls back to the patient mean when there are fewer than
    p + 2 points.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty series")
    if kind == "last":
        return float(x[-1]), "last"
    if kind == "patient_mean":
        return float(x.mean()), "patient_mean"
    if kind == "ar":
        if x.size < p + 2:
            return float(x.mean()), "patient_mean"
        coef = fit_ar_cls(x, p)
        mu = x.mean()
        lags = x[-1: -p - 1: -1] - mu
        return float(mu + coef @ lags), "ar"
    raise ValueError(f"unknown baseline kind {kind!r}; have {BASELINE_KINDS}")
