"""1-D Gaussian mixture fitting by EM with AIC model selection support."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 500
# Convergence is declared when the log-likelihood gain per sample drops
# below TOL_PER_SAMPLE (the standard EM stopping rule). Driving EM to a
# much tighter absolute tolerance makes AIC order selection latch onto
# near-degenerate local maxima and overfit k.
TOL_PER_SAMPLE = 1e-3
TOL_ABS = 1e-8
N_RESTARTS = 5
SD_FLOOR_SCALE = 1e-4

_LOG_2PI = float(np.log(2.0 * np.pi))


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class GmmModel:
    k: int
    weights: tuple[float, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]
    loglik: float
    aic: float
    n: int
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)
    warning: str | None = None

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        log_r = self._log_joint(x)
        log_r -= log_r.max(axis=1, keepdims=True)
        r = np.exp(log_r)
        return r / r.sum(axis=1, keepdims=True)

    def _log_joint(self, x: np.ndarray) -> np.ndarray:
        w = np.array(self.weights)
        mu = np.array(self.means)
        sd = np.array(self.sds)
        z = (x[:, None] - mu[None, :]) / sd[None, :]
        return np.log(w)[None, :] - np.log(sd)[None, :] - 0.5 * (z * z + _LOG_2PI)


def seed_from(*parts) -> int:
    """Stable 64-bit seed from arbitrary string-able parts (for per-patient fits)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _log_mixture_density(x, w, mu, sd):
    z = (x[:, None] - mu[None, :]) / sd[None, :]
    log_comp = np.log(w)[None, :] - np.log(sd)[None, :] - 0.5 * (z * z + _LOG_2PI)
    m = log_comp.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(log_comp - m).sum(axis=1, keepdims=True))).ravel()


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers, dtype=np.float64)


def _em_once(x, k, rng, floor, tol):
    n = len(x)
    mu = np.sort(_kmeanspp_centers(x, k, rng))
    sd = np.full(k, max(float(np.std(x)), floor))
    w = np.full(k, 1.0 / k)

    trace = []
    prev = -np.inf
    for _ in range(MAX_ITER):
        # E-step
        z = (x[:, None] - mu[None, :]) / sd[None, :]
        log_comp = np.log(w)[None, :] - np.log(sd)[None, :] - 0.5 * (z * z + _LOG_2PI)
        m = log_comp.max(axis=1, keepdims=True)
        log_norm = m + np.log(np.exp(log_comp - m).sum(axis=1, keepdims=True))
        loglik = float(log_norm.sum())
        trace.append(loglik)
        r = np.exp(log_comp - log_norm)

        if loglik - prev < tol and np.isfinite(prev):
            break
        prev = loglik

        # M-step (sd truncated at the floor; keeps EM ascent)
        nk = r.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        w = nk / n
        mu = (r * x[:, None]).sum(axis=0) / nk
        var = (r * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk
        sd = np.maximum(np.sqrt(np.maximum(var, 0.0)), floor)

    return w, mu, sd, trace


def fit_gmm_em(values, k: int, seed: int) -> GmmModel:
    """Fit a k-component (k in 1..3) univariate Gaussian mixture by EM.

    Best of N_RESTARTS k-means++-style starts by final log-likelihood;
    component SDs are floored at SD_FLOOR_SCALE * (range + eps). The
    per-iteration log-likelihood trace is retained and is non-decreasing.
    """
    x = np.asarray(values, dtype=np.float64)
    if not (1 <= k <= 3):
        raise ValueError("k must be in 1..3")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    n = len(x)
    if n < 3 * k:
        raise DegenerateFitError(f"n={n} too small for k={k} (need >= {3 * k})")

    rng = np.random.default_rng(seed)
    floor = SD_FLOOR_SCALE * (float(x.max() - x.min()) + 1e-12)
    tol = max(TOL_ABS, TOL_PER_SAMPLE * n)
    warning = None
    if x.max() == x.min():
        warning = "all values identical; sd floored"

    best = None
    for _ in range(N_RESTARTS):
        w, mu, sd, trace = _em_once(x, k, rng, floor, tol)
        if np.any(np.diff(trace) < -1e-9):
            raise RuntimeError("EM log-likelihood decreased; ascent property violated")
        if best is None or trace[-1] > best[3][-1]:
            best = (w, mu, sd, trace)
    w, mu, sd, trace = best

    order = np.argsort(mu)
    w, mu, sd = w[order], mu[order], sd[order]
    loglik = trace[-1]
    p = 3 * k - 1
    aic = 2.0 * p - 2.0 * loglik
    return GmmModel(
        k=k,
        weights=tuple(float(v) for v in w),
        means=tuple(float(v) for v in mu),
        sds=tuple(float(v) for v in sd),
        loglik=loglik,
        aic=aic,
        n=n,
        loglik_trace=tuple(trace),
        warning=warning,
    )
