"""Reference-interval frameworks and the three-way abnormality semantics.

Three interval sources coexist: the fixed population table (pop), the
personalized GMM-setpoint interval (per), and the model-derived interval
(norma). A measurement that is pop-abnormal is abnormal under every
framework (override rule), so abnormality prevalence always satisfies
pop <= per and pop <= norma by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytes import get_analyte
from .cohort import LabSeries
from .gmm import DegenerateFitError, GmmModel, fit_gmm_em, seed_from

LOW = "low"
NORMAL = "normal"
HIGH = "high"


@dataclass(frozen=True)
class ReferenceInterval:
    lower: float | None
    upper: float | None
    framework: str          # "pop" | "per" | "norma"
    provenance: str = ""

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and not self.lower < self.upper:
            if self.lower != self.upper:  # zero-width degenerate allowed, flagged upstream
                raise ValueError(f"lower {self.lower} must be < upper {self.upper}")

    def contains(self, value: float) -> bool:
        """Closed-interval membership; a missing bound is unbounded on that side."""
        if self.lower is not None and value < self.lower:
            return False
        if self.upper is not None and value > self.upper:
            return False
        return True


def pop_interval(analyte: str, sex: str) -> ReferenceInterval:
    lo, hi = get_analyte(analyte).bounds(sex)
    return ReferenceInterval(lo, hi, "pop", provenance=f"table:{analyte}:{sex}")


def popri_classify(value: float, analyte: str, sex: str) -> str:
    """Classify against the sex-specific population range (closed bounds)."""
    lo, hi = get_analyte(analyte).bounds(sex)
    if lo is not None and value < lo:
        return LOW
    if hi is not None and value > hi:
        return HIGH
    return NORMAL


class PerRiIneligibleError(ValueError):
    pass


def select_perri(baseline: LabSeries, seed: int | None = None) -> tuple[ReferenceInterval, GmmModel]:
    """Personalized interval: dominant GMM component mean +/- 2 SD.

    Fits k = 1..3 (skipping orders with n < 3k), selects the minimum-AIC
    model, hard-assigns each point to its max-responsibility component,
    and takes the component holding the most points (ties: larger weight,
    then lower index).
    """
    n = len(baseline)
    if n < 5:
        raise PerRiIneligibleError(f"baseline has {n} measurements; need >= 5")
    if seed is None:
        seed = seed_from(baseline.patient.id, baseline.analyte)
    x = baseline.values()

    fits: list[GmmModel] = []
    for k in (1, 2, 3):
        if n < 3 * k:
            continue
        try:
            fits.append(fit_gmm_em(x, k, seed + k))
        except DegenerateFitError:
            continue
    model = min(fits, key=lambda m: m.aic)

    resp = model.responsibilities(x)
    assign = resp.argmax(axis=1)
    counts = np.bincount(assign, minlength=model.k)
    # largest count, then larger weight, then lower index
    order = sorted(range(model.k), key=lambda c: (-counts[c], -model.weights[c], c))
    c = order[0]
    mu, sd = model.means[c], model.sds[c]
    interval = ReferenceInterval(
        mu - 2.0 * sd, mu + 2.0 * sd, "per",
        provenance=f"gmm:k={model.k}:component={c}",
    )
    return interval, model


def perri_setpoint_valid(model: GmmModel, interval: ReferenceInterval, analyte: str, sex: str) -> bool:
    """True iff the dominant-component mean lies inside the closed Pop_RI."""
    c = int(interval.provenance.rsplit("component=", 1)[-1])
    return popri_classify(model.means[c], analyte, sex) == NORMAL


def classify_three_way(
    value: float,
    pop_state: str,
    per: ReferenceInterval | None,
    norma: ReferenceInterval | None,
) -> dict[str, bool]:
    """Per-framework abnormal flags for one measurement.

    pop is abnormal iff its state is not normal; per/norma are abnormal if
    the value falls outside their interval OR pop is abnormal (override).
    Missing frameworks are absent from the result.
    """
    flags = {"pop": pop_state != NORMAL}
    if per is not None:
        flags["per"] = flags["pop"] or not per.contains(value)
    if norma is not None:
        flags["norma"] = flags["pop"] or not norma.contains(value)
    return flags
