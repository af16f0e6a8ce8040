"""30-analyte reference table and unit canonicalization.

The table ships sex-stratified population reference bounds per analyte
(adult ranges). One-sided ranges (e.g. LDL, TGL) carry no lower bound:
only "high" abnormality is possible for them. Unit conversion is an
explicit per-analyte multiplier table loaded from a data file; unknown
units are never guessed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources


class UnknownAnalyteError(KeyError):
    pass


class UnknownUnitError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyteSpec:
    code: str
    name: str
    unit: str
    ri_female: tuple[float | None, float | None]
    ri_male: tuple[float | None, float | None]
    sex_stratified: bool

    def bounds(self, sex: str) -> tuple[float | None, float | None]:
        """Reference bounds for sex "F" or "M"."""
        if sex not in ("F", "M"):
            raise ValueError(f"sex must be 'F' or 'M', got {sex!r}")
        return self.ri_female if sex == "F" else self.ri_male

    def midpoint(self, sex: str = "M") -> float:
        """Midpoint of the reference range; a missing lower bound counts as 0."""
        lo, hi = self.bounds(sex)
        lo = 0.0 if lo is None else lo
        if hi is None:
            raise ValueError(f"{self.code} has no upper bound")
        return (lo + hi) / 2.0

    def width(self, sex: str = "M") -> float:
        lo, hi = self.bounds(sex)
        lo = 0.0 if lo is None else lo
        if hi is None:
            raise ValueError(f"{self.code} has no upper bound")
        return hi - lo


def _load_json(name: str):
    with resources.files("norma.data").joinpath(name).open("r") as fh:
        return json.load(fh)


def _build_table() -> dict[str, AnalyteSpec]:
    table = {}
    for row in _load_json("analytes.json"):
        spec = AnalyteSpec(
            code=row["code"],
            name=row["name"],
            unit=row["unit"],
            ri_female=tuple(row["ri_female"]),
            ri_male=tuple(row["ri_male"]),
            sex_stratified=row["sex_stratified"],
        )
        for lo, hi in (spec.ri_female, spec.ri_male):
            if lo is None and hi is None:
                raise ValueError(f"{spec.code}: no reference bound present")
            if lo is not None and hi is not None and not lo < hi:
                raise ValueError(f"{spec.code}: lower bound must be < upper")
        table[spec.code] = spec
    return table


ANALYTES: dict[str, AnalyteSpec] = _build_table()
UNIT_CONVERSIONS: dict[str, dict[str, float]] = _load_json("unit_conversions.json")


def get_analyte(code: str) -> AnalyteSpec:
    try:
        return ANALYTES[code]
    except KeyError:
        raise UnknownAnalyteError(code) from None


def normalize_unit(unit: str) -> str:
    return unit.strip().replace("µ", "u").lower()


def to_canonical(analyte: str, unit: str, value: float) -> float:
    """Convert value to the analyte's canonical unit.

    Raises UnknownAnalyteError / UnknownUnitError when the analyte or
    unit is not in the shipped conversion map.
    """
    if analyte not in ANALYTES:
        raise UnknownAnalyteError(analyte)
    factor = UNIT_CONVERSIONS[analyte].get(normalize_unit(unit))
    if factor is None:
        raise UnknownUnitError(f"{analyte}: unit {unit!r} not in conversion map")
    return value * factor
