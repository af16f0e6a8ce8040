"""HTTP JSON service exposing interpretation, intervals, and what-if sweeps.

Stateless: the loaded checkpoint is read-only and every response is a pure
function of the request. Error payloads carry a machine-readable code.
The latest posted value is interpreted against intervals fitted on the
earlier history; the prediction horizon defaults to the gap between the
last two measurements.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .analytes import ANALYTES, get_analyte, normalize_unit, UNIT_CONVERSIONS
from .cohort import LabSeries, Measurement, Patient, SECONDS_PER_DAY, parse_timestamp
from .model import NormaModel, build_tokens, norma_interval
from .reference import (
    NORMAL, PerRiIneligibleError, classify_three_way, perri_setpoint_valid,
    pop_interval, popri_classify, select_perri,
)
from .sweep import SWEEP_FEATURES, sweep_base_case

DEFAULT_HORIZON_DAYS = 30.0
FRAMEWORKS = ("pop", "per", "norma")


class HistoryPoint(BaseModel):
    timestamp: str
    value: float
    unit: str


class InterpretRequest(BaseModel):
    sex: Literal["F", "M"]
    age: float = Field(ge=0, le=120)
    analyte: str
    history: list[HistoryPoint] = Field(default_factory=list)
    horizon_days: float | None = Field(default=None, ge=0)
    frameworks: list[Literal["pop", "per", "norma"]] = Field(
        default_factory=lambda: list(FRAMEWORKS))
    config_preset: str | None = None


class CanonicalPoint(BaseModel):
    timestamp: str
    value: float


class FrameworkResult(BaseModel):
    lower: float | None = None
    upper: float | None = None
    flag_abnormal: bool | None = None
    valid: bool | None = None
    point_forecast: float | None = None


class InterpretResponse(BaseModel):
    analyte: str
    unit: str
    canonical_history: list[CanonicalPoint]
    latest_value: float | None
    horizon_days: float
    frameworks: dict[str, FrameworkResult]
    warnings: list[str]


class SweepRequest(BaseModel):
    base: InterpretRequest
    feature: str
    grid: list


class SweepRecordOut(BaseModel):
    analyte: str
    feature: str
    value: str | float | int | None
    median: float
    interval_width: float
    pct_width_change: float


class AnalyteOut(BaseModel):
    code: str
    name: str
    unit: str
    ri_female: tuple[float | None, float | None]
    ri_male: tuple[float | None, float | None]
    sex_stratified: bool


def _err(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _parse_history(req: InterpretRequest) -> list[Measurement]:
    if req.analyte not in ANALYTES:
        raise _err(400, "unknown-analyte", f"analyte {req.analyte!r} not in the 30-analyte table")
    points = []
    for i, hp in enumerate(req.history):
        factor = UNIT_CONVERSIONS[req.analyte].get(normalize_unit(hp.unit))
        if factor is None:
            raise _err(400, "unit-unmapped", f"history[{i}]: unit {hp.unit!r} not convertible")
        if not np.isfinite(hp.value) or hp.value <= 0:
            raise _err(400, "non-positive", f"history[{i}]: value must be positive")
        try:
            t = parse_timestamp(hp.timestamp)
        except (ValueError, OverflowError):
            raise _err(400, "bad-timestamp", f"history[{i}]: cannot parse {hp.timestamp!r}")
        points.append(Measurement(time=t, value=hp.value * factor, analyte=req.analyte))
    by_time: dict[float, list[float]] = {}
    for m in points:
        by_time.setdefault(m.time, []).append(m.value)
    return [Measurement(time=t, value=float(np.mean(vs)), analyte=req.analyte)
            for t, vs in sorted(by_time.items())]


def interpret(req: InterpretRequest, model: NormaModel | None) -> InterpretResponse:
    history = _parse_history(req)
    frameworks = list(dict.fromkeys(req.frameworks))
    warnings: list[str] = []
    spec = get_analyte(req.analyte)
    patient = Patient("request", req.sex, req.age)

    if len(history) >= 2:
        baseline_ms, index = tuple(history[:-1]), history[-1]
    else:
        baseline_ms, index = tuple(history), None
    baseline = LabSeries(patient, req.analyte, baseline_ms)

    horizon = req.horizon_days
    if horizon is None:
        if index is not None and len(baseline_ms) >= 1:
            horizon = (index.time - baseline_ms[-1].time) / SECONDS_PER_DAY
        else:
            horizon = DEFAULT_HORIZON_DAYS

    results: dict[str, FrameworkResult] = {}
    pop_state = None
    if index is not None:
        pop_state = popri_classify(index.value, req.analyte, req.sex)

    per_iv = norma_iv = None
    if "pop" in frameworks:
        iv = pop_interval(req.analyte, req.sex)
        results["pop"] = FrameworkResult(lower=iv.lower, upper=iv.upper, valid=True)
    if "per" in frameworks:
        if len(baseline) < 5:
            raise _err(422, "ineligible-history",
                       f"per needs >= 5 baseline measurements, have {len(baseline)}")
        try:
            per_iv, gmm_model = select_perri(baseline)
        except PerRiIneligibleError as exc:
            raise _err(422, "ineligible-history", str(exc))
        valid = perri_setpoint_valid(gmm_model, per_iv, req.analyte, req.sex)
        if not valid:
            warnings.append("per setpoint falls outside the population range")
        results["per"] = FrameworkResult(lower=per_iv.lower, upper=per_iv.upper, valid=valid)
    if "norma" in frameworks:
        if model is None:
            raise _err(503, "checkpoint-missing", "no model checkpoint loaded")
        if len(baseline) == 0:
            raise _err(422, "empty-history", "norma needs at least one measurement")
        if req.config_preset and req.config_preset != model.meta.get("preset"):
            warnings.append(
                f"requested preset {req.config_preset!r} differs from loaded checkpoint")
        tokens = build_tokens(baseline, NORMAL, horizon, model.config)
        if tokens.truncated:
            warnings.append(f"history truncated to most recent {model.config.max_seq_len}")
        pred = model.predict_tokens(tokens)
        norma_iv, degenerate = norma_interval(pred)
        if degenerate:
            warnings.append("degenerate interval (near-zero predicted spread)")
        results["norma"] = FrameworkResult(lower=norma_iv.lower, upper=norma_iv.upper,
                                           valid=True, point_forecast=pred.point())

    if index is not None:
        flags = classify_three_way(index.value, pop_state,
                                   per_iv if "per" in results else None,
                                   norma_iv if "norma" in results else None)
        for fw, flag in flags.items():
            if fw in results:
                results[fw].flag_abnormal = flag

    from .cohort import format_timestamp
    return InterpretResponse(
        analyte=req.analyte,
        unit=spec.unit,
        canonical_history=[CanonicalPoint(timestamp=format_timestamp(m.time), value=m.value)
                           for m in history],
        latest_value=index.value if index is not None else None,
        horizon_days=horizon,
        frameworks=results,
        warnings=warnings,
    )


def create_app(model: NormaModel | None = None, ckpt_path: str | Path | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="norma reference-interval service", version="0.1.0")

    if model is None:
        path = ckpt_path or os.environ.get("NORMA_CKPT")
        if path and Path(path).exists():
            from .checkpoint import load_checkpoint
            model = load_checkpoint(path)
    app.state.model = model

    @app.get("/v1/analytes", response_model=list[AnalyteOut])
    def list_analytes():
        return [AnalyteOut(**vars(spec)) for _, spec in sorted(ANALYTES.items())]

    @app.get("/v1/analytes/{code}", response_model=AnalyteOut)
    def one_analyte(code: str):
        if code not in ANALYTES:
            raise _err(404, "unknown-analyte", f"analyte {code!r} not found")
        return AnalyteOut(**vars(ANALYTES[code]))

    @app.post("/v1/interpret", response_model=InterpretResponse)
    def interpret_endpoint(req: InterpretRequest):
        return interpret(req, app.state.model)

    @app.post("/v1/sweep", response_model=list[SweepRecordOut])
    def sweep_endpoint(req: SweepRequest):
        if req.feature not in SWEEP_FEATURES:
            raise _err(400, "unknown-feature",
                       f"feature must be one of {SWEEP_FEATURES}")
        if app.state.model is None:
            raise _err(503, "checkpoint-missing", "no model checkpoint loaded")
        history = _parse_history(req.base)
        if not history:
            raise _err(422, "empty-history", "sweep needs at least one measurement")
        patient = Patient("request", req.base.sex, req.base.age)
        series = LabSeries(patient, req.base.analyte, tuple(history))
        horizon = req.base.horizon_days if req.base.horizon_days is not None else DEFAULT_HORIZON_DAYS
        records = sweep_base_case(app.state.model, series, horizon, req.feature, req.grid)
        return [SweepRecordOut(analyte=r.analyte, feature=r.feature,
                               value=r.value, median=r.median,
                               interval_width=r.interval_width,
                               pct_width_change=r.pct_width_change)
                for r in records]

    ui = ui_dir or os.environ.get("NORMA_UI_DIR")
    if ui is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui = candidate if candidate.exists() else None
    if ui and Path(ui).exists():
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app
