"""Training loop with patient-level splits and analyte-balanced sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cohort import LabSeries, SECONDS_PER_DAY
from .gmm import seed_from
from .model import (
    ModelConfig, NormaModel, TokenSequence, build_tokens, collate,
    forward_batch, gaussian_nll_graph, init_params, pinball_loss_graph,
)

MIN_PREFIX = 2   # targets need at least two prior measurements


@dataclass(frozen=True)
class TrainPlan:
    fractions: tuple[float, float, float] = (0.70, 0.10, 0.20)
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    balance_temperature: float = 1.0
    grad_clip: float = 100.0
    max_val_examples: int = 4000
    # halve the step size when validation stalls; tail quantiles need the
    # small steps to settle instead of jittering around their optimum
    lr_decay: float = 0.5
    lr_decay_patience: int = 3
    min_lr: float = 5e-5

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def patient_split(patient_ids, seed: int, fractions=(0.70, 0.10, 0.20)):
    """Deterministic patient-level partition: hash-order then prefix cuts."""
    ids = sorted(set(patient_ids))
    if len(ids) < 3:
        raise ValueError("need at least 3 patients to split")
    ids.sort(key=lambda pid: seed_from(seed, pid))
    n = len(ids)
    c1 = round(fractions[0] * n)
    c2 = round((fractions[0] + fractions[1]) * n)
    return set(ids[:c1]), set(ids[c1:c2]), set(ids[c2:])


def analyte_weights(sequences: list, temperature: float = 1.0) -> np.ndarray:
    """Per-sequence sampling weights proportional to analyte-count^-temperature."""
    analytes = [s.analyte for s in sequences]
    counts: dict[str, int] = {}
    for a in analytes:
        counts[a] = counts.get(a, 0) + 1
    w = np.array([counts[a] ** (-temperature) for a in analytes], dtype=np.float64)
    return w / w.sum()


@dataclass
class TrainExample:
    tokens: TokenSequence
    target: float
    analyte: str


def teacher_forced_examples(series_list: list[LabSeries], config: ModelConfig) -> list[TrainExample]:
    """Each position t predicts measurement t from the true prefix 1..t-1."""
    examples = []
    for s in series_list:
        ms = s.measurements
        for t in range(MIN_PREFIX, len(ms)):
            prefix = LabSeries(s.patient, s.analyte, ms[:t],
                               s.states[:t] if s.states else ())
            target = ms[t]
            horizon = (target.time - ms[t - 1].time) / SECONDS_PER_DAY
            state = _measurement_state(s, t)
            tokens = build_tokens(prefix, state, horizon, config)
            examples.append(TrainExample(tokens, target.value, s.analyte))
    return examples


def _measurement_state(series: LabSeries, idx: int) -> str:
    if series.states:
        return series.states[idx]
    from .reference import popri_classify
    return popri_classify(series.measurements[idx].value, series.analyte, series.patient.sex)


class Adam:
    def __init__(self, params: dict[str, ad.Tensor], plan: TrainPlan):
        self.params = params
        self.plan = plan
        self.lr = plan.learning_rate
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self):
        plan = self.plan
        self.t += 1
        norm_sq = 0.0
        for p in self.params.values():
            if p.grad is not None:
                norm_sq += float((p.grad * p.grad).sum())
        scale = 1.0
        gnorm = norm_sq ** 0.5
        if plan.grad_clip and gnorm > plan.grad_clip:
            scale = plan.grad_clip / gnorm
        b1c = 1.0 - plan.beta1 ** self.t
        b2c = 1.0 - plan.beta2 ** self.t
        for k, p in self.params.items():
            g = (p.grad if p.grad is not None else np.zeros_like(p.data)) * scale
            self.m[k] = plan.beta1 * self.m[k] + (1 - plan.beta1) * g
            self.v[k] = plan.beta2 * self.v[k] + (1 - plan.beta2) * g * g
            p.data -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + plan.adam_eps)


def _normalized_targets(examples: list[TrainExample]) -> np.ndarray:
    out = np.empty(len(examples))
    for i, e in enumerate(examples):
        if e.tokens.norm_sd is not None:
            out[i] = (e.target - e.tokens.norm_mean) / e.tokens.norm_sd
        else:
            out[i] = e.target
    return out


def _softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(max(y, 1e-3))))


def warm_start_head(params, config: ModelConfig, examples: list[TrainExample]) -> None:
    """Initialize the output-head bias at the empirical target statistics.

    Adam's per-step size is bounded by the learning rate, so a zero-started
    head would need tens of thousands of steps just to reach the raw value
    scale (~10-100 units); starting at the marginal moments/quantiles leaves
    only the conditional structure to learn.
    """
    t = _normalized_targets(examples)
    b = params["b_head"].data
    if config.head == "gaussian":
        b[0] = t.mean()
        b[1] = np.log(t.var() + 1e-12)
    else:
        qs = np.quantile(t, config.quantile_levels)
        b[0] = qs[0]
        for i in range(1, len(qs)):
            b[i] = _softplus_inv(qs[i] - qs[i - 1])


def _batch_loss(examples: list[TrainExample], params, config) -> ad.Tensor:
    targets = np.array([e.target for e in examples])
    batch = collate([e.tokens for e in examples], config, targets)
    # loss lives in normalized-target space when within-sequence norm is on,
    # so high-spread sequences do not dominate the gradient
    out = forward_batch(batch, params, config, denormalize=False)
    if batch.norm_sd is not None:
        targets = (targets - batch.norm_mean) / batch.norm_sd
    if config.head == "gaussian":
        return gaussian_nll_graph(out, targets)
    return pinball_loss_graph(out, targets, config.quantile_levels)


def _eval_loss(examples, params, config, batch_size=256) -> float:
    if not examples:
        return float("nan")
    total = 0.0
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        total += float(_batch_loss(chunk, params, config).data) * len(chunk)
    return total / len(examples)


@dataclass
class TrainResult:
    model: NormaModel
    log: list[tuple[int, str, float]] = field(default_factory=list)
    best_val: float = float("nan")
    aborted: bool = False


def train(config: ModelConfig, series_list: list[LabSeries], plan: TrainPlan,
          init_seed: int | None = None) -> TrainResult:
    """Adam on the configured loss with early stopping on validation loss.

    The patient-level split keeps every series of a patient in one
    partition; training batches are drawn by analyte-balanced weighted
    sampling. Returns the best-validation checkpoint; a NaN loss aborts
    with the last finite parameters.
    """
    if not series_list:
        raise ValueError("empty training set")
    train_ids, val_ids, _ = patient_split(
        [s.patient.id for s in series_list], plan.seed, plan.fractions)
    train_series = [s for s in series_list if s.patient.id in train_ids]
    val_series = [s for s in series_list if s.patient.id in val_ids]
    if not train_series:
        raise ValueError("no training series after split")

    train_ex = teacher_forced_examples(train_series, config)
    val_ex = teacher_forced_examples(val_series, config)
    rng = np.random.default_rng(plan.seed)
    if len(val_ex) > plan.max_val_examples:
        pick = rng.choice(len(val_ex), size=plan.max_val_examples, replace=False)
        val_ex = [val_ex[i] for i in sorted(pick)]

    weights = analyte_weights(train_ex, plan.balance_temperature)
    params = init_params(config, plan.seed if init_seed is None else init_seed)
    warm_start_head(params, config, train_ex)
    opt = Adam(params, plan)

    log: list[tuple[int, str, float]] = []
    best_val = float("inf")
    best_params = {k: v.data.copy() for k, v in params.items()}
    last_finite = {k: v.data.copy() for k, v in params.items()}
    stale = 0
    step = 0
    aborted = False
    steps_per_epoch = max(1, len(train_ex) // plan.batch_size)

    for _epoch in range(plan.max_epochs):
        epoch_loss = 0.0
        for _ in range(steps_per_epoch):
            idx = rng.choice(len(train_ex), size=plan.batch_size, replace=True, p=weights)
            batch = [train_ex[i] for i in idx]
            ad.zero_grads(params.values())
            loss = _batch_loss(batch, params, config)
            lval = float(loss.data)
            if not np.isfinite(lval):
                aborted = True
                break
            last_finite = {k: v.data.copy() for k, v in params.items()}
            ad.backward(loss)
            opt.step()
            epoch_loss += lval
            step += 1
            log.append((step, "train", lval))
        if aborted:
            break
        vloss = _eval_loss(val_ex, params, config) if val_ex else epoch_loss / steps_per_epoch
        log.append((step, "val", vloss))
        if vloss < best_val - 1e-12:
            best_val = vloss
            best_params = {k: v.data.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= plan.patience:
                break
            if plan.lr_decay < 1.0 and stale % plan.lr_decay_patience == 0:
                opt.lr = max(plan.min_lr, opt.lr * plan.lr_decay)

    final = last_finite if aborted else best_params
    model_params = {k: ad.Tensor(v, requires_grad=True) for k, v in final.items()}
    meta = {
        "trained": True,
        "aborted": aborted,
        "best_val_loss": None if not np.isfinite(best_val) else best_val,
        "seed": plan.seed,
        "n_train_series": len(train_series),
    }
    return TrainResult(NormaModel(config, model_params, meta), log, best_val, aborted)


def write_training_log(log, path):
    with open(path, "w") as fh:
        fh.write("step,split,loss\n")
        for step, split, loss in log:
            fh.write(f"{step},{split},{loss!r}\n")
