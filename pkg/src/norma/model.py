"""Conditional decoder transformer over lab-value token sequences.

A sequence is [context] + history tokens + [query]: the context token sums
sex/age/analyte embeddings, each history token sums a value projection, a
state embedding, and an inter-measurement time encoding, and the query
token sums the queried future state embedding and a horizon encoding. A
causally masked pre-norm decoder stack reads the sequence; the output head
at the query position parameterizes the next-value distribution either as
(mean, log-variance) or as five non-crossing quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .analytes import ANALYTES
from .autodiff import NanError, Tensor
from .cohort import LabSeries, SECONDS_PER_DAY
from .reference import NORMAL, ReferenceInterval, popri_classify

ANALYTE_INDEX = {code: i for i, code in enumerate(sorted(ANALYTES))}
SEX_INDEX = {"F": 0, "M": 1}
TERNARY_INDEX = {"low": 0, "normal": 1, "high": 2}
N_AGE_BINS = 8
INTERVAL_Z = 1.96

DEFAULT_QUANTILES = (0.025, 0.25, 0.50, 0.75, 0.975)


@dataclass(frozen=True)
class ModelConfig:
    time_encoding: str = "time2vec"          # "time2vec" | "log_delta_t"
    state_encoding: str = "ternary"          # "binary" | "ternary"
    value_encoding: str = "raw"              # "raw" | "within_sequence_norm"
    age_encoding: str = "raw_linear"         # "raw_linear" | "decade_bins"
    context_token: str = "merged_into_first"  # "merged_into_first" | "dedicated"
    head: str = "gaussian"                   # "gaussian" | "quantile"
    d_model: int = 64
    n_layers: int = 3
    n_heads: int = 4
    max_seq_len: int = 128
    quantile_levels: tuple[float, ...] = DEFAULT_QUANTILES

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        q = self.quantile_levels
        if list(q) != sorted(q) or not all(0 < t < 1 for t in q):
            raise ValueError("quantile_levels must be sorted within (0, 1)")
        if 0.5 not in q or abs((q[0] + q[-1]) - 1.0) > 1e-12:
            raise ValueError("quantile_levels need the median and a symmetric outer pair")
        for name, value, options in [
            ("time_encoding", self.time_encoding, ("time2vec", "log_delta_t")),
            ("state_encoding", self.state_encoding, ("binary", "ternary")),
            ("value_encoding", self.value_encoding, ("raw", "within_sequence_norm")),
            ("age_encoding", self.age_encoding, ("raw_linear", "decade_bins")),
            ("context_token", self.context_token, ("merged_into_first", "dedicated")),
            ("head", self.head, ("gaussian", "quantile")),
        ]:
            if value not in options:
                raise ValueError(f"{name} must be one of {options}, got {value!r}")

    @property
    def n_states(self) -> int:
        return 3 if self.state_encoding == "ternary" else 2


PRESETS = {
    "chs-default": ModelConfig(
        time_encoding="time2vec", state_encoding="ternary", value_encoding="raw",
        age_encoding="raw_linear", context_token="merged_into_first", head="gaussian",
    ),
    "eicu-default": ModelConfig(
        time_encoding="log_delta_t", state_encoding="ternary",
        value_encoding="within_sequence_norm", age_encoding="decade_bins",
        context_token="dedicated", head="quantile",
    ),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides) if overrides else PRESETS[name]


def state_index(state: str, config: ModelConfig) -> int:
    if config.state_encoding == "ternary":
        return TERNARY_INDEX[state]
    return 0 if state == NORMAL else 1


def age_bin(age: float) -> int:
    if age < 30:
        return 0
    return min(N_AGE_BINS - 1, int((age - 30) // 10) + 1)


@dataclass(frozen=True)
class TokenSequence:
    analyte: str
    analyte_idx: int
    sex_idx: int
    age: float
    state_idx: np.ndarray          # [T]
    values_raw: np.ndarray         # [T] canonical units
    values_model: np.ndarray       # [T] raw or within-sequence normalized
    delta_days: np.ndarray         # [T], first entry 0
    days_since_first: np.ndarray   # [T]
    horizon_days: float
    query_state: str
    query_state_idx: int
    norm_mean: float | None        # set when within_sequence_norm is active
    norm_sd: float | None
    truncated: bool

    @property
    def T(self) -> int:
        return len(self.values_raw)


# Degenerate prefixes: a constant history has zero spread, a singleton has
# no spread estimate at all. The former keeps a tiny scale so intervals
# collapse honestly; the latter falls back to unit scale.
_SD_FLOOR_REL = 1e-8


def sequence_norm_params(values: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(values))
    if values.size < 2:
        return m, 1.0
    s = float(np.std(values, ddof=1))
    if s <= 0.0:
        s = _SD_FLOOR_REL * max(1.0, abs(m))
    return m, s


def build_tokens(
    series: LabSeries,
    query_state: str,
    horizon_days: float,
    config: ModelConfig,
) -> TokenSequence:
    """Assemble the constant inputs for one forward pass."""
    if len(series) == 0:
        raise ValueError("empty history")
    if horizon_days < 0:
        raise ValueError("horizon must be >= 0")
    if series.analyte not in ANALYTE_INDEX:
        raise KeyError(f"unknown analyte {series.analyte!r}")

    ms = series.measurements
    states = series.states
    truncated = False
    if len(ms) > config.max_seq_len:
        ms = ms[-config.max_seq_len:]
        states = states[-config.max_seq_len:] if states else states
        truncated = True

    values = np.array([m.value for m in ms], dtype=np.float64)
    times_days = np.array([m.time for m in ms], dtype=np.float64) / SECONDS_PER_DAY
    if not states:
        sex = series.patient.sex
        states = tuple(popri_classify(v, series.analyte, sex) for v in values)

    delta = np.diff(times_days, prepend=times_days[0])
    delta[0] = 0.0

    norm_mean = norm_sd = None
    if config.value_encoding == "within_sequence_norm":
        norm_mean, norm_sd = sequence_norm_params(values)
        values_model = (values - norm_mean) / norm_sd
    else:
        values_model = values

    return TokenSequence(
        analyte=series.analyte,
        analyte_idx=ANALYTE_INDEX[series.analyte],
        sex_idx=SEX_INDEX[series.patient.sex],
        age=float(series.patient.age),
        state_idx=np.array([state_index(s, config) for s in states], dtype=np.int64),
        values_raw=values,
        values_model=values_model,
        delta_days=delta,
        days_since_first=times_days - times_days[0],
        horizon_days=float(horizon_days),
        query_state=query_state,
        query_state_idx=state_index(query_state, config),
        norm_mean=norm_mean,
        norm_sd=norm_sd,
        truncated=truncated,
    )


# ------------------------------------------------------------------ params

def _rand(rng, *shape, scale=0.02):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    d = config.d_model
    p: dict[str, Tensor] = {}
    p["e_sex"] = _rand(rng, 2, d)
    p["e_analyte"] = _rand(rng, len(ANALYTE_INDEX), d)
    p["e_state"] = _rand(rng, config.n_states, d)
    if config.age_encoding == "decade_bins":
        p["e_age_bins"] = _rand(rng, N_AGE_BINS, d)
    else:
        p["w_age"] = _rand(rng, 1, d, scale=0.002)
        p["b_age"] = Tensor(np.zeros(d), requires_grad=True)
    p["w_val"] = _rand(rng, 1, d, scale=0.05)
    p["b_val"] = Tensor(np.zeros(d), requires_grad=True)
    for enc in ("f_tau", "f_h"):
        p[f"{enc}.w_lin"] = _rand(rng, 1, 1, scale=0.1)
        p[f"{enc}.b_lin"] = Tensor(np.zeros(1), requires_grad=True)
        p[f"{enc}.w_per"] = _rand(rng, 1, d - 1, scale=0.5)
        p[f"{enc}.b_per"] = Tensor(rng.uniform(0, 2 * np.pi, size=(d - 1,)), requires_grad=True)
        p[f"{enc}.w_out"] = _rand(rng, d, d)
        p[f"{enc}.b_out"] = Tensor(np.zeros(d), requires_grad=True)
    for l in range(config.n_layers):
        pre = f"layer{l}."
        p[pre + "ln1_g"] = Tensor(np.ones(d), requires_grad=True)
        p[pre + "ln1_b"] = Tensor(np.zeros(d), requires_grad=True)
        p[pre + "w_qkv"] = _rand(rng, d, 3 * d)
        p[pre + "b_qkv"] = Tensor(np.zeros(3 * d), requires_grad=True)
        p[pre + "w_proj"] = _rand(rng, d, d)
        p[pre + "b_proj"] = Tensor(np.zeros(d), requires_grad=True)
        p[pre + "ln2_g"] = Tensor(np.ones(d), requires_grad=True)
        p[pre + "ln2_b"] = Tensor(np.zeros(d), requires_grad=True)
        p[pre + "w_mlp1"] = _rand(rng, d, 4 * d)
        p[pre + "b_mlp1"] = Tensor(np.zeros(4 * d), requires_grad=True)
        p[pre + "w_mlp2"] = _rand(rng, 4 * d, d)
        p[pre + "b_mlp2"] = Tensor(np.zeros(d), requires_grad=True)
    p["lnf_g"] = Tensor(np.ones(d), requires_grad=True)
    p["lnf_b"] = Tensor(np.zeros(d), requires_grad=True)
    out_dim = 2 if config.head == "gaussian" else len(config.quantile_levels)
    p["w_head"] = _rand(rng, d, out_dim)
    p["b_head"] = Tensor(np.zeros(out_dim), requires_grad=True)
    return p


# ----------------------------------------------------------------- forward

def _time_encode(p, prefix: str, u: np.ndarray) -> Tensor:
    # u: [B, L, 1] scalar time feature per token
    uc = Tensor(u)
    lin = ad.linear(uc, p[f"{prefix}.w_lin"], p[f"{prefix}.b_lin"])
    per = ad.sin(ad.linear(uc, p[f"{prefix}.w_per"], p[f"{prefix}.b_per"]))
    feats = ad.concat([lin, per], axis=-1)
    return ad.linear(feats, p[f"{prefix}.w_out"], p[f"{prefix}.b_out"])


def _layer_norm_affine(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.mul(ad.layer_norm(x), g), b)


def _attention(x: Tensor, p, pre: str, config: ModelConfig, key_mask: np.ndarray) -> Tensor:
    B, L, d = x.shape
    H = config.n_heads
    hd = d // H
    qkv = ad.linear(x, p[pre + "w_qkv"], p[pre + "b_qkv"])
    q = ad.slice_(qkv, (slice(None), slice(None), slice(0, d)))
    k = ad.slice_(qkv, (slice(None), slice(None), slice(d, 2 * d)))
    v = ad.slice_(qkv, (slice(None), slice(None), slice(2 * d, 3 * d)))
    q = ad.transpose(ad.reshape(q, (B, L, H, hd)), (0, 2, 1, 3))
    k = ad.transpose(ad.reshape(k, (B, L, H, hd)), (0, 2, 1, 3))
    v = ad.transpose(ad.reshape(v, (B, L, H, hd)), (0, 2, 1, 3))
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(hd))
    weights = ad.softmax_causal_masked(scores, key_mask=key_mask)
    ctx = ad.matmul(weights, v)
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (B, L, d))
    return ad.linear(ctx, p[pre + "w_proj"], p[pre + "b_proj"])


@dataclass
class TokenBatch:
    """Left-padded batch; the query token is always the last position."""
    hist_len: int                   # padded history length
    seq_len: int
    valid: np.ndarray               # [B, L] bool
    state_idx: np.ndarray           # [B, Th]
    values_model: np.ndarray        # [B, Th]
    time_feat: np.ndarray           # [B, Th] encoder input (abs days or log1p delta)
    sex_idx: np.ndarray
    analyte_idx: np.ndarray
    age: np.ndarray
    age_bin_idx: np.ndarray
    query_state_idx: np.ndarray
    horizon_feat: np.ndarray        # [B]
    norm_mean: np.ndarray | None
    norm_sd: np.ndarray | None
    targets: np.ndarray | None = None


def collate(tokens: list[TokenSequence], config: ModelConfig,
            targets: np.ndarray | None = None) -> TokenBatch:
    B = len(tokens)
    Th = max(t.T for t in tokens)
    state_idx = np.zeros((B, Th), dtype=np.int64)
    values = np.zeros((B, Th))
    time_feat = np.zeros((B, Th))
    valid_hist = np.zeros((B, Th), dtype=bool)
    for i, tk in enumerate(tokens):
        T = tk.T
        state_idx[i, Th - T:] = tk.state_idx
        values[i, Th - T:] = tk.values_model
        raw_time = tk.days_since_first if config.time_encoding == "time2vec" else np.log1p(tk.delta_days)
        time_feat[i, Th - T:] = raw_time
        valid_hist[i, Th - T:] = True

    dedicated = config.context_token == "dedicated"
    L = Th + (2 if dedicated else 1)
    valid = np.ones((B, L), dtype=bool)
    valid[:, (1 if dedicated else 0):(1 if dedicated else 0) + Th] = valid_hist

    horizon = np.array([tk.horizon_days for tk in tokens])
    if config.time_encoding == "log_delta_t":
        horizon = np.log1p(horizon)
    norm_mean = norm_sd = None
    if config.value_encoding == "within_sequence_norm":
        norm_mean = np.array([tk.norm_mean for tk in tokens])
        norm_sd = np.array([tk.norm_sd for tk in tokens])
    return TokenBatch(
        hist_len=Th,
        seq_len=L,
        valid=valid,
        state_idx=state_idx,
        values_model=values,
        time_feat=time_feat,
        sex_idx=np.array([tk.sex_idx for tk in tokens], dtype=np.int64),
        analyte_idx=np.array([tk.analyte_idx for tk in tokens], dtype=np.int64),
        age=np.array([tk.age for tk in tokens]),
        age_bin_idx=np.array([age_bin(tk.age) for tk in tokens], dtype=np.int64),
        query_state_idx=np.array([tk.query_state_idx for tk in tokens], dtype=np.int64),
        horizon_feat=horizon,
        norm_mean=norm_mean,
        norm_sd=norm_sd,
        targets=targets,
    )


def forward_batch(batch: TokenBatch, params: dict[str, Tensor], config: ModelConfig,
                  denormalize: bool = True, trace: list | None = None) -> Tensor:
    """Run the decoder over a collated batch; returns head output [B, out_dim].

    Gaussian head output columns are (mu, log_var); quantile head output is
    the non-crossing quantile vector. With within-sequence normalization the
    output is denormalized unless denormalize=False (training computes the
    loss in normalized-target space so every sequence weighs equally).
    When trace is a list, the post-block hidden states are appended to it.
    """
    p = params
    B, Th, L = batch.state_idx.shape[0], batch.hist_len, batch.seq_len

    # context token [B, d]
    z_c = ad.embedding_lookup(p["e_sex"], batch.sex_idx)
    z_c = ad.add(z_c, ad.embedding_lookup(p["e_analyte"], batch.analyte_idx))
    if config.age_encoding == "decade_bins":
        z_c = ad.add(z_c, ad.embedding_lookup(p["e_age_bins"], batch.age_bin_idx))
    else:
        age_in = Tensor(batch.age[:, None])
        z_c = ad.add(z_c, ad.linear(age_in, p["w_age"], p["b_age"]))

    # history tokens [B, Th, d]
    h = ad.linear(Tensor(batch.values_model[:, :, None]), p["w_val"], p["b_val"])
    h = ad.add(h, ad.embedding_lookup(p["e_state"], batch.state_idx))
    h = ad.add(h, _time_encode(p, "f_tau", batch.time_feat[:, :, None]))

    # query token [B, 1, d]
    zq = ad.embedding_lookup(p["e_state"], batch.query_state_idx[:, None])
    zq = ad.add(zq, _time_encode(p, "f_h", batch.horizon_feat[:, None, None]))

    z_c3 = ad.reshape(z_c, (B, 1, z_c.shape[-1]))
    if config.context_token == "dedicated":
        x = ad.concat([z_c3, h, zq], axis=1)
    else:
        ones = np.ones((B, Th, 1))
        z_c_b = ad.matmul(Tensor(ones), z_c3)  # broadcast context across history
        x = ad.concat([ad.add(h, z_c_b), zq], axis=1)

    key_mask = batch.valid[:, None, None, :]
    for l in range(config.n_layers):
        pre = f"layer{l}."
        a = _attention(_layer_norm_affine(x, p[pre + "ln1_g"], p[pre + "ln1_b"]),
                       p, pre, config, key_mask)
        x = ad.add(x, a)
        m = _layer_norm_affine(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
        m = ad.linear(ad.gelu(ad.linear(m, p[pre + "w_mlp1"], p[pre + "b_mlp1"])),
                      p[pre + "w_mlp2"], p[pre + "b_mlp2"])
        x = ad.add(x, m)
        if np.isnan(x.data).any():
            raise NanError(f"NaN in decoder output at layer {l}")
        if trace is not None:
            trace.append(x.data.copy())

    x = _layer_norm_affine(x, p["lnf_g"], p["lnf_b"])
    hq = ad.slice_(x, (slice(None), -1, slice(None)))      # query position
    out = ad.linear(hq, p["w_head"], p["b_head"])

    if config.head == "quantile":
        base = ad.slice_(out, (slice(None), slice(0, 1)))
        qs = [base]
        for i in range(1, out.shape[-1]):
            inc = ad.softplus(ad.slice_(out, (slice(None), slice(i, i + 1))))
            qs.append(ad.add(qs[-1], inc))
        out = ad.concat(qs, axis=-1)
        if denormalize and batch.norm_sd is not None:
            s = np.broadcast_to(batch.norm_sd[:, None], out.shape).copy()
            m_ = np.broadcast_to(batch.norm_mean[:, None], out.shape).copy()
            out = ad.add(ad.mul(out, Tensor(s)), Tensor(m_))
    else:
        if denormalize and batch.norm_sd is not None:
            s = batch.norm_sd[:, None]
            scale = np.concatenate([s, np.ones_like(s)], axis=1)
            shift = np.concatenate([batch.norm_mean[:, None], 2.0 * np.log(s)], axis=1)
            out = ad.add(ad.mul(out, Tensor(scale)), Tensor(shift))
    if np.isnan(out.data).any():
        raise NanError("NaN in head output")
    return out


@dataclass(frozen=True)
class PredictiveDistribution:
    kind: str                                   # "gaussian" | "quantile"
    query_state: str
    mu: float | None = None
    log_var: float | None = None
    quantiles: dict[float, float] = field(default_factory=dict)
    norm_mean: float | None = None
    norm_sd: float | None = None

    def point(self) -> float:
        if self.kind == "gaussian":
            return self.mu
        return self.quantiles[0.5]

    def sigma(self) -> float:
        if self.kind != "gaussian":
            raise ValueError("sigma is defined for the gaussian head only")
        return math.exp(0.5 * self.log_var)


def distribution_from_output(row: np.ndarray, tokens: TokenSequence,
                             config: ModelConfig) -> PredictiveDistribution:
    if config.head == "gaussian":
        return PredictiveDistribution(
            kind="gaussian", query_state=tokens.query_state,
            mu=float(row[0]), log_var=float(row[1]),
            norm_mean=tokens.norm_mean, norm_sd=tokens.norm_sd,
        )
    quantiles = {lvl: float(v) for lvl, v in zip(config.quantile_levels, row)}
    return PredictiveDistribution(
        kind="quantile", query_state=tokens.query_state, quantiles=quantiles,
        norm_mean=tokens.norm_mean, norm_sd=tokens.norm_sd,
    )


def forward(tokens: TokenSequence, params: dict[str, Tensor],
            config: ModelConfig) -> PredictiveDistribution:
    batch = collate([tokens], config)
    out = forward_batch(batch, params, config)
    return distribution_from_output(out.data[0], tokens, config)


# ------------------------------------------------------------------ losses

def gaussian_nll(mu: float, log_var: float, x_next: float) -> float:
    """0.5 * (log sigma^2 + (x - mu)^2 / sigma^2); the 2pi constant is omitted."""
    return 0.5 * (log_var + (x_next - mu) ** 2 * math.exp(-log_var))


def pinball_loss(quantiles: dict[float, float], x_next: float) -> float:
    """Unweighted sum of the pinball terms over the predicted levels."""
    total = 0.0
    for tau, q in quantiles.items():
        total += tau * max(0.0, x_next - q) + (1.0 - tau) * max(0.0, q - x_next)
    return total


def gaussian_nll_graph(out: Tensor, targets: np.ndarray) -> Tensor:
    mu = ad.slice_(out, (slice(None), slice(0, 1)))
    lv = ad.slice_(out, (slice(None), slice(1, 2)))
    err = ad.sub(Tensor(targets[:, None]), mu)
    sq = ad.mul(err, err)
    inv_var = ad.exp(ad.mul(lv, -1.0))
    nll = ad.mul(ad.add(lv, ad.mul(sq, inv_var)), 0.5)
    return ad.mean_(nll)


def pinball_loss_graph(out: Tensor, targets: np.ndarray, levels: tuple[float, ...]) -> Tensor:
    # r * (tau - [r <= 0]) equals the pinball value and carries the
    # tau-1 subgradient on the kink.
    y = np.broadcast_to(targets[:, None], out.shape).copy()
    r = ad.sub(Tensor(y), out)
    taus = np.broadcast_to(np.array(levels)[None, :], out.shape)
    w = taus - (r.data <= 0.0)
    per_term = ad.mul(r, Tensor(w))
    return ad.mul(ad.mean_(per_term), float(len(levels)))


# --------------------------------------------------------------- intervals

def norma_interval(pred: PredictiveDistribution) -> tuple[ReferenceInterval, bool]:
    """95% prediction interval under normal-state conditioning.

    Returns (interval, degenerate); degenerate marks a near-zero width.
    Raises if the prediction was not conditioned on a normal future state.
    """
    if pred.query_state != NORMAL:
        raise ValueError(f"interval requires query_state=normal, got {pred.query_state!r}")
    if pred.kind == "gaussian":
        sigma = pred.sigma()
        lo, hi = pred.mu - INTERVAL_Z * sigma, pred.mu + INTERVAL_Z * sigma
        center = pred.mu
    else:
        levels = sorted(pred.quantiles)
        lo, hi = pred.quantiles[levels[0]], pred.quantiles[levels[-1]]
        center = pred.quantiles[0.5]
    degenerate = (hi - lo) < 1e-12 + 1e-9 * abs(center)
    return ReferenceInterval(lo, hi, "norma", provenance=f"head={pred.kind}"), degenerate


class NormaModel:
    """Config + parameters + metadata bundle for inference."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor],
                 meta: dict | None = None):
        self.config = config
        self.params = params
        self.meta = meta or {}

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, meta: dict | None = None):
        return cls(config, init_params(config, seed), meta)

    @property
    def trained(self) -> bool:
        return bool(self.meta.get("trained", False))

    def predict_tokens(self, tokens: TokenSequence) -> PredictiveDistribution:
        return forward(tokens, self.params, self.config)

    def predict_batch(self, tokens: list[TokenSequence]) -> list[PredictiveDistribution]:
        batch = collate(tokens, self.config)
        out = forward_batch(batch, self.params, self.config)
        return [distribution_from_output(out.data[i], tk, self.config)
                for i, tk in enumerate(tokens)]


def predict(
    model: NormaModel,
    series: LabSeries,
    horizon_days: float,
    query_state: str = NORMAL,
) -> tuple[float, ReferenceInterval | None, PredictiveDistribution, list[str]]:
    """build_tokens -> forward -> norma_interval, with the median/mu point forecast."""
    tokens = build_tokens(series, query_state, horizon_days, model.config)
    pred = model.predict_tokens(tokens)
    warnings = []
    if tokens.truncated:
        warnings.append(f"history truncated to most recent {model.config.max_seq_len}")
    interval = None
    if query_state == NORMAL:
        interval, degenerate = norma_interval(pred)
        if degenerate:
            warnings.append("degenerate interval (near-zero predicted spread)")
    return pred.point(), interval, pred, warnings
