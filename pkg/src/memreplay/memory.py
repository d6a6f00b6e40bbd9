"""Per-sample retention dynamics.

Each tracked sample carries a memory strength ``m`` in (0, 1] that decays
multiplicatively under a hazard rate, and a stability ``s`` that divides the
hazard and grows at every review.  The hazard couples a baseline decay rate
with a difficulty signal derived from the sample's denoised, normalized loss:

    h = (alpha + gamma_d * phi(norm_loss)) / s
    m <- m * exp(-h)                      per step
    m <- m * exp(-h * dt)                 per epoch, piecewise-constant h

At a review the strength resets to 1 and stability receives a saturating,
spacing- and error-modulated increment:

    s <- clip(s + eta_s * (s_max - s)**beta_s * exp(-rho * dt)
                  * (1 - m_pre)**gamma_s + eps, s_min, s_max)

All operations are plain functions over :class:`SampleState`; they mutate the
state in place and return it.  ``retention_at`` is the one read-only query.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import ValidationError

# Retention floor: keeps m strictly positive so downstream m**-zeta weights
# stay finite while preserving ordering.
M_FLOOR = 1e-300

PHI_KINDS = ("identity", "sigmoid", "power", "log")


@dataclass
class PhiConfig:
    """Monotone difficulty mapping applied to the normalized loss.

    ``sigmoid`` (the default) concentrates sensitivity around the center
    ``c`` with slope ``k``; ``power`` and ``log`` give sub-/super-linear
    emphasis; ``identity`` passes the loss through.
    """

    kind: str = "sigmoid"
    k: float = 10.0
    c: float = 0.5
    p: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in PHI_KINDS:
            raise ValidationError(f"unknown phi kind {self.kind!r}")
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValidationError("phi slope k must be finite and > 0")
        if not (0.0 < self.c < 1.0):
            raise ValidationError("phi center c must lie in (0, 1)")
        if not (math.isfinite(self.p) and self.p > 0):
            raise ValidationError("phi power exponent p must be > 0")
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ValidationError("phi log scale kappa must be > 0")


@dataclass
class MemoryParams:
    """Constants of the sample-level dynamics.

    Defaults are the production settings: alpha=0.01, gamma_d=0.2,
    sigmoid difficulty mapping (k=10, c=0.5), EMA coefficient 0.95,
    quantile levels (0.05, 0.95), consolidation step 0.05 with saturation
    exponent 0.5, spacing sensitivity 0.01, error exponent 1.0, stability
    bounds [1, 10], and zero consolidation noise.
    """

    alpha: float = 0.01
    gamma_d: float = 0.20
    phi: PhiConfig = field(default_factory=PhiConfig)
    eta_s: float = 0.05
    beta_s: float = 0.5
    rho: float = 0.01
    gamma_s: float = 1.0
    s_min: float = 1.0
    s_max: float = 10.0
    sigma_s: float = 0.0
    beta_ema: float = 0.95
    q_lower: float = 0.05
    q_upper: float = 0.95

    def __post_init__(self):
        finite = all(
            math.isfinite(v)
            for v in (
                self.alpha, self.gamma_d, self.eta_s, self.beta_s, self.rho,
                self.gamma_s, self.s_min, self.s_max, self.sigma_s,
                self.beta_ema, self.q_lower, self.q_upper,
            )
        )
        if not finite:
            raise ValidationError("memory parameters must be finite")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if self.gamma_d < 0:
            raise ValidationError("gamma_d must be >= 0")
        if self.eta_s < 0:
            raise ValidationError("eta_s must be >= 0")
        if not (0.0 < self.beta_s <= 1.0):
            raise ValidationError("beta_s must lie in (0, 1]")
        if self.rho < 0:
            raise ValidationError("rho must be >= 0")
        if self.gamma_s < 0:
            raise ValidationError("gamma_s must be >= 0")
        if not (0.0 < self.s_min <= self.s_max):
            raise ValidationError("stability bounds require 0 < s_min <= s_max")
        if self.sigma_s < 0:
            raise ValidationError("sigma_s must be >= 0")
        if not (0.0 < self.beta_ema < 1.0):
            raise ValidationError("beta_ema must lie in (0, 1)")
        if not (0.0 <= self.q_lower < self.q_upper <= 1.0):
            raise ValidationError("quantile levels require 0 <= q_lower < q_upper <= 1")


@dataclass
class SampleState:
    """Mutable retention record for one tracked sample.

    ``m`` is the memory strength as of step ``m_step`` (the step at which it
    was last materialized: first exposure, review, or epoch update).
    ``last_review_step`` anchors the inter-review interval used by
    consolidation.  ``ema_loss`` is None until the first loss report;
    ``norm_loss`` starts neutral at 0.5.
    """

    sample_id: str
    m: float = 1.0
    s: float = 1.0
    last_review_step: int = 0
    m_step: int = 0
    ema_loss: float | None = None
    norm_loss: float = 0.5
    hazard_estimate: float = 0.0

    def copy(self) -> SampleState:
        return replace(self)


class LossNormalizer:
    """Population-level running quantile normalizer for denoised losses.

    Keeps the most recent ``capacity`` EMA-loss values (shared across all
    samples) and maps new values to [0, 1] by clipping against the running
    (q_lower, q_upper) quantiles.  Quantiles are exact over the retained
    window; a sorted shadow list keeps each call cheap.
    """

    def __init__(self, q_lower: float = 0.05, q_upper: float = 0.95, capacity: int = 4096):
        if not (0.0 <= q_lower < q_upper <= 1.0):
            raise ValidationError("quantile levels require 0 <= q_lower < q_upper <= 1")
        if capacity < 2:
            raise ValidationError("normalizer capacity must be >= 2")
        self.q_lower = q_lower
        self.q_upper = q_upper
        self.capacity = capacity
        self._recent: deque[float] = deque()
        self._sorted: list[float] = []

    def __len__(self) -> int:
        return len(self._recent)

    def _quantile(self, q: float) -> float:
        # linear interpolation on the sorted window, matching numpy's default
        vals = self._sorted
        pos = q * (len(vals) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(vals) - 1)
        frac = pos - lo
        return vals[lo] * (1.0 - frac) + vals[hi] * frac

    def insert(self, value: float) -> None:
        import bisect

        if len(self._recent) >= self.capacity:
            oldest = self._recent.popleft()
            idx = bisect.bisect_left(self._sorted, oldest)
            self._sorted.pop(idx)
        self._recent.append(value)
        bisect.insort(self._sorted, value)

    def normalize(self, ema_loss: float) -> float:
        """Normalize against the current window, then record the value."""
        if not math.isfinite(ema_loss) or ema_loss < 0:
            raise ValidationError("ema loss must be finite and >= 0")
        if len(self._sorted) < 2 or self._sorted[0] == self._sorted[-1]:
            result = 0.5
        else:
            lo = self._quantile(self.q_lower)
            hi = self._quantile(self.q_upper)
            if hi <= lo:
                result = 0.5
            else:
                result = min(1.0, max(0.0, (ema_loss - lo) / (hi - lo)))
        self.insert(ema_loss)
        return result

    def state_dict(self) -> dict:
        return {"values": list(self._recent)}

    def load_state_dict(self, payload: dict) -> None:
        self._recent.clear()
        self._sorted.clear()
        for v in payload["values"]:
            self.insert(float(v))


def phi(x: float, config: PhiConfig) -> float:
    """Monotone difficulty mapping on [0, 1]."""
    if not (0.0 <= x <= 1.0):
        raise ValidationError(f"phi input {x} outside [0, 1]")
    if config.kind == "identity":
        return x
    if config.kind == "sigmoid":
        return 1.0 / (1.0 + math.exp(-config.k * (x - config.c)))
    if config.kind == "power":
        return x ** config.p
    # log
    return math.log1p(config.kappa * x) / math.log1p(config.kappa)


def phi_array(x: np.ndarray, config: PhiConfig) -> np.ndarray:
    """Vectorized :func:`phi` for bulk updates."""
    if config.kind == "identity":
        return x
    if config.kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-config.k * (x - config.c)))
    if config.kind == "power":
        return x ** config.p
    return np.log1p(config.kappa * x) / math.log1p(config.kappa)


def update_ema_loss(state: SampleState, raw_loss: float, params: MemoryParams) -> SampleState:
    """Fold a raw loss observation into the sample's denoised loss.

    The first observation seeds the EMA with the raw value; afterwards
    ema' = beta_ema * ema + (1 - beta_ema) * raw.
    """
    if not math.isfinite(raw_loss) or raw_loss < 0:
        raise ValidationError("raw loss must be finite and >= 0")
    if state.ema_loss is None:
        state.ema_loss = raw_loss
    else:
        state.ema_loss = params.beta_ema * state.ema_loss + (1.0 - params.beta_ema) * raw_loss
    return state


def normalize_loss(normalizer: LossNormalizer, ema_loss: float) -> float:
    """Quantile-normalize a denoised loss into [0, 1] (see LossNormalizer)."""
    return normalizer.normalize(ema_loss)


def hazard(norm_loss: float, s: float, params: MemoryParams, alpha: float | None = None) -> float:
    """Per-step decay rate (alpha + gamma_d * phi(norm_loss)) / s.

    ``alpha`` overrides the shared baseline for callers that keep
    per-sample rates; the default is the shared value.
    """
    if s < params.s_min:
        raise ValidationError(f"stability {s} below s_min {params.s_min}")
    a = params.alpha if alpha is None else alpha
    return (a + params.gamma_d * phi(norm_loss, params.phi)) / s


def step_decay(state: SampleState, h: float) -> SampleState:
    """Apply one multiplicative decay step m <- m * exp(-h)."""
    if h < 0 or not math.isfinite(h):
        raise ValidationError("hazard must be finite and >= 0")
    state.m = max(state.m * math.exp(-h), M_FLOOR)
    state.m_step += 1
    return state


def retention_at(state: SampleState, query_step: int) -> float:
    """Memory strength at ``query_step`` without mutating the state.

    Uses the stored strength and the cached hazard estimate:
    m(t) = m * exp(-h_hat * (t - m_step)).  Equals the stored value when no
    time has elapsed.
    """
    if query_step < state.m_step:
        raise ValidationError(
            f"query step {query_step} precedes the state's anchor step {state.m_step}"
        )
    dt = query_step - state.m_step
    return max(state.m * math.exp(-state.hazard_estimate * dt), M_FLOOR)


def epoch_update(
    state: SampleState,
    norm_loss_epoch_end: float,
    dt_epoch: int,
    params: MemoryParams,
    alpha: float | None = None,
) -> SampleState:
    """Piecewise-constant decay over one epoch of ``dt_epoch`` steps.

    Recomputes the hazard from the epoch-end loss and the current stability,
    decays m by exp(-h * dt), and caches h for lazy retention queries.
    """
    if dt_epoch < 1:
        raise ValidationError("dt_epoch must be >= 1")
    h = hazard(norm_loss_epoch_end, state.s, params, alpha=alpha)
    state.m = max(state.m * math.exp(-h * dt_epoch), M_FLOOR)
    state.hazard_estimate = h
    state.norm_loss = norm_loss_epoch_end
    state.m_step += dt_epoch
    return state


def consolidate(
    state: SampleState,
    now_step: int,
    params: MemoryParams,
    noise: np.random.Generator | None = None,
) -> SampleState:
    """Review update: reset strength to 1 and grow stability.

    The increment saturates toward s_max, attenuates with the inter-review
    gap, scales with the forgotten fraction, and optionally carries Gaussian
    noise (sigma_s > 0 requires a generator).  Stability is clipped into
    [s_min, s_max] afterwards.
    """
    if now_step < state.last_review_step:
        raise ValidationError("review step precedes the previous review")
    dt = now_step - state.last_review_step
    m_pre = state.m
    delta = (
        params.eta_s
        * (params.s_max - state.s) ** params.beta_s
        * math.exp(-params.rho * dt)
        * (1.0 - m_pre) ** params.gamma_s
    )
    if params.sigma_s > 0:
        if noise is None:
            raise ValidationError("sigma_s > 0 requires a random generator")
        delta += params.sigma_s * float(noise.standard_normal())
    state.s = min(max(state.s + delta, params.s_min), params.s_max)
    state.m = 1.0
    state.last_review_step = now_step
    state.m_step = now_step
    return state


def time_to_threshold(
    state: SampleState, norm_loss: float, theta: float, params: MemoryParams
) -> float:
    """Steps until retention falls from 1 to ``theta`` at the current hazard.

    Returns ``inf`` when the hazard numerator is zero (the sample never
    forgets under the current parameters).
    """
    if not (0.0 < theta < 1.0):
        raise ValidationError("theta must lie in (0, 1)")
    denom = params.alpha + params.gamma_d * phi(norm_loss, params.phi)
    if denom <= 0.0:
        return math.inf
    return state.s / denom * math.log(1.0 / theta)


class RiemannGap(NamedTuple):
    epoch_log_m: float
    fine_log_m: float
    bound: float


def riemann_gap(
    hazard_fn: Callable[[float], float],
    t0: float,
    t1: float,
    fine_resolution: int,
    lipschitz: float,
) -> RiemannGap:
    """Gap between the epoch-level (right-endpoint) log-retention and a
    fine trapezoidal estimate of -integral(h), with the (L/2)*dt^2 bound.

    Verification utility for the epoch approximation; not on the runtime
    path.  The caller supplies the Lipschitz constant of ``hazard_fn``.
    """
    if t1 <= t0:
        raise ValidationError("interval must satisfy t1 > t0")
    if fine_resolution < 1:
        raise ValidationError("fine_resolution must be >= 1")
    if lipschitz < 0:
        raise ValidationError("lipschitz constant must be >= 0")
    dt = t1 - t0
    grid = np.linspace(t0, t1, fine_resolution + 1)
    values = np.array([hazard_fn(float(t)) for t in grid])
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValidationError("hazard values must be finite and >= 0")
    epoch_log_m = -float(values[-1]) * dt
    fine_log_m = -float(np.trapezoid(values, grid))
    bound = 0.5 * lipschitz * dt * dt
    return RiemannGap(epoch_log_m, fine_log_m, bound)
