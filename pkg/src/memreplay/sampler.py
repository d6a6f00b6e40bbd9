"""Replay buffer maintenance and prioritized sample selection.

The default policy weights buffer entries by inverse retention,
p_i proportional to m_i**-zeta, so faster-forgetting samples are replayed
more often (zeta = 0 recovers uniform sampling).  A gap-aware alternative
weights by (1 - m)**beta_m * exp(rho * dt) instead, favoring weak memories
and long-unseen items.  Both are computed in the log domain so extreme
retentions cannot overflow.

Selection without replacement uses exponentiated rank keys
(key = uniform**(1/p), keep the top n), whose single-draw marginals match
the weight vector exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .memory import M_FLOOR

POLICIES = ("power_law", "gap_aware", "uniform")


@dataclass
class SamplerParams:
    """Prioritization settings.

    ``zeta`` is the power-law strength (default 1.0).  ``beta_m`` weights
    the forgotten fraction in the gap-aware policy; it has no published
    default, so 1.0 is chosen to mirror the error-reinforcement exponent.
    ``rho_gap`` mirrors the memory model's spacing sensitivity.
    """

    zeta: float = 1.0
    policy: str = "power_law"
    beta_m: float = 1.0
    rho_gap: float = 0.01

    def __post_init__(self):
        if self.zeta < 0 or not math.isfinite(self.zeta):
            raise ValidationError("zeta must be finite and >= 0")
        if self.policy not in POLICIES:
            raise ValidationError(f"unknown sampler policy {self.policy!r}")
        if self.beta_m < 0:
            raise ValidationError("beta_m must be >= 0")
        if self.rho_gap < 0:
            raise ValidationError("rho_gap must be >= 0")


@dataclass
class ReplayBuffer:
    """Bounded, duplicate-free set of replayable sample identifiers."""

    capacity: int = 1024
    refresh_interval: int = 50
    staleness_cap_epochs: int = 10
    entries: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError("buffer capacity must be >= 1")
        if self.refresh_interval < 1:
            raise ValidationError("refresh interval must be >= 1")
        if self.staleness_cap_epochs < 1:
            raise ValidationError("staleness cap must be >= 1")
        self._members = set(self.entries)
        if len(self._members) != len(self.entries):
            raise ValidationError("buffer entries must be unique")
        if len(self.entries) > self.capacity:
            raise ValidationError("buffer entries exceed capacity")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._members

    def replace_entries(self, ids: list[str]) -> None:
        if len(ids) > self.capacity:
            raise ValidationError("buffer entries exceed capacity")
        self.entries = list(ids)
        self._members = set(ids)
        if len(self._members) != len(self.entries):
            raise ValidationError("buffer entries must be unique")


@dataclass
class ReplayDecision:
    """One replay event's answer: when, how much, and which samples."""

    step: int
    cycle: int
    lambda_: float
    selected: list[str]
    policy: str
    warning: str | None = None

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "cycle": self.cycle,
            "lambda": self.lambda_,
            "selected": list(self.selected),
            "policy": self.policy,
            "warning": self.warning,
        }

    @classmethod
    def from_record(cls, rec: dict) -> ReplayDecision:
        return cls(
            step=int(rec["step"]),
            cycle=int(rec["cycle"]),
            lambda_=float(rec["lambda"]),
            selected=[str(s) for s in rec["selected"]],
            policy=str(rec["policy"]),
            warning=rec.get("warning"),
        )


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """Stable softmax over log weights; uniform fallback when all are -inf."""
    finite = np.isfinite(log_w)
    if not finite.any():
        return np.full(log_w.shape, 1.0 / log_w.size)
    shifted = log_w - log_w[finite].max()
    w = np.exp(shifted, where=np.isfinite(shifted), out=np.zeros_like(shifted))
    return w / w.sum()


def weights_power_law(retentions, zeta: float) -> np.ndarray:
    """Normalized m**-zeta weights, computed as softmax(-zeta * ln m)."""
    m = np.asarray(retentions, dtype=float)
    if m.size == 0:
        raise ValidationError("weights require a non-empty retention list")
    if np.any(m <= 0) or np.any(m > 1.0):
        raise ValidationError("retentions must lie in (0, 1]")
    if zeta < 0:
        raise ValidationError("zeta must be >= 0")
    log_w = -zeta * np.log(np.maximum(m, M_FLOOR))
    return _normalize_log_weights(log_w)


def weights_gap_aware(retentions, gaps, beta_m: float, rho_gap: float) -> np.ndarray:
    """Normalized (1 - m)**beta_m * exp(rho * dt) weights.

    When every weight vanishes (all retentions at 1 with rho_gap = 0) the
    result degrades to uniform.
    """
    m = np.asarray(retentions, dtype=float)
    dt = np.asarray(gaps, dtype=float)
    if m.size == 0:
        raise ValidationError("weights require a non-empty retention list")
    if m.shape != dt.shape:
        raise ValidationError("retentions and gaps must have equal length")
    if np.any(m <= 0) or np.any(m > 1.0):
        raise ValidationError("retentions must lie in (0, 1]")
    forgotten = 1.0 - m
    with np.errstate(divide="ignore"):
        log_f = np.where(forgotten > 0, np.log(np.maximum(forgotten, M_FLOOR)), -np.inf)
    log_w = (beta_m * log_f if beta_m > 0 else np.zeros_like(m)) + rho_gap * dt
    return _normalize_log_weights(log_w)


def sample_without_replacement(
    probs, n: int, rng: np.random.Generator
) -> list[int]:
    """Draw ``n`` distinct indices via exponentiated rank keys.

    Each index receives key = uniform**(1/p); the top-n keys are returned in
    descending key order.  Single-draw marginals equal ``probs`` exactly;
    zero-probability indices are only drawn once all positive ones are
    exhausted.
    """
    p = np.asarray(probs, dtype=float)
    if n < 0 or n > p.size:
        raise ValidationError(f"cannot draw {n} from {p.size} entries")
    if np.any(p < 0) or not math.isclose(float(p.sum()), 1.0, abs_tol=1e-9):
        raise ValidationError("probs must be a probability vector")
    if n == 0:
        return []
    u = rng.random(p.size)
    with np.errstate(divide="ignore"):
        log_keys = np.where(p > 0, np.log(u) / np.maximum(p, M_FLOOR), -np.inf)
    if n < p.size:
        top = np.argpartition(log_keys, p.size - n)[p.size - n:]
    else:
        top = np.arange(p.size)
    order = top[np.argsort(log_keys[top])[::-1]]
    return [int(i) for i in order]


def buffer_update(
    buffer: ReplayBuffer,
    candidates: list[str],
    step: int,
    rng: np.random.Generator,
) -> bool:
    """Refresh buffer membership at refresh boundaries.

    On refresh, the union of current entries and new candidates is kept when
    it fits; otherwise a uniform subset of size ``capacity`` survives, which
    evicts current entries uniformly at random and admits candidates without
    bias.  Returns True when a refresh ran.
    """
    if step <= 0 or step % buffer.refresh_interval != 0:
        return False
    new = [c for c in candidates if c not in buffer]
    if len(new) != len(set(new)):
        raise ValidationError("candidate identifiers must be unique")
    pool = buffer.entries + new
    if len(pool) <= buffer.capacity:
        buffer.replace_entries(pool)
    else:
        keep = rng.choice(len(pool), size=buffer.capacity, replace=False)
        keep.sort()
        buffer.replace_entries([pool[i] for i in keep])
    return True


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def build_decision(
    buffer: ReplayBuffer,
    lambda_: float,
    batch_size: int,
    sampler: SamplerParams,
    step: int,
    cycle: int,
    rng: np.random.Generator,
    retentions=None,
    gaps=None,
) -> ReplayDecision:
    """Select round(lambda * batch_size) samples from the buffer.

    ``retentions`` (and ``gaps`` for the gap-aware policy) are frozen
    snapshots aligned with ``buffer.entries``.  An empty buffer with a
    positive ratio yields an empty selection carrying a warning rather than
    an error, since early training legitimately has no replay history.
    """
    if not (0.0 <= lambda_ <= 1.0):
        raise ValidationError("lambda must lie in [0, 1]")
    if batch_size < 0:
        raise ValidationError("batch size must be >= 0")
    n = _round_half_away(lambda_ * batch_size)
    if n == 0:
        return ReplayDecision(step, cycle, lambda_, [], sampler.policy)
    if len(buffer) == 0:
        return ReplayDecision(
            step, cycle, lambda_, [], sampler.policy, warning="empty_buffer"
        )
    n = min(n, len(buffer))
    if sampler.policy == "uniform":
        probs = np.full(len(buffer), 1.0 / len(buffer))
    elif sampler.policy == "power_law":
        if retentions is None:
            raise ValidationError("power_law policy requires retentions")
        probs = weights_power_law(retentions, sampler.zeta)
    else:
        if retentions is None or gaps is None:
            raise ValidationError("gap_aware policy requires retentions and gaps")
        probs = weights_gap_aware(retentions, gaps, sampler.beta_m, sampler.rho_gap)
    idx = sample_without_replacement(probs, n, rng)
    return ReplayDecision(
        step, cycle, lambda_, [buffer.entries[i] for i in idx], sampler.policy
    )
