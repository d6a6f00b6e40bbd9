"""Deterministic replay engine state machine.

Packages the retention dynamics, the replay scheduler, and the prioritized
sampler behind one serially-driven object.  The engine is a deterministic
function of (config, seed, request sequence): every random draw comes from
generators derived from the configured seed, and snapshots capture the full
state including generator states, so restore + identical requests reproduce
identical decisions.

Sample state lives in growable parallel arrays so epoch updates and decision
building stay vectorized; the scalar operations in :mod:`memreplay.memory`
define the per-sample semantics and back the property tests.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .config import EngineConfig
from .errors import (
    DuplicateSampleError,
    SnapshotError,
    UnknownSampleError,
    ValidationError,
)
from .memory import M_FLOOR, LossNormalizer, SampleState, phi, phi_array
from .sampler import ReplayBuffer, ReplayDecision, _round_half_away, buffer_update, build_decision
from .scheduler import (
    MeanFieldStats,
    ScheduleState,
    SchedulerParams,
    should_replay,
    threshold_interval,
)

SNAPSHOT_FORMAT_VERSION = 1

# population cap when estimating mean-field statistics at a trigger
STATS_SAMPLE_CAP = 4096


def canonical_json(obj) -> str:
    """Canonical rendering: sorted keys, compact separators, repr floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


class _SampleStore:
    """Growable structure-of-arrays holding per-sample retention state."""

    def __init__(self):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}
        self.tags: list[str] = []
        cap = 1024
        self.m = np.empty(cap)
        self.s = np.empty(cap)
        self.ema = np.empty(cap)          # NaN until the first loss report
        self.norm = np.empty(cap)
        self.hazard = np.empty(cap)
        self.last_review = np.empty(cap, dtype=np.int64)
        self.m_step = np.empty(cap, dtype=np.int64)
        self.m_epoch = np.empty(cap, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.ids)

    def _grow(self, needed: int) -> None:
        cap = self.m.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, cap * 2)
        for name in ("m", "s", "ema", "norm", "hazard", "last_review", "m_step", "m_epoch"):
            old = getattr(self, name)
            grown = np.empty(new_cap, dtype=old.dtype)
            grown[: len(self.ids)] = old[: len(self.ids)]
            setattr(self, name, grown)

    def add(self, ids: list[str], tag: str, step: int, epoch: int,
            s0: float, hazard0: float) -> None:
        n = len(self.ids)
        self._grow(n + len(ids))
        for i, sid in enumerate(ids):
            self.index[sid] = n + i
        self.ids.extend(ids)
        self.tags.extend([tag] * len(ids))
        sl = slice(n, n + len(ids))
        self.m[sl] = 1.0
        self.s[sl] = s0
        self.ema[sl] = np.nan
        self.norm[sl] = 0.5
        self.hazard[sl] = hazard0
        self.last_review[sl] = step
        self.m_step[sl] = step
        self.m_epoch[sl] = epoch

    def view(self, idx: int) -> SampleState:
        ema = float(self.ema[idx])
        return SampleState(
            sample_id=self.ids[idx],
            m=float(self.m[idx]),
            s=float(self.s[idx]),
            last_review_step=int(self.last_review[idx]),
            m_step=int(self.m_step[idx]),
            ema_loss=None if math.isnan(ema) else ema,
            norm_loss=float(self.norm[idx]),
            hazard_estimate=float(self.hazard[idx]),
        )

    def retention_now(self, idx: np.ndarray, step: int) -> np.ndarray:
        dt = step - self.m_step[idx]
        return np.maximum(self.m[idx] * np.exp(-self.hazard[idx] * dt), M_FLOOR)


class Engine:
    """One replay engine instance; drive it serially from a single thread."""

    def __init__(self, config: EngineConfig, metrics_path: str | None = None):
        self.config = config
        self._metrics_path = metrics_path
        self._metrics_fh = open(metrics_path, "a", encoding="utf-8") if metrics_path else None
        self.metrics_records: list[dict] = []
        self._init_state()

    # ------------------------------------------------------------- lifecycle

    def _init_state(self) -> None:
        cfg = self.config
        self.store = _SampleStore()
        self.normalizer = LossNormalizer(cfg.memory.q_lower, cfg.memory.q_upper)
        self.schedule = ScheduleState.initial(cfg.scheduler)
        self.buffer = ReplayBuffer(
            capacity=cfg.buffer.capacity,
            refresh_interval=cfg.buffer.refresh_interval,
            staleness_cap_epochs=cfg.buffer.staleness_cap_epochs,
        )
        self.step_clock = 0
        self.epoch_index = 0
        self.last_epoch_step = 0
        self.current_tag: str | None = None
        self.last_decision: ReplayDecision | None = None
        seq = np.random.SeedSequence(cfg.seed)
        sampler_seed, consolidate_seed, buffer_seed = seq.spawn(3)
        self.rng_sampler = np.random.default_rng(sampler_seed)
        self.rng_consolidate = np.random.default_rng(consolidate_seed)
        self.rng_buffer = np.random.default_rng(buffer_seed)

    def close(self) -> None:
        if self._metrics_fh is not None:
            self._metrics_fh.close()
            self._metrics_fh = None

    # --------------------------------------------------------------- metrics

    def _emit(self, record: dict) -> None:
        self.metrics_records.append(record)
        if self._metrics_fh is not None:
            self._metrics_fh.write(canonical_json(record) + "\n")
            self._metrics_fh.flush()

    def _mean_state(self) -> tuple[float, float]:
        n = len(self.store)
        if n == 0:
            return 1.0, self.config.memory.s_min
        idx = np.arange(n)
        m_now = self.store.retention_now(idx, self.step_clock)
        return float(m_now.mean()), float(self.store.s[:n].mean())

    # ------------------------------------------------------------- requests

    def register_samples(self, sample_ids: list[str], dataset_tag: str) -> dict:
        """Track new samples: full strength, minimum stability, neutral loss."""
        if len(set(sample_ids)) != len(sample_ids):
            raise DuplicateSampleError("duplicate identifiers within the request")
        for sid in sample_ids:
            if sid in self.store.index:
                raise DuplicateSampleError(f"sample {sid!r} already registered")
        mem = self.config.memory
        hazard0 = (mem.alpha + mem.gamma_d * phi(0.5, mem.phi)) / mem.s_min
        self.store.add(
            list(sample_ids), dataset_tag, self.step_clock, self.epoch_index,
            s0=mem.s_min, hazard0=hazard0,
        )
        self.current_tag = dataset_tag
        return {"registered": len(sample_ids), "tracked": len(self.store)}

    def report_losses(self, losses, epoch_end: bool = False, replay: bool = False) -> dict:
        """Fold raw losses into the denoised/normalized difficulty signals.

        Validates the whole batch before touching any state.  With
        ``exclude_replay_losses`` set, batches flagged as replay losses are
        acknowledged but ignored.
        """
        pairs = []
        for item in losses:
            sid, loss = item
            idx = self.store.index.get(sid)
            if idx is None:
                raise UnknownSampleError(f"unknown sample {sid!r}")
            try:
                loss = float(loss)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"loss for {sid!r} is not a number") from exc
            if not math.isfinite(loss) or loss < 0:
                raise ValidationError(f"loss for {sid!r} must be finite and >= 0")
            pairs.append((idx, loss))
        if not (replay and self.config.exclude_replay_losses):
            beta = self.config.memory.beta_ema
            for idx, loss in pairs:
                prev = self.store.ema[idx]
                ema = loss if math.isnan(prev) else beta * prev + (1.0 - beta) * loss
                self.store.ema[idx] = ema
                self.store.norm[idx] = self.normalizer.normalize(ema)
        out = {"count": len(pairs), "epoch": self.epoch_index}
        if epoch_end:
            out.update(self.advance_epoch())
        return out

    def advance_epoch(self) -> dict:
        """Close the current epoch: piecewise-constant decay over its steps."""
        dt = self.step_clock - self.last_epoch_step
        if dt < 1:
            raise ValidationError("an epoch must span at least one step")
        n = len(self.store)
        mem = self.config.memory
        if n:
            norm = self.store.norm[:n]
            h = (mem.alpha + mem.gamma_d * phi_array(norm, mem.phi)) / self.store.s[:n]
            self.store.m[:n] = np.maximum(self.store.m[:n] * np.exp(-h * dt), M_FLOOR)
            self.store.hazard[:n] = h
            self.store.m_step[:n] = self.step_clock
            self.store.m_epoch[:n] = self.epoch_index + 1
        self.epoch_index += 1
        self.last_epoch_step = self.step_clock
        mean_m, mean_s = self._mean_state()
        self._emit({
            "kind": "epoch",
            "step": self.step_clock,
            "epoch": self.epoch_index,
            "cycle": self.schedule.cycle_index,
            "lambda": None,
            "selected_count": 0,
            "mean_m": mean_m,
            "mean_s": mean_s,
            "buffer_size": len(self.buffer),
        })
        return {"epoch": self.epoch_index, "dt": dt}

    def _refresh_buffer(self) -> None:
        candidates = [
            sid for sid, tag in zip(self.store.ids, self.store.tags)
            if tag != self.current_tag
        ]
        if not buffer_update(self.buffer, candidates, self.step_clock, self.rng_buffer):
            return
        # force-refresh entries whose retention anchor is older than the cap
        cap = self.buffer.staleness_cap_epochs
        for sid in self.buffer.entries:
            idx = self.store.index[sid]
            if self.epoch_index - self.store.m_epoch[idx] > cap:
                m_now = float(self.store.retention_now(np.array([idx]), self.step_clock)[0])
                self.store.m[idx] = m_now
                self.store.m_step[idx] = self.step_clock
                self.store.m_epoch[idx] = self.epoch_index

    def _threshold_hint(self) -> float | None:
        if not self.buffer.entries:
            return None
        idx = np.array([self.store.index[sid] for sid in self.buffer.entries])
        if idx.size > STATS_SAMPLE_CAP:
            idx = self.rng_buffer.choice(idx, size=STATS_SAMPLE_CAP, replace=False)
        mem = self.config.memory
        phis = phi_array(self.store.norm[idx], mem.phi)
        hz = (mem.alpha + mem.gamma_d * phis) / self.store.s[idx]
        stats = MeanFieldStats(float(hz.mean()), float(self.store.s[idx].mean()), float(phis.mean()))
        hint = threshold_interval(stats, self.config.scheduler.theta)
        return None if math.isinf(hint) else hint

    def tick(self, steps: int = 1) -> ReplayDecision | None:
        """Advance the step clock, firing replay decisions as scheduled.

        Returns the decision of the last step that fired, or None.
        """
        if steps < 1:
            raise ValidationError("steps must be >= 1")
        decision = None
        params = self.config.scheduler
        for _ in range(steps):
            self.step_clock += 1
            self._refresh_buffer()
            hint = None
            if params.mode == "threshold" and self.step_clock >= self.schedule.next_trigger_step:
                hint = self._threshold_hint()
            fired, lam = should_replay(self.step_clock, self.schedule, params, hint)
            if fired:
                decision = self._build_decision(lam)
                self.last_decision = decision
        return decision

    def _build_decision(self, lam: float) -> ReplayDecision:
        entries = self.buffer.entries
        retentions = gaps = None
        if entries:
            idx = np.array([self.store.index[sid] for sid in entries])
            retentions = np.minimum(self.store.retention_now(idx, self.step_clock), 1.0)
            gaps = (self.step_clock - self.store.last_review[idx]).astype(float)
        decision = build_decision(
            self.buffer, lam, self.config.batch_size, self.config.sampler,
            self.step_clock, self.schedule.cycle_index, self.rng_sampler,
            retentions=retentions, gaps=gaps,
        )
        mean_m, mean_s = self._mean_state()
        self._emit({
            "kind": "replay",
            "step": decision.step,
            "cycle": decision.cycle,
            "lambda": decision.lambda_,
            "selected_count": len(decision.selected),
            "mean_m": mean_m,
            "mean_s": mean_s,
            "buffer_size": len(self.buffer),
        })
        return decision

    def query_replay(self) -> ReplayDecision | None:
        """The most recent decision, if any (read-only)."""
        return self.last_decision

    def mark_replayed(self, sample_ids: list[str]) -> dict:
        """Consolidate samples that were actually trained on.

        Retention is first materialized at the current step, then reset to 1
        with the stability gain.  With ``strict_marking``, identifiers must
        come from the latest decision.
        """
        if self.config.strict_marking:
            allowed = set(self.last_decision.selected) if self.last_decision else set()
            outside = [sid for sid in sample_ids if sid not in allowed]
            if outside:
                raise ValidationError(
                    f"strict marking: {outside[0]!r} not in the last decision"
                )
        idx_list = []
        for sid in sample_ids:
            idx = self.store.index.get(sid)
            if idx is None:
                raise UnknownSampleError(f"unknown sample {sid!r}")
            idx_list.append(idx)
        if not idx_list:
            return {"consolidated": 0}
        idx = np.array(idx_list)
        mem = self.config.memory
        now = self.step_clock
        m_pre = np.minimum(self.store.retention_now(idx, now), 1.0)
        dt = (now - self.store.last_review[idx]).astype(float)
        s = self.store.s[idx]
        delta = (
            mem.eta_s
            * (mem.s_max - s) ** mem.beta_s
            * np.exp(-mem.rho * dt)
            * (1.0 - m_pre) ** mem.gamma_s
        )
        if mem.sigma_s > 0:
            delta = delta + mem.sigma_s * self.rng_consolidate.standard_normal(idx.size)
        self.store.s[idx] = np.clip(s + delta, mem.s_min, mem.s_max)
        self.store.m[idx] = 1.0
        self.store.last_review[idx] = now
        self.store.m_step[idx] = now
        self.store.m_epoch[idx] = self.epoch_index
        return {"consolidated": len(idx_list)}

    def stats(self) -> dict:
        mean_m, mean_s = self._mean_state()
        by_tag: dict[str, int] = {}
        for tag in self.store.tags:
            by_tag[tag] = by_tag.get(tag, 0) + 1
        return {
            "tracked": len(self.store),
            "step": self.step_clock,
            "epoch": self.epoch_index,
            "cycle": self.schedule.cycle_index,
            "next_trigger_step": self.schedule.next_trigger_step,
            "buffer_size": len(self.buffer),
            "mean_m": mean_m,
            "mean_s": mean_s,
            "samples_by_tag": by_tag,
            "lambda0": self.config.scheduler.lambda0,
        }

    # ------------------------------------------------------------- snapshots

    def snapshot(self) -> dict:
        n = len(self.store)
        ema = [None if math.isnan(v) else float(v) for v in self.store.ema[:n]]
        return {
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "step_clock": self.step_clock,
            "epoch_index": self.epoch_index,
            "last_epoch_step": self.last_epoch_step,
            "current_tag": self.current_tag,
            "samples": {
                "ids": list(self.store.ids),
                "tags": list(self.store.tags),
                "m": self.store.m[:n].tolist(),
                "s": self.store.s[:n].tolist(),
                "ema": ema,
                "norm": self.store.norm[:n].tolist(),
                "hazard": self.store.hazard[:n].tolist(),
                "last_review": self.store.last_review[:n].tolist(),
                "m_step": self.store.m_step[:n].tolist(),
                "m_epoch": self.store.m_epoch[:n].tolist(),
            },
            "normalizer": self.normalizer.state_dict(),
            "schedule": self.schedule.state_dict(),
            "buffer_entries": list(self.buffer.entries),
            "last_decision": self.last_decision.to_record() if self.last_decision else None,
            "rng": {
                "sampler": self.rng_sampler.bit_generator.state,
                "consolidate": self.rng_consolidate.bit_generator.state,
                "buffer": self.rng_buffer.bit_generator.state,
            },
        }

    def restore(self, payload: dict) -> None:
        version = payload.get("format_version")
        if version != SNAPSHOT_FORMAT_VERSION:
            raise SnapshotError(
                f"snapshot format {version!r} does not match {SNAPSHOT_FORMAT_VERSION}",
                code="version_mismatch",
            )
        try:
            from .config import config_from_dict

            self.config = config_from_dict(payload["config"])
            self._init_state()
            s = payload["samples"]
            n = len(s["ids"])
            self.store._grow(n)
            self.store.ids = [str(x) for x in s["ids"]]
            self.store.tags = [str(x) for x in s["tags"]]
            self.store.index = {sid: i for i, sid in enumerate(self.store.ids)}
            self.store.m[:n] = s["m"]
            self.store.s[:n] = s["s"]
            self.store.ema[:n] = [math.nan if v is None else float(v) for v in s["ema"]]
            self.store.norm[:n] = s["norm"]
            self.store.hazard[:n] = s["hazard"]
            self.store.last_review[:n] = s["last_review"]
            self.store.m_step[:n] = s["m_step"]
            self.store.m_epoch[:n] = s["m_epoch"]
            self.step_clock = int(payload["step_clock"])
            self.epoch_index = int(payload["epoch_index"])
            self.last_epoch_step = int(payload["last_epoch_step"])
            self.current_tag = payload["current_tag"]
            self.normalizer.load_state_dict(payload["normalizer"])
            self.schedule = ScheduleState.from_state_dict(payload["schedule"])
            self.buffer.replace_entries([str(x) for x in payload["buffer_entries"]])
            dec = payload.get("last_decision")
            self.last_decision = ReplayDecision.from_record(dec) if dec else None
            self.rng_sampler.bit_generator.state = payload["rng"]["sampler"]
            self.rng_consolidate.bit_generator.state = payload["rng"]["consolidate"]
            self.rng_buffer.bit_generator.state = payload["rng"]["buffer"]
        except SnapshotError:
            raise
        except Exception as exc:
            raise SnapshotError(f"corrupt snapshot payload: {exc}", code="corrupt") from exc

    @classmethod
    def from_snapshot(cls, payload: dict, metrics_path: str | None = None) -> Engine:
        from .config import config_from_dict

        engine = cls(config_from_dict(payload.get("config", {})), metrics_path=metrics_path)
        engine.restore(payload)
        return engine

    # ----------------------------------------------------------------- debug

    def check_invariants(self) -> None:
        """Debug sweep: module-level invariants over the whole store."""
        n = len(self.store)
        mem = self.config.memory
        assert np.all(self.store.m[:n] > 0) and np.all(self.store.m[:n] <= 1.0)
        assert np.all(self.store.s[:n] >= mem.s_min) and np.all(self.store.s[:n] <= mem.s_max)
        assert np.all(self.store.hazard[:n] >= 0)
        assert len(self.buffer) <= self.buffer.capacity
        assert len(set(self.buffer.entries)) == len(self.buffer.entries)
