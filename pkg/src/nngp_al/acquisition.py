"""Batch point-selection strategies over a candidate pool.

Four strategies: uniform random, raw Monte-Carlo dropout variance (MCDUE),
GP posterior variance given an anchor set (NNGP), and the multi-round variant
that absorbs each sub-batch into the anchors before scoring the next
(M-step NNGP). All return ordered index batches and are deterministic per seed.
"""

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import gp_approx, stochastic_inference
from .errors import DegeneratePivotError, UsageError
from .seeding import derive_rng

_TAG_RANDOM = 31
_TAG_PROPORTIONAL = 37

TOP_K = "top_k"
PROPORTIONAL = "proportional"


class Strategy(str, Enum):
    RANDOM = "random"
    MCDUE = "mcdue"
    NNGP = "nngp"
    MSTEP_NNGP = "mstep_nngp"


@dataclass(frozen=True)
class AcquisitionRequest:
    """Strategy plus its parameters for one acquisition round."""

    strategy: Strategy
    batch_size: int
    passes: int = 64
    dropout: float = 0.1
    ridge: float | None = None  # None = relative default
    anchor_size: int = 500
    steps: int = 1  # sub-batch rounds (M-step only)
    seed: int = 0
    selection: str = TOP_K
    rank_one: bool = True  # False forces full state rebuilds between rounds

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.selection not in (TOP_K, PROPORTIONAL):
            raise UsageError(f"unknown selection mode {self.selection!r}")
        if self.strategy == Strategy.MSTEP_NNGP:
            if self.steps < 1:
                raise UsageError("steps must be >= 1")
            if self.batch_size % self.steps != 0:
                raise UsageError(
                    f"steps ({self.steps}) must divide batch_size ({self.batch_size})"
                )


@dataclass
class AcquisitionResult:
    """Selected pool positions (best first) with their final scores."""

    selected: list[int]
    scores: list[float]
    diagnostics: dict = field(default_factory=dict)
    exhausted: bool = False

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise UsageError("selected indices must be unique")


def _ranked(scores: np.ndarray) -> np.ndarray:
    """Indices by score descending, ties broken by lowest index first."""
    return np.lexsort((np.arange(scores.size), -scores))


def _pick(scores, k, mode, rng, allowed=None):
    """Choose k indices from the allowed set by ranking or by score-proportional
    sampling without replacement."""
    scores = np.asarray(scores, dtype=float)
    if allowed is None:
        allowed = np.arange(scores.size)
    if k > allowed.size:
        raise UsageError(f"cannot select {k} from a pool of {allowed.size}")
    sub = scores[allowed]
    if mode == TOP_K:
        return allowed[_ranked(sub)[:k]]
    weights = np.clip(sub, 0.0, None)
    total = weights.sum()
    if total <= 0.0:
        return allowed[_ranked(sub)[:k]]
    n_positive = int(np.count_nonzero(weights))
    n_weighted = min(k, n_positive)
    chosen = rng.choice(allowed, size=n_weighted, replace=False, p=weights / total)
    if n_weighted < k:
        rest = allowed[~np.isin(allowed, chosen)]
        chosen = np.concatenate([chosen, rest[_ranked(scores[rest])[: k - n_weighted]]])
    return chosen


def _result(selected, scores, diagnostics, exhausted=False):
    selected = [int(j) for j in selected]
    return AcquisitionResult(
        selected=selected,
        scores=[float(scores[j]) for j in selected],
        diagnostics=diagnostics,
        exhausted=exhausted,
    )


def select_random(pool_size: int, batch_size: int, seed: int) -> AcquisitionResult:
    """Uniform sample without replacement."""
    if batch_size > pool_size:
        raise UsageError(f"batch_size {batch_size} exceeds pool size {pool_size}")
    rng = derive_rng(seed, _TAG_RANDOM)
    selected = rng.choice(pool_size, size=batch_size, replace=False)
    return _result(selected, np.zeros(pool_size), {"strategy": Strategy.RANDOM.value})


def select_mcdue(net, pool, batch_size, passes=64, dropout=0.1, seed=0, selection=TOP_K):
    """Rank pool points by the raw Monte-Carlo variance of stochastic outputs."""
    pool = np.asarray(pool, dtype=float)
    if batch_size > pool.shape[0]:
        raise UsageError(f"batch_size {batch_size} exceeds pool size {pool.shape[0]}")
    t0 = time.perf_counter()
    samples = stochastic_inference.sample_passes(net, pool, passes, dropout, seed)
    scores = stochastic_inference.mc_variance(samples)
    selected = _pick(scores, batch_size, selection, derive_rng(seed, _TAG_PROPORTIONAL))
    diag = {
        "strategy": Strategy.MCDUE.value,
        "passes": passes,
        "wall_time": time.perf_counter() - t0,
    }
    return _result(selected, scores, diag)


def _joint_state(net, pool, anchors, passes, dropout, ridge, seed):
    """Sample pool and anchors under shared masks and build the GP state.

    Pool points occupy ids 0..n-1, anchors n..n+N-1 in the joint matrix.
    Returns (samples, state).
    """
    pool = np.asarray(pool, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    if anchors.shape[0] == 0:
        raise UsageError("anchor set must be non-empty")
    n = pool.shape[0]
    joint = np.vstack([pool, anchors])
    samples = stochastic_inference.sample_passes(net, joint, passes, dropout, seed)
    state = gp_approx.build_gp_state(
        samples,
        anchor_ids=range(n, n + anchors.shape[0]),
        pool_ids=range(n),
        ridge=ridge,
    )
    return samples, state


def select_nngp(net, pool, anchors, batch_size, passes=64, dropout=0.1, ridge=None,
                seed=0, selection=TOP_K):
    """Single-shot ranking by GP posterior variance given the anchor set."""
    pool = np.asarray(pool, dtype=float)
    if batch_size > pool.shape[0]:
        raise UsageError(f"batch_size {batch_size} exceeds pool size {pool.shape[0]}")
    t0 = time.perf_counter()
    _, state = _joint_state(net, pool, anchors, passes, dropout, ridge, seed)
    scores = state.posterior_var
    selected = _pick(scores, batch_size, selection, derive_rng(seed, _TAG_PROPORTIONAL))
    diag = {
        "strategy": Strategy.NNGP.value,
        "passes": passes,
        "ridge": state.cov.ridge,
        "ridge_used": state.ridge_used,
        "clamped": state.clamp_count,
        "wall_time": time.perf_counter() - t0,
    }
    return _result(selected, scores, diag)


def select_mstep_nngp(net, pool, anchors, batch_size, steps, passes=64, dropout=0.1,
                      ridge=None, seed=0, selection=TOP_K, rank_one=True):
    """Multi-round NNGP: each round's picks join the conditioning set.

    Covariances estimated from the round-1 joint sample matrix are reused in
    later rounds (absorbed points were pool columns, so their covariances
    against remaining points are already available under shared masks). With
    ``rank_one`` the conditioning uses incremental updates; otherwise the
    state is rebuilt from scratch each round with the enlarged anchor set.
    """
    pool = np.asarray(pool, dtype=float)
    n = pool.shape[0]
    if batch_size > n:
        raise UsageError(f"batch_size {batch_size} exceeds pool size {n}")
    if steps < 1 or batch_size % steps != 0:
        raise UsageError(f"steps ({steps}) must divide batch_size ({batch_size})")
    per_round = batch_size // steps
    t0 = time.perf_counter()

    joint_samples, state = _joint_state(net, pool, anchors, passes, dropout, ridge, seed)
    samples_ridge = state.cov.ridge  # resolved once, reused by rebuilds
    anchor_id_base = list(range(n, joint_samples.n_points))
    pick_rng = derive_rng(seed, _TAG_PROPORTIONAL)
    remaining = np.ones(n, dtype=bool)
    scores_full = state.posterior_var.copy()
    selected: list[int] = []
    final_scores = np.zeros(n)
    clamp_total = state.clamp_count
    skipped_updates = 0
    rounds_diag = []

    for round_no in range(steps):
        allowed = np.flatnonzero(remaining)
        picks = _pick(scores_full, per_round, selection, pick_rng, allowed=allowed)
        for j in picks:
            final_scores[j] = scores_full[j]
        selected.extend(int(j) for j in picks)
        remaining[picks] = False
        rounds_diag.append({"round": round_no, "picked": [int(j) for j in picks]})

        if round_no == steps - 1:
            break
        if rank_one:
            for j in picks:
                try:
                    state = gp_approx.rank_one_update(state, int(j))
                except DegeneratePivotError:
                    skipped_updates += 1
            scores_full = state.posterior_var
            clamp_total += state.clamp_count
        else:
            state = gp_approx.build_gp_state(
                joint_samples,
                anchor_ids=anchor_id_base + selected,
                pool_ids=[j for j in range(n) if remaining[j]],
                ridge=samples_ridge,
            )
            scores_full = np.zeros(n)
            scores_full[np.flatnonzero(remaining)] = state.posterior_var
            clamp_total += state.clamp_count

    diag = {
        "strategy": Strategy.MSTEP_NNGP.value,
        "passes": passes,
        "steps": steps,
        "ridge": samples_ridge,
        "ridge_used": state.ridge_used,
        "clamped": clamp_total,
        "skipped_updates": skipped_updates,
        "rounds": rounds_diag,
        "wall_time": time.perf_counter() - t0,
    }
    return _result(selected, final_scores, diag)


def acquire(net, pool, anchors, request: AcquisitionRequest) -> AcquisitionResult:
    """Dispatch a request against the pool, clamping at pool exhaustion.

    If the pool holds at most ``batch_size`` points, every point is selected
    and the result carries the exhausted flag.
    """
    pool = np.asarray(pool, dtype=float)
    n = pool.shape[0]
    if n == 0:
        raise UsageError("pool is empty")
    if request.batch_size >= n:
        return AcquisitionResult(
            selected=list(range(n)),
            scores=[0.0] * n,
            diagnostics={"strategy": request.strategy.value, "note": "pool exhausted"},
            exhausted=request.batch_size > n,
        )
    if request.strategy == Strategy.RANDOM:
        return select_random(n, request.batch_size, request.seed)
    if request.strategy == Strategy.MCDUE:
        return select_mcdue(
            net, pool, request.batch_size, request.passes, request.dropout,
            request.seed, request.selection,
        )
    if request.strategy == Strategy.NNGP:
        return select_nngp(
            net, pool, anchors, request.batch_size, request.passes, request.dropout,
            request.ridge, request.seed, request.selection,
        )
    if request.strategy == Strategy.MSTEP_NNGP:
        return select_mstep_nngp(
            net, pool, anchors, request.batch_size, request.steps, request.passes,
            request.dropout, request.ridge, request.seed, request.selection,
            request.rank_one,
        )
    raise UsageError(f"unknown strategy {request.strategy!r}")
