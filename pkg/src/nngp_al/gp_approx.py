"""GP posterior variance over the network's stochastic output.

The sample matrix columns are treated as draws of a stochastic process; the
empirical covariance against a set of anchor columns yields a GP whose
posterior variance scores pool points. Conditioning on further points is a
closed-form rank-1 operation on posterior quantities, so batch selection can
absorb points without touching the network.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegeneratePivotError, NumericalConditioningError, UsageError
from .stochastic_inference import SampleMatrix

RELATIVE_RIDGE_FACTOR = 1e-3  # default ridge: 1e-3 * mean(diag(K))
PIVOT_EPS_FACTOR = 1e-12  # degenerate-pivot threshold: 1e-12 * max prior pool variance
_JITTER_ESCALATIONS = 3


def empirical_covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unbiased sample cross-covariance between two column blocks.

    Both blocks must come from the same passes (equal row counts); the result
    is |A| x |B| with the T - 1 denominator.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    if a.shape[0] != b.shape[0]:
        raise UsageError(f"pass counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise UsageError("need at least 2 passes for a sample covariance")
    ca = a - a.mean(axis=0)
    cb = b - b.mean(axis=0)
    return (ca.T @ cb) / (a.shape[0] - 1)


@dataclass(frozen=True)
class CovEstimate:
    """Empirical covariance pieces: anchor-anchor, anchor-pool, pool priors."""

    k_anchor: np.ndarray  # (N, N)
    k_cross: np.ndarray  # (N, n)
    v_pool: np.ndarray  # (n,)
    ridge: float

    def __post_init__(self):
        n_anchor = self.k_anchor.shape[0]
        if self.k_anchor.shape != (n_anchor, n_anchor):
            raise UsageError("anchor covariance must be square")
        if np.max(np.abs(self.k_anchor - self.k_anchor.T), initial=0.0) > 1e-10:
            raise UsageError("anchor covariance is not symmetric")
        if self.k_cross.shape != (n_anchor, self.v_pool.shape[0]):
            raise UsageError("cross-covariance shape inconsistent with anchors/pool")
        if np.any(self.v_pool < 0):
            raise UsageError("pool prior variances must be non-negative")
        if self.ridge < 0:
            raise UsageError("ridge must be non-negative")


def _jittered_cholesky(k_anchor: np.ndarray, ridge: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + jitter*I, escalating the jitter x10 up to 3 times."""
    diag_scale = float(np.mean(np.diag(k_anchor))) if k_anchor.size else 1.0
    base = ridge if ridge > 0.0 else 0.0
    jitter = base
    for attempt in range(_JITTER_ESCALATIONS + 1):
        try:
            return np.linalg.cholesky(k_anchor + jitter * np.eye(k_anchor.shape[0])), jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = PIVOT_EPS_FACTOR * max(1.0, abs(diag_scale))
            else:
                jitter *= 10.0
    raise NumericalConditioningError(jitter)


@dataclass(frozen=True)
class GPState:
    """Posterior variances for pool points given the anchor conditioning set.

    Immutable; rank_one_update returns a successor state. ``posterior_var``
    is clamped at zero for ranking, the raw chain stays available for
    diagnostics. Pool-pool prior covariances are evaluated lazily from the
    centered sample block instead of materializing the full n x n matrix.
    """

    cov: CovEstimate
    chol: np.ndarray
    ridge_used: float
    solved_cross: np.ndarray  # (N, n), solution of (K + ridge I) S = k_cross
    posterior_var_raw: np.ndarray
    anchor_ids: tuple
    pool_ids: tuple
    clamp_count: int
    update_ids: tuple = ()
    _pool_centered: np.ndarray = field(default=None, repr=False)
    _update_vecs: tuple = field(default=(), repr=False)
    _update_pivots: tuple = field(default=(), repr=False)

    @property
    def n_pool(self) -> int:
        return len(self.pool_ids)

    @property
    def posterior_var(self) -> np.ndarray:
        return np.clip(self.posterior_var_raw, 0.0, None)

    def _prior_pool_cov_column(self, j: int) -> np.ndarray:
        c = self._pool_centered
        return (c.T @ c[:, j]) / (c.shape[0] - 1)

    def _check_pool_index(self, j: int) -> None:
        if not 0 <= j < self.n_pool:
            raise UsageError(f"pool index {j} out of range [0, {self.n_pool})")


def build_gp_state(samples: SampleMatrix, anchor_ids, pool_ids, ridge: float | None = None) -> GPState:
    """Estimate covariances from the joint sample matrix and solve for
    posterior variances of every pool point.

    ``ridge=None`` selects the relative default tied to the covariance scale.
    Anchor and pool ids must be disjoint subsets of the matrix's point ids.
    """
    anchor_ids = tuple(anchor_ids)
    pool_ids = tuple(pool_ids)
    if not anchor_ids:
        raise UsageError("anchor set must be non-empty")
    if set(anchor_ids) & set(pool_ids):
        raise UsageError("anchor and pool ids must be disjoint")

    centered = samples.values - samples.values.mean(axis=0)
    denom = samples.n_passes - 1
    ca = centered[:, samples.column_indices(anchor_ids)]
    cp = centered[:, samples.column_indices(pool_ids)]
    k_anchor = (ca.T @ ca) / denom
    k_anchor = 0.5 * (k_anchor + k_anchor.T)
    k_cross = (ca.T @ cp) / denom
    v_pool = np.einsum("ti,ti->i", cp, cp) / denom

    if ridge is None:
        ridge = RELATIVE_RIDGE_FACTOR * float(np.mean(np.diag(k_anchor)))
    cov = CovEstimate(k_anchor=k_anchor, k_cross=k_cross, v_pool=v_pool, ridge=float(ridge))

    chol, jitter = _jittered_cholesky(k_anchor, cov.ridge)
    solved = cho_solve((chol, True), k_cross) if pool_ids else np.zeros_like(k_cross)
    var_raw = v_pool - np.einsum("ij,ij->j", k_cross, solved)
    return GPState(
        cov=cov,
        chol=chol,
        ridge_used=jitter,
        solved_cross=solved,
        posterior_var_raw=var_raw,
        anchor_ids=anchor_ids,
        pool_ids=pool_ids,
        clamp_count=int(np.sum(var_raw < 0.0)),
        _pool_centered=cp,
    )


def posterior_covariance(state: GPState, j1: int, j2: int) -> float:
    """Posterior cross-covariance between two pool points (by pool index).

    The diagonal equals the pre-clamp posterior variance. Absorbed points
    from earlier rank-1 updates are accounted for.
    """
    state._check_pool_index(j1)
    state._check_pool_index(j2)
    prior = float(state._pool_centered[:, j1] @ state._pool_centered[:, j2]) / (
        state._pool_centered.shape[0] - 1
    )
    value = prior - float(state.cov.k_cross[:, j1] @ state.solved_cross[:, j2])
    for vec, pivot in zip(state._update_vecs, state._update_pivots):
        value -= vec[j1] * vec[j2] / pivot
    return value


def rank_one_update(state: GPState, j_new: int) -> GPState:
    """Absorb one pool point into the conditioning set.

    Returns a successor state in which every posterior variance has decreased
    (or stayed equal) and the absorbed point's own variance is exactly zero.
    """
    state._check_pool_index(j_new)
    if j_new in state.update_ids:
        raise UsageError(f"pool index {j_new} was already absorbed")
    pivot = float(state.posterior_var_raw[j_new])
    eps = PIVOT_EPS_FACTOR * float(np.max(state.cov.v_pool, initial=0.0))
    if pivot <= eps:
        raise DegeneratePivotError(
            f"posterior variance {pivot:g} at pool index {j_new} is below the update threshold {eps:g}"
        )

    cross = state._prior_pool_cov_column(j_new)
    cross -= state.solved_cross[:, j_new] @ state.cov.k_cross
    for vec, d in zip(state._update_vecs, state._update_pivots):
        cross -= vec * (vec[j_new] / d)

    new_raw = state.posterior_var_raw - cross * cross / pivot
    new_raw[j_new] = 0.0
    return GPState(
        cov=state.cov,
        chol=state.chol,
        ridge_used=state.ridge_used,
        solved_cross=state.solved_cross,
        posterior_var_raw=new_raw,
        anchor_ids=state.anchor_ids,
        pool_ids=state.pool_ids,
        clamp_count=int(np.sum(new_raw < 0.0)),
        update_ids=state.update_ids + (j_new,),
        _pool_centered=state._pool_centered,
        _update_vecs=state._update_vecs + (cross,),
        _update_pivots=state._update_pivots + (pivot,),
    )
