"""Monte-Carlo sampling of the dropout network's stochastic output.

One dropout mask is drawn per pass and applied to every evaluated point in
that pass, so columns of the resulting sample matrix share the randomness
needed for meaningful cross-point covariance estimates.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import nn_core
from .errors import UsageError
from .seeding import derive_rng

_TAG_MASK_STREAM = 29


@dataclass(frozen=True)
class DropoutMask:
    """Per-hidden-layer binary keep vectors plus the drop rate that made them."""

    keeps: tuple[np.ndarray, ...]
    rate: float


def draw_mask(net: nn_core.Network, rate: float, rng: np.random.Generator) -> DropoutMask:
    if not 0.0 <= rate < 1.0:
        raise UsageError(f"dropout rate must be in [0, 1), got {rate}")
    keeps = tuple(
        rng.binomial(1, 1.0 - rate, size=width).astype(float)
        for width in net.hidden_widths
    )
    return DropoutMask(keeps=keeps, rate=rate)


@dataclass(frozen=True)
class SampleMatrix:
    """T x n matrix of stochastic outputs: row = pass, column = point."""

    values: np.ndarray
    point_ids: tuple
    mask_seed: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2:
            raise UsageError("sample matrix needs at least 2 passes (rows)")
        if not np.all(np.isfinite(values)):
            raise UsageError("sample matrix contains non-finite entries")
        if len(self.point_ids) != values.shape[1]:
            raise UsageError("point_ids length must match the number of columns")
        if len(set(self.point_ids)) != len(self.point_ids):
            raise UsageError("point ids must be unique")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "point_ids", tuple(self.point_ids))
        object.__setattr__(self, "_index", {pid: j for j, pid in enumerate(self.point_ids)})

    @property
    def n_passes(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def column_indices(self, ids) -> np.ndarray:
        try:
            return np.asarray([self._index[pid] for pid in ids], dtype=int)
        except KeyError as err:
            raise UsageError(f"unknown point id {err.args[0]!r}") from None

    def block(self, ids) -> np.ndarray:
        """Columns for the given point ids, as a (T, len(ids)) array."""
        return self.values[:, self.column_indices(ids)]

    def to_csv(self, path) -> None:
        """Debug dump: header = point ids, one row per pass."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([str(pid) for pid in self.point_ids])
            writer.writerows(self.values.tolist())


def sample_passes(
    net: nn_core.Network,
    points,
    n_passes: int,
    rate: float,
    seed: int,
    point_ids=None,
) -> SampleMatrix:
    """Evaluate all points under ``n_passes`` shared dropout masks.

    The mask for pass t is derived from (seed, t) alone, so rows are
    reproducible independently of evaluation order.
    """
    if n_passes < 2:
        raise UsageError("need at least 2 passes for sample statistics")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if point_ids is None:
        point_ids = tuple(range(points.shape[0]))
    rows = np.empty((n_passes, points.shape[0]))
    for t in range(n_passes):
        mask = draw_mask(net, rate, derive_rng(seed, _TAG_MASK_STREAM, t))
        rows[t] = nn_core.forward_batch(net, points, mask)
    return SampleMatrix(values=rows, point_ids=tuple(point_ids), mask_seed=seed)


def mc_mean(samples: SampleMatrix) -> np.ndarray:
    """Monte-Carlo mean per point (column means)."""
    return samples.values.mean(axis=0)


def mc_variance(samples: SampleMatrix) -> np.ndarray:
    """Unbiased per-point sample variance across passes (T - 1 denominator)."""
    return samples.values.var(axis=0, ddof=1)
