"""Shared test utilities: exact-covariance sample construction, finite
differences, and an independent replay of the early-stopping rules."""

import numpy as np

from nngp_al import nn_core as nc
from nngp_al.stochastic_inference import SampleMatrix


def orthonormal_meanzero(n_rows: int, n_cols: int) -> np.ndarray:
    """Helmert-style basis: orthonormal columns, each summing to zero."""
    assert n_cols <= n_rows - 1
    cols = []
    for j in range(1, n_cols + 1):
        v = np.zeros(n_rows)
        v[:j] = 1.0
        v[j] = -float(j)
        cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols)


def samples_with_covariance(cov: np.ndarray, n_passes: int | None = None,
                            point_ids=None) -> SampleMatrix:
    """A sample matrix whose empirical covariance equals ``cov`` exactly.

    Columns are mean-zero by construction, so the T-1 sample covariance of
    the returned values reproduces the requested SPD matrix to float
    precision.
    """
    cov = np.asarray(cov, dtype=float)
    k = cov.shape[0]
    t = n_passes or k + 1
    chol = np.linalg.cholesky(cov)
    basis = orthonormal_meanzero(t, k)
    values = np.sqrt(t - 1) * basis @ chol.T
    ids = tuple(point_ids) if point_ids is not None else tuple(range(k))
    return SampleMatrix(values=values, point_ids=ids, mask_seed=0)


def random_spd(rng, size: int, jitter: float = 0.0) -> np.ndarray:
    a = rng.normal(size=(size, size))
    return a @ a.T + (size * 0.05 + jitter) * np.eye(size)


def finite_difference_gradient(net, batch, mask_seed, l2, h=1e-5):
    """Central finite differences of the loss over the flat parameter vector."""
    p0 = nc.get_params(net)
    grad = np.zeros_like(p0)
    for i in range(p0.size):
        p = p0.copy()
        p[i] += h
        nc.set_params(net, p)
        loss_plus, _ = nc.loss_and_gradient(net, batch, mask_seed, l2)
        p = p0.copy()
        p[i] -= h
        nc.set_params(net, p)
        loss_minus, _ = nc.loss_and_gradient(net, batch, mask_seed, l2)
        grad[i] = (loss_plus - loss_minus) / (2 * h)
    nc.set_params(net, p0)
    return grad


def reference_stop_epoch(cfg: nc.TrainConfig, trace) -> tuple[int, str]:
    """Independent epoch-by-epoch replay of the early-stopping rules.

    Mandatory epochs run unconditionally; afterwards every es_check_step-th
    epoch consumes the next scripted validation error, bumping the warning
    counter on a >window degradation and otherwise resetting it and accepting
    the new error; stop once warnings exceed the cap or the epoch budget ends.
    """
    warnings = 0
    e_prev = 1e10
    idx = 0
    epoch = 0
    while epoch < cfg.epochs_max:
        epoch += 1
        if epoch <= cfg.epochs_mandatory:
            continue
        if (epoch - cfg.epochs_mandatory) % cfg.es_check_step != 0:
            continue
        if idx >= len(trace):
            break
        e_val = trace[idx]
        idx += 1
        if e_val > e_prev * (1.0 + cfg.es_window_frac):
            warnings += 1
        else:
            warnings = 0
            e_prev = e_val
        if warnings > cfg.warnings_max:
            return epoch, nc.EARLY_STOPPED
    return cfg.epochs_max, nc.MAX_EPOCHS


def small_random_net(rng, max_params: int = 50) -> nc.Network:
    """Random architectures small enough for finite-difference checks."""
    while True:
        d_in = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))]
        dims = [d_in, *widths, 1]
        n_params = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        if n_params <= max_params:
            break
    specs = [nc.LayerSpec(dims[i], dims[i + 1], nc.LEAKY_RELU, 0.1)
             for i in range(len(dims) - 2)]
    specs.append(nc.LayerSpec(dims[-2], 1, nc.IDENTITY))
    net = nc.init_network(specs, float(rng.uniform(0.0, 0.4)), seed=int(rng.integers(1 << 30)))
    return net


def min_abs_preactivation(net, batch, mask_seed) -> float:
    """Smallest |pre-activation| of any LeakyReLU unit under the realized masks.

    Central differences are only a valid gradient oracle when no unit sits
    within the step size of the activation kink; instances below a safety
    margin must be regenerated.
    """
    x = np.asarray([p[0] for p in batch], dtype=float)
    from nngp_al.seeding import derive_rng

    scales = nc._draw_training_scales(net, x.shape[0], net.dropout_rate, derive_rng(mask_seed))
    smallest = np.inf
    h = x
    for k, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        z = h @ w.T + b
        if spec.activation == nc.LEAKY_RELU:
            smallest = min(smallest, float(np.min(np.abs(z))))
        h = z if spec.activation == nc.IDENTITY else np.where(z >= 0, z, spec.slope * z)
        if scales is not None and k < len(net.layers) - 1:
            h = h * scales[k]
    return smallest


def kink_free_instance(rng, margin: float = 1e-3):
    """(net, batch, mask_seed) with every pre-activation away from the kink."""
    while True:
        net = small_random_net(rng)
        batch = [(rng.normal(size=net.input_dim), rng.normal()) for _ in range(4)]
        mask_seed = int(rng.integers(1 << 30))
        if min_abs_preactivation(net, batch, mask_seed) > margin:
            return net, batch, mask_seed
