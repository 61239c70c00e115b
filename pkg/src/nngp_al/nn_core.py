"""Feed-forward regression network with dropout, trained by manual backprop.

The model family is deliberately small: affine layers with LeakyReLU hidden
activations and a scalar identity output, mean-squared-error loss with L2
weight decay, plain minibatch SGD under a step-decay learning rate, and a
warning-counter early-stopping rule driven by periodic validation RMSE checks.

Dropout follows the inverted convention: a deterministic pass (no mask) uses
the full weights unscaled; a stochastic pass multiplies kept hidden units by
1/(1 - rate). Masks never touch the input or the output unit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericInputError, TrainingDivergedError, UsageError
from .seeding import derive_rng

LEAKY_RELU = "leaky_relu"
IDENTITY = "identity"

EARLY_STOPPED = "early_stopped"
MAX_EPOCHS = "max_epochs"

# key-path tags for RNG derivation
_TAG_SHUFFLE = 11
_TAG_MASK = 13


@dataclass(frozen=True)
class LayerSpec:
    """Shape and activation of one affine layer."""

    input_dim: int
    output_dim: int
    activation: str = LEAKY_RELU
    slope: float = 0.1

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")
        if self.activation not in (LEAKY_RELU, IDENTITY):
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.activation == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ConfigurationError(f"LeakyReLU slope must be in (0, 1), got {self.slope}")


@dataclass
class Network:
    """Weights and biases for a stack of LayerSpec layers.

    ``dropout_rate`` is the drop probability used when a stochastic pass does
    not specify its own rate. The final layer must be a 1-unit identity layer.
    """

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]  # per layer, (output_dim, input_dim)
    biases: list[np.ndarray]
    dropout_rate: float = 0.0

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(spec.output_dim for spec in self.layers[:-1])

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network(
            layers=self.layers,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout_rate=self.dropout_rate,
        )


def _validate_specs(specs):
    if not specs:
        raise ConfigurationError("network needs at least one layer")
    for a, b in zip(specs, specs[1:]):
        if a.output_dim != b.input_dim:
            raise ConfigurationError(
                f"layer dimension mismatch: {a.output_dim} -> {b.input_dim}"
            )
    last = specs[-1]
    if last.output_dim != 1 or last.activation != IDENTITY:
        raise ConfigurationError("final layer must be a 1-unit identity layer")


def init_network(specs, dropout_rate: float, seed: int) -> Network:
    """Build a network with He-style fan-in scaled weights and zero biases."""
    specs = tuple(specs)
    _validate_specs(specs)
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    rng = derive_rng(seed)
    weights, biases = [], []
    for spec in specs:
        if spec.activation == LEAKY_RELU:
            std = np.sqrt(2.0 / ((1.0 + spec.slope**2) * spec.input_dim))
        else:
            std = np.sqrt(1.0 / spec.input_dim)
        weights.append(rng.normal(0.0, std, size=(spec.output_dim, spec.input_dim)))
        biases.append(np.zeros(spec.output_dim))
    return Network(layers=specs, weights=weights, biases=biases, dropout_rate=dropout_rate)


def _activate(z, spec):
    if spec.activation == IDENTITY:
        return z
    return np.where(z >= 0.0, z, spec.slope * z)


def _activate_prime(z, spec):
    if spec.activation == IDENTITY:
        return 1.0
    return np.where(z >= 0.0, 1.0, spec.slope)


def _mask_scales(mask, n_hidden):
    """Per-hidden-layer multipliers from a mask object, or None for a clean pass."""
    if mask is None:
        return None
    keeps = mask.keeps
    if len(keeps) != n_hidden:
        raise UsageError(f"mask has {len(keeps)} layers, network has {n_hidden} hidden layers")
    keep_prob = 1.0 - mask.rate
    return [k / keep_prob for k in keeps] if mask.rate > 0.0 else list(keeps)


def forward_batch(net: Network, x: np.ndarray, mask=None) -> np.ndarray:
    """Evaluate the network on a (n, d) batch, returning n scalar outputs.

    With ``mask`` given, kept hidden units are rescaled by 1/(1 - rate); the
    same mask applies to every row of the batch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise UsageError(f"expected input dim {net.input_dim}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("input contains non-finite values")
    scales = _mask_scales(mask, len(net.layers) - 1)
    h = x
    for k, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        h = _activate(h @ w.T + b, spec)
        if scales is not None and k < len(net.layers) - 1:
            h = h * scales[k]
    return h[:, 0]


def forward(net: Network, x, mask=None) -> float:
    """Single-point forward pass; see forward_batch."""
    return float(forward_batch(net, np.asarray(x, dtype=float)[None, :], mask)[0])


def _loss_and_gradient_arrays(net, x, y, scales, l2):
    """MSE + L2 loss and its exact gradient for fixed dropout scales.

    ``scales`` is None (clean pass) or a list of per-hidden-layer multiplier
    arrays; per-example (n, width) multipliers are allowed for training.
    """
    n = x.shape[0]
    n_layers = len(net.layers)
    inputs, zs = [], []
    h = x
    for k, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        zs.append(z)
        h = _activate(z, spec)
        if scales is not None and k < n_layers - 1:
            h = h * scales[k]
    pred = h[:, 0]
    err = pred - y
    loss = float(err @ err) / n
    if l2 > 0.0:
        for w in net.weights:
            loss += l2 * float(w.ravel() @ w.ravel())

    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    d_out = (2.0 / n) * err[:, None]
    for k in range(n_layers - 1, -1, -1):
        d_act = d_out
        if scales is not None and k < n_layers - 1:
            d_act = d_out * scales[k]
        d_z = d_act * _activate_prime(zs[k], net.layers[k])
        grads_w[k] = d_z.T @ inputs[k]
        if l2 > 0.0:
            grads_w[k] += 2.0 * l2 * net.weights[k]
        grads_b[k] = d_z.sum(axis=0)
        if k > 0:
            d_out = d_z @ net.weights[k]
    return loss, list(zip(grads_w, grads_b))


def _draw_training_scales(net, n, rate, rng):
    if rate <= 0.0:
        return None
    keep_prob = 1.0 - rate
    return [
        rng.binomial(1, keep_prob, size=(n, width)) / keep_prob
        for width in net.hidden_widths
    ]


def loss_and_gradient(net: Network, batch, mask_seed: int, l2: float, dropout_rate=None):
    """Loss and exact per-parameter gradient on a batch of (x, y) pairs.

    Dropout masks (one keep-vector per example per hidden layer) are realized
    deterministically from ``mask_seed``; the returned gradient is exact for
    those masks. Gradients come back as a per-layer list of (dW, db).
    """
    if len(batch) == 0:
        raise UsageError("batch must be non-empty")
    x = np.asarray([p[0] for p in batch], dtype=float)
    y = np.asarray([p[1] for p in batch], dtype=float)
    rate = net.dropout_rate if dropout_rate is None else dropout_rate
    scales = _draw_training_scales(net, x.shape[0], rate, derive_rng(mask_seed))
    return _loss_and_gradient_arrays(net, x, y, scales, l2)


def get_params(net: Network) -> np.ndarray:
    """Flatten all weights and biases into one vector (layer order)."""
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(net.weights, net.biases)])


def set_params(net: Network, vec: np.ndarray) -> None:
    """Inverse of get_params; writes the vector back into the network."""
    pos = 0
    for k, spec in enumerate(net.layers):
        size = spec.output_dim * spec.input_dim
        net.weights[k] = vec[pos : pos + size].reshape(spec.output_dim, spec.input_dim).copy()
        pos += size
        net.biases[k] = vec[pos : pos + spec.output_dim].copy()
        pos += spec.output_dim
    if pos != vec.size:
        raise UsageError(f"parameter vector has {vec.size} entries, network needs {pos}")


def flatten_gradients(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults follow the step-decay SGD recipe."""

    lr_initial: float = 1e-3
    lr_decay: float = 0.97
    lr_step_epochs: int = 50_000
    lr_floor: float = 1e-5
    l2: float = 1e-4
    batch_size: int = 200
    dropout_train: float = 0.1
    epochs_mandatory: int = 10_000
    epochs_max: int = 1_000_000
    es_check_step: int = 100
    es_window_frac: float = 0.01
    warnings_max: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lr_decay < 1.0:
            raise ConfigurationError("lr_decay must be in (0, 1)")
        if self.lr_floor > self.lr_initial:
            raise ConfigurationError("lr_floor must not exceed lr_initial")
        if self.epochs_mandatory > self.epochs_max:
            raise ConfigurationError("epochs_mandatory must not exceed epochs_max")
        if self.es_check_step < 1 or self.batch_size < 1:
            raise ConfigurationError("es_check_step and batch_size must be positive")


@dataclass
class TrainReport:
    epochs_run: int
    final_val_rmse: float
    stop_reason: str
    loss_trace: list[tuple[int, float, float]] = field(default_factory=list)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Step-decayed learning rate at a 0-based epoch, floored at lr_floor."""
    return max(cfg.lr_floor, cfg.lr_initial * cfg.lr_decay ** (epoch // cfg.lr_step_epochs))


@dataclass
class EarlyStopping:
    """Warning-counter stop rule over periodic validation RMSE checks.

    A check that degrades by more than ``window_frac`` (multiplicative) over
    the last accepted value adds a warning; any other check clears the counter
    and accepts the new value. Stop once warnings exceed ``warnings_max``.
    """

    window_frac: float
    warnings_max: int
    previous: float = 1e10
    warnings: int = 0

    def observe(self, val_rmse: float) -> bool:
        if val_rmse > self.previous * (1.0 + self.window_frac):
            self.warnings += 1
        else:
            self.warnings = 0
            self.previous = val_rmse
        return self.warnings > self.warnings_max


def check_epochs(cfg: TrainConfig):
    """Epoch counts (1-based, cumulative) at which validation checks happen.

    Checks only start once the mandatory phase is over and then occur every
    es_check_step epochs, up to epochs_max.
    """
    e = cfg.epochs_mandatory + cfg.es_check_step
    while e <= cfg.epochs_max:
        yield e
        e += cfg.es_check_step


def simulate_early_stopping(cfg: TrainConfig, val_errors) -> tuple[int, str]:
    """Replay a scripted sequence of check-time validation errors.

    ``val_errors[i]`` is the RMSE observed at the i-th check. Returns the
    epoch count at which training would stop and the stop reason. Traces
    shorter than the available checks fall through to the epoch cap.
    """
    stopper = EarlyStopping(cfg.es_window_frac, cfg.warnings_max)
    trace = iter(val_errors)
    for epoch in check_epochs(cfg):
        try:
            err = next(trace)
        except StopIteration:
            break
        if stopper.observe(err):
            return epoch, EARLY_STOPPED
    return cfg.epochs_max, MAX_EPOCHS


def _val_rmse(net, x_val, y_val):
    diff = forward_batch(net, x_val) - y_val
    return float(np.sqrt(np.mean(diff**2)))


def train(net: Network, train_set, val_set, cfg: TrainConfig) -> TrainReport:
    """SGD training with the mandatory-phase early-stopping schedule.

    ``train_set`` and ``val_set`` are (X, y) array pairs. The network is
    updated in place; pass a copy to keep the original. Deterministic for
    fixed (seed, config, data).
    """
    x_train = np.asarray(train_set[0], dtype=float)
    y_train = np.asarray(train_set[1], dtype=float)
    x_val = np.asarray(val_set[0], dtype=float)
    y_val = np.asarray(val_set[1], dtype=float)
    if x_train.shape[0] < 1:
        raise UsageError("training set must contain at least one point")
    if x_val.shape[0] < 1:
        raise UsageError("validation set must be non-empty")

    n = x_train.shape[0]
    shuffle_rng = derive_rng(cfg.seed, _TAG_SHUFFLE)
    mask_rng = derive_rng(cfg.seed, _TAG_MASK)
    stopper = EarlyStopping(cfg.es_window_frac, cfg.warnings_max)
    trace: list[tuple[int, float, float]] = []
    epochs_run = 0
    stop_reason = MAX_EPOCHS

    for epoch in range(cfg.epochs_max):
        lr = lr_at_epoch(cfg, epoch)
        perm = shuffle_rng.permutation(n)
        # one fresh mask per example per epoch, sliced along the batches
        epoch_scales = _draw_training_scales(net, n, cfg.dropout_train, mask_rng)
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            stop = start + cfg.batch_size
            scales = None if epoch_scales is None else [s[start:stop] for s in epoch_scales]
            loss, grads = _loss_and_gradient_arrays(
                net, x_train[perm[start:stop]], y_train[perm[start:stop]], scales, cfg.l2
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            for k, (gw, gb) in enumerate(grads):
                net.weights[k] -= lr * gw
                net.biases[k] -= lr * gb
            loss_sum += loss
            n_batches += 1

        completed = epoch + 1
        epochs_run = completed
        # same schedule check_epochs() generates
        is_check = (
            completed > cfg.epochs_mandatory
            and (completed - cfg.epochs_mandatory) % cfg.es_check_step == 0
        )
        if is_check:
            val_rmse = _val_rmse(net, x_val, y_val)
            trace.append((completed, loss_sum / n_batches, val_rmse))
            if stopper.observe(val_rmse):
                stop_reason = EARLY_STOPPED
                break

    return TrainReport(
        epochs_run=epochs_run,
        final_val_rmse=_val_rmse(net, x_val, y_val),
        stop_reason=stop_reason,
        loss_trace=trace,
    )
