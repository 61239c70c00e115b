"""Session fixtures: small trained networks shared by behavioural tests."""

import numpy as np
import pytest

from nngp_al import nn_core as nc


def surface(x):
    """Smooth 2-D test surface on the unit square."""
    return np.sin(3.0 * x[:, 0]) + np.cos(3.0 * x[:, 1])


def in_gap(x):
    """Upper-left corner left uncovered by the gap fixture's training data."""
    return (x[:, 0] < 0.4) & (x[:, 1] > 0.6)


def _specs():
    return [
        nc.LayerSpec(2, 32),
        nc.LayerSpec(32, 32),
        nc.LayerSpec(32, 1, nc.IDENTITY),
    ]


_TRAIN_CFG = nc.TrainConfig(
    lr_initial=5e-3,
    epochs_mandatory=1500,
    epochs_max=2500,
    es_check_step=100,
    batch_size=64,
    dropout_train=0.1,
    seed=7,
)


@pytest.fixture(scope="session")
def gap_fixture():
    """Net trained on the smooth surface with an empty corner, plus a pool
    spanning the whole square and anchors drawn from the training data."""
    rng = np.random.default_rng(1234)
    pts = rng.uniform(0, 1, size=(400, 2))
    train_x = pts[~in_gap(pts)][:150]
    val = rng.uniform(0, 1, size=(80, 2))
    val_x = val[~in_gap(val)][:50]
    net = nc.init_network(_specs(), 0.1, seed=7)
    nc.train(net, (train_x, surface(train_x)), (val_x, surface(val_x)), _TRAIN_CFG)
    pool = np.random.default_rng(99).uniform(0, 1, size=(250, 2))
    return {"net": net, "pool": pool, "anchors": train_x[:100], "train_x": train_x}


@pytest.fixture(scope="session")
def smooth_net():
    """Net trained on the smooth surface over the full unit square."""
    rng = np.random.default_rng(4321)
    train_x = rng.uniform(0, 1, size=(150, 2))
    val_x = rng.uniform(0, 1, size=(50, 2))
    net = nc.init_network(_specs(), 0.1, seed=8)
    nc.train(net, (train_x, surface(train_x)), (val_x, surface(val_x)), _TRAIN_CFG)
    return net
