"""Sparse denoising autoencoder over per-second return cross-sections.

The input vector is the normalized return of every asset plus a time-of-day feature in
[0, 1]; the target is the normalized returns alone. The bottleneck width is tied to the
asset count (K = max(1, N//5)) with a single hidden layer of width (N+K)//2 on each side.
Training uses masking noise (inverted input dropout), an L1 penalty on the bottleneck
activation, Adam with global-norm gradient clipping, and early stopping on validation
reconstruction error. Hyperparameters come from random search over a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arr import ReconstructionResult
from .nn import (
    DenseNet,
    LossSpec,
    Params,
    TrainConfig,
    TrainingDiverged,
    forward,
    init_params,
    train_dense_net,
)
from .returns_metrics import ReturnsPanel

SECONDS_PER_DAY = 86400


def ae_dims(n_assets: int) -> tuple[int, int]:
    """(latent, hidden) widths: K = max(1, N//5), H = (N+K)//2."""
    if n_assets < 1:
        raise ValueError("need at least one asset")
    k = max(1, n_assets // 5)
    return k, (n_assets + k) // 2


def build_ae_net(n_assets: int) -> DenseNet:
    k, h = ae_dims(n_assets)
    return DenseNet((n_assets + 1, h, k, h, n_assets), ("elu", "elu", "elu", "identity"))


def time_of_day(timestamps: np.ndarray) -> np.ndarray:
    """Seconds since midnight scaled to [0, 1)."""
    return (np.asarray(timestamps, dtype=np.int64) % SECONDS_PER_DAY) / SECONDS_PER_DAY


@dataclass(frozen=True)
class AeTrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    dropout_rate: float = 0.0
    l1_weight: float = 0.0
    clip_norm: float = 1.0
    max_epochs: int = 100
    patience: int = 5


@dataclass(frozen=True)
class AutoencoderModel:
    """Trained network plus the normalization frozen from its training data."""

    net: DenseNet
    params: Params
    mean: np.ndarray  # [N] per-asset training mean
    std: np.ndarray  # [N] per-asset training std
    asset_ids: tuple[str, ...]

    def __post_init__(self):
        for name in ("mean", "std"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.std <= 0):
            raise ValueError("non-positive normalization std")

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    @property
    def latent_dim(self) -> int:
        return self.net.dims[2]

    def normalize(self, returns: np.ndarray) -> np.ndarray:
        return (returns - self.mean) / self.std

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean

    def features(self, returns: np.ndarray, timestamps: np.ndarray) -> np.ndarray:
        """Normalized returns with the time-of-day feature appended."""
        r = np.asarray(returns, dtype=np.float64)
        if r.ndim == 1:
            r = r[None, :]
        if r.shape[1] != self.n_assets:
            raise ValueError("asset dimension mismatch")
        tod = np.atleast_1d(time_of_day(timestamps))
        return np.hstack([self.normalize(r), tod[:, None]])

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Bottleneck activation for pre-normalized inputs (N+1 features)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.net.dims[0]:
            raise ValueError("feature dimension mismatch")
        half = DenseNet(self.net.dims[:3], self.net.activations[:2])
        z, _ = forward(half, self.params[:2], x)
        return z

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Raw-scale reconstructed returns from bottleneck values."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.latent_dim:
            raise ValueError("latent dimension mismatch")
        half = DenseNet(self.net.dims[2:], self.net.activations[2:])
        out, _ = forward(half, self.params[2:], z)
        return self.denormalize(out)


def _prepare(panel: ReturnsPanel, mean: np.ndarray, std: np.ndarray):
    x_r = (panel.returns - mean) / std
    tod = time_of_day(panel.timestamps)
    return np.hstack([x_r, tod[:, None]]), x_r


def train_autoencoder(
    train: ReturnsPanel,
    val: ReturnsPanel,
    config: AeTrainConfig,
    seed: int | np.random.Generator = 0,
):
    """Train one autoencoder; returns (model, history).

    history has one row per epoch with the mean train loss and the penalty-free
    validation reconstruction MSE used for early stopping; the returned parameters come
    from the best validation epoch.
    """
    if train.interval != 1 or val.interval != 1:
        raise ValueError("training expects 1-second returns")
    if train.returns.shape[0] == 0:
        raise ValueError("empty training set")
    if train.n_assets < 5:
        raise ValueError("need at least 5 assets")
    if train.asset_ids != val.asset_ids:
        raise ValueError("train/val asset universes differ")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    mean = train.returns.mean(axis=0)
    std = train.returns.std(axis=0)
    dead = np.flatnonzero(std == 0.0)
    if dead.size:
        raise ValueError(f"asset {train.asset_ids[dead[0]]!r} has constant training returns")

    x_tr, y_tr = _prepare(train, mean, std)
    x_val, y_val = _prepare(val, mean, std)
    net = build_ae_net(train.n_assets)
    params = init_params(net, rng)
    spec = LossSpec("mse", l1_weight=config.l1_weight, l1_layer=1)
    nn_cfg = TrainConfig(
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        clip_norm=config.clip_norm,
        dropout_rate=config.dropout_rate,
    )
    best_params, history = train_dense_net(net, params, x_tr, y_tr, x_val, y_val, spec, nn_cfg, rng)
    model = AutoencoderModel(net=net, params=best_params, mean=mean, std=std, asset_ids=train.asset_ids)
    return model, history


def reconstruct_series(
    model: AutoencoderModel, panel: ReturnsPanel, chunk_size: int = 65536
) -> ReconstructionResult:
    """Inference over a per-second panel (no dropout); raw-scale reconstructions."""
    if panel.interval != 1:
        raise ValueError("reconstruction expects 1-second returns")
    if panel.asset_ids != model.asset_ids:
        raise ValueError("asset universe differs from the training universe")
    out = np.empty_like(panel.returns)
    for lo in range(0, panel.returns.shape[0], chunk_size):
        sl = slice(lo, lo + chunk_size)
        x = model.features(panel.returns[sl], panel.timestamps[sl])
        y, _ = forward(model.net, model.params, x)
        out[sl] = model.denormalize(y)
    return ReconstructionResult(
        timestamps=panel.timestamps,
        actual=panel.returns,
        reconstructed=out,
        session_index=panel.session_index,
        asset_ids=panel.asset_ids,
        source="autoencoder",
        interval=panel.interval,
    )


# ---------------------------------------------------------------------------
# random search

DEFAULT_AE_GRID: dict[str, tuple] = {
    "dropout_rate": (0.0, 0.2, 0.4, 0.6, 0.8),
    "l1_weight": (0.0, 0.01, 0.1, 1.0, 10.0),
    "batch_size": (256, 512, 1024, 2048),
    "learning_rate": (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0),
    "clip_norm": (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0),
}


@dataclass(frozen=True)
class AeTrial:
    arm: int
    config: AeTrainConfig
    history: tuple = ()
    val_loss: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class AeSearchResult:
    best_config: AeTrainConfig
    best_val_loss: float
    best_model: AutoencoderModel
    trials: tuple[AeTrial, ...]


def random_search_ae(
    train: ReturnsPanel,
    val: ReturnsPanel,
    grid: dict | None = None,
    iterations: int = 20,
    seed: int = 0,
    max_epochs: int = 100,
) -> AeSearchResult:
    """Uniform-with-replacement search over the hyperparameter grid product.

    Every iteration produces a trial record; diverged trainings are recorded with their
    error and excluded from the argmin. A trial's val_loss is the reconstruction MSE of
    its best epoch (the parameters actually returned for that trial).
    """
    grid = DEFAULT_AE_GRID if grid is None else grid
    if iterations < 1:
        raise ValueError("iterations must be positive")
    keys = sorted(grid)
    config_rng = np.random.default_rng(np.random.SeedSequence(seed))
    trials: list[AeTrial] = []
    best: tuple[float, AutoencoderModel, AeTrainConfig] | None = None
    for arm in range(iterations):
        choice = {k: grid[k][int(config_rng.integers(len(grid[k])))] for k in keys}
        config = AeTrainConfig(max_epochs=max_epochs, **choice)
        arm_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(arm,)))
        try:
            model, history = train_autoencoder(train, val, config, seed=arm_rng)
        except TrainingDiverged as exc:
            trials.append(AeTrial(arm=arm, config=config, error=str(exc)))
            continue
        val_loss = min(h["val_fit"] for h in history)
        trials.append(AeTrial(arm=arm, config=config, history=tuple(history), val_loss=val_loss))
        if best is None or val_loss < best[0]:
            best = (val_loss, model, config)
    if best is None:
        raise RuntimeError("every search trial failed")
    return AeSearchResult(
        best_config=best[2], best_val_loss=best[0], best_model=best[1], trials=tuple(trials)
    )
