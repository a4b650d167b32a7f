"""Toy restoration tasks: degradations, paired datasets, rewards.

Tasks are desk-scale stand-ins for image restoration: clean samples X*
from a simple 2D distribution, degraded observations Y = A X* + b + noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

GAUSSIAN_SHIFT = "gaussian_shift"
RING = "ring"
TWO_MOONS = "two_moons"
DATASET_KINDS = (GAUSSIAN_SHIFT, RING, TWO_MOONS)

NEG_MSE = "neg_mse"
PSNR_LIKE = "psnr_like"
SQ_L2 = "sq_l2"
L1 = "l1"


@dataclass(frozen=True)
class DegradationOp:
    """Linear degradation y = A x + b + noise_std·ε."""

    matrix: np.ndarray
    bias: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))
        if not np.all(np.isfinite(self.matrix)):
            raise ConfigError("degradation matrix must be finite")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")

    @classmethod
    def scaling(cls, scale: float, dim: int = 2, noise_std: float = 0.0):
        """Isotropic scaling degradation y = scale·x."""
        return cls(matrix=scale * np.eye(dim), bias=np.zeros(dim),
                   noise_std=noise_std)


def degrade(op: DegradationOp, x, rng=None, noise=None):
    """Apply the degradation: A x + b + noise_std·ε."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != op.matrix.shape[1]:
        raise ConfigError(
            f"state dimension {x.shape[-1]} != operator input "
            f"{op.matrix.shape[1]}"
        )
    y = x @ op.matrix.T + op.bias
    if op.noise_std > 0.0:
        if noise is None:
            noise = rng.standard_normal(y.shape)
        y = y + op.noise_std * noise
    return y


@dataclass
class ToyDataset:
    """Paired clean/degraded samples plus their generation recipe."""

    kind: str
    seed: int
    op: DegradationOp
    x_star: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.x_star.shape[0]


def _sample_clean(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == GAUSSIAN_SHIFT:
        return rng.standard_normal((n, 2)) + np.array([2.0, 2.0])
    if kind == RING:
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        radius = 1.0 + 0.05 * rng.standard_normal(n)
        return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    if kind == TWO_MOONS:
        theta = rng.uniform(0.0, np.pi, n)
        upper = rng.integers(0, 2, n).astype(bool)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.stack([x, y], axis=1)
        return pts + 0.05 * rng.standard_normal((n, 2))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def gen_dataset(kind: str, n: int, op: DegradationOp, seed: int) -> ToyDataset:
    """Generate n (x*, y) pairs deterministically from the seed."""
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x_star = _sample_clean(kind, n, rng)
    y = degrade(op, x_star, rng=rng)
    return ToyDataset(kind=kind, seed=seed, op=op, x_star=x_star, y=y)


@dataclass(frozen=True)
class RewardSpec:
    kind: str = NEG_MSE
    data_range: float = 1.0

    def __post_init__(self):
        if self.kind not in (NEG_MSE, PSNR_LIKE):
            raise ConfigError(f"unknown reward kind {self.kind!r}")


@dataclass(frozen=True)
class DivergenceSpec:
    kind: str = SQ_L2

    def __post_init__(self):
        if self.kind not in (SQ_L2, L1):
            raise ConfigError(f"unknown divergence kind {self.kind!r}")


def reward(spec: RewardSpec, x_hat, x_star) -> float:
    """Scalar reward of a reconstruction against the ground truth."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    mse = float(np.mean((x_hat - x_star) ** 2))
    if spec.kind == NEG_MSE:
        return -mse
    mse = max(mse, 1e-12)
    return float(10.0 * np.log10(spec.data_range**2 / mse))


def divergence(spec: DivergenceSpec, a, b) -> float:
    """Scalar divergence between two states."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.kind == SQ_L2:
        return float(np.sum((a - b) ** 2))
    return float(np.sum(np.abs(a - b)))


def save_dataset(ds: ToyDataset, path):
    """Write the dataset as delimiter-separated text with a recipe header."""
    dim = ds.x_star.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={ds.kind} n={len(ds)} seed={ds.seed} "
                 f"noise_std={ds.op.noise_std:.17g}\n")
        fh.write("# A=" + ",".join(f"{v:.17g}" for v in ds.op.matrix.ravel())
                 + " b=" + ",".join(f"{v:.17g}" for v in ds.op.bias) + "\n")
        cols = [f"x{j}" for j in range(dim)] + [f"y{j}" for j in range(dim)]
        fh.write("\t".join(cols) + "\n")
        for xs, ys in zip(ds.x_star, ds.y):
            fh.write("\t".join(f"{v:.17g}" for v in np.concatenate([xs, ys]))
                     + "\n")
