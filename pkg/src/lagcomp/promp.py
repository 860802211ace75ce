"""Probabilistic movement primitives over phase-indexed radial basis functions.

Each channel of a task is modeled as a Gaussian distribution over the weights
of a normalized radial basis expansion of phase. Fitting runs one ridge
regression per demonstration and takes sample statistics of the recovered
weights; prediction marginalizes the weights out; observations update the
distribution by exact Gaussian conditioning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    InsufficientDemonstrations,
    MalformedInput,
    ModelError,
    SingularConditioning,
    UnderdeterminedFit,
)
from .trajectory import ChannelSpec, Trajectory, to_phase

DEFAULT_BASIS_COUNT = 20
DEFAULT_RIDGE = 1e-12

#: floor for the covariance regularizer so identical demonstrations still
#: produce a strictly positive-definite weight covariance
_COV_REG_FLOOR = 1e-12
_COV_REG_SCALE = 1e-8


def default_bandwidth(m: int) -> float:
    """Kernel variance (phase² units) giving neighbouring bases ~70% overlap."""
    return 1.0 / (2.0 * (m - 1) ** 2)


@dataclass(frozen=True)
class BasisConfig:
    """Shape of the basis expansion: count, kernel variance, ridge factor."""

    m: int = DEFAULT_BASIS_COUNT
    h: float = 0.0  # 0 means "use default_bandwidth(m)"
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if self.m < 2:
            raise MalformedInput(f"basis count must be >= 2, got {self.m}")
        if self.h == 0.0:
            object.__setattr__(self, "h", default_bandwidth(self.m))
        if not self.h > 0:
            raise MalformedInput(f"bandwidth must be > 0, got {self.h}")
        if not self.ridge > 0:
            raise MalformedInput(f"ridge must be > 0, got {self.ridge}")

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.m) / (self.m - 1)


def basis_row(phase: float, config: BasisConfig) -> np.ndarray:
    """Normalized radial basis activations at one phase.

    Entries are positive and sum to 1; centers are spread uniformly over
    [0, 1]. Phases outside [0, 1] clamp to the boundary.
    """
    p = min(max(float(phase), 0.0), 1.0)
    e = np.exp(-0.5 * (p - config.centers) ** 2 / config.h)
    return e / e.sum()


def basis_matrix(phases: np.ndarray, config: BasisConfig) -> np.ndarray:
    """Stack of basis rows, one per phase. Shape (len(phases), m)."""
    p = np.clip(np.asarray(phases, dtype=float), 0.0, 1.0)
    e = np.exp(-0.5 * (p[:, None] - config.centers[None, :]) ** 2 / config.h)
    return e / e.sum(axis=1, keepdims=True)


def fit_weights(phases: np.ndarray, values: np.ndarray, config: BasisConfig) -> np.ndarray:
    """Ridge-regress one channel's phased samples onto the basis.

    Minimizes ||Phi w - xi||^2 + ridge ||w||^2. Needs at least as many
    samples as basis functions.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] < config.m:
        raise UnderdeterminedFit(
            f"{values.shape[0]} samples for {config.m} basis functions"
        )
    phi = basis_matrix(phases, config)
    gram = phi.T @ phi + config.ridge * np.eye(config.m)
    return np.linalg.solve(gram, phi.T @ values)


def fit_distribution(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and population covariance of demonstration weight vectors.

    weights has one row per demonstration. The covariance uses the 1/D
    normalization and gains a small diagonal regularizer so it stays
    positive definite even for identical demonstrations.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    d = weights.shape[0]
    if d < 2:
        raise InsufficientDemonstrations(f"need >= 2 demonstrations, got {d}")
    mu = weights.mean(axis=0)
    centered = weights - mu
    sigma = centered.T @ centered / d
    reg = max(_COV_REG_SCALE * float(np.mean(np.diag(sigma))), _COV_REG_FLOOR)
    sigma = sigma + reg * np.eye(sigma.shape[0])
    return mu, sigma


@dataclass(frozen=True)
class ProMP:
    """Gaussian over basis weights for one channel, plus observation noise."""

    config: BasisConfig
    mu_w: np.ndarray
    sigma_w: np.ndarray
    sigma_xi2: float = 0.0

    def __post_init__(self):
        mu = np.asarray(self.mu_w, dtype=float)
        sig = np.asarray(self.sigma_w, dtype=float)
        if mu.shape != (self.config.m,):
            raise MalformedInput(f"mu_w shape {mu.shape} != ({self.config.m},)")
        if sig.shape != (self.config.m, self.config.m):
            raise MalformedInput(f"sigma_w shape {sig.shape}")
        if not np.all(np.isfinite(mu)):
            raise MalformedInput("mu_w must be finite")
        if np.max(np.abs(sig - sig.T)) > 1e-10:
            raise MalformedInput("sigma_w must be symmetric within 1e-10")
        sig = 0.5 * (sig + sig.T)
        if np.linalg.eigvalsh(sig)[0] < -1e-10:
            raise MalformedInput("sigma_w must be PSD within 1e-10")
        object.__setattr__(self, "mu_w", mu)
        object.__setattr__(self, "sigma_w", sig)

    @classmethod
    def from_demos(
        cls,
        phases: np.ndarray,
        demos: np.ndarray,
        config: BasisConfig,
    ) -> "ProMP":
        """Fit a primitive from stacked demonstrations (one row per demo).

        Observation noise defaults to the mean residual variance of the
        per-demo ridge fits.
        """
        demos = np.atleast_2d(np.asarray(demos, dtype=float))
        ws = np.stack([fit_weights(phases, d, config) for d in demos])
        mu, sigma = fit_distribution(ws)
        phi = basis_matrix(phases, config)
        residuals = demos - ws @ phi.T
        sigma_xi2 = float(np.mean(residuals**2))
        return cls(config, mu, sigma, sigma_xi2)

    def marginal(self, phase: float) -> tuple[float, float]:
        """Mean and variance of the trajectory value at one phase."""
        phi = basis_row(phase, self.config)
        mean = float(phi @ self.mu_w)
        var = float(phi @ self.sigma_w @ phi) + self.sigma_xi2
        return mean, max(var, 0.0)

    def mean_at(self, phases: np.ndarray) -> np.ndarray:
        """Mean trajectory values on a phase grid."""
        return basis_matrix(phases, self.config) @ self.mu_w

    def std_at(self, phases: np.ndarray) -> np.ndarray:
        """Marginal standard deviation (including observation noise) on a grid."""
        phi = basis_matrix(phases, self.config)
        var = np.einsum("ij,jk,ik->i", phi, self.sigma_w, phi) + self.sigma_xi2
        return np.sqrt(np.maximum(var, 0.0))

    def condition(self, phase: float, value: float, obs_var: float) -> "ProMP":
        """Bayesian update on one observed value with accuracy obs_var.

        Returns the posterior primitive; the prior is left untouched.
        """
        if obs_var < 0:
            raise MalformedInput(f"observation variance must be >= 0, got {obs_var}")
        phi = basis_row(phase, self.config)
        s = self.sigma_w @ phi
        denom = obs_var + float(phi @ s)
        if denom <= 1e-14:
            raise SingularConditioning(
                "observation on a deterministic primitive (zero total variance)"
            )
        gain = s / denom
        mu = self.mu_w + gain * (value - float(phi @ self.mu_w))
        sigma = self.sigma_w - np.outer(gain, s)
        sigma = 0.5 * (sigma + sigma.T)
        return ProMP(self.config, mu, sigma, self.sigma_xi2)


@dataclass(frozen=True)
class TaskModel:
    """A task: one primitive per channel plus the demonstrated time modulations.

    All primitives share one basis configuration. alphas holds the ratio of
    the mean demonstration duration to each demonstration's own duration;
    mean_duration is in seconds.
    """

    task_id: str
    channels: tuple[ChannelSpec, ...]
    promps: tuple[ProMP, ...]
    alphas: tuple[float, ...]
    mean_duration: float

    def __post_init__(self):
        if len(self.promps) != len(self.channels):
            raise MalformedInput("one primitive per channel required")
        if not self.promps:
            raise MalformedInput("task model needs at least one channel")
        cfg = self.promps[0].config
        if any(p.config != cfg for p in self.promps):
            raise MalformedInput("all primitives must share one basis config")
        if not self.alphas:
            raise ModelError("empty time-modulation set")
        if any(a <= 0 for a in self.alphas):
            raise ModelError("time modulations must be > 0")
        if not self.mean_duration > 0:
            raise MalformedInput("mean duration must be > 0")

    @property
    def config(self) -> BasisConfig:
        return self.promps[0].config

    def promp(self, name: str) -> ProMP:
        for c, p in zip(self.channels, self.promps):
            if c.name == name:
                return p
        raise KeyError(name)

    def channel_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def mean_matrix(self, phases: np.ndarray) -> np.ndarray:
        """Mean values for all channels on a phase grid, shape (len(phases), N)."""
        phi = basis_matrix(phases, self.config)
        return phi @ np.stack([p.mu_w for p in self.promps], axis=1)

    def with_promps(self, promps: tuple[ProMP, ...]) -> "TaskModel":
        return replace(self, promps=promps)


def fit_task(
    task_id: str,
    demos: list[Trajectory],
    config: BasisConfig | None = None,
    n_phase: int = 100,
) -> TaskModel:
    """Learn a task model from demonstration trajectories.

    Every demonstration is phase-normalized, each channel is ridge-fitted,
    and the per-channel weight distributions are estimated across
    demonstrations. Time modulations are recorded as mean duration over each
    demonstration's duration.
    """
    if len(demos) < 2:
        raise InsufficientDemonstrations(f"need >= 2 demonstrations, got {len(demos)}")
    config = config or BasisConfig()
    channels = demos[0].channels
    for d in demos[1:]:
        if d.channel_names() != demos[0].channel_names():
            raise MalformedInput("demonstrations disagree on channel names")
    phased = [to_phase(d, n_phase) for d in demos]
    durations = np.array([p.duration for p in phased])
    mean_duration = float(durations.mean())
    alphas = tuple(float(mean_duration / t) for t in durations)
    phases = phased[0].phases
    promps = []
    for j in range(len(channels)):
        stack = np.stack([p.values[:, j] for p in phased])
        promps.append(ProMP.from_demos(phases, stack, config))
    return TaskModel(task_id, channels, tuple(promps), alphas, mean_duration)


def mean_trajectory(task: TaskModel, duration: float, rate: float) -> Trajectory:
    """Materialize the task's mean as a trajectory on a uniform time grid.

    The grid includes both endpoints: duration * rate + 1 samples.
    """
    if not duration > 0:
        raise MalformedInput(f"duration must be > 0, got {duration}")
    n = int(round(duration * rate)) + 1
    times = np.arange(n) / rate
    values = task.mean_matrix(times / duration)
    return Trajectory(task.channels, times, values, rate)


def task_to_json(task: TaskModel) -> str:
    """Serialize a task model to the interchange JSON document."""
    doc = {
        "task_id": task.task_id,
        "m": task.config.m,
        "h": task.config.h,
        "lambda": task.config.ridge,
        "channels": [
            {
                "name": c.name,
                "mu_w": p.mu_w.tolist(),
                "sigma_w": p.sigma_w.flatten().tolist(),
                "sigma_xi2": p.sigma_xi2,
            }
            for c, p in zip(task.channels, task.promps)
        ],
        "alphas": list(task.alphas),
        "mean_duration_s": task.mean_duration,
    }
    return json.dumps(doc, sort_keys=True)


def task_from_json(text: str, kinds: dict[str, str] | None = None) -> TaskModel:
    """Load a task model from its interchange JSON document.

    Channel kinds are not part of the document; pass a name->kind mapping to
    restore them (unlisted names default to Cartesian meters).
    """
    doc = json.loads(text)
    kinds = kinds or {}
    config = BasisConfig(m=doc["m"], h=doc["h"], ridge=doc["lambda"])
    channels, promps = [], []
    for ch in doc["channels"]:
        m = config.m
        channels.append(ChannelSpec(ch["name"], kinds.get(ch["name"], "cartesian-m")))
        promps.append(
            ProMP(
                config,
                np.asarray(ch["mu_w"]),
                np.asarray(ch["sigma_w"]).reshape(m, m),
                float(ch["sigma_xi2"]),
            )
        )
    return TaskModel(
        str(doc["task_id"]),
        tuple(channels),
        tuple(promps),
        tuple(doc["alphas"]),
        float(doc["mean_duration_s"]),
    )
