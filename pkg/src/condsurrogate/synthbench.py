"""Synthetic ground truth for validating the surrogate.

A :class:`SyntheticModel` draws measured covariates from one law and
simulated covariates from another whose support strictly contains the
first; responses for both come from one shared conditional sampler
``Y = g(X) + s(X) * noise``. The conditional law of the response is
therefore identical for measurements and simulations by construction.

Default model (d = 4):

* simulated covariates: uniform on ``[-1, 1]^4``;
* measured covariates: a three-component Gaussian mixture truncated to
  ``[-0.8, 0.8]^4`` (see ``DEFAULT_MIXTURE``);
* ``g(x) = x1 + 0.5 x2^2 + sin(pi x3)``;
* ``s(x) = 0.3 (1 + 0.5 |x4|)``;
* standard Gumbel noise (location 0, scale 1, variance ``pi^2 / 6``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .datamodel import Dataset, Origin
from .errors import EmptyGrid

GUMBEL_VARIANCE = math.pi ** 2 / 6


@dataclass(frozen=True)
class UniformBox:
    low: float
    high: float
    d: int

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, self.d))

    @property
    def covariance(self):
        return np.eye(self.d) * (self.high - self.low) ** 2 / 12.0

    @property
    def std(self):
        return (self.high - self.low) / math.sqrt(12.0)


@dataclass(frozen=True)
class TruncatedGaussianMixture:
    """Isotropic Gaussian mixture conditioned on the box ``[low, high]^d``."""

    weights: tuple
    means: tuple
    std: float
    low: float
    high: float

    @property
    def d(self):
        return len(self.means[0])

    def sample(self, rng, n):
        out = np.empty((n, self.d))
        filled = 0
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        while filled < n:
            batch = max(64, 2 * (n - filled))
            comp = rng.choice(len(w), size=batch, p=w / w.sum())
            x = mu[comp] + self.std * rng.standard_normal((batch, self.d))
            ok = np.all((x >= self.low) & (x <= self.high), axis=1)
            x = x[ok][: n - filled]
            out[filled:filled + len(x)] = x
            filled += len(x)
        return out


DEFAULT_MIXTURE = TruncatedGaussianMixture(
    weights=(0.45, 0.35, 0.20),
    means=((-0.3, 0.25, -0.35, 0.2), (0.3, -0.2, 0.3, -0.25), (0.05, 0.45, 0.5, 0.0)),
    std=0.3,
    low=-0.8,
    high=0.8,
)


def default_mean(X):
    return X[:, 0] + 0.5 * X[:, 1] ** 2 + np.sin(np.pi * X[:, 2])


def default_scale(X):
    return 0.3 * (1.0 + 0.5 * np.abs(X[:, 3]))


def zero_mean(X):
    return np.zeros(X.shape[0])


def unit_scale(X):
    return np.ones(X.shape[0])


@dataclass(frozen=True)
class ConstantMean:
    c: float

    def __call__(self, X):
        return np.full(X.shape[0], float(self.c))


@dataclass(frozen=True)
class ScaledScale:
    """``factor * base(x)``, for dialling the conditional noise level."""

    base: Callable
    factor: float

    def __call__(self, X):
        return self.factor * self.base(X)


@dataclass(frozen=True)
class SyntheticModel:
    d: int
    measured_law: object
    sim_law: object
    cond_mean: Callable
    cond_scale: Callable
    noise_family: str = "gumbel"
    seed: int = 0
    contamination: float = 0.0
    contamination_offset: float = 5.0
    name: str = "custom"
    column_names: tuple = field(default=())

    def __post_init__(self):
        if self.noise_family not in ("gumbel", "gaussian"):
            raise ValueError("noise_family must be 'gumbel' or 'gaussian'")
        if not 0 <= self.contamination < 1:
            raise ValueError("contamination fraction must lie in [0, 1)")
        if not self.column_names:
            object.__setattr__(self, "column_names", tuple(f"x{j + 1}" for j in range(self.d)))

    @property
    def noise_variance(self) -> float:
        return GUMBEL_VARIANCE if self.noise_family == "gumbel" else 1.0

    def with_seed(self, seed: int) -> "SyntheticModel":
        return replace(self, seed=int(seed))

    def _streams(self, seed, n):
        return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]

    def sample_noise(self, rng, n):
        if self.noise_family == "gumbel":
            return rng.gumbel(0.0, 1.0, size=n)
        return rng.standard_normal(n)

    def sample_response(self, X, rng):
        """The single conditional sampler shared by measurements and simulations."""
        X = np.atleast_2d(X)
        return self.cond_mean(X) + self.cond_scale(X) * self.sample_noise(rng, X.shape[0])

    def contaminate(self, X, rng):
        """Push a fraction of rows outside the simulation support.

        One random coordinate of each chosen row is set to
        ``+-(high + offset * std_Q)``; returns the new matrix and the mask
        of planted rows.
        """
        X = X.copy()
        n = X.shape[0]
        n_bad = int(round(self.contamination * n))
        mask = np.zeros(n, dtype=bool)
        if n_bad == 0:
            return X, mask
        rows = rng.choice(n, size=n_bad, replace=False)
        cols = rng.integers(0, self.d, size=n_bad)
        signs = rng.choice([-1.0, 1.0], size=n_bad)
        edge = max(abs(self.sim_law.low), abs(self.sim_law.high))
        X[rows, cols] = signs * (edge + self.contamination_offset * self.sim_law.std)
        mask[rows] = True
        return X, mask

    def generate(self, n_measured: int, m_simulated: int):
        """Draw a measured and a simulated dataset.

        Returns ``(measured, measured_y, simulated, planted)``: the measured
        dataset carries no responses; ``measured_y`` holds them separately
        for evaluation only; ``planted`` marks contaminated measured rows.
        """
        if n_measured < 1 or m_simulated < 1:
            raise ValueError("sample sizes must be >= 1")
        r_mx, r_my, r_sx, r_sy, r_c = self._streams(self.seed, 5)
        Xm = self.measured_law.sample(r_mx, n_measured)
        Xm, planted = self.contaminate(Xm, r_c)
        ym = self.sample_response(Xm, r_my)
        Xs = self.sim_law.sample(r_sx, m_simulated)
        ys = self.sample_response(Xs, r_sy)
        measured = Dataset(self.column_names, Xm, None, Origin.MEASURED)
        simulated = Dataset(self.column_names, Xs, ys, Origin.SIMULATED)
        return measured, ym, simulated, planted

    def oracle_sample(self, n_mc: int, seed: int):
        """Responses of fresh measured-law draws (no contamination)."""
        r_x, r_y = self._streams([int(seed), 0x5EED], 2)
        X = self.measured_law.sample(r_x, n_mc)
        return self.sample_response(X, r_y)

    def true_cdf(self, t, n_mc: int = 10 ** 6, seed: int = 0):
        """Monte-Carlo ``P(Y <= t)`` with its standard error (<= 0.5 / sqrt(n_mc))."""
        if n_mc < 10 ** 4:
            raise ValueError("n_mc must be at least 10^4")
        y = np.sort(self.oracle_sample(n_mc, seed))
        F = np.searchsorted(y, np.asarray(t, dtype=float), side="right") / n_mc
        se = np.sqrt(F * (1 - F) / n_mc)
        if np.ndim(t) == 0:
            return float(F), float(se)
        return F, se

    def variance_decomposition(self, n_mc: int = 10 ** 6, seed: int = 0) -> dict:
        """Monte-Carlo pieces of ``Var Y = E[s(X)^2] Var(noise) + Var g(X)``."""
        r_x, r_y = self._streams([int(seed), 0xDEC0], 2)
        X = self.measured_law.sample(r_x, n_mc)
        g = self.cond_mean(X)
        s = self.cond_scale(X)
        y = g + s * self.sample_noise(r_y, n_mc)
        return {
            "var_y": float(np.var(y, ddof=1)),
            "mean_cond_var": float(np.mean(s ** 2) * self.noise_variance),
            "var_g": float(np.var(g, ddof=1)),
        }


def default_model(seed: int = 0, **overrides) -> SyntheticModel:
    m = SyntheticModel(
        d=4,
        measured_law=DEFAULT_MIXTURE,
        sim_law=UniformBox(-1.0, 1.0, 4),
        cond_mean=default_mean,
        cond_scale=default_scale,
        noise_family="gumbel",
        seed=seed,
        name="default",
    )
    return replace(m, **overrides) if overrides else m


def symmetric_model(seed: int = 0, d: int = 2) -> SyntheticModel:
    law = TruncatedGaussianMixture((1.0,), ((0.0,) * d,), 0.3, -0.8, 0.8)
    return SyntheticModel(d, law, UniformBox(-1.0, 1.0, d), zero_mean, unit_scale,
                          "gaussian", seed, name="symmetric")


def degenerate_model(c: float = 1.0, seed: int = 0, d: int = 2) -> SyntheticModel:
    law = TruncatedGaussianMixture((1.0,), ((0.0,) * d,), 0.3, -0.8, 0.8)
    return SyntheticModel(d, law, UniformBox(-1.0, 1.0, d), ConstantMean(c),
                          ScaledScale(unit_scale, 0.0), "gaussian", seed, name="degenerate")


def noisy_model(seed: int = 0, factor: float = 1.3) -> SyntheticModel:
    """Default model with the conditional scale multiplied by ``factor``."""
    return default_model(seed, cond_scale=ScaledScale(default_scale, factor), name="noisy")


PRESETS = {
    "default": default_model,
    "symmetric": symmetric_model,
    "noisy": noisy_model,
}


def ks_distance(cdf_a, cdf_b, grid) -> float:
    """``max |F_a(t) - F_b(t)|`` over ``grid``.

    ``cdf_a`` and ``cdf_b`` are callables accepting an array of points. Use
    a grid of at least 512 points spanning the pooled response range.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.shape[0] == 0:
        raise EmptyGrid("evaluation grid is empty")
    a = np.asarray(cdf_a(grid), dtype=float)
    b = np.asarray(cdf_b(grid), dtype=float)
    return float(np.max(np.abs(a - b)))


def evaluation_grid(*samples, n: int = 4096) -> np.ndarray:
    lo = min(float(np.min(s)) for s in samples)
    hi = max(float(np.max(s)) for s in samples)
    return np.linspace(lo, hi, n)


def empirical_cdf_function(values):
    """Right-continuous ``F(t) = #{v <= t} / n`` as a vectorised callable."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.shape[0]
    return lambda t: np.searchsorted(v, np.asarray(t, dtype=float), side="right") / n


def empirical_quantile(sorted_values, level):
    """Left-continuous inverse of the empirical CDF of sorted values."""
    v = np.asarray(sorted_values)
    n = v.shape[0]
    idx = np.ceil(np.asarray(level) * n).astype(int) - 1
    return v[np.clip(idx, 0, n - 1)]
