"""Closed-form test densities: isotropic Gaussian mixtures with analytic transforms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GaussianMixture:
    """Sum of isotropic Gaussians w_k * N(mean_k, var_k * I) in three dimensions."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def make(cls, weights: Sequence[float], means: Sequence[Sequence[float]],
             variances: Sequence[float]) -> "GaussianMixture":
        return cls(np.asarray(weights, float), np.asarray(means, float).reshape(-1, 3),
                   np.asarray(variances, float))

    @classmethod
    def maxwellian(cls, rho: float, temperature: float, mass: float,
                   mean: Sequence[float] = (0.0, 0.0, 0.0)) -> "GaussianMixture":
        return cls.make([rho], [mean], [temperature / mass])

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def pdf(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        out = np.zeros(v.shape[:-1])
        for w, mu, var in zip(self.weights, self.means, self.variances):
            d2 = np.sum((v - mu) ** 2, axis=-1)
            out += w * (2 * np.pi * var) ** -1.5 * np.exp(-0.5 * d2 / var)
        return out

    def ft(self, xi) -> np.ndarray:
        """Transform with the convention F(f)(xi) = int f(v) exp(-i v.xi) dv."""
        xi = np.asarray(xi, float)
        out = np.zeros(xi.shape[:-1], dtype=complex)
        k2 = np.sum(xi * xi, axis=-1)
        for w, mu, var in zip(self.weights, self.means, self.variances):
            out += w * np.exp(-1j * (xi @ mu) - 0.5 * var * k2)
        return out

    def l2_squared(self) -> float:
        """int f^2 dv in closed form."""
        total = 0.0
        for a in range(len(self.weights)):
            for b in range(len(self.weights)):
                var = self.variances[a] + self.variances[b]
                d2 = float(np.sum((self.means[a] - self.means[b]) ** 2))
                total += (self.weights[a] * self.weights[b] * (2 * np.pi * var) ** -1.5
                          * np.exp(-0.5 * d2 / var))
        return total

    def squared(self) -> "GaussianMixture":
        """f^2 rewritten as a Gaussian mixture (products of Gaussians are Gaussian)."""
        w, m, v = [], [], []
        for a in range(len(self.weights)):
            for b in range(len(self.weights)):
                va, vb = self.variances[a], self.variances[b]
                var = va * vb / (va + vb)
                mean = (vb * self.means[a] + va * self.means[b]) / (va + vb)
                d2 = float(np.sum((self.means[a] - self.means[b]) ** 2))
                coef = (self.weights[a] * self.weights[b] * (2 * np.pi * (va + vb)) ** -1.5
                        * np.exp(-0.5 * d2 / (va + vb)))
                w.append(coef)
                m.append(mean)
                v.append(var)
        return GaussianMixture.make(w, m, v)
