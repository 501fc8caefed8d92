"""Noise primitives over keyed, reproducible random streams.

Sampling is pinned to explicit transforms so a (seed, key) pair replays the
same draws anywhere:

* uniforms are ``(k + 0.5) / 2**53`` for a 53-bit integer ``k`` from PCG64,
  so they lie strictly inside (0, 1);
* Laplace draws use the inverse CDF of one uniform;
* standard normals use the Box-Muller cosine branch of two uniforms.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BetaTooLarge,
    InvalidDelta,
    InvalidEpsilonDelta,
    NonPositiveEpsilon,
    NonPositiveScale,
)

_TWO_53 = 2.0**53


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key integers must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


class RandomStream:
    """Deterministic stream identified by ``seed`` and a tuple ``key``.

    Typical keys are ``(site, repetition, tag)``. Distinct keys give
    independent streams via numpy's ``SeedSequence`` spawn keys.
    """

    def __init__(self, seed: int, key=()):
        self.seed = int(seed)
        self.key = tuple(key)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_int(p) for p in self.key))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key!r})"

    def child(self, *parts) -> "RandomStream":
        return type(self)(self.seed, self.key + parts)

    def uniform(self, size=None):
        k = self._gen.integers(0, 2**53, size=size, dtype=np.int64)
        u = (k + 0.5) / _TWO_53
        return float(u) if size is None else u

    def normal(self, size=None):
        u1 = self.uniform(size)
        u2 = self.uniform(size)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return float(z) if size is None else z

    def generator(self) -> np.random.Generator:
        """Bulk sampler for data generation (not used by the mechanisms)."""
        return self._gen


class ZeroNoiseStream(RandomStream):
    """Stream whose uniform draws are 1/2 and normal draws are 0: all mechanism noise vanishes."""

    def uniform(self, size=None):
        return 0.5 if size is None else np.full(size, 0.5)

    def normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


@dataclass(frozen=True)
class SmoothSensitivityValue:
    value: float
    beta: float

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise NonPositiveScale(f"smooth sensitivity must be positive, got {self.value}")
        if not self.beta > 0:
            raise NonPositiveScale(f"beta must be positive, got {self.beta}")


def laplace_inverse_cdf(u, scale):
    """Quantile function of Laplace(0, scale) at ``u`` in (0, 1)."""
    d = np.asarray(u, dtype=np.float64) - 0.5
    x = -scale * np.sign(d) * np.log1p(-2.0 * np.abs(d))
    return float(x) if np.ndim(x) == 0 else x


def sample_laplace(scale: float, rng: RandomStream, size=None):
    if not scale > 0:
        raise NonPositiveScale(f"Laplace scale must be positive, got {scale}")
    return laplace_inverse_cdf(rng.uniform(size), scale)


def laplace_mechanism(value, global_sensitivity: float, epsilon: float, rng: RandomStream):
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    if not global_sensitivity > 0:
        raise NonPositiveScale(f"sensitivity must be positive, got {global_sensitivity}")
    return value + sample_laplace(global_sensitivity / epsilon, rng, np.shape(value) or None)


def gaussian_sigma(l2_sensitivity: float, epsilon: float, delta: float) -> float:
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise InvalidEpsilonDelta(
            f"Gaussian mechanism needs epsilon, delta in (0, 1), got ({epsilon}, {delta})")
    return math.sqrt(2.0 * math.log(1.25 / delta)) * l2_sensitivity / epsilon


def gaussian_mechanism(value, l2_sensitivity: float, epsilon: float, delta: float,
                       rng: RandomStream):
    sigma = gaussian_sigma(l2_sensitivity, epsilon, delta)
    return value + sigma * rng.normal(np.shape(value) or None)


def beta_for(epsilon: float, delta: float) -> float:
    """Largest smoothing parameter the smooth-Laplace mechanism admits at (epsilon, delta)."""
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    return epsilon / (2.0 * math.log(2.0 / delta))


def smooth_laplace_scale(s: SmoothSensitivityValue, epsilon: float, delta: float) -> float:
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    limit = beta_for(epsilon, delta)
    if s.beta > limit:
        raise BetaTooLarge(f"beta {s.beta} exceeds {limit} allowed at ({epsilon}, {delta})")
    return 2.0 * s.value / epsilon


def smooth_laplace_mechanism(value, s: SmoothSensitivityValue, epsilon: float, delta: float,
                             rng: RandomStream):
    scale = smooth_laplace_scale(s, epsilon, delta)
    return value + scale * sample_laplace(1.0, rng)


def release_sigma(beta: float, epsilon: float, delta: float) -> float:
    # log S* has global sensitivity beta, so this is the Gaussian mechanism on log S*.
    return gaussian_sigma(beta, epsilon, delta)


def release_smooth_sensitivity(s: SmoothSensitivityValue, epsilon: float, delta: float,
                               rng: RandomStream) -> float:
    """Private, mean-preserving release of a smooth sensitivity value.

    Adds Gaussian noise to ``log s`` and subtracts ``sigma**2 / 2`` so the
    log-normal output has expectation exactly ``s.value``.
    """
    sigma = release_sigma(s.beta, epsilon, delta)
    z = sigma * rng.normal()
    return math.exp(math.log(s.value) + z - 0.5 * sigma * sigma)
