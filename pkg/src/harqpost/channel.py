"""Prior channel and noise laws: Rician fading plus CSCG noise.

All normal variates come from numpy's ``Generator.standard_normal`` (ziggurat)
driven by a Philox counter-based bit generator keyed by ``(seed, stream)``.
Both are platform independent, so a given ``(seed, stream)`` reproduces the
same sample sequence on any machine with the same numpy major version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RicianParams:
    """Prior law of one channel tap plus the receiver noise power.

    ``beta`` is the mean channel power E|h|^2, ``K`` the Rician factor,
    ``theta`` the LOS phase and ``sigma2`` the CSCG noise power (all linear).
    """

    beta: float = 8.0
    K: float = 1.0
    theta: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        for name in ("beta", "K", "theta", "sigma2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.K < 0:
            raise ValueError(f"K must be >= 0, got {self.K}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if not (-math.pi < self.theta <= math.pi):
            raise ValueError(f"theta must lie in (-pi, pi], got {self.theta}")

    @property
    def los(self) -> complex:
        """Deterministic line-of-sight component of the channel."""
        a = math.sqrt(self.K / (self.K + 1.0) * self.beta)
        return complex(a * math.cos(self.theta), a * math.sin(self.theta))

    @property
    def scatter_power(self) -> float:
        """Power of the Rayleigh (scattered) part, beta / (K + 1)."""
        return self.beta / (self.K + 1.0)

    def replace(self, **changes) -> "RicianParams":
        fields = dict(beta=self.beta, K=self.K, theta=self.theta, sigma2=self.sigma2)
        fields.update(changes)
        return RicianParams(**fields)


@dataclass(frozen=True)
class SeededRng:
    """Identity of a reproducible random stream."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream & 0xFFFFFFFFFFFFFFFF])
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeededRng):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return SeededRng(0 if rng is None else int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def _standard_cscg(count: int, gen: np.random.Generator) -> np.ndarray:
    z = gen.standard_normal((count, 2))
    return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(0.5)


def sample_rician(p: RicianParams, count: int, rng) -> np.ndarray:
    """Draw ``count`` independent Rician channel taps as a complex array.

    Each tap is ``e^{j theta} (sqrt(K beta/(K+1)) + sqrt(beta/(K+1)) w)`` with
    ``w ~ CN(0, 1)``. Rotating the scattered part by ``e^{j theta}`` leaves its
    law unchanged, and makes a change of ``theta`` rotate every tap exactly.
    """
    gen = as_generator(rng)
    w = _standard_cscg(int(count), gen)
    amp = math.sqrt(p.K / (p.K + 1.0) * p.beta)
    rot = complex(math.cos(p.theta), math.sin(p.theta))
    return rot * (amp + math.sqrt(p.scatter_power) * w)


def sample_cscg(sigma2: float, count: int, rng) -> np.ndarray:
    """Draw ``count`` CN(0, sigma2) noise samples."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    gen = as_generator(rng)
    return math.sqrt(sigma2) * _standard_cscg(int(count), gen)
