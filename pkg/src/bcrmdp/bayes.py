"""Conjugate beliefs over the unknown model parameter theta.

A belief is a family tag plus a hyper-parameter vector ``h``. For the additive
families the Bayes update is ``h' = h + H(xi)``; the Normal family with known
noise variance is updated by its exact (non-additive) recursion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats

from .riskcore import DiscreteDist


class SupportError(ValueError):
    """Observation outside the support of the likelihood."""


class DegenerateDataError(ValueError):
    """Data admits no finite maximum-likelihood estimate."""


@dataclass(frozen=True)
class Truncation:
    """Finite observation support used by the DP and VI sweeps.

    ``radius`` None means: discrete families pick the smallest radius whose
    tail mass is below ``tail``; continuous families use six standard
    deviations. ``step`` is the grid width for continuous families.
    """

    radius: float | None = None
    tail: float = 1e-5
    step: float = 0.5

    def __post_init__(self):
        if self.radius is not None and self.radius <= 0:
            raise ValueError("truncation radius must be positive")
        if not 0 < self.tail < 1:
            raise ValueError("tail bound must lie in (0,1)")
        if self.step <= 0:
            raise ValueError("grid step must be positive")


@dataclass(frozen=True)
class PredictiveSupport:
    atoms: np.ndarray
    weights: np.ndarray
    tail_mass: float

    @property
    def dist(self) -> DiscreteDist:
        return DiscreteDist(self.atoms, self.weights)


def _as_hyper(h) -> np.ndarray:
    return np.asarray(h, dtype=float).ravel()


class ConjugateFamily:
    name = "family"
    support_kind = "real"
    additive = True
    hyper_dim = 2

    def check_hyper(self, h) -> np.ndarray:
        h = _as_hyper(h)
        if h.size != self.hyper_dim:
            raise ValueError(f"{self.name} expects {self.hyper_dim} hyper-parameters, got {h.size}")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError(f"{self.name} hyper-parameters must be positive, got {h.tolist()}")
        return h

    def check_obs(self, x) -> float:
        raise NotImplementedError

    def stat(self, x) -> np.ndarray:
        """Sufficient statistic H(xi) of the additive update."""
        raise NotImplementedError

    def update(self, h, x) -> np.ndarray:
        x = self.check_obs(x)
        return self.check_hyper(h) + self.stat(x)

    def lipschitz_stat(self) -> float:
        return 1.0

    def predictive_weights(self, h, xs) -> np.ndarray:
        return np.array([self.predictive_weight(h, x) for x in xs])

    # subclasses provide: predictive_weight, moments, sample_theta,
    # sample_obs, mle, quantile_atoms, gauss_atoms, obs_support, likelihood

    def theta_quadrature(self, h, K: int = 64, rule: str = "quantile"):
        """Finite quadrature of the posterior: (atoms, weights)."""
        h = self.check_hyper(h)
        if K < 1:
            raise ValueError("quadrature needs K >= 1")
        if rule == "quantile":
            thetas = self.quantile_atoms(h, (np.arange(K) + 0.5) / K)
            return thetas, np.full(K, 1.0 / K)
        if rule == "gauss":
            return self.gauss_atoms(h, K)
        raise ValueError(f"unknown quadrature rule {rule!r}")


class BetaBernoulli(ConjugateFamily):
    name = "beta_bernoulli"
    support_kind = "binary"

    def check_obs(self, x):
        if x not in (0, 1):
            raise SupportError(f"Bernoulli observation must be 0 or 1, got {x!r}")
        return int(x)

    def stat(self, x):
        return np.array([1.0, 0.0]) if x == 1 else np.array([0.0, 1.0])

    def predictive_weight(self, h, x):
        m, d = self.check_hyper(h)
        return m / (m + d) if self.check_obs(x) == 1 else d / (m + d)

    def predictive_support(self, h, trunc=None):
        m, d = self.check_hyper(h)
        return PredictiveSupport(np.array([0.0, 1.0]), np.array([d, m]) / (m + d), 0.0)

    def moments(self, h):
        m, d = self.check_hyper(h)
        n = m + d
        return m / n, m * d / (n * n * (n + 1))

    def sample_theta(self, h, n, rng):
        m, d = self.check_hyper(h)
        return rng.beta(m, d, size=n)

    def sample_obs(self, theta, n, rng):
        return (rng.random(n) < theta).astype(float)

    def mle(self, obs):
        return float(np.mean([self.check_obs(x) for x in obs]))

    def quantile_atoms(self, h, u):
        return stats.beta.ppf(u, h[0], h[1])

    def gauss_atoms(self, h, K):
        x, w = special.roots_jacobi(K, h[1] - 1.0, h[0] - 1.0)
        return (x + 1.0) / 2.0, w / w.sum()

    def obs_support(self, thetas, trunc):
        return np.array([0.0, 1.0])

    def likelihood(self, thetas, xi):
        t = np.clip(np.asarray(thetas, dtype=float), 0.0, 1.0)[:, None]
        return np.where(np.asarray(xi)[None, :] == 1, t, 1.0 - t)


class GammaPoisson(ConjugateFamily):
    name = "gamma_poisson"
    support_kind = "count"

    def check_obs(self, x):
        if not (np.isfinite(x) and x >= 0 and float(x).is_integer()):
            raise SupportError(f"Poisson observation must be a non-negative integer, got {x!r}")
        return int(x)

    def stat(self, x):
        return np.array([float(x), 1.0])

    def _predictive(self, h):
        m, d = self.check_hyper(h)
        return stats.nbinom(m, d / (d + 1.0))

    def predictive_weight(self, h, x):
        return float(self._predictive(h).pmf(self.check_obs(x)))

    def predictive_weights(self, h, xs):
        return self._predictive(h).pmf(np.asarray(xs, dtype=float))

    def predictive_support(self, h, trunc=None):
        trunc = trunc or Truncation()
        pred = self._predictive(h)
        R = int(trunc.radius) if trunc.radius is not None else int(pred.ppf(1.0 - trunc.tail))
        atoms = np.arange(R + 1, dtype=float)
        pmf = pred.pmf(atoms)
        return PredictiveSupport(atoms, pmf / pmf.sum(), float(pred.sf(R)))

    def moments(self, h):
        m, d = self.check_hyper(h)
        return m / d, m / (d * d)

    def sample_theta(self, h, n, rng):
        m, d = self.check_hyper(h)
        return rng.gamma(m, 1.0 / d, size=n)

    def sample_obs(self, theta, n, rng):
        return rng.poisson(theta, size=n).astype(float)

    def mle(self, obs):
        return float(np.mean([self.check_obs(x) for x in obs]))

    def quantile_atoms(self, h, u):
        return stats.gamma.ppf(u, h[0], scale=1.0 / h[1])

    def gauss_atoms(self, h, K):
        x, w = special.roots_genlaguerre(K, h[0] - 1.0)
        return x / h[1], w / w.sum()

    def obs_support(self, thetas, trunc):
        if trunc.radius is not None:
            R = int(trunc.radius)
        else:
            R = int(np.max(stats.poisson.ppf(1.0 - trunc.tail, np.max(thetas))))
        return np.arange(R + 1, dtype=float)

    def likelihood(self, thetas, xi):
        return stats.poisson.pmf(np.asarray(xi)[None, :], np.asarray(thetas, dtype=float)[:, None])


class GammaExponential(ConjugateFamily):
    """Exponential observations with a Gamma prior on the rate."""

    name = "gamma_exponential"
    support_kind = "positive"

    def check_obs(self, x):
        if not (np.isfinite(x) and x > 0):
            raise SupportError(f"Exponential observation must be positive, got {x!r}")
        return float(x)

    def stat(self, x):
        return np.array([1.0, float(x)])

    def predictive_weight(self, h, x):
        m, d = self.check_hyper(h)
        x = self.check_obs(x)
        return m * d ** m / (d + x) ** (m + 1.0)

    def predictive_support(self, h, trunc=None):
        trunc = trunc or Truncation()
        m, d = self.check_hyper(h)
        lomax = stats.lomax(m, scale=d)
        R = trunc.radius if trunc.radius is not None else float(lomax.ppf(1.0 - trunc.tail))
        atoms = (np.arange(max(1, int(np.ceil(R / trunc.step)))) + 0.5) * trunc.step
        dens = lomax.pdf(atoms)
        return PredictiveSupport(atoms, dens / dens.sum(), float(lomax.sf(atoms[-1] + trunc.step / 2)))

    def moments(self, h):
        m, d = self.check_hyper(h)
        return m / d, m / (d * d)

    def sample_theta(self, h, n, rng):
        m, d = self.check_hyper(h)
        return rng.gamma(m, 1.0 / d, size=n)

    def sample_obs(self, theta, n, rng):
        return rng.exponential(1.0 / theta, size=n)

    def mle(self, obs):
        # recorded data may contain exact zeros, which the update rejects
        x = np.asarray(obs, dtype=float)
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise SupportError("exponential data must be finite and non-negative")
        mean = float(x.mean())
        if mean <= 0:
            raise DegenerateDataError("exponential MLE needs a positive sample mean")
        return 1.0 / mean

    def lipschitz_stat(self):
        return 1.0

    def quantile_atoms(self, h, u):
        return stats.gamma.ppf(u, h[0], scale=1.0 / h[1])

    def gauss_atoms(self, h, K):
        x, w = special.roots_genlaguerre(K, h[0] - 1.0)
        return x / h[1], w / w.sum()

    def obs_support(self, thetas, trunc):
        R = trunc.radius
        if R is None:
            R = float(stats.expon.ppf(1.0 - trunc.tail, scale=1.0 / np.min(thetas)))
        return (np.arange(max(1, int(np.ceil(R / trunc.step)))) + 0.5) * trunc.step

    def likelihood(self, thetas, xi):
        t = np.asarray(thetas, dtype=float)[:, None]
        return t * np.exp(-t * np.asarray(xi)[None, :])


class NormalKnownVar(ConjugateFamily):
    """Normal observations with known variance; hyper is (mean, variance)."""

    name = "normal_known_var"
    support_kind = "real"
    additive = False

    def __init__(self, sigma2: float = 1.0):
        if not sigma2 > 0:
            raise ValueError("noise variance sigma2 must be positive")
        self.sigma2 = float(sigma2)

    def __repr__(self):
        return f"NormalKnownVar(sigma2={self.sigma2!r})"

    def __eq__(self, other):
        return isinstance(other, NormalKnownVar) and other.sigma2 == self.sigma2

    def __hash__(self):
        return hash((self.name, self.sigma2))

    def check_hyper(self, h):
        h = _as_hyper(h)
        if h.size != 2 or not np.all(np.isfinite(h)) or h[1] <= 0:
            raise ValueError(f"normal hyper-parameters need a positive variance, got {h.tolist()}")
        return h

    def check_obs(self, x):
        if not np.isfinite(x):
            raise SupportError(f"Normal observation must be finite, got {x!r}")
        return float(x)

    def stat(self, x):
        raise TypeError("the Normal update is not additive in (mean, variance)")

    def update(self, h, x):
        m, v = self.check_hyper(h)
        x = self.check_obs(x)
        lam = self.sigma2 / (v + self.sigma2)
        return np.array([lam * m + (1.0 - lam) * x, 1.0 / (1.0 / v + 1.0 / self.sigma2)])

    def lipschitz_stat(self):
        return 1.0

    def predictive_weight(self, h, x):
        m, v = self.check_hyper(h)
        return float(stats.norm.pdf(self.check_obs(x), m, np.sqrt(v + self.sigma2)))

    def predictive_support(self, h, trunc=None):
        trunc = trunc or Truncation()
        m, v = self.check_hyper(h)
        sd = np.sqrt(v + self.sigma2)
        R = trunc.radius if trunc.radius is not None else 6.0 * sd
        k = np.floor(R / trunc.step)
        atoms = m + np.arange(-k, k + 1) * trunc.step
        dens = stats.norm.pdf(atoms, m, sd)
        half = (k + 0.5) * trunc.step
        return PredictiveSupport(atoms, dens / dens.sum(), float(2.0 * stats.norm.sf(half / sd)))

    def moments(self, h):
        m, v = self.check_hyper(h)
        return m, v

    def sample_theta(self, h, n, rng):
        m, v = self.check_hyper(h)
        return rng.normal(m, np.sqrt(v), size=n)

    def sample_obs(self, theta, n, rng):
        return rng.normal(theta, np.sqrt(self.sigma2), size=n)

    def mle(self, obs):
        return float(np.mean([self.check_obs(x) for x in obs]))

    def quantile_atoms(self, h, u):
        return stats.norm.ppf(u, h[0], np.sqrt(h[1]))

    def gauss_atoms(self, h, K):
        x, w = special.roots_hermitenorm(K)
        return h[0] + np.sqrt(h[1]) * x, w / w.sum()

    def obs_support(self, thetas, trunc):
        sd = np.sqrt(self.sigma2)
        R = trunc.radius if trunc.radius is not None else 6.0 * sd
        lo = np.floor((np.min(thetas) - R) / trunc.step)
        hi = np.ceil((np.max(thetas) + R) / trunc.step)
        return np.arange(lo, hi + 1) * trunc.step

    def likelihood(self, thetas, xi):
        return stats.norm.pdf(np.asarray(xi)[None, :], np.asarray(thetas, dtype=float)[:, None],
                              np.sqrt(self.sigma2))


class DirichletCategorical(ConjugateFamily):
    """Categorical observations in 1..K with a Dirichlet prior."""

    name = "dirichlet_categorical"
    support_kind = "categorical"

    def __init__(self, K: int):
        if int(K) != K or K < 2:
            raise ValueError("category count K must be an integer >= 2")
        self.K = int(K)
        self.hyper_dim = self.K

    def __repr__(self):
        return f"DirichletCategorical(K={self.K})"

    def __eq__(self, other):
        return isinstance(other, DirichletCategorical) and other.K == self.K

    def __hash__(self):
        return hash((self.name, self.K))

    def check_obs(self, x):
        if not (float(x).is_integer() and 1 <= x <= self.K):
            raise SupportError(f"category must be an integer in 1..{self.K}, got {x!r}")
        return int(x)

    def stat(self, x):
        e = np.zeros(self.K)
        e[int(x) - 1] = 1.0
        return e

    def predictive_weight(self, h, x):
        h = self.check_hyper(h)
        return float(h[self.check_obs(x) - 1] / h.sum())

    def predictive_support(self, h, trunc=None):
        h = self.check_hyper(h)
        return PredictiveSupport(np.arange(1.0, self.K + 1), h / h.sum(), 0.0)

    def moments(self, h):
        h = self.check_hyper(h)
        a0 = h.sum()
        mean = h / a0
        return mean, mean * (1.0 - mean) / (a0 + 1.0)

    def sample_theta(self, h, n, rng):
        return rng.dirichlet(self.check_hyper(h), size=n)

    def sample_obs(self, theta, n, rng):
        return rng.choice(np.arange(1.0, self.K + 1), size=n, p=np.asarray(theta))

    def mle(self, obs):
        counts = np.bincount([self.check_obs(x) - 1 for x in obs], minlength=self.K)
        return counts / counts.sum()

    def theta_quadrature(self, h, K=64, rule="quantile"):
        # no multivariate quantile transform: a fixed-seed sample stands in
        h = self.check_hyper(h)
        rng = np.random.default_rng(0)
        return rng.dirichlet(h, size=K), np.full(K, 1.0 / K)

    def obs_support(self, thetas, trunc):
        return np.arange(1.0, self.K + 1)

    def likelihood(self, thetas, xi):
        idx = np.asarray(xi, dtype=int) - 1
        return np.asarray(thetas, dtype=float)[:, idx]


FAMILIES = {
    "beta_bernoulli": BetaBernoulli,
    "gamma_poisson": GammaPoisson,
    "gamma_exponential": GammaExponential,
    "normal_known_var": NormalKnownVar,
    "dirichlet_categorical": DirichletCategorical,
}


def make_family(name: str, **params) -> ConjugateFamily:
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown conjugate family {name!r}") from None
    return cls(**params)


@dataclass(frozen=True)
class Belief:
    family: ConjugateFamily
    hyper: tuple = field()

    def __post_init__(self):
        h = self.family.check_hyper(self.hyper)
        object.__setattr__(self, "hyper", tuple(h.tolist()))

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.hyper)

    def update(self, obs) -> "Belief":
        return Belief(self.family, tuple(self.family.update(self.h, obs).tolist()))

    def update_all(self, observations: Iterable) -> "Belief":
        h = self.h
        for x in observations:
            h = self.family.update(h, x)
        return Belief(self.family, tuple(h.tolist()))


def update(belief: Belief, obs) -> Belief:
    return belief.update(obs)


def predictive_weight(belief: Belief, obs) -> float:
    return float(belief.family.predictive_weight(belief.h, obs))


def predictive_support(belief: Belief, trunc: Truncation | None = None) -> PredictiveSupport:
    sup = belief.family.predictive_support(belief.h, trunc)
    if sup.atoms.size == 0:
        raise ValueError("empty predictive support after truncation")
    return sup


def posterior_moments(belief: Belief):
    return belief.family.moments(belief.h)


def sample_theta(belief: Belief, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need n >= 1 draws")
    return belief.family.sample_theta(belief.h, n, rng)


def mle(family: ConjugateFamily, observations: Sequence):
    if len(observations) == 0:
        raise ValueError("MLE needs at least one observation")
    return family.mle(observations)
