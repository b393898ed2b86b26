"""Law-invariant risk measures on finite discrete distributions.

Losses are oriented so that larger values are worse. Every spectral measure
is evaluated exactly through the antiderivative Psi(u) = int_0^u sigma of its
risk spectrum, so that

    rho(X) = sum_i x_i * (Psi(F_i) - Psi(F_{i-1}))

over the sorted atoms. The batched kernels in this module work on arrays whose
last axis holds sorted atoms; the dynamic-programming solvers call them
directly to avoid building thousands of small distribution objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

WEIGHT_TOL = 1e-12
QUANTILE_TOL = 1e-12


class DiscreteDist:
    """Finite weighted support of a scalar loss.

    Atoms are sorted ascending and equal values are merged. Weights must be
    non-negative and sum to one within ``WEIGHT_TOL``; zero-weight atoms are
    dropped. Use :meth:`from_unnormalized` for raw frequencies.
    """

    __slots__ = ("_values", "_weights")

    def __init__(self, values: Sequence[float], weights: Sequence[float] | None = None):
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("distribution needs at least one atom")
        if weights is None:
            w = np.full(x.size, 1.0 / x.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != x.shape:
                raise ValueError("values and weights differ in length")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(w)):
            raise ValueError("atoms and weights must be finite")
        if np.any(w < 0):
            raise ValueError("negative weight")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        keep = w > 0
        x, w = x[keep], w[keep] / total
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        uniq, start = np.unique(x, return_index=True)
        if uniq.size < x.size:
            w = np.add.reduceat(w, start)
            x = uniq
        x.setflags(write=False)
        w.setflags(write=False)
        self._values = x
        self._weights = w

    @classmethod
    def from_unnormalized(cls, values, weights) -> "DiscreteDist":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive total")
        return cls(values, w / w.sum())

    @classmethod
    def point(cls, value: float) -> "DiscreteDist":
        return cls([value], [1.0])

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self._values.tolist(), self._weights.tolist()))

    def __len__(self) -> int:
        return self._values.size

    def __repr__(self) -> str:
        return f"DiscreteDist({self.atoms!r})"

    def cdf(self, x: float) -> float:
        return float(self._weights[self._values <= x].sum())

    def mean(self) -> float:
        return float(self._values @ self._weights)

    def shift(self, c: float) -> "DiscreteDist":
        return DiscreteDist(self._values + c, self._weights)

    def scale(self, lam: float) -> "DiscreteDist":
        return DiscreteDist(self._values * lam, self._weights)


# --- batched kernels -------------------------------------------------------

def _cumulative(w: np.ndarray) -> np.ndarray:
    F = np.cumsum(w, axis=-1)
    F = F / F[..., -1:]
    return np.clip(F, 0.0, 1.0)


def _spectral_sorted(x: np.ndarray, w: np.ndarray, psi) -> np.ndarray:
    x, w = np.broadcast_arrays(x, w)
    P = psi(_cumulative(w))
    dP = np.diff(P, axis=-1, prepend=np.zeros(P.shape[:-1] + (1,)))
    return np.sum(x * dP, axis=-1)


def _quantile_sorted(x: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    x, w = np.broadcast_arrays(x, w)
    F = _cumulative(w)
    idx = np.argmax(F >= t - QUANTILE_TOL, axis=-1)
    return np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]


# --- risk specifications ---------------------------------------------------

class RiskSpec:
    """Base class for declarative risk measures."""

    coherent = True

    def eval_sorted(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Evaluate along the last axis; ``x`` must be sorted ascending there."""
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Expectation(RiskSpec):
    def eval_sorted(self, x, w):
        x, w = np.broadcast_arrays(x, w)
        return np.sum(x * w, axis=-1) / np.sum(w, axis=-1)

    def psi(self, u):
        return np.asarray(u, dtype=float)

    def label(self):
        return "E"


@dataclass(frozen=True)
class VaR(RiskSpec):
    alpha: float
    coherent = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"VaR level alpha must lie in [0,1), got {self.alpha}")

    def eval_sorted(self, x, w):
        return _quantile_sorted(x, w, 1.0 - self.alpha)

    def label(self):
        return f"VaR{self.alpha:g}"


@dataclass(frozen=True)
class AVaR(RiskSpec):
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"AVaR level alpha must lie in (0,1], got {self.alpha}")

    def psi(self, u):
        return np.maximum(np.asarray(u, dtype=float) - (1.0 - self.alpha), 0.0) / self.alpha

    def eval_sorted(self, x, w):
        return _spectral_sorted(x, w, self.psi)

    def label(self):
        return f"AVaR{self.alpha:g}"


@dataclass(frozen=True)
class Spectral(RiskSpec):
    """Right-continuous step spectrum.

    ``breakpoints`` runs from 0 to 1; ``levels[j]`` is the value of sigma on
    ``[breakpoints[j], breakpoints[j+1])``.
    """

    breakpoints: tuple
    levels: tuple

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.levels, dtype=float)
        if b.ndim != 1 or s.ndim != 1 or b.size != s.size + 1 or s.size == 0:
            raise ValueError("need len(breakpoints) == len(levels) + 1")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if np.any(s < 0) or np.any(np.diff(s) < 0):
            raise ValueError("spectrum must be non-negative and non-decreasing")
        if abs(float(np.diff(b) @ s) - 1.0) > 1e-9:
            raise ValueError("spectrum must integrate to 1")
        object.__setattr__(self, "breakpoints", tuple(b.tolist()))
        object.__setattr__(self, "levels", tuple(s.tolist()))

    @classmethod
    def avar(cls, alpha: float) -> "Spectral":
        if alpha == 1.0:
            return cls((0.0, 1.0), (1.0,))
        return cls((0.0, 1.0 - alpha, 1.0), (0.0, 1.0 / alpha))

    @classmethod
    def mixture(cls, lam: float, alpha: float) -> "Spectral":
        if alpha == 1.0:
            return cls((0.0, 1.0), (1.0,))
        return cls((0.0, 1.0 - alpha, 1.0), (lam, lam + (1.0 - lam) / alpha))

    def psi(self, u):
        b = np.asarray(self.breakpoints)
        s = np.asarray(self.levels)
        u = np.asarray(u, dtype=float)[..., None]
        return np.sum(s * np.clip(u - b[:-1], 0.0, np.diff(b)), axis=-1)

    def eval_sorted(self, x, w):
        return _spectral_sorted(x, w, self.psi)

    def label(self):
        return "Spectral"


@dataclass(frozen=True)
class MeanAVaRMix(RiskSpec):
    lam: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"mixture weight must lie in [0,1], got {self.lam}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"AVaR level alpha must lie in (0,1], got {self.alpha}")

    def psi(self, u):
        u = np.asarray(u, dtype=float)
        tail = np.maximum(u - (1.0 - self.alpha), 0.0) / self.alpha
        return self.lam * u + (1.0 - self.lam) * tail

    def eval_sorted(self, x, w):
        return _spectral_sorted(x, w, self.psi)

    def label(self):
        return f"Mix{self.lam:g}-{self.alpha:g}"


@dataclass(frozen=True)
class Wang(RiskSpec):
    """Proportional-hazard distortion, sigma(t) = nu (1-t)^(nu-1)."""

    nu: float

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"Wang parameter nu must lie in (0,1], got {self.nu}")

    def psi(self, u):
        return 1.0 - np.power(1.0 - np.asarray(u, dtype=float), self.nu)

    def eval_sorted(self, x, w):
        return _spectral_sorted(x, w, self.psi)

    def label(self):
        return f"Wang{self.nu:g}"


@dataclass(frozen=True)
class Gini(RiskSpec):
    """Linear spectrum sigma(t) = (1-s) + 2 s t.

    Equals E[X] + (s/2) E|X - X'| for an independent copy X'.
    """

    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"Gini parameter s must lie in (0,1), got {self.s}")

    def psi(self, u):
        u = np.asarray(u, dtype=float)
        return (1.0 - self.s) * u + self.s * u * u

    def eval_sorted(self, x, w):
        return _spectral_sorted(x, w, self.psi)

    def label(self):
        return f"Gini{self.s:g}"


@dataclass(frozen=True)
class BcrSpec:
    """Outer measure over the posterior composed with an inner measure over P_theta."""

    outer: RiskSpec
    inner: RiskSpec

    def __post_init__(self):
        if not isinstance(self.outer, RiskSpec) or not isinstance(self.inner, RiskSpec):
            raise TypeError("BcrSpec members must be RiskSpec instances")

    def label(self) -> str:
        return f"{self.outer.label()}o{self.inner.label()}"


# --- scalar API ------------------------------------------------------------

def quantile(dist: DiscreteDist, t: float) -> float:
    """Left quantile inf{x : F(x) >= t}."""
    return float(_quantile_sorted(dist.values, dist.weights, t))


def var(dist: DiscreteDist, alpha: float) -> float:
    return float(VaR(alpha).eval_sorted(dist.values, dist.weights))


def avar(dist: DiscreteDist, alpha: float) -> float:
    return float(AVaR(alpha).eval_sorted(dist.values, dist.weights))


def avar_ru(dist: DiscreteDist, alpha: float) -> float:
    """Rockafellar-Uryasev minimum of u + E[(X-u)^+]/alpha over the atoms."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    x, w = dist.values, dist.weights
    # suffix sums give E[(X - x_k)^+] for every atom in one pass
    tail_w = np.cumsum(w[::-1])[::-1]
    tail_xw = np.cumsum((x * w)[::-1])[::-1]
    above_w = np.append(tail_w[1:], 0.0)
    above_xw = np.append(tail_xw[1:], 0.0)
    excess = above_xw - x * above_w
    return float(np.min(x + excess / alpha))


def spectral(dist: DiscreteDist, spectrum: RiskSpec) -> float:
    """Integral of the quantile function against a risk spectrum.

    Step spectra are integrated piecewise over the merged breakpoints of the
    two step functions. Other spectra are integrated via their antiderivative.
    """
    x, w = dist.values, dist.weights
    if not isinstance(spectrum, Spectral):
        if not hasattr(spectrum, "psi"):
            raise TypeError(f"{spectrum!r} has no risk spectrum")
        return float(_spectral_sorted(x, w, spectrum.psi))
    F = _cumulative(w)
    b = np.asarray(spectrum.breakpoints)
    cuts = np.union1d(np.concatenate(([0.0], F)), b)
    lo, hi = cuts[:-1], cuts[1:]
    mid = 0.5 * (lo + hi)
    qidx = np.minimum(np.searchsorted(F, mid, side="left"), x.size - 1)
    sidx = np.minimum(np.searchsorted(b, mid, side="right") - 1, len(spectrum.levels) - 1)
    return float(np.sum(x[qidx] * np.asarray(spectrum.levels)[sidx] * (hi - lo)))


def _wang_survival(dist: DiscreteDist, nu: float) -> float:
    x, w = dist.values, dist.weights
    surv = np.clip(1.0 - np.cumsum(w), 0.0, 1.0)
    gaps = np.diff(x)
    return float(x[0] + np.sum(gaps * np.power(surv[:-1], nu)))


def evaluate(dist: DiscreteDist, spec: RiskSpec) -> float:
    if isinstance(spec, Wang) and dist.values[0] >= 0.0:
        return _wang_survival(dist, spec.nu)
    return float(spec.eval_sorted(dist.values, dist.weights))


def composite(outer: RiskSpec, theta_dist: DiscreteDist) -> float:
    """Outer measure of the law of inner risk values."""
    return evaluate(theta_dist, outer)


def bcr_value(inner_dists: Sequence[DiscreteDist], theta_weights, spec: BcrSpec) -> float:
    inner = [evaluate(d, spec.inner) for d in inner_dists]
    return composite(spec.outer, DiscreteDist.from_unnormalized(inner, theta_weights))


def wasserstein(a: DiscreteDist, b: DiscreteDist, p: float = 1.0) -> float:
    """One-dimensional optimal transport distance; ``p=inf`` is the max quantile gap."""
    if p < 1:
        raise ValueError("order p must be >= 1")
    Fa, Fb = _cumulative(a.weights), _cumulative(b.weights)
    cuts = np.union1d(np.concatenate(([0.0], Fa)), Fb)
    lo, hi = cuts[:-1], cuts[1:]
    keep = hi - lo > 0
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    qa = a.values[np.minimum(np.searchsorted(Fa, mid), len(a) - 1)]
    qb = b.values[np.minimum(np.searchsorted(Fb, mid), len(b) - 1)]
    gap = np.abs(qa - qb)
    if np.isinf(p):
        return float(gap.max())
    return float(np.sum(gap ** p * (hi - lo)) ** (1.0 / p))


# --- spec parsing ----------------------------------------------------------

RiskLike = Union[RiskSpec, str]


def parse_risk(text: RiskLike) -> RiskSpec:
    """Parse compact labels such as ``E``, ``VaR:0.6``, ``AVaR:0.4``, ``Wang:0.5``."""
    if isinstance(text, RiskSpec):
        return text
    name, _, arg = str(text).strip().partition(":")
    key = name.strip().lower()
    args = [float(v) for v in arg.split(",")] if arg else []
    table = {
        "e": Expectation, "mean": Expectation, "expectation": Expectation,
        # no "cvar" alias: that convention uses the complementary level
        "var": VaR, "avar": AVaR, "wang": Wang, "gini": Gini,
        "mix": MeanAVaRMix,
    }
    if key not in table:
        raise ValueError(f"unknown risk measure {text!r}")
    return table[key](*args)


def risk_to_text(spec: RiskSpec) -> str:
    if isinstance(spec, Expectation):
        return "E"
    if isinstance(spec, VaR):
        return f"VaR:{spec.alpha!r}"
    if isinstance(spec, AVaR):
        return f"AVaR:{spec.alpha!r}"
    if isinstance(spec, Wang):
        return f"Wang:{spec.nu!r}"
    if isinstance(spec, Gini):
        return f"Gini:{spec.s!r}"
    if isinstance(spec, MeanAVaRMix):
        return f"Mix:{spec.lam!r},{spec.alpha!r}"
    raise ValueError(f"no text form for {spec!r}")
