from __future__ import annotations
from dataclasses import dataclass
import math
from typing import NamedTuple, Union

import numpy as np
from scipy import integrate
from scipy import special
from scipy import stats

from ehsense.model.errors import DomainError, ValidationError, check_probability

RealOrArray = Union[float, np.ndarray]

PRIOR_SUM_TOLERANCE: float = 1e-12
MARCUM_WINDOW_SIGMAS: float = 12.0
MARCUM_WINDOW_PAD: int = 40
MARCUM_TERM_BUDGET: int = 4096
MARCUM_CHUNK_CELLS: int = 2 ** 21
QUADRATURE_SPAN_SIGMAS: float = 40.0
SAMPLER_TOLERANCE: float = 1e-10

HYPOTHESES = (0, 1)


class Priors(NamedTuple):
    pi0: float
    pi1: float

    @staticmethod
    def from_prior_h1(prior_h1: float) -> Priors:
        return Priors(1.0 - prior_h1, prior_h1)


def validate_priors(priors: tuple[float, float]) -> Priors:
    pi0, pi1 = priors
    check_probability('pi0', pi0)
    check_probability('pi1', pi1)
    if abs(pi0 + pi1 - 1.0) > PRIOR_SUM_TOLERANCE:
        raise ValidationError(f"Priors must sum to 1, got {pi0!r} + {pi1!r}.")
    return Priors(float(pi0), float(pi1))


def check_hypothesis(h: int) -> int:
    if h not in HYPOTHESES:
        raise DomainError(f"Hypothesis must be 0 or 1, got {h!r}.")
    return int(h)


def _scalar_or_array(values: np.ndarray, scalar: bool) -> RealOrArray:
    return float(values) if scalar else values


def marcum_q1(a: RealOrArray, b: RealOrArray) -> RealOrArray:
    """
    First-order Marcum Q function.

    Evaluated as a Poisson mixture of regularized upper incomplete gamma
    functions, Q1(a, b) = sum_k Pois(k; a^2/2) * Q(k + 1, b^2/2). Each element
    sums over its own window of k around the Poisson mode, wide enough that
    the omitted Poisson mass stays below 1e-15. Elements whose window would
    exceed MARCUM_TERM_BUDGET terms fall back to adaptive quadrature.
    """
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    scalar = a_arr.ndim == 0
    if np.any(a_arr < 0.0):
        raise DomainError("Marcum Q1 is defined for a nonnegative first argument.")
    flat_a = a_arr.ravel()
    flat_b = b_arr.ravel()
    result = np.ones(flat_a.shape)

    mean = 0.5 * flat_a ** 2
    spread = MARCUM_WINDOW_SIGMAS * np.sqrt(mean) + MARCUM_WINDOW_PAD
    lows = np.floor(np.maximum(mean - spread, 0.0))
    highs = np.ceil(mean + spread)
    positive = flat_b > 0.0
    series = positive & (highs - lows + 1 <= MARCUM_TERM_BUDGET)
    fallback = positive & ~series

    indices = np.flatnonzero(series)
    if indices.size:
        width = int(np.max(highs[indices] - lows[indices])) + 1
        chunk = max(1, MARCUM_CHUNK_CELLS // width)
        offsets = np.arange(width, dtype=float)
        for start in range(0, indices.size, chunk):
            rows = indices[start:start + chunk]
            k = lows[rows, None] + offsets[None, :]
            m = mean[rows, None]
            y = 0.5 * flat_b[rows, None] ** 2
            log_weights = special.xlogy(k, m) - m - special.gammaln(k + 1.0)
            terms = np.exp(log_weights) * special.gammaincc(k + 1.0, y)
            result[rows] = terms.sum(axis=1)

    for index in np.flatnonzero(fallback):
        result[index] = _marcum_q1_quadrature(float(flat_a[index]), float(flat_b[index]))

    result = np.clip(result, 0.0, 1.0).reshape(a_arr.shape)
    return _scalar_or_array(result, scalar)


def marcum_q1_complement(a: RealOrArray, b: RealOrArray) -> RealOrArray:
    """
    1 - Q1(a, b), computed directly as the noncentral chi-square CDF of b^2
    with two degrees of freedom and noncentrality a^2. Keeps its relative
    accuracy where Q1 is within rounding of 1.
    """
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a_arr < 0.0):
        raise DomainError("Marcum Q1 is defined for a nonnegative first argument.")
    b_pos = np.maximum(b_arr, 0.0)
    lower = np.where(a_arr > 0.0, stats.ncx2.cdf(b_pos ** 2, 2, a_arr ** 2), -np.expm1(-0.5 * b_pos ** 2))
    return _scalar_or_array(np.clip(lower, 0.0, 1.0), a_arr.ndim == 0)


def _rician_unit_pdf(x: float, a: float) -> float:
    return x * math.exp(-0.5 * (x - a) ** 2) * float(special.i0e(x * a))


def _marcum_q1_quadrature(a: float, b: float) -> float:
    upper = max(a, b) + QUADRATURE_SPAN_SIGMAS
    points = [a] if b < a < upper else None
    value, _ = integrate.quad(
        _rician_unit_pdf, b, upper, args=(a,), points=points, epsabs=1e-14, epsrel=1e-12, limit=500,
    )
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class ObservationModel:
    """Rayleigh observations under H=0, Rician observations under H=1."""
    noncentrality: float = 0.0
    scale_h0: float = 1.0
    scale_h1: float = 1.0

    def __post_init__(self) -> None:
        if not self.scale_h0 > 0.0 or not self.scale_h1 > 0.0:
            raise ValidationError(f"Scales must be positive, got {self.scale_h0!r} and {self.scale_h1!r}.")
        if not self.noncentrality >= 0.0:
            raise ValidationError(f"Noncentrality must be nonnegative, got {self.noncentrality!r}.")

    def scale(self, h: int) -> float:
        return self.scale_h1 if check_hypothesis(h) == 1 else self.scale_h0

    def pdf(self, h: int, x: RealOrArray) -> RealOrArray:
        values = np.asarray(x, dtype=float)
        if np.any(values < 0.0) or np.any(np.isnan(values)):
            raise DomainError("Observations are nonnegative; the density is undefined for negative x.")
        sigma = self.scale(h)
        z = values / sigma
        if h == 0 or self.noncentrality == 0.0:
            density = z / sigma * np.exp(-0.5 * z ** 2)
        else:
            a = self.noncentrality / sigma
            density = z / sigma * np.exp(-0.5 * (z - a) ** 2) * special.i0e(z * a)
        return _scalar_or_array(density, values.ndim == 0)

    def tail_prob(self, h: int, theta: RealOrArray) -> RealOrArray:
        """Pr(X >= theta | H = h); thresholds below zero cover the whole support."""
        values = np.asarray(theta, dtype=float)
        sigma = self.scale(h)
        b = np.maximum(values, 0.0) / sigma
        if h == 0 or self.noncentrality == 0.0:
            tail = np.exp(-0.5 * b ** 2)
        else:
            a = self.noncentrality / sigma
            # the smaller of the two tails is the accurate one
            lower = np.atleast_1d(np.asarray(marcum_q1_complement(a, b), dtype=float))
            tail = 1.0 - lower
            upper_side = lower >= 0.5
            if np.any(upper_side):
                tail[upper_side] = marcum_q1(a, np.atleast_1d(b)[upper_side])
            tail = tail.reshape(b.shape)
        return _scalar_or_array(np.asarray(tail, dtype=float), values.ndim == 0)

    def cdf(self, h: int, x: RealOrArray) -> RealOrArray:
        """Pr(X < theta | H = h), accurate where the tail is within rounding of 1."""
        values = np.asarray(x, dtype=float)
        b = np.maximum(values, 0.0) / self.scale(h)
        if h == 0 or self.noncentrality == 0.0:
            result = -np.expm1(-0.5 * b ** 2)
        else:
            result = marcum_q1_complement(self.noncentrality / self.scale(h), b)
        return _scalar_or_array(np.asarray(result, dtype=float), values.ndim == 0)

    def tail_prob_quadrature(self, h: int, theta: float) -> float:
        sigma = self.scale(h)
        lower = max(float(theta), 0.0)
        peak = self.noncentrality if h == 1 else sigma
        upper = max(lower, peak) + QUADRATURE_SPAN_SIGMAS * sigma
        points = [peak] if lower < peak < upper else None
        value, _ = integrate.quad(
            lambda x: float(self.pdf(h, x)), lower, upper,
            points=points, epsabs=1e-14, epsrel=1e-12, limit=500,
        )
        return min(max(value, 0.0), 1.0)

    def sample(self, h: int, uniforms: RealOrArray) -> RealOrArray:
        """
        Inverse-CDF sampling: returns x with tail_prob(h, x) == u for u in (0, 1].

        Rayleigh observations invert in closed form. Rician observations are
        found by bisection on the tail function, bracketed with the Chernoff
        bound Q1(a, b) <= exp(-(b - a)^2 / 2), down to SAMPLER_TOLERANCE.
        """
        u = np.asarray(uniforms, dtype=float)
        if np.any(u <= 0.0) or np.any(u > 1.0):
            raise DomainError("Sampler uniforms must lie in (0, 1].")
        sigma = self.scale(h)
        radius = np.sqrt(-2.0 * np.log(u))
        if h == 0 or self.noncentrality == 0.0:
            return _scalar_or_array(sigma * radius, u.ndim == 0)

        lower = np.zeros(u.shape)
        upper = sigma * (self.noncentrality / sigma + radius) + SAMPLER_TOLERANCE
        span = float(np.max(upper)) if upper.size else 0.0
        iterations = max(0, math.ceil(math.log2(max(span, SAMPLER_TOLERANCE) / SAMPLER_TOLERANCE)))
        for _ in range(iterations):
            middle = 0.5 * (lower + upper)
            above = np.asarray(self.tail_prob(h, middle)) >= u
            lower = np.where(above, middle, lower)
            upper = np.where(above, upper, middle)
        return _scalar_or_array(0.5 * (lower + upper), u.ndim == 0)


def mixed_transmit_prob(model: ObservationModel, priors: tuple[float, float], theta: RealOrArray) -> RealOrArray:
    """Unconstrained probability that the sensor wants to transmit, P(X; theta)."""
    pi0, pi1 = validate_priors(priors)
    values = np.asarray(theta, dtype=float)
    mixed = pi0 * np.asarray(model.tail_prob(0, values)) + pi1 * np.asarray(model.tail_prob(1, values))
    return _scalar_or_array(np.clip(mixed, 0.0, 1.0), values.ndim == 0)
