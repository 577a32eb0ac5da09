"""Distance and rate statistics over replicate trajectories.

Everything here is a pure function of immutable sample arrays.  The
Kolmogorov-type distances are evaluated exactly at the empirical jump
points; Monte Carlo resolution is budgeted with the DKW inequality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameter, ResolutionTooCoarse
from .theory import TheoryConstants, edgeworth_Q, normal_cdf, normal_pdf


@dataclass(frozen=True)
class EmpiricalLaw:
    """A sorted standardized sample attached to its generation index."""

    sorted_sample: np.ndarray
    n: int

    def __post_init__(self):
        x = np.asarray(self.sorted_sample, dtype=float)
        if x.size < 1:
            raise InvalidParameter("empirical law needs at least one point")
        if np.any(np.diff(x) < 0):
            raise InvalidParameter("sample must be sorted")
        object.__setattr__(self, "sorted_sample", x)

    @property
    def size(self) -> int:
        return int(self.sorted_sample.size)

    def cdf(self, x) -> np.ndarray:
        """Empirical distribution function (right-continuous)."""
        return np.searchsorted(self.sorted_sample, x, side="right") / self.size


def standardize(log_Z: Sequence[float], n: int, mu: float, sigma: float) -> EmpiricalLaw:
    """Standardized sample (log Z_n - n mu) / (sqrt(n) sigma), sorted."""
    if sigma <= 0:
        raise InvalidParameter("standardize needs sigma > 0")
    x = (np.asarray(log_Z, dtype=float) - n * mu) / (math.sqrt(n) * sigma)
    return EmpiricalLaw(np.sort(x), n)


def ks_distance(emp: EmpiricalLaw) -> float:
    """Exact sup |F_hat - Phi|, evaluated on both sides of every jump."""
    x = emp.sorted_sample
    m = emp.size
    phi = normal_cdf(x)
    i = np.arange(1, m + 1)
    return float(np.max(np.maximum(np.abs(i / m - phi), np.abs((i - 1) / m - phi))))


def weighted_distance(emp: EmpiricalLaw, lam: float, x_cap: float) -> float:
    """sup of (1 + |x|)^lam |F_hat(x+-) - Phi(x)| over |x| <= x_cap.

    The truncation at x_cap is mandatory: Monte Carlo tails beyond it are
    noise.  Candidates are the sample jump points inside the cap plus the
    cap endpoints themselves.
    """
    if lam < 0 or x_cap <= 0:
        raise InvalidParameter("need lam >= 0 and x_cap > 0")
    x = emp.sorted_sample
    m = emp.size
    inside = (x >= -x_cap) & (x <= x_cap)
    xs = x[inside]
    i = np.arange(1, m + 1)[inside]
    best = 0.0
    if xs.size:
        phi = normal_cdf(xs)
        gap = np.maximum(np.abs(i / m - phi), np.abs((i - 1) / m - phi))
        best = float(np.max((1.0 + np.abs(xs)) ** lam * gap))
    for edge in (-x_cap, x_cap):
        gap = abs(float(emp.cdf(edge)) - float(normal_cdf(edge)))
        best = max(best, (1.0 + abs(edge)) ** lam * gap)
    return best


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit through (log n, log D_n)."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple  # the (log n, log D_n) pairs used

    def to_json(self) -> str:
        return json.dumps(
            {
                "slope": self.slope,
                "intercept": self.intercept,
                "r2": self.r_squared,
                "points": [list(p) for p in self.points],
            },
            indent=2,
        )


def rate_fit(pairs: Sequence) -> RateFit:
    """Fit D_n ~ C n^slope; the slope estimates -delta/2 for the bounds."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InvalidParameter("rate_fit needs at least 3 points")
    ns = np.array([p[0] for p in pairs], dtype=float)
    ds = np.array([p[1] for p in pairs], dtype=float)
    if np.any(np.diff(ns) <= 0):
        raise InvalidParameter("n must be strictly increasing")
    if np.any(ds <= 0):
        raise InvalidParameter("all D_n must be > 0")
    x, y = np.log(ns), np.log(ds)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, tuple(zip(x, y)))


def dkw_budget(M: int, beta: float) -> float:
    """DKW uniform half-width sqrt(log(2/beta) / (2 M)) at confidence 1-beta."""
    if M < 1:
        raise InvalidParameter("M must be >= 1")
    if not 0.0 < beta < 1.0:
        raise InvalidParameter("beta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / beta) / (2.0 * M))


def exact_rate_profile(
    emp: EmpiricalLaw,
    constants: TheoryConstants,
    x_grid: Sequence[float],
    beta: float = 0.05,
    resolution: float = 0.5,
):
    """sqrt(n)-scaled CLT error against its predicted limit profile.

    Per grid point x: lhs = sqrt(n) (F_hat(x) - Phi(x)) and
    rhs = -phi(x) ElogW / sigma + Q(x), plus the combined uncertainty
    sqrt(n) * DKW half-width + phi(x)/sigma * SE(ElogW).
    """
    if constants.sigma <= 0:
        raise InvalidParameter("profile needs sigma > 0")
    if constants.e_log_w is None:
        raise InvalidParameter("profile needs an E log W estimate")
    half = dkw_budget(emp.size, beta)
    noise = math.sqrt(emp.n) * half
    if noise > resolution:
        raise ResolutionTooCoarse(
            f"sqrt(n) * DKW half-width {noise:.4f} exceeds resolution {resolution}"
        )
    x = np.asarray(x_grid, dtype=float)
    lhs = math.sqrt(emp.n) * (emp.cdf(x) - normal_cdf(x))
    pdf = normal_pdf(x)
    rhs = -pdf * constants.e_log_w.estimate / constants.sigma + edgeworth_Q(
        x, constants.mu3, constants.sigma
    )
    unc = noise + pdf / constants.sigma * constants.e_log_w.std_error
    return [(float(a), float(b), float(c), float(u)) for a, b, c, u in zip(x, lhs, rhs, unc)]


def env_walk_profile(
    emp: EmpiricalLaw, mu3: float, sigma: float, x_grid: Sequence[float], beta: float = 0.05
):
    """Profile for the particle-free walk: the limit is Q(x) alone."""
    if sigma <= 0:
        raise InvalidParameter("profile needs sigma > 0")
    half = dkw_budget(emp.size, beta)
    noise = math.sqrt(emp.n) * half
    x = np.asarray(x_grid, dtype=float)
    lhs = math.sqrt(emp.n) * (emp.cdf(x) - normal_cdf(x))
    rhs = edgeworth_Q(x, mu3, sigma)
    return [(float(a), float(b), float(c), noise) for a, b, c in zip(x, lhs, rhs)]


@dataclass(frozen=True)
class IncrementDiagnostics:
    alpha: float
    moment: float  # mean |W_l - W_n|^alpha
    tails: tuple  # (threshold, exceedance frequency) for |W_l/W_n - 1|


def w_increment_diagnostics(
    w_n: Sequence[float],
    w_l: Sequence[float],
    alpha: float,
    thresholds: Sequence[float] = (0.1, 0.3, 1.0),
) -> IncrementDiagnostics:
    """Coupled-path diagnostics of the submartingale increment W_l - W_n.

    ``w_n`` and ``w_l`` must come from the same replicate paths; independent
    sampling would measure the wrong quantity.
    """
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameter("alpha must lie in (0, 1]")
    a = np.asarray(w_n, dtype=float)
    b = np.asarray(w_l, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise InvalidParameter("need equal-length nonempty coupled samples")
    diff = np.abs(b - a)
    rel = np.abs(b / a - 1.0)
    tails = tuple((float(x), float(np.mean(rel > x))) for x in thresholds)
    return IncrementDiagnostics(alpha, float(np.mean(diff**alpha)), tails)


def increment_rate_fit(pairs: Sequence):
    """Regress log E|W_2n - W_n|^alpha on n; the slope estimates log rho.

    Returns (log_rho, intercept, r_squared).
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InvalidParameter("increment_rate_fit needs at least 3 points")
    ns = np.array([p[0] for p in pairs], dtype=float)
    ms = np.array([p[1] for p in pairs], dtype=float)
    if np.any(ms <= 0):
        raise InvalidParameter("all moments must be > 0")
    y = np.log(ms)
    slope, intercept = np.polyfit(ns, y, 1)
    resid = y - (slope * ns + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def distance_summary(
    emp: EmpiricalLaw,
    lam: Optional[float] = None,
    x_cap: float = 3.0,
    beta: float = 0.05,
) -> dict:
    """JSON-ready summary of the distance statistics at one horizon."""
    out = {
        "n": emp.n,
        "M": emp.size,
        "ks": ks_distance(emp),
        "dkw_halfwidth": dkw_budget(emp.size, beta),
    }
    if lam is not None:
        out["weighted"] = {
            "lambda": lam,
            "x_cap": x_cap,
            "value": weighted_distance(emp, lam, x_cap),
        }
    return out
