"""Closed-form theory constants, hypothesis audit, and normal primitives.

For a finite product-form environment every per-state quenched mean m_s(t)
is available exactly, so the moments of log m_0(t) are finite-mixture sums.
Expectations that involve the one-step Biggins ratio or the immigrant score
have no closed form and are estimated by a Monte Carlo oracle; those audit
entries are explicitly labelled heuristic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import model
from .errors import (
    InternalMismatch,
    InvalidParameter,
    NotStabilized,
    UnsupportedLaw,
)

INF = float("inf")


# ---------------------------------------------------------------------------
# normal primitives


def normal_cdf(x):
    """Standard normal distribution function, erfc-based, abs error < 1e-12."""
    return ndtr(x)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def edgeworth_Q(x, mu3: float, sigma: float):
    """First-order skewness correction mu3 (1 - x^2) phi(x) / (6 sigma^3)."""
    if sigma <= 0:
        raise InvalidParameter("edgeworth_Q needs sigma > 0")
    x = np.asarray(x, dtype=float)
    out = mu3 * (1.0 - x * x) * normal_pdf(x) / (6.0 * sigma**3)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# environment constants


@dataclass(frozen=True)
class LogWEstimate:
    estimate: float
    std_error: float
    n_used: int
    half_estimate: float = float("nan")
    half_std_error: float = float("nan")

    @property
    def combined_se(self) -> float:
        return math.hypot(self.std_error, self.half_std_error)


@dataclass(frozen=True)
class TheoryConstants:
    """Everything the rate statistics need about one scenario."""

    mu: float
    sigma: float
    mu3: float
    delta: Optional[float] = None
    a_star: Optional[float] = None
    e_log_w: Optional[LogWEstimate] = None
    provenance: str = "closed-form"

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidParameter("sigma must be >= 0")
        if self.delta is not None and not (0.0 < self.delta <= 1.0):
            raise InvalidParameter("delta must lie in (0, 1]")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, default=str)


def delta_from_a(a: float) -> float:
    """Berry-Esseen exponent delta = min(a - 2, 1) for a declared a > 2."""
    if a <= 2:
        raise InvalidParameter("delta is defined for a > 2")
    return min(a - 2.0, 1.0)


def log_m_values(env: model.EnvironmentLaw, t) -> np.ndarray:
    if not env.product_form:
        raise UnsupportedLaw("environment has non-product states; use the MC oracle")
    return np.array([model.log_mean_mgf(s, t) for s in env.states])


def env_constants(env: model.EnvironmentLaw, t):
    """Exact (mu, sigma, mu3) of log m_0(t) over the finite mixture."""
    logm = log_m_values(env, t)
    p = np.asarray(env.probs)
    mu = float(p @ logm)
    centered = logm - mu
    var = float(p @ centered**2)
    mu3 = float(p @ centered**3)
    return mu, math.sqrt(max(var, 0.0)), mu3


def env_constants_mc(env: model.EnvironmentLaw, t, rng, n_draws: int = 10**6):
    """MC oracle for (mu, sigma, mu3) with standard errors, for general laws.

    Each state's log m is itself estimated by sampling the reproduction law.
    """
    p = np.asarray(env.probs)
    logm = np.empty(len(env.states))
    for i, s in enumerate(env.states):
        est, _ = model.mean_mgf_mc(s, t, rng, n_draws)
        logm[i] = math.log(est)
    mu = float(p @ logm)
    centered = logm - mu
    return mu, math.sqrt(max(float(p @ centered**2), 0.0)), float(p @ centered**3)


def is_non_lattice(env: model.EnvironmentLaw, t, span_tol: float = 1e-6) -> bool:
    """True iff the support of log m_0(t) fits no arithmetic progression.

    Exact only for finite supports: runs the real-gcd of the support gaps
    down to the float noise floor.  Rationally related gaps terminate with a
    span of meaningful size; irrationally related gaps drive the gcd to the
    noise floor, i.e. below ``span_tol`` relative to the largest gap.
    """
    values = np.unique(np.round(log_m_values(env, t), 12))
    if len(values) < 3:
        return False  # one or two support points always fit a progression
    gaps = np.abs(np.diff(values))
    scale = float(gaps.max())
    g = gaps[0]
    for x in gaps[1:]:
        g = _real_gcd(g, float(x), 1e-13 * scale)
    return bool(g < span_tol * scale)


def _real_gcd(a: float, b: float, floor: float) -> float:
    while b > floor:
        a, b = b, a % b
        if b > a / 2:
            b = a - b  # fold remainders symmetrically to damp float noise
    return a


# ---------------------------------------------------------------------------
# hypothesis audit


@dataclass(frozen=True)
class AuditEntry:
    name: str
    value: float
    threshold: float
    passed: bool
    method: str  # "closed-form" | "mc-heuristic"


@dataclass(frozen=True)
class AssumptionReport:
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def closed_form_passed(self) -> bool:
        return all(e.passed for e in self.entries if e.method == "closed-form")

    @property
    def has_heuristics(self) -> bool:
        return any(e.method == "mc-heuristic" for e in self.entries)

    def entry(self, name: str) -> AuditEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.entries], indent=2)


def _abs_moment_t_l(state: model.EnvState, t, a: float) -> float:
    """E |t.L_1|^a for one state, exact up to quadrature."""
    disp = state.displacement
    t = np.asarray(t, dtype=float)
    if disp.kind == "point-mass":
        return abs(float(t @ np.asarray(disp.c))) ** a
    m = float(t @ np.asarray(disp.mean))
    s2 = float(np.sum(t * t * np.asarray(disp.var)))
    if s2 == 0.0:
        return abs(m) ** a
    sd = math.sqrt(s2)
    val, _ = integrate.quad(
        lambda x: abs(m + sd * x) ** a * normal_pdf(x), -12, 12, limit=200
    )
    return val


def _hill_tail_exponent(draws: np.ndarray, frac: float = 0.01) -> float:
    """Hill estimator of the tail exponent of positive draws (heuristic)."""
    x = np.sort(draws[draws > 0])
    k = max(int(len(x) * frac), 10)
    if len(x) <= k + 1:
        return INF
    tail = x[-k:]
    x0 = x[-k - 1]
    mean_log = float(np.mean(np.log(tail / x0)))
    if mean_log <= 0.0:
        return INF  # flat upper tail (point mass): no polynomial decay at all
    return 1.0 / mean_log


def _tail_finite_heuristic(draws: np.ndarray, order: float = 1.0) -> bool:
    """Heuristic check that E[draws^order] is finite.

    Compares Hill estimates at two tail depths: a genuine power law keeps
    the exponent stable, while lighter-than-polynomial tails (lognormal,
    bounded) push the deeper estimate upward.  Sampling cannot decide
    finiteness; callers must label the result heuristic.
    """
    if not np.any(draws > 0):
        return True
    k_outer = _hill_tail_exponent(draws, 0.01)
    k_inner = _hill_tail_exponent(draws, 0.001)
    return k_inner > order or k_inner > 1.2 * k_outer


def audit_assumptions(
    env: model.EnvironmentLaw,
    t,
    alpha: float,
    epsilon: float,
    p: float,
    a: float,
    rng: Optional[np.random.Generator] = None,
    n_draws: int = 10**6,
) -> AssumptionReport:
    """Evaluate every moment hypothesis of the rate theorems for this model.

    Closed forms are used over the finite mixture wherever the product-form
    family admits them; expectations involving Y_0 or the one-step Biggins
    ratio are MC-estimated and flagged ``mc-heuristic`` (sampling cannot
    decide finiteness).
    """
    if alpha <= 0 or epsilon <= 0:
        raise InvalidParameter("alpha and epsilon must be > 0")
    if p <= 1:
        raise InvalidParameter("p must be > 1")
    if a <= 2:
        raise InvalidParameter("a must be > 2")
    if rng is None:
        rng = np.random.default_rng(0)

    probs = np.asarray(env.probs)
    t_vec = np.asarray(t, dtype=float)
    logm = log_m_values(env, t_vec)
    logm_p = np.array([model.log_mean_mgf(s, p * t_vec) for s in env.states])
    entries = []

    # E m_0(t)^{-alpha} < 1
    v = float(probs @ np.exp(-alpha * logm))
    entries.append(AuditEntry("E[m^-alpha]", v, 1.0, v < 1.0, "closed-form"))

    # E (m_0(pt)/m_0(t)^p)^eps < 1   (the (H) ratio condition)
    v = float(probs @ np.exp(epsilon * (logm_p - p * logm)))
    entries.append(AuditEntry("E[(m(pt)/m(t)^p)^eps]", v, 1.0, v < 1.0, "closed-form"))

    # E |log m_0(t)|^a < inf: finite mixture, always finite
    v = float(probs @ np.abs(logm) ** a)
    entries.append(AuditEntry("E[|log m|^a]", v, INF, True, "closed-form"))

    # E |t.L_1|^a < inf, annealed over states
    v = float(sum(pp * _abs_moment_t_l(s, t_vec, a) for pp, s in zip(probs, env.states)))
    entries.append(AuditEntry("E[|t.L|^a]", v, INF, math.isfinite(v), "closed-form"))

    # E (e^{t.L_1}/m_0(t))^{-alpha} < inf: gaussian/point MGF at -alpha t
    v = float(
        sum(
            pp * math.exp(alpha * lm + s.displacement.log_mgf(-alpha * t_vec))
            for pp, lm, s in zip(probs, logm, env.states)
        )
    )
    entries.append(AuditEntry("E[(e^{t.L}/m)^-alpha]", v, INF, math.isfinite(v), "closed-form"))

    # E (Y_0/m_0(t))^alpha < inf: MC oracle + tail-exponent heuristic
    per_state = []
    finite = True
    for s, lm in zip(env.states, logm):
        y = model.sample_immigration_scores(s, t_vec, rng, n_draws)
        z = (y * math.exp(-lm)) ** alpha
        per_state.append(float(z.mean()))
        finite &= _tail_finite_heuristic(z)
    v = float(probs @ np.asarray(per_state))
    entries.append(AuditEntry("E[(Y0/m)^alpha]", v, INF, finite, "mc-heuristic"))

    # E (E_xi barW_1^p)^eps < inf: per-state quenched moment by MC
    per_state = []
    finite = True
    for s in env.states:
        w1 = model.sample_biggins_w1(s, t_vec, rng, n_draws)
        per_state.append(float(np.mean(w1**p)))
        finite &= _tail_finite_heuristic(w1, order=p)
    v = float(probs @ (np.asarray(per_state) ** epsilon))
    entries.append(AuditEntry("E[(E_xi barW1^p)^eps]", v, INF, finite, "mc-heuristic"))

    # non-lattice flag for log m_0(t)
    nl = is_non_lattice(env, t_vec)
    entries.append(AuditEntry("non-lattice[log m]", float(nl), 1.0, nl, "closed-form"))

    return AssumptionReport(entries=tuple(entries))


# ---------------------------------------------------------------------------
# E log W estimator

# Absolute allowance on top of the 2-sigma stabilization gate.  Fully
# deterministic scenarios have zero standard error but a small geometric
# residual between n_big and n_big/2; a bias of this size is far below any
# statistical use of the estimate.
STABILIZATION_FLOOR = 1e-3


def estimate_log_W_limit(
    scenario: model.Scenario, n_big: int, M: int, workers: int = 1
) -> LogWEstimate:
    """Mean of log W_{n_big} over M replicates, with a stabilization gate.

    The residual bias of stopping at n_big decays geometrically but with an
    unknown constant, so the gate is empirical: the estimates at n_big and
    n_big/2 must agree within twice their combined standard error.
    """
    from . import engine  # deferred: engine is a heavier import

    if n_big < 2:
        raise InvalidParameter("n_big must be >= 2")
    half = n_big // 2
    probe = model.Scenario(
        environment=scenario.environment,
        d=scenario.d,
        t=scenario.t,
        horizons=(half, n_big),
        replicates=M,
        population_cap=scenario.population_cap,
        master_seed=scenario.master_seed,
    )
    table = engine.simulate_many(probe, workers=workers)
    lw_half = table.log_W[table.n == half]
    lw_big = table.log_W[table.n == n_big]
    est = float(lw_big.mean())
    se = float(lw_big.std(ddof=1) / math.sqrt(len(lw_big)))
    est_half = float(lw_half.mean())
    se_half = float(lw_half.std(ddof=1) / math.sqrt(len(lw_half)))
    out = LogWEstimate(est, se, n_big, est_half, se_half)
    if abs(est - est_half) > 2.0 * out.combined_se + STABILIZATION_FLOOR:
        raise NotStabilized(
            f"log W estimate not stabilized: {est:.4f} at n={n_big} vs "
            f"{est_half:.4f} at n={half} (2*SE = {2 * out.combined_se:.4f})",
            estimate=est,
            half_estimate=est_half,
            combined_se=out.combined_se,
        )
    return out


# ---------------------------------------------------------------------------
# Laplace transform of barW


def laplace_barW(samples: Sequence[float], s: float) -> float:
    """Empirical Laplace transform mean(exp(-s * barW)) at s > 0."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InvalidParameter("laplace_barW needs a nonempty sample")
    if s < 0:
        raise InvalidParameter("laplace_barW needs s >= 0")
    return float(np.mean(np.exp(-s * x)))


def laplace_decay_fit(samples: Sequence[float], s_grid: Sequence[float]):
    """Fit phi(s) ~ c (log s)^{-r} over a geometric s-grid.

    Returns (r_hat, log_c, r_squared) from least squares of log phi against
    log log s.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 1.0):
        raise InvalidParameter("laplace_decay_fit needs s > 1 so log log s exists")
    phi = np.array([laplace_barW(samples, s) for s in s_grid])
    if np.any(phi <= 0):
        raise InvalidParameter("empirical Laplace transform vanished on the grid")
    x = np.log(np.log(s_grid))
    y = np.log(phi)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# lambda_0 machinery


def q_function(r: float, delta: float) -> float:
    """The piecewise exponent map q(r) used by the non-uniform bound."""
    if not (0.0 < delta <= 1.0):
        raise InvalidParameter("delta must lie in (0, 1]")
    if math.isinf(r):
        return INF
    if r < max(2.0 * delta, 1.0) - 1e-12:
        raise InvalidParameter(f"q(r) needs r >= max(2 delta, 1); got r={r}, delta={delta}")
    if delta == 1.0:
        return r / 2.0
    if delta <= 0.5:
        return r
    if r >= delta / (1.0 - delta):
        return r
    disc = (1.0 + delta) ** 2 - 4.0 * r * (1.0 - delta)
    return ((1.0 + delta) - math.sqrt(max(disc, 0.0))) / (2.0 * (1.0 - delta))


@dataclass(frozen=True)
class LambdaZero:
    r_star: float
    q_star: float
    eta_star: float
    lambda0: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "r_star": self.r_star,
                "q_star": self.q_star,
                "eta_star": self.eta_star,
                "lambda0": self.lambda0,
            },
            indent=2,
        )


def _eta_star_cases(r_star: float, q_star: float, delta: float) -> float:
    """Explicit case analysis for eta* by delta regime; cross-checks the formula."""
    if delta == 1.0:
        return r_star / 2.0
    if delta <= 0.5:
        return r_star - 1.0
    if delta <= 2.0 * math.sqrt(2.0) - 2.0:
        return r_star - 1.0
    disc = math.sqrt(delta * delta - 4.0 * (1.0 - delta))
    r1 = max(2.0 * delta, 1.0 + (delta - disc) / (2.0 * (1.0 - delta)))
    r2 = min(delta / (1.0 - delta), 1.0 + (delta + disc) / (2.0 * (1.0 - delta)))
    if r1 < r_star < r2:
        return q_star
    return r_star - 1.0


def lambda_zero(a_star: float, epsilon: float, p: float, delta: float) -> LambdaZero:
    """Supremal non-uniform weight exponent from (a*, eps, p, delta).

    Computes r*, q* = q(r*), eta* = min(r* - 1, q*) and
    lambda0 = min(eta*, eta*/(eta* + 1) * a*), and asserts that the direct
    formula agrees with the explicit case analysis.
    """
    if not (0.0 < delta <= 1.0):
        raise InvalidParameter("delta must lie in (0, 1]")
    if epsilon <= 0 or p <= 1:
        raise InvalidParameter("need epsilon > 0 and p > 1")
    if p * epsilon <= 2.0 or (p - 1.0) * epsilon <= 1.0:
        raise InvalidParameter(
            "need p*eps > 2 and (p-1)*eps > 1, else r* is non-positive"
        )
    if math.isinf(a_star):
        return LambdaZero(INF, INF, INF, INF)
    if a_star <= 0:
        raise InvalidParameter("a_star must be positive")

    factor = min(
        (p * epsilon - 2.0) / (p * epsilon),
        ((p - 1.0) * epsilon - 1.0) / ((p - 1.0) * epsilon),
    )
    r_star = factor * a_star
    q_star = q_function(r_star, delta)  # validates r* >= max(2 delta, 1)
    eta_star = min(r_star - 1.0, q_star)
    eta_cases = _eta_star_cases(r_star, q_star, delta)
    if abs(eta_star - eta_cases) > 1e-12:
        raise InternalMismatch(
            f"eta* formula ({eta_star!r}) and case analysis ({eta_cases!r}) disagree"
        )
    lam = min(eta_star, eta_star / (eta_star + 1.0) * a_star)
    return LambdaZero(r_star, q_star, eta_star, lam)
