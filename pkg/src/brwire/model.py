"""Parametric family of environments, reproduction laws and immigration laws.

Every law in the built-in family has product structure: the offspring count
is independent of the child displacements, which are i.i.d.  That makes all
per-state generating quantities available in closed form, so Monte Carlo
estimates always have an analytic oracle.  Arbitrarily coupled reproduction
laws are supported only through a user-supplied sampler, in which case the
closed-form paths raise :class:`~brwire.errors.UnsupportedLaw`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameter, UnsupportedLaw

PROB_TOL = 1e-12


def _as_tuple(v):
    if v is None:
        return None
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class DisplacementLaw:
    """Law of a single child displacement (or immigrant position) in R^d.

    kind is either ``point-mass`` (fixed vector ``c``) or ``gaussian``
    (independent coordinates with given ``mean`` and ``var``).
    """

    kind: str
    d: int
    c: Optional[tuple] = None
    mean: Optional[tuple] = None
    var: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "point-mass":
            c = _as_tuple(self.c)
            if c is None or len(c) != self.d:
                raise InvalidParameter(f"point-mass c must have length d={self.d}")
            object.__setattr__(self, "c", c)
        elif self.kind == "gaussian":
            mean = _as_tuple(self.mean)
            var = _as_tuple(self.var)
            if mean is None or var is None or len(mean) != self.d or len(var) != self.d:
                raise InvalidParameter(f"gaussian mean/var must have length d={self.d}")
            if any(v < 0 for v in var):
                raise InvalidParameter("gaussian variances must be >= 0")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "var", var)
            object.__setattr__(self, "_mean_arr", np.asarray(mean, dtype=float))
            object.__setattr__(self, "_sd_arr", np.sqrt(np.asarray(var, dtype=float)))
        else:
            raise InvalidParameter(f"unknown displacement kind {self.kind!r}")

    @classmethod
    def point_mass(cls, c) -> "DisplacementLaw":
        c = _as_tuple(c)
        return cls(kind="point-mass", d=len(c), c=c)

    @classmethod
    def gaussian(cls, mean, var) -> "DisplacementLaw":
        mean = _as_tuple(mean)
        return cls(kind="gaussian", d=len(mean), mean=mean, var=_as_tuple(var))

    def log_mgf(self, t: np.ndarray) -> float:
        """log E exp(t.L), exact for both kinds."""
        t = np.asarray(t, dtype=float)
        if self.kind == "point-mass":
            return float(t @ np.asarray(self.c))
        m = np.asarray(self.mean)
        v = np.asarray(self.var)
        return float(t @ m + 0.5 * np.sum(t * t * v))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. displacements, shape (size, d)."""
        if self.kind == "point-mass":
            return np.broadcast_to(np.asarray(self.c), (size, self.d)).copy()
        out = rng.standard_normal((size, self.d))
        out *= self._sd_arr
        out += self._mean_arr
        return out


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring-count law.  Every kind puts zero mass on {0}."""

    kind: str
    param: float

    def __post_init__(self):
        k, p = self.kind, self.param
        if k == "deterministic":
            if int(p) != p or p < 1:
                raise InvalidParameter("deterministic offspring needs integer k >= 1")
        elif k == "one-plus-bernoulli":
            if not 0.0 <= p <= 1.0:
                raise InvalidParameter("one-plus-bernoulli needs q in [0, 1]")
        elif k == "one-plus-poisson":
            if p < 0:
                raise InvalidParameter("one-plus-poisson needs lambda >= 0")
        elif k == "one-plus-geometric":
            if not 0.0 < p <= 1.0:
                raise InvalidParameter("one-plus-geometric needs rho in (0, 1]")
        else:
            raise InvalidParameter(f"unknown offspring kind {k!r}")

    def mean(self) -> float:
        if self.kind == "deterministic":
            return float(self.param)
        if self.kind == "one-plus-bernoulli":
            return 1.0 + self.param
        if self.kind == "one-plus-poisson":
            return 1.0 + self.param
        return 1.0 / self.param  # one-plus-geometric: N ~ Geom(rho) on {1,2,...}

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, int(self.param), dtype=np.int64)
        if self.kind == "one-plus-bernoulli":
            return 1 + (rng.random(size) < self.param).astype(np.int64)
        if self.kind == "one-plus-poisson":
            return 1 + rng.poisson(self.param, size)
        return rng.geometric(self.param, size).astype(np.int64)


@dataclass(frozen=True)
class ImmigrationLaw:
    """Per-generation immigrant batch: a count law plus i.i.d. absolute positions."""

    count_kind: str  # none | deterministic | poisson
    count_param: float = 0.0
    position: Optional[DisplacementLaw] = None

    def __post_init__(self):
        if self.count_kind not in ("none", "deterministic", "poisson"):
            raise InvalidParameter(f"unknown immigration count kind {self.count_kind!r}")
        if self.count_kind != "none":
            if self.count_param < 0:
                raise InvalidParameter("immigration count parameter must be >= 0")
            if self.count_kind == "deterministic" and int(self.count_param) != self.count_param:
                raise InvalidParameter("deterministic immigration count must be an integer")
            if self.position is None:
                raise InvalidParameter("immigration with nonzero count needs a position law")

    @classmethod
    def none(cls) -> "ImmigrationLaw":
        return cls(count_kind="none")

    def mean_count(self) -> float:
        if self.count_kind == "none":
            return 0.0
        return float(self.count_param)

    def sample_count(self, rng: np.random.Generator) -> int:
        if self.count_kind == "none":
            return 0
        if self.count_kind == "deterministic":
            return int(self.count_param)
        return int(rng.poisson(self.count_param))

    def sample_counts(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.count_kind == "none":
            return np.zeros(size, dtype=np.int64)
        if self.count_kind == "deterministic":
            return np.full(size, int(self.count_param), dtype=np.int64)
        return rng.poisson(self.count_param, size)


# A user-supplied joint reproduction sampler: rng -> (N, array of N displacement
# vectors).  Offspring count and displacements may be coupled arbitrarily.
ReproductionSampler = Callable[[np.random.Generator], tuple]


@dataclass(frozen=True)
class EnvState:
    """One realizable environment state: branching and immigration laws."""

    label: str
    offspring: OffspringLaw
    displacement: DisplacementLaw
    immigration: ImmigrationLaw = field(default_factory=ImmigrationLaw.none)
    custom_sampler: Optional[ReproductionSampler] = None

    def __post_init__(self):
        imm_pos = self.immigration.position
        if imm_pos is not None and imm_pos.d != self.displacement.d:
            raise InvalidParameter(
                f"state {self.label!r}: immigration position dimension "
                f"{imm_pos.d} != displacement dimension {self.displacement.d}"
            )

    @property
    def d(self) -> int:
        return self.displacement.d

    @property
    def product_form(self) -> bool:
        return self.custom_sampler is None


@dataclass(frozen=True)
class EnvironmentLaw:
    """Finite-support i.i.d. law of per-generation environment states."""

    states: tuple
    probs: tuple

    def __post_init__(self):
        states = tuple(self.states)
        probs = tuple(float(p) for p in self.probs)
        if not states:
            raise InvalidParameter("environment needs at least one state")
        if len(states) != len(probs):
            raise InvalidParameter("states and probabilities differ in length")
        if any(p < 0 for p in probs):
            raise InvalidParameter("state probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise InvalidParameter(
                f"state probabilities sum to {sum(probs)!r}, not 1 within {PROB_TOL}"
            )
        labels = [s.label for s in states]
        if len(set(labels)) != len(labels):
            raise InvalidParameter("state labels must be unique")
        dims = {s.d for s in states}
        if len(dims) != 1:
            raise InvalidParameter("all states must share one dimension")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @property
    def d(self) -> int:
        return self.states[0].d

    @property
    def product_form(self) -> bool:
        return all(s.product_form for s in self.states)

    def sample_state_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(len(self.states), size=size, p=np.asarray(self.probs))


@dataclass(frozen=True)
class Scenario:
    """A full experiment description: model, parameter t, horizons, budget."""

    environment: EnvironmentLaw
    d: int
    t: tuple
    horizons: tuple
    replicates: int = 1
    population_cap: int = 10_000_000
    master_seed: int = 0
    track_lineage: bool = False

    def __post_init__(self):
        t = _as_tuple(self.t)
        if len(t) != self.d:
            raise InvalidParameter(f"t must have length d={self.d}")
        if self.environment.d != self.d:
            raise InvalidParameter("environment dimension does not match scenario d")
        horizons = tuple(int(n) for n in self.horizons)
        if any(b <= a for a, b in zip(horizons, horizons[1:])):
            raise InvalidParameter("horizons must be strictly increasing")
        if not horizons or horizons[0] < 1:
            raise InvalidParameter("horizons must be >= 1 and nonempty")
        if self.replicates < 1:
            raise InvalidParameter("replicates must be >= 1")
        if self.population_cap < 1:
            raise InvalidParameter("population_cap must be >= 1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "horizons", horizons)

    @property
    def t_vec(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)


def mean_mgf(state: EnvState, t) -> float:
    """Quenched mean m(t) = E[N] * E[exp(t.L)] of one environment state.

    Closed form; requires product structure.
    """
    if not state.product_form:
        raise UnsupportedLaw(
            f"state {state.label!r} has a custom reproduction sampler; "
            "use mean_mgf_mc instead"
        )
    return state.offspring.mean() * float(np.exp(state.displacement.log_mgf(t)))


def log_mean_mgf(state: EnvState, t) -> float:
    """log m(t), computed without the intermediate exponential."""
    if not state.product_form:
        raise UnsupportedLaw(
            f"state {state.label!r} has a custom reproduction sampler; "
            "use mean_mgf_mc instead"
        )
    return float(np.log(state.offspring.mean()) + state.displacement.log_mgf(t))


def mean_mgf_mc(state: EnvState, t, rng: np.random.Generator, n_draws: int = 10**6):
    """Monte Carlo oracle for m(t): (estimate, standard error).

    Works for any reproduction law, including custom samplers.
    """
    t = np.asarray(t, dtype=float)
    if state.product_form:
        sums = _sum_scores_product(state, t, rng, n_draws)
    else:
        sums = np.empty(n_draws)
        for i in range(n_draws):
            n, disp = state.custom_sampler(rng)
            sums[i] = np.exp(np.asarray(disp, dtype=float) @ t).sum() if n else 0.0
    return float(sums.mean()), float(sums.std(ddof=1) / np.sqrt(n_draws))


def _sum_scores_product(state: EnvState, t, rng, n_draws: int) -> np.ndarray:
    """Vectorized draws of sum_i exp(t.L_i) for a product-form state."""
    counts = state.offspring.sample(rng, n_draws)
    total = int(counts.sum())
    scores = np.exp(state.displacement.sample(rng, total) @ t)
    edges = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.add.reduceat(scores, edges)


def sample_reproduction(state: EnvState, rng: np.random.Generator):
    """One draw of (N, displacements) for a particle in this state."""
    if not state.product_form:
        n, disp = state.custom_sampler(rng)
        return int(n), np.asarray(disp, dtype=float).reshape(int(n), -1)
    n = int(state.offspring.sample(rng, 1)[0])
    return n, state.displacement.sample(rng, n)


def sample_immigration(state: EnvState, rng: np.random.Generator):
    """One draw of (V, absolute immigrant positions) for this state."""
    v = state.immigration.sample_count(rng)
    if v == 0:
        return 0, np.empty((0, state.d))
    return v, state.immigration.position.sample(rng, v)


def sample_immigration_scores(
    state: EnvState, t, rng: np.random.Generator, n_draws: int
) -> np.ndarray:
    """Vectorized draws of Y = sum_i exp(t.S_i) over one immigrant batch."""
    t = np.asarray(t, dtype=float)
    counts = state.immigration.sample_counts(rng, n_draws)
    total = int(counts.sum())
    out = np.zeros(n_draws)
    if total == 0:
        return out
    scores = np.exp(state.immigration.position.sample(rng, total) @ t)
    nonzero = counts > 0
    edges = np.concatenate(([0], np.cumsum(counts)[:-1]))[nonzero]
    out[nonzero] = np.add.reduceat(scores, edges)
    return out


def sample_biggins_w1(state: EnvState, t, rng: np.random.Generator, n_draws: int) -> np.ndarray:
    """Vectorized draws of the one-step Biggins ratio sum_i exp(t.L_i) / m(t)."""
    m = mean_mgf(state, t)
    return _sum_scores_product(state, np.asarray(t, dtype=float), rng, n_draws) / m
