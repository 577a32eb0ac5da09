"""Shared scenario builders for the test suite.

Three model families recur throughout:

* a drifted two-state branching scenario with unit-variance gaussian
  displacements and Poisson immigration (the heavy rate-experiment model);
* the same geometry with variance 0.04, which satisfies every moment
  hypothesis of the rate theorems and whose W_n visibly stabilizes;
* a single-state deterministic scenario (binary branching, one immigrant
  per generation, t = 0) whose whole trajectory is available in closed
  form: Z_n = 2^{n+1} - 1 and W_n = 2 - 2^{-n}.
"""

import numpy as np
import pytest

from brwire.model import (
    DisplacementLaw,
    EnvState,
    EnvironmentLaw,
    ImmigrationLaw,
    OffspringLaw,
    Scenario,
)


def two_state_env(var: float = 1.0) -> EnvironmentLaw:
    """Equal-weight two-state environment with gaussian displacements.

    State A: 1+Bernoulli(0.2) offspring, displacement N(0.1, var).
    State B: 1+Bernoulli(0.05) offspring, displacement N(-0.1, var).
    Both immigrate Poisson(1) particles at N(0, var) positions.
    """
    imm = ImmigrationLaw("poisson", 1.0, DisplacementLaw.gaussian([0.0], [var]))
    a = EnvState(
        "A",
        OffspringLaw("one-plus-bernoulli", 0.2),
        DisplacementLaw.gaussian([0.1], [var]),
        imm,
    )
    b = EnvState(
        "B",
        OffspringLaw("one-plus-bernoulli", 0.05),
        DisplacementLaw.gaussian([-0.1], [var]),
        imm,
    )
    return EnvironmentLaw((a, b), (0.5, 0.5))


def two_state_scenario(
    replicates: int = 100,
    horizons=(8, 16, 32, 64),
    seed: int = 42,
    var: float = 1.0,
    track_lineage: bool = False,
) -> Scenario:
    return Scenario(
        environment=two_state_env(var),
        d=1,
        t=(1.0,),
        horizons=tuple(horizons),
        replicates=replicates,
        master_seed=seed,
        track_lineage=track_lineage,
    )


def closed_form_scenario(
    horizons=(1, 2, 3, 4, 5), replicates: int = 1, seed: int = 0
) -> Scenario:
    """Binary branching, one immigrant per generation at the origin, t = 0.

    Z_{n+1} = 2 Z_n + 1 with Z_0 = 1 gives Z_n = 2^{n+1} - 1, m = 2, so
    W_n = 2 - 2^{-n} -> W = 2 deterministically.
    """
    state = EnvState(
        "S",
        OffspringLaw("deterministic", 2),
        DisplacementLaw.point_mass([0.0]),
        ImmigrationLaw("deterministic", 1, DisplacementLaw.point_mass([0.0])),
    )
    return Scenario(
        environment=EnvironmentLaw((state,), (1.0,)),
        d=1,
        t=(0.0,),
        horizons=tuple(horizons),
        replicates=replicates,
        master_seed=seed,
        track_lineage=True,
    )


def single_lineage_scenario(
    c: float = 0.3, horizons=(1, 2, 4, 8), seed: int = 0
) -> Scenario:
    """One child per particle, no immigration: W_n = 1 identically."""
    state = EnvState(
        "S",
        OffspringLaw("deterministic", 1),
        DisplacementLaw.point_mass([c]),
    )
    return Scenario(
        environment=EnvironmentLaw((state,), (1.0,)),
        d=1,
        t=(1.0,),
        horizons=tuple(horizons),
        master_seed=seed,
    )


# Three-point environment whose log m values have irrationally related gaps
# (non-lattice) and a skewed law: mean 0, sigma 0.25, skewness 0.8.  One
# child per particle, so only the environment walk matters.
THREE_STATE_VALUES = (-0.21203244693, 0.059095678083, 0.4414376002)
THREE_STATE_PROBS = (0.5, 0.3, 0.2)


def three_state_walk_env() -> EnvironmentLaw:
    states = tuple(
        EnvState(
            label,
            OffspringLaw("deterministic", 1),
            DisplacementLaw.point_mass([c]),
        )
        for label, c in zip("ABC", THREE_STATE_VALUES)
    )
    return EnvironmentLaw(states, THREE_STATE_PROBS)


def three_state_walk_scenario(
    replicates: int = 1000, horizons=(256,), seed: int = 7
) -> Scenario:
    return Scenario(
        environment=three_state_walk_env(),
        d=1,
        t=(1.0,),
        horizons=tuple(horizons),
        replicates=replicates,
        master_seed=seed,
    )


@pytest.fixture(scope="session")
def small_two_state_table():
    """A shared 200-replicate run of the unit-variance two-state scenario."""
    from brwire import engine

    return engine.simulate_many(two_state_scenario(replicates=200, horizons=(2, 4, 8, 16)))
