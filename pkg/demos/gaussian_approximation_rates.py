#!/usr/bin/env python3
"""Gaussian approximation of log Z_n and its decay rate.

After centering by the quenched mean and scaling by sqrt(n), log Z_n is
approximately standard normal. This script simulates a convergent two-state
scenario, measures the Kolmogorov-Smirnov distance to the normal law at a
ladder of horizons, and fits the power-law decay of that distance.
"""

import numpy as np

from brwire import stats, theory
from brwire.engine import simulate_many
from brwire.model import (
    DisplacementLaw,
    EnvState,
    EnvironmentLaw,
    ImmigrationLaw,
    OffspringLaw,
    Scenario,
)

HORIZONS = (8, 16, 32, 64)
REPLICATES = 4000


def build_scenario() -> Scenario:
    noise = DisplacementLaw.gaussian([0.0], [0.04])
    env = EnvironmentLaw(
        states=(
            EnvState(
                "good",
                OffspringLaw("one-plus-bernoulli", 0.2),
                DisplacementLaw.gaussian([0.1], [0.04]),
                ImmigrationLaw("poisson", 1.0, noise),
            ),
            EnvState(
                "bad",
                OffspringLaw("one-plus-bernoulli", 0.05),
                DisplacementLaw.gaussian([-0.1], [0.04]),
                ImmigrationLaw("poisson", 1.0, noise),
            ),
        ),
        probs=(0.5, 0.5),
    )
    return Scenario(
        environment=env,
        d=1,
        t=(1.0,),
        horizons=HORIZONS,
        replicates=REPLICATES,
        master_seed=7,
    )


def main() -> None:
    scenario = build_scenario()
    mu, sigma, _ = theory.env_constants(scenario.environment, scenario.t_vec)
    print(f"environment constants: mu={mu:+.6f} sigma={sigma:.6f}")
    print(f"simulating {REPLICATES} replicates to horizon {max(HORIZONS)} ...")
    table = simulate_many(scenario)

    # The centered log partition function is S_n + log W_n; the second term
    # converges to a nondegenerate limit, so dividing by sqrt(n) leaves a
    # bias of order E[log W] / (sigma sqrt(n)) that dominates the raw
    # distance at small n.  Subtracting the estimated limit exposes the
    # Gaussian fluctuation itself.
    log_w_limit = float(np.mean(table.log_W[table.n == max(HORIZONS)]))
    print(f"estimated E[log W] = {log_w_limit:+.4f}")

    raw_pairs = []
    print()
    print(" n    raw KS      limit-corrected KS    DKW budget (95%)")
    for n in HORIZONS:
        sample = table.log_Z[table.n == n]
        raw = stats.ks_distance(stats.standardize(sample, n, mu, sigma))
        corrected = stats.ks_distance(
            stats.standardize(sample - log_w_limit, n, mu, sigma)
        )
        raw_pairs.append((n, raw))
        budget = stats.dkw_budget(len(sample), 0.05)
        print(f"{n:3d}    {raw:.6f}    {corrected:.6f}              {budget:.6f}")

    fit = stats.rate_fit(raw_pairs)
    print()
    print(f"raw-distance power-law fit: KS ~ n^{fit.slope:+.3f}  (r^2 = {fit.r_squared:.3f})")
    print("the raw distance decays because the log W bias shrinks like 1/sqrt(n);")
    print("the corrected distance is already near the sampling noise floor.")


if __name__ == "__main__":
    main()
