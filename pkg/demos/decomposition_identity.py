#!/usr/bin/env python3
"""Partition-function decomposition across immigrant lines.

The normalized partition function W_n splits exactly into the contribution of
the initial particle's descendants plus one term per immigrant generation.
This script simulates a small two-state random environment with lineage
tracking enabled and verifies the identity replicate by replicate.
"""

import numpy as np

from brwire.engine import decomposition_residual, simulate_with_ledger
from brwire.model import (
    DisplacementLaw,
    EnvState,
    EnvironmentLaw,
    ImmigrationLaw,
    OffspringLaw,
    Scenario,
)


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
        horizons=(4, 8, 12),
        replicates=1,
        master_seed=2024,
        track_lineage=True,
    )


def main() -> None:
    scenario = build_scenario()
    print("Decomposition of W_n into initial-line and immigrant-line terms")
    print("===============================================================")
    for rep in range(5):
        records, ledger = simulate_with_ledger(scenario, rep)
        for rec in records:
            residual = decomposition_residual(ledger, records, rec.n)
            w_total = np.exp(rec.log_W)
            w_initial = np.exp(rec.log_Wbar)
            print(
                f"replicate {rep}  n={rec.n:3d}  W_n={w_total:10.6f}  "
                f"initial line={w_initial:10.6f}  "
                f"immigrant share={1.0 - w_initial / w_total:6.1%}  "
                f"identity residual={residual:.3e}"
            )
            assert residual <= 1e-9
    print()
    print("All residuals at or below 1e-9: the line-by-line decomposition is exact.")


if __name__ == "__main__":
    main()
