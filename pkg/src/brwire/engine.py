"""Generation-by-generation simulation of BRWIRE replicates.

All partition quantities live in log space end to end; the submartingale
W_n is re-exponentiated only inside the decomposition residual, where its
terms are O(1).  Replicates are independent units of parallel work driven
by counter-based random streams derived from (master_seed, replicate index),
so any execution order or worker count yields identical output.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import model
from .errors import CapExceeded, EmptySelection, InvalidParameter

INITIAL = 0  # lineage tag of the initial particle's tree
UNTRACKED_IMMIGRANT = 1  # shared tag when per-immigrant lineage is off

_ENV_WALK_CHUNK = 4096  # fixed batch granularity for the env-only sampler


def replicate_rng(master_seed: int, replicate_index: int) -> np.random.Generator:
    """Counter-based stream for one replicate; independent across indices."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(0, replicate_index))
    return np.random.Generator(np.random.Philox(seq))


def _aux_rng(master_seed: int, domain: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(domain, index))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class GenerationState:
    """The living population of one generation.

    ``line`` holds one lineage tag per particle: INITIAL for descendants of
    the founder, otherwise the id of the immigrant line the particle belongs
    to (UNTRACKED_IMMIGRANT when per-immigrant tags are disabled).  The tag
    array is kept nondecreasing so per-line reductions are contiguous.
    """

    positions: np.ndarray  # (pop, d)
    line: np.ndarray  # (pop,) int64
    n: int

    def __post_init__(self):
        if len(self.positions) != len(self.line):
            raise InvalidParameter("positions and lineage tags differ in length")

    @property
    def pop(self) -> int:
        return len(self.positions)

    @classmethod
    def initial(cls, d: int) -> "GenerationState":
        return cls(np.zeros((1, d)), np.zeros(1, dtype=np.int64), 0)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-horizon observables of one replicate."""

    n: int
    log_Z: float
    log_Zbar: float
    log_Pi: float
    S: float
    log_W: float
    log_Wbar: float
    pop: int
    env_labels: tuple = ()


@dataclass
class ImmigrantLineLedger:
    """Per-immigrant-line bookkeeping for the submartingale decomposition.

    For each line id: the joining generation j, the index i within its
    batch, and the initial score t.S of the immigrant.  ``line_log_Z`` maps
    each recorded generation k to the log partition sum of every line's
    subtree at k (the log of the Biggins numerator times Pi_j... the raw
    sum of exp(t.S_u) over the subtree).
    """

    join_generation: dict = field(default_factory=dict)  # line id -> j
    batch_index: dict = field(default_factory=dict)  # line id -> i
    initial_score: dict = field(default_factory=dict)  # line id -> t.S at birth
    line_log_Z: dict = field(default_factory=dict)  # k -> {line id -> log sum}
    log_Pi: dict = field(default_factory=dict)  # k -> log Pi_k


def step(
    gen: GenerationState,
    state: model.EnvState,
    rng: np.random.Generator,
    population_cap: int = 10_000_000,
    track_lineage: bool = False,
    ledger: Optional[ImmigrantLineLedger] = None,
    t: Optional[np.ndarray] = None,
) -> GenerationState:
    """Advance one generation: branch every particle, then append immigrants.

    Raises CapExceeded (without truncation) if the new generation would
    exceed ``population_cap``.
    """
    n_next = gen.n + 1
    counts = state.offspring.sample(rng, gen.pop)
    total = int(counts.sum())
    if total > population_cap:
        raise CapExceeded(
            f"child count {total} exceeds population cap {population_cap}",
            generation=n_next,
        )
    child_pos = np.repeat(gen.positions, counts, axis=0)
    child_pos += state.displacement.sample(rng, total)
    child_line = np.repeat(gen.line, counts)

    v, imm_pos = model.sample_immigration(state, rng)
    if total + v > population_cap:
        raise CapExceeded(
            f"population {total + v} exceeds population cap {population_cap}",
            generation=n_next,
        )
    if v:
        if track_lineage:
            if ledger is None:
                raise InvalidParameter("lineage tracking needs a ledger")
            base = max(ledger.join_generation, default=UNTRACKED_IMMIGRANT) + 1
            imm_line = np.arange(base, base + v, dtype=np.int64)
            scores = imm_pos @ t if t is not None else np.zeros(v)
            for off in range(v):
                lid = base + off
                ledger.join_generation[lid] = n_next
                ledger.batch_index[lid] = off
                ledger.initial_score[lid] = float(scores[off])
        else:
            imm_line = np.full(v, UNTRACKED_IMMIGRANT, dtype=np.int64)
        positions = np.concatenate([child_pos, imm_pos])
        line = np.concatenate([child_line, imm_line])
    else:
        positions, line = child_pos, child_line
    return GenerationState(positions, line, n_next)


def log_partition(gen: GenerationState, t, selection="ALL") -> float:
    """log sum of exp(t.S_u) over a lineage-filtered particle set.

    Max-shifted log-sum-exp: safe for per-particle scores up to ~7e2 in
    magnitude.  ``selection`` is "ALL", "INITIAL_ONLY", or an immigrant
    line id.
    """
    t = np.asarray(t, dtype=float)
    if selection == "ALL":
        mask = slice(None)
    elif selection == "INITIAL_ONLY":
        mask = gen.line == INITIAL
    else:
        mask = gen.line == int(selection)
    scores = gen.positions[mask] @ t
    if scores.size == 0:
        raise EmptySelection(f"no particles match selection {selection!r}")
    return float(logsumexp(scores))


def _per_line_log_partition(gen: GenerationState, t) -> dict:
    """log partition sum per lineage tag; relies on the sorted tag array."""
    scores = gen.positions @ np.asarray(t, dtype=float)
    ids, starts = np.unique(gen.line, return_index=True)
    highs = np.maximum.reduceat(scores, starts)
    shifted = np.exp(scores - np.repeat(highs, np.diff(np.append(starts, len(scores)))))
    sums = np.add.reduceat(shifted, starts)
    return {int(i): float(h + math.log(s)) for i, h, s in zip(ids, highs, sums)}


def _env_log_means(env: model.EnvironmentLaw, t) -> np.ndarray:
    return np.array([model.log_mean_mgf(s, t) for s in env.states])


def env_mu(env: model.EnvironmentLaw, t) -> float:
    return float(np.asarray(env.probs) @ _env_log_means(env, t))


def _run_replicate(scenario: model.Scenario, replicate_index: int, with_ledger: bool):
    rng = replicate_rng(scenario.master_seed, replicate_index)
    env = scenario.environment
    t = scenario.t_vec
    logm = _env_log_means(env, t)
    mu = float(np.asarray(env.probs) @ logm)
    n_max = scenario.horizons[-1]
    state_idx = rng.choice(len(env.states), size=n_max, p=np.asarray(env.probs))
    horizons = set(scenario.horizons)

    gen = GenerationState.initial(scenario.d)
    ledger = ImmigrantLineLedger() if with_ledger else None
    log_pi = 0.0
    records = []
    for n in range(n_max):
        s = env.states[state_idx[n]]
        gen = step(
            gen,
            s,
            rng,
            population_cap=scenario.population_cap,
            track_lineage=with_ledger,
            ledger=ledger,
            t=t,
        )
        log_pi += logm[state_idx[n]]
        k = n + 1
        if k in horizons:
            log_z = log_partition(gen, t, "ALL")
            log_zbar = log_partition(gen, t, "INITIAL_ONLY")
            records.append(
                TrajectoryRecord(
                    n=k,
                    log_Z=log_z,
                    log_Zbar=log_zbar,
                    log_Pi=float(log_pi),
                    S=float(log_pi - k * mu),
                    log_W=float(log_z - log_pi),
                    log_Wbar=float(log_zbar - log_pi),
                    pop=gen.pop,
                    env_labels=tuple(env.states[i].label for i in state_idx[:k]),
                )
            )
            if with_ledger:
                ledger.line_log_Z[k] = _per_line_log_partition(gen, t)
                ledger.log_Pi[k] = log_pi
    return records, ledger


def simulate_replicate(scenario: model.Scenario, replicate_index: int):
    """One replicate: a TrajectoryRecord per requested horizon.

    The random stream is a pure function of (master_seed, replicate_index),
    so results are identical under any execution order.  CapExceeded aborts
    the replicate with the index attached.
    """
    try:
        records, _ = _run_replicate(scenario, replicate_index, scenario.track_lineage)
    except CapExceeded as e:
        e.replicate = replicate_index
        raise
    return records


def simulate_with_ledger(scenario: model.Scenario, replicate_index: int):
    """Like simulate_replicate but with per-immigrant lineage bookkeeping."""
    try:
        return _run_replicate(scenario, replicate_index, True)
    except CapExceeded as e:
        e.replicate = replicate_index
        raise


def decomposition_residual(
    ledger: ImmigrantLineLedger, records: Sequence[TrajectoryRecord], k: int
) -> float:
    """Relative defect of W_k against its immigrant-line decomposition.

    Reconstructs W_k as the founder term plus one term per immigrant line,
    each exponentiated from its own log representation; exact up to float
    rounding because the lines partition generation k.
    """
    rec = next((r for r in records if r.n == k), None)
    if rec is None:
        raise InvalidParameter(f"no record at generation {k}")
    w_k = math.exp(rec.log_W)
    total = math.exp(rec.log_Wbar)
    log_pi = ledger.log_Pi[k]
    for lid, log_z_line in ledger.line_log_Z[k].items():
        if lid == INITIAL:
            continue
        total += math.exp(log_z_line - log_pi)
    return abs(w_k - total) / w_k


@dataclass
class TrajectoryTable:
    """Column-wise records of many replicates at the scenario horizons."""

    replicate: np.ndarray
    n: np.ndarray
    log_Z: np.ndarray
    log_Zbar: np.ndarray
    log_Pi: np.ndarray
    S: np.ndarray
    log_W: np.ndarray
    log_Wbar: np.ndarray
    pop: np.ndarray
    aborted: tuple = ()  # (replicate_index, reason) pairs

    def at_horizon(self, n: int) -> "TrajectoryTable":
        m = self.n == n
        return TrajectoryTable(
            self.replicate[m], self.n[m], self.log_Z[m], self.log_Zbar[m],
            self.log_Pi[m], self.S[m], self.log_W[m], self.log_Wbar[m],
            self.pop[m], self.aborted,
        )

    def __len__(self) -> int:
        return len(self.n)


_COLUMNS = ("replicate", "n", "log_Z", "log_Zbar", "log_Pi", "S", "log_W", "log_Wbar", "pop")


def _simulate_range(scenario: model.Scenario, lo: int, hi: int):
    rows = []
    aborted = []
    for r in range(lo, hi):
        try:
            for rec in _run_replicate(scenario, r, False)[0]:
                rows.append(
                    (r, rec.n, rec.log_Z, rec.log_Zbar, rec.log_Pi, rec.S,
                     rec.log_W, rec.log_Wbar, rec.pop)
                )
        except CapExceeded:
            aborted.append((r, "CapExceeded"))
    return rows, aborted


def simulate_many(
    scenario: model.Scenario, workers: int = 1, replicates: Optional[int] = None
) -> TrajectoryTable:
    """Simulate all replicates, optionally across a process pool.

    Aggregation is a deterministic merge keyed by replicate index, so the
    result is byte-identical for any worker count.
    """
    m = scenario.replicates if replicates is None else replicates
    if workers <= 1 or m < 64:
        chunks = [_simulate_range(scenario, 0, m)]
    else:
        span = max(64, -(-m // (workers * 4)))
        bounds = [(lo, min(lo + span, m)) for lo in range(0, m, span)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(
                pool.map(_simulate_range, [scenario] * len(bounds),
                         [b[0] for b in bounds], [b[1] for b in bounds])
            )
    rows = [row for rows, _ in chunks for row in rows]
    aborted = tuple(ab for _, abs_ in chunks for ab in abs_)
    rows.sort(key=lambda r: (r[0], r[1]))
    cols = list(zip(*rows)) if rows else [[] for _ in _COLUMNS]
    return TrajectoryTable(
        replicate=np.asarray(cols[0], dtype=np.int64),
        n=np.asarray(cols[1], dtype=np.int64),
        log_Z=np.asarray(cols[2], dtype=float),
        log_Zbar=np.asarray(cols[3], dtype=float),
        log_Pi=np.asarray(cols[4], dtype=float),
        S=np.asarray(cols[5], dtype=float),
        log_W=np.asarray(cols[6], dtype=float),
        log_Wbar=np.asarray(cols[7], dtype=float),
        pop=np.asarray(cols[8], dtype=np.int64),
        aborted=aborted,
    )


def write_records_csv(table: TrajectoryTable, fh) -> None:
    """Stream records as CSV; aborted replicates get a status row."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(_COLUMNS + ("status",))
    for i in range(len(table)):
        w.writerow(
            (
                int(table.replicate[i]), int(table.n[i]),
                repr(float(table.log_Z[i])), repr(float(table.log_Zbar[i])),
                repr(float(table.log_Pi[i])), repr(float(table.S[i])),
                repr(float(table.log_W[i])), repr(float(table.log_Wbar[i])),
                int(table.pop[i]), "",
            )
        )
    for rep, reason in table.aborted:
        w.writerow((rep, "", "", "", "", "", "", "", "", reason))


# ---------------------------------------------------------------------------
# environment-only walk


def _env_walk_chunk(scenario: model.Scenario, chunk: int) -> np.ndarray:
    """S_n at the scenario horizons for one fixed-size chunk of replicates.

    Always draws the full chunk so a replicate's walk is a pure function of
    (master_seed, chunk, row) regardless of how many replicates are wanted.
    """
    env = scenario.environment
    t = scenario.t_vec
    logm = _env_log_means(env, t)
    mu = float(np.asarray(env.probs) @ logm)
    n_max = scenario.horizons[-1]
    rng = _aux_rng(scenario.master_seed, 1, chunk)
    u = rng.random((_ENV_WALK_CHUNK, n_max))
    cut = np.cumsum(np.asarray(env.probs))[:-1]
    idx = np.searchsorted(cut, u)
    s = np.cumsum(logm[idx] - mu, axis=1)
    cols = [h - 1 for h in scenario.horizons]
    return s[:, cols]


def simulate_env_walk(scenario: model.Scenario, replicate_index: int):
    """Environment-only baseline: (n, S_n) pairs at the horizons.

    No particles are simulated; S_n is the centred random walk of the
    per-generation log means.
    """
    chunk, row = divmod(replicate_index, _ENV_WALK_CHUNK)
    s = _env_walk_chunk(scenario, chunk)[row]
    return list(zip(scenario.horizons, (float(x) for x in s)))


def env_walk_samples(scenario: model.Scenario, M: int, workers: int = 1) -> np.ndarray:
    """S_n for replicates 0..M-1, shape (M, len(horizons)).

    Bit-identical to stacking simulate_env_walk over the same indices.
    """
    n_chunks = -(-M // _ENV_WALK_CHUNK)
    if workers <= 1 or n_chunks == 1:
        parts = [_env_walk_chunk(scenario, c) for c in range(n_chunks)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_env_walk_chunk, [scenario] * n_chunks, range(n_chunks)))
    return np.concatenate(parts, axis=0)[:M]
