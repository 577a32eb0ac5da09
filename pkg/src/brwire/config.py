"""Scenario and experiment-plan ingestion from a YAML key/value tree.

The schema is strict: unknown keys are rejected with the offending key path
so that typos never silently change an experiment.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import ConfigError, InvalidParameter
from .model import (
    DisplacementLaw,
    EnvState,
    EnvironmentLaw,
    ImmigrationLaw,
    OffspringLaw,
    Scenario,
)

_SCENARIO_KEYS = {
    "environment", "d", "t", "horizons", "replicates",
    "population_cap", "master_seed", "track_lineage",
}
_TOP_KEYS = _SCENARIO_KEYS | {"analyses", "output_dir", "workers"}
_ANALYSIS_KEYS = {
    "clt", "uniform-be", "nonuniform-be", "exact-rate",
    "w-increments", "env-walk-baseline", "audit",
}


def _require_mapping(node, loc):
    if not isinstance(node, dict):
        raise ConfigError("expected a mapping", loc)
    return node


def _check_keys(node, allowed, loc):
    unknown = set(node) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", loc)


def _get(node, key, loc, default=None, required=False):
    if key not in node:
        if required:
            raise ConfigError(f"missing required key {key!r}", loc)
        return default
    return node[key]


def _parse_displacement(node, loc):
    _require_mapping(node, loc)
    kind = _get(node, "kind", loc, required=True)
    if kind == "point-mass":
        _check_keys(node, {"kind", "c"}, loc)
        return DisplacementLaw.point_mass(_get(node, "c", loc, required=True))
    if kind == "gaussian":
        _check_keys(node, {"kind", "mean", "var"}, loc)
        return DisplacementLaw.gaussian(
            _get(node, "mean", loc, required=True),
            _get(node, "var", loc, required=True),
        )
    raise ConfigError(f"unknown displacement kind {kind!r}", loc)


def _parse_offspring(node, loc):
    _require_mapping(node, loc)
    _check_keys(node, {"kind", "param"}, loc)
    return OffspringLaw(
        kind=_get(node, "kind", loc, required=True),
        param=_get(node, "param", loc, required=True),
    )


def _parse_immigration(node, loc):
    if node is None:
        return ImmigrationLaw.none()
    _require_mapping(node, loc)
    _check_keys(node, {"count", "position"}, loc)
    count = _require_mapping(_get(node, "count", loc, required=True), f"{loc}.count")
    _check_keys(count, {"kind", "param"}, f"{loc}.count")
    kind = _get(count, "kind", f"{loc}.count", required=True)
    if kind == "none":
        return ImmigrationLaw.none()
    position = _parse_displacement(
        _get(node, "position", loc, required=True), f"{loc}.position"
    )
    return ImmigrationLaw(
        count_kind=kind,
        count_param=_get(count, "param", f"{loc}.count", required=True),
        position=position,
    )


def _parse_state(node, loc):
    _require_mapping(node, loc)
    _check_keys(node, {"label", "prob", "offspring", "displacement", "immigration"}, loc)
    return (
        EnvState(
            label=str(_get(node, "label", loc, required=True)),
            offspring=_parse_offspring(_get(node, "offspring", loc, required=True), f"{loc}.offspring"),
            displacement=_parse_displacement(
                _get(node, "displacement", loc, required=True), f"{loc}.displacement"
            ),
            immigration=_parse_immigration(_get(node, "immigration", loc), f"{loc}.immigration"),
        ),
        _get(node, "prob", loc, required=True),
    )


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a validated Scenario from a parsed configuration tree."""
    _require_mapping(doc, "<root>")
    _check_keys(doc, _TOP_KEYS, "<root>")
    env_node = _require_mapping(_get(doc, "environment", "<root>", required=True), "environment")
    _check_keys(env_node, {"states"}, "environment")
    states_node = _get(env_node, "states", "environment", required=True)
    if not isinstance(states_node, list):
        raise ConfigError("expected a list", "environment.states")
    pairs = [
        _parse_state(s, f"environment.states[{i}]") for i, s in enumerate(states_node)
    ]
    try:
        env = EnvironmentLaw(
            states=tuple(s for s, _ in pairs), probs=tuple(p for _, p in pairs)
        )
        return Scenario(
            environment=env,
            d=int(_get(doc, "d", "<root>", required=True)),
            t=_get(doc, "t", "<root>", required=True),
            horizons=_get(doc, "horizons", "<root>", required=True),
            replicates=int(_get(doc, "replicates", "<root>", default=1)),
            population_cap=int(_get(doc, "population_cap", "<root>", default=10_000_000)),
            master_seed=int(_get(doc, "master_seed", "<root>", default=0)),
            track_lineage=bool(_get(doc, "track_lineage", "<root>", default=False)),
        )
    except InvalidParameter as e:
        raise ConfigError(str(e)) from e


def parse_analyses(doc: dict) -> dict:
    """Extract and validate the ``analyses`` subtree (may be empty)."""
    node = doc.get("analyses") or {}
    _require_mapping(node, "analyses")
    _check_keys(node, _ANALYSIS_KEYS, "analyses")
    out = {}
    for name, params in node.items():
        params = {} if params in (None, True) else params
        _require_mapping(params, f"analyses.{name}")
        out[name] = dict(params)
    return out


def load_config(path) -> dict:
    """Read a YAML config document; raises ConfigError on parse failure."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML parse error: {e}") from e
    if doc is None:
        raise ConfigError("empty configuration document")
    return _require_mapping(doc, "<root>")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_config(path))
