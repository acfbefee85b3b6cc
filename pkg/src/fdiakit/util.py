"""Shared helpers: seeding, quantiles, canonical serialization."""

import json
import math

import numpy as np

# Named child-seed streams fanned out from one master seed.  Adding a name
# at the end keeps existing streams stable.
_SEED_STREAMS = (
    "data",
    "init",
    "shuffle",
    "attack_signs",
    "costs",
    "load_mapping",
    "load_variation",
    "measurement_noise",
    "load_source",
)


def child_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    """Derive a named, independent child seed from the master seed."""
    idx = _SEED_STREAMS.index(name)
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(idx,))


def rng_for(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(child_seed(master_seed, name))


def nearest_rank(values, quantile: float) -> float:
    """ceil(q*n)-th order statistic (1-based), the artifact-wide quantile."""
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(quantile * v.size))
    return float(v[k - 1])


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, no trailing whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1)


def format_float(x: float) -> str:
    """Shortest round-trip-exact decimal representation."""
    return repr(float(x))
