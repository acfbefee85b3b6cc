"""Construction of false data injection vectors.

Load-targeted attacks scale selected reported loads by beta, spread the
total change over selected generators by normalized ratios lambda, and
coordinate the reported flows with the attacker's distribution-factor
matrix.  With exact network knowledge the resulting nodal vector lies in
the column space of H and is invisible to residual-based detection; with
perturbed reactances (knowledge deviation gamma) it is not.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyTargets, ParseError, TargetNotFound
from .grid import NetworkModel, build_measurement_matrix, build_ptdf
from .util import child_seed


@dataclass(frozen=True)
class AttackSpec:
    """Attacker intent: which loads/generators to corrupt and how much.

    Bus numbers are 0-based internally; `gamma` holds per-branch relative
    reactance errors of the attacker's network model (all zero = exact
    knowledge).
    """

    load_targets: tuple          # ((load_bus, beta), ...)
    gen_targets: tuple           # ((gen_bus, lambda), ...)
    gamma: np.ndarray | None = None
    seed: int = 0

    def validate(self, net: NetworkModel) -> "AttackSpec":
        if not self.load_targets:
            raise EmptyTargets("attack spec selects no loads")
        if not self.gen_targets:
            raise EmptyTargets("attack spec selects no generators")
        for b, _beta in self.load_targets:
            if b not in net.load_buses:
                raise TargetNotFound(f"bus {b + 1} carries no load")
        for b, lam in self.gen_targets:
            if b not in net.generator_buses:
                raise TargetNotFound(f"bus {b + 1} carries no generator")
        if sum(lam for _b, lam in self.gen_targets) <= 0:
            raise EmptyTargets("generator ratios must sum to a positive value")
        if self.gamma is not None:
            g = np.asarray(self.gamma, dtype=float)
            if g.shape != (net.n_branches,):
                raise DimensionMismatch(
                    f"gamma has shape {g.shape}, expected ({net.n_branches},)")
            if np.any(np.abs(g) >= 1):
                raise ValueError("all |gamma| must be < 1")
        return self

    def scaled(self, magnitude_ratio: float) -> "AttackSpec":
        """Same targets with every beta multiplied by magnitude_ratio."""
        return AttackSpec(
            load_targets=tuple((b, beta * magnitude_ratio) for b, beta in self.load_targets),
            gen_targets=self.gen_targets, gamma=self.gamma, seed=self.seed)


@dataclass(frozen=True)
class AttackVector:
    """Additive manipulation in feature space and nodal measurement space.

    feature_delta is None for pure state-space attacks whose injection
    changes fall on buses without a load or generator feature.
    """

    nodal_delta: np.ndarray
    feature_delta: np.ndarray | None = None


def perturb_reactances(net: NetworkModel, gamma_magnitude: float, seed: int) -> np.ndarray:
    """Per-branch deviation ratios +/-gamma_magnitude with random signs."""
    if not 0 <= gamma_magnitude < 1:
        raise ValueError("gamma magnitude must be in [0, 1)")
    if gamma_magnitude == 0:
        return np.zeros(net.n_branches)
    rng = np.random.default_rng(child_seed(seed, "attack_signs"))
    signs = rng.integers(0, 2, size=net.n_branches) * 2 - 1
    return gamma_magnitude * signs


def attacker_ptdf(net: NetworkModel, gamma) -> np.ndarray:
    """PTDF computed from the attacker's (possibly wrong) reactances."""
    if gamma is None or not np.any(np.asarray(gamma)):
        return build_ptdf(net).values
    x_hat = net.reactances() * (1.0 + np.asarray(gamma, dtype=float))
    return build_ptdf(net.with_reactances(x_hat)).values


def build_attack_vector(net: NetworkModel, spec: AttackSpec, snapshot_features) -> AttackVector:
    """Realize an AttackSpec against one operating snapshot.

    Load deltas are beta_l * P_l; the total is spread over the targeted
    generators by normalized ratios; flows change by the attacker's PTDF
    applied to the injection change.
    """
    spec.validate(net)
    feats = np.asarray(snapshot_features, dtype=float)
    if feats.shape != (net.feature_dim,):
        raise DimensionMismatch(
            f"expected {net.feature_dim} features, got {feats.shape}")
    n_l = len(net.load_buses)
    n_g = len(net.generator_buses)
    load_index = {b: i for i, b in enumerate(net.load_buses)}
    gen_index = {b: i for i, b in enumerate(net.generator_buses)}

    d_load = np.zeros(n_l)
    for b, beta in spec.load_targets:
        d_load[load_index[b]] += beta * feats[load_index[b]]
    total_change = float(d_load.sum())

    lam = np.array([l for _b, l in spec.gen_targets], dtype=float)
    d_gen = np.zeros(n_g)
    for (b, _l), share in zip(spec.gen_targets, lam / lam.sum()):
        d_gen[gen_index[b]] += total_change * share

    d_inj = np.zeros(net.n_buses)
    np.add.at(d_inj, np.asarray(net.load_buses), -d_load)
    np.add.at(d_inj, np.asarray(net.generator_buses), d_gen)
    d_flow = attacker_ptdf(net, spec.gamma) @ d_inj

    feature_delta = np.concatenate([d_load, d_gen, d_flow])
    nodal_delta = np.concatenate([d_inj, d_flow])
    return AttackVector(nodal_delta=nodal_delta, feature_delta=feature_delta)


def stealthy_from_state_delta(net: NetworkModel, c) -> AttackVector:
    """Exactly stealthy attack a = H c for a state (injection) delta c."""
    c = np.asarray(c, dtype=float)
    if c.shape != (net.n_buses,):
        raise DimensionMismatch(f"expected {net.n_buses} state entries, got {c.shape}")
    h = build_measurement_matrix(net).values
    nodal = h @ c
    # best-effort feature representation: generator feature if the bus has
    # one, otherwise negated load feature; unrepresentable buses -> None
    n_l = len(net.load_buses)
    feature = np.zeros(net.feature_dim)
    gen_index = {b: i for i, b in enumerate(net.generator_buses)}
    load_index = {b: i for i, b in enumerate(net.load_buses)}
    representable = True
    for b in range(net.n_buses):
        if c[b] == 0:
            continue
        if b in gen_index:
            feature[n_l + gen_index[b]] += c[b]
        elif b in load_index:
            feature[load_index[b]] -= c[b]
        else:
            representable = False
            break
    if representable:
        feature[n_l + len(net.generator_buses):] = nodal[net.n_buses:]
    return AttackVector(nodal_delta=nodal,
                        feature_delta=feature if representable else None)


def apply_attack(snapshot_features, atk: AttackVector) -> np.ndarray:
    """z_a = z + a in feature space."""
    feats = np.asarray(snapshot_features, dtype=float)
    if atk.feature_delta is None:
        raise DimensionMismatch("attack vector has no feature-space representation")
    if feats.shape[-1] != atk.feature_delta.shape[0]:
        raise DimensionMismatch(
            f"features have {feats.shape[-1]} entries, attack has "
            f"{atk.feature_delta.shape[0]}")
    return feats + atk.feature_delta


# --- CLI attack-spec strings -------------------------------------------------
#
#   loads 108:-0.10,109:-0.10,110:-0.10; gens 110:1,111:1; gamma 0.05; seed 7

def parse_attack_spec(text: str) -> AttackSpec:
    load_targets = []
    gen_targets = []
    gamma_magnitude = 0.0
    seed = 0
    for clause in [c.strip() for c in text.split(";") if c.strip()]:
        m = re.match(r"(\w+)\s+(.*)$", clause)
        if not m:
            raise ParseError(f"attack spec: cannot parse clause {clause!r}")
        key, body = m.group(1), m.group(2).strip()
        try:
            if key == "loads":
                for item in body.split(","):
                    bus, beta = item.split(":")
                    load_targets.append((int(bus) - 1, float(beta)))
            elif key == "gens":
                for item in body.split(","):
                    bus, lam = item.split(":")
                    gen_targets.append((int(bus) - 1, float(lam)))
            elif key == "gamma":
                gamma_magnitude = float(body)
            elif key == "seed":
                seed = int(body)
            else:
                raise ValueError(f"unknown clause {key!r}")
        except ValueError as exc:
            raise ParseError(f"attack spec: bad clause {clause!r}: {exc}") from exc
    if not load_targets:
        raise EmptyTargets("attack spec string selects no loads")
    return AttackSpec(load_targets=tuple(load_targets), gen_targets=tuple(gen_targets),
                      gamma=None if gamma_magnitude == 0 else _DeferredGamma(gamma_magnitude),
                      seed=seed)


class _DeferredGamma:
    """Placeholder until the branch count is known; realized by realize_gamma."""

    def __init__(self, magnitude: float):
        self.magnitude = magnitude

    def __repr__(self):
        return f"_DeferredGamma({self.magnitude})"


def realize_gamma(spec: AttackSpec, net: NetworkModel, seed: int | None = None) -> AttackSpec:
    """Replace a deferred gamma magnitude with a concrete sign draw."""
    if not isinstance(spec.gamma, _DeferredGamma):
        return spec
    g = perturb_reactances(net, spec.gamma.magnitude,
                           spec.seed if seed is None else seed)
    return AttackSpec(load_targets=spec.load_targets, gen_targets=spec.gen_targets,
                      gamma=g, seed=spec.seed)
