"""DC network model: topology validation, PTDF, measurement model, power flow.

The network is described by its branch-to-node incidence matrix A
(n_buses x n_branches), the diagonal reactance matrix R and a reference
bus.  Branch flows follow the DC approximation
    P_F = R^-1 A^T theta,   P_I = A P_F,
and the distribution-factor (PTDF) matrix maps balanced injections
directly to flows.  The full measurement model stacks the identity over
the PTDF so that z = [P_I; P_F] = H x with state x = P_I.
"""

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.linalg

from .errors import (
    BadBusIndex,
    DisconnectedGraph,
    NonpositiveReactance,
    ParseError,
    SingularSystem,
    UnbalancedInjections,
)

BALANCE_RTOL = 1e-6


@dataclass(frozen=True)
class NetworkModel:
    """Buses, branches and bus roles. Immutable; indices are 0-based."""

    n_buses: int
    branches: tuple  # ((from_bus, to_bus, reactance), ...)
    reference_bus: int
    generator_buses: tuple
    load_buses: tuple

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def n_measurements(self) -> int:
        return self.n_buses + self.n_branches

    @property
    def feature_dim(self) -> int:
        """loads + generators + branch flows."""
        return len(self.load_buses) + len(self.generator_buses) + self.n_branches

    def incidence(self) -> np.ndarray:
        """Branch-to-node incidence A (n_buses x n_branches), +1 at from."""
        a = np.zeros((self.n_buses, self.n_branches))
        for t, (f, to, _x) in enumerate(self.branches):
            a[f, t] = 1.0
            a[to, t] = -1.0
        return a

    def reactances(self) -> np.ndarray:
        return np.array([x for _f, _t, x in self.branches])

    def with_reactances(self, x_new) -> "NetworkModel":
        x_new = np.asarray(x_new, dtype=float)
        if x_new.shape != (self.n_branches,):
            raise NonpositiveReactance(
                f"expected {self.n_branches} reactances, got shape {x_new.shape}")
        branches = tuple(
            (f, t, float(x)) for (f, t, _), x in zip(self.branches, x_new))
        return NetworkModel(self.n_buses, branches, self.reference_bus,
                            self.generator_buses, self.load_buses)


@dataclass(frozen=True)
class PtdfMatrix:
    """Dense n_branches x n_buses distribution factor matrix.

    The reference-bus column is identically zero (slack convention).
    """

    values: np.ndarray


@dataclass(frozen=True)
class MeasurementMatrix:
    """H = [I; H_F], mapping state (nodal injections) to measurements."""

    values: np.ndarray


@dataclass(frozen=True)
class PowerFlowSolution:
    injections: np.ndarray  # MW, per bus
    flows: np.ndarray       # MW, per branch, positive from->to
    angles: np.ndarray      # rad, reference fixed at 0


def validate_network(net: NetworkModel) -> NetworkModel:
    """Check all structural invariants; returns the model unchanged."""
    n = net.n_buses
    if n < 1:
        raise BadBusIndex(f"n_buses must be >= 1, got {n}")
    if not 0 <= net.reference_bus < n:
        raise BadBusIndex(f"reference bus {net.reference_bus} out of range 0..{n - 1}")
    for t, (f, to, x) in enumerate(net.branches):
        if not (0 <= f < n) or not (0 <= to < n):
            raise BadBusIndex(f"branch {t} endpoint ({f},{to}) out of range 0..{n - 1}")
        if f == to:
            raise BadBusIndex(f"branch {t} is a self-loop at bus {f}")
        if not x > 0:
            raise NonpositiveReactance(f"branch {t} ({f},{to}) has reactance {x}")
    for b in list(net.generator_buses) + list(net.load_buses):
        if not 0 <= b < n:
            raise BadBusIndex(f"generator/load bus {b} out of range 0..{n - 1}")
    # connectivity by union-find over branches
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for f, to, _x in net.branches:
        parent[find(f)] = find(to)
    roots = {find(i) for i in range(n)}
    if len(roots) > 1:
        isolated = sorted(i for i in range(n) if find(i) != find(net.reference_bus))
        raise DisconnectedGraph(
            f"buses {isolated[:10]} not connected to reference bus {net.reference_bus}")
    return net


def _reduced_susceptance(net: NetworkModel):
    """Cholesky factor of A R^-1 A^T with the reference row/col deleted."""
    a = net.incidence()
    binv_x = a / net.reactances()           # A R^-1  (n_b x n_t)
    bbus = binv_x @ a.T                     # A R^-1 A^T
    keep = [i for i in range(net.n_buses) if i != net.reference_bus]
    try:
        factor = scipy.linalg.cho_factor(bbus[np.ix_(keep, keep)])
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"reduced susceptance matrix not SPD: {exc}") from exc
    return factor, keep


def build_ptdf(net: NetworkModel) -> PtdfMatrix:
    """PTDF via the reduced susceptance system; reference column is zero."""
    factor, keep = _reduced_susceptance(net)
    a = net.incidence()
    m = (a.T / net.reactances()[:, None])[:, keep]   # (R^-1 A^T) without ref col
    h_reduced = scipy.linalg.cho_solve(factor, m.T).T
    h = np.zeros((net.n_branches, net.n_buses))
    h[:, keep] = h_reduced
    return PtdfMatrix(values=h)


def build_measurement_matrix(net: NetworkModel, ptdf: PtdfMatrix | None = None) -> MeasurementMatrix:
    if ptdf is None:
        ptdf = build_ptdf(net)
    return MeasurementMatrix(values=np.vstack([np.eye(net.n_buses), ptdf.values]))


def dc_power_flow(net: NetworkModel, injections) -> PowerFlowSolution:
    """Solve DC power flow for a balanced injection vector (MW)."""
    p = np.asarray(injections, dtype=float)
    if p.shape != (net.n_buses,):
        raise UnbalancedInjections(
            f"expected {net.n_buses} injections, got shape {p.shape}")
    tol = BALANCE_RTOL * max(1.0, float(np.max(np.abs(p))) if p.size else 1.0)
    if abs(float(p.sum())) > tol:
        raise UnbalancedInjections(
            f"injections sum to {p.sum():.6g} MW, exceeds tolerance {tol:.3g}")
    factor, keep = _reduced_susceptance(net)
    theta = np.zeros(net.n_buses)
    theta[keep] = scipy.linalg.cho_solve(factor, p[keep])
    flows = (net.incidence().T @ theta) / net.reactances()
    return PowerFlowSolution(injections=p, flows=flows, angles=theta)


# --- case file I/O -----------------------------------------------------------
#
# Plain-text format, 1-based bus numbering:
#   buses <n_buses> ref <r>
#   branch <from> <to> <x>
#   gen <bus>
#   load <bus>
# '#' starts a comment.

def parse_case_text(text: str) -> NetworkModel:
    n_buses = None
    ref = None
    branches = []
    gens = []
    loads = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "buses":
                if tok[2] != "ref":
                    raise ValueError("expected 'buses <n> ref <r>'")
                n_buses = int(tok[1])
                ref = int(tok[3]) - 1
            elif tok[0] == "branch":
                branches.append((int(tok[1]) - 1, int(tok[2]) - 1, float(tok[3])))
            elif tok[0] == "gen":
                gens.append(int(tok[1]) - 1)
            elif tok[0] == "load":
                loads.append(int(tok[1]) - 1)
            else:
                raise ValueError(f"unknown record '{tok[0]}'")
        except (IndexError, ValueError) as exc:
            raise ParseError(f"case file line {lineno}: {exc}") from exc
    if n_buses is None or ref is None:
        raise ParseError("case file has no 'buses ... ref ...' header")
    net = NetworkModel(
        n_buses=n_buses,
        branches=tuple(branches),
        reference_bus=ref,
        generator_buses=tuple(gens),
        load_buses=tuple(loads),
    )
    return validate_network(net)


def load_case_file(path) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_case_text(fh.read())


def load_ieee118() -> NetworkModel:
    """The bundled IEEE 118-bus case: 186 branches, 54 generators, 99 loads."""
    text = resources.files("fdiakit.data").joinpath("case118.txt").read_text()
    return parse_case_text(text)
