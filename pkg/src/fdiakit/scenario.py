"""Generation of 'normal operating condition' datasets.

Pipeline per hour: country-level load series -> Dirichlet mixture onto
load buses (with multiplicative Gaussian variation) -> quadratic-cost
economic dispatch -> DC flows via PTDF -> truncated-Gaussian measurement
noise.  Feature order is fixed: loads (ascending bus), generations
(ascending bus), branch flows (case-file order).
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    FormatVersionMismatch,
    MissingData,
    NonnegativityViolation,
    ParseError,
    UnbalancedInjections,
)
from .grid import NetworkModel, PtdfMatrix, build_ptdf
from .util import canonical_json, child_seed, format_float

DATASET_FORMAT_VERSION = 1
BALANCE_ATOL_MW = 1e-6


@dataclass(frozen=True)
class LoadProfileSource:
    """Hourly MW series per country; nonnegative, gap-free."""

    series: np.ndarray        # T_hours x n_countries
    labels: tuple

    @property
    def hours(self) -> int:
        return self.series.shape[0]

    @property
    def n_countries(self) -> int:
        return self.series.shape[1]


@dataclass(frozen=True)
class LoadMapping:
    """Dirichlet rows mapping countries onto load buses."""

    weights: np.ndarray       # n_loads x n_countries
    scale: float = 1000.0


@dataclass(frozen=True)
class CostModel:
    """Quadratic generator costs c2*P^2 + c1*P."""

    c2: np.ndarray
    c1: np.ndarray

    def __post_init__(self):
        if not np.all(np.asarray(self.c2) > 0):
            raise ValueError("all quadratic cost coefficients must be > 0")


@dataclass(frozen=True)
class OperatingSnapshot:
    loads: np.ndarray         # MW per load bus
    generations: np.ndarray   # MW per generator
    flows: np.ndarray         # MW per branch
    timestamp: int = 0

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.loads, self.generations, self.flows])


@dataclass
class Dataset:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def all_rows(self) -> np.ndarray:
        return np.vstack([self.train, self.validation, self.test])


# --- load sources ------------------------------------------------------------

def ingest_load_csv(path, expected_columns=None) -> LoadProfileSource:
    """Read a load-source CSV: timestamp column, then one column per country."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        labels = tuple(header[1:])
        if expected_columns is not None and len(labels) != expected_columns:
            raise ParseError(
                f"{path}: expected {expected_columns} country columns, got {len(labels)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(labels) + 1:
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, "
                                 f"expected {len(labels) + 1}")
            vals = []
            for col, cell in enumerate(row[1:], start=2):
                if cell.strip() == "":
                    raise MissingData(f"{path}: empty cell at line {lineno}, column {col}")
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}, column {col}: not a number: {cell!r}") from None
                if v < 0:
                    raise NonnegativityViolation(
                        f"{path}: negative load {v} at line {lineno}, column {col}")
                vals.append(v)
            rows.append(vals)
    return LoadProfileSource(series=np.array(rows, dtype=float), labels=labels)


def synthesize_load_source(hours: int, n_countries: int, seed: int) -> LoadProfileSource:
    """Offline substitute for historical country loads.

    Each series is a positive composite of daily, weekly and annual
    sinusoids on a per-country base magnitude spanning one order of
    magnitude, with mild lognormal noise.
    """
    if hours < 1:
        raise ValueError("hours must be >= 1")
    rng = np.random.default_rng(child_seed(seed, "load_source"))
    t = np.arange(hours)[:, None]
    base = 10.0 ** rng.uniform(3.5, 4.5, size=n_countries)   # ~3.2 GW .. 32 GW
    ph_d, ph_w, ph_a = (rng.uniform(0, 2 * np.pi, size=n_countries) for _ in range(3))
    amp_d = rng.uniform(0.15, 0.25, size=n_countries)
    amp_w = rng.uniform(0.03, 0.08, size=n_countries)
    amp_a = rng.uniform(0.08, 0.15, size=n_countries)
    shape = (1.0
             + amp_d * np.sin(2 * np.pi * t / 24.0 + ph_d)
             + amp_w * np.sin(2 * np.pi * t / 168.0 + ph_w)
             + amp_a * np.sin(2 * np.pi * t / 8760.0 + ph_a))
    noise = np.exp(rng.normal(0.0, 0.03, size=(hours, n_countries)))
    series = base * shape * noise
    labels = tuple(f"C{i:02d}" for i in range(n_countries))
    return LoadProfileSource(series=series, labels=labels)


def sample_load_mapping(n_loads: int, n_countries: int, seed: int,
                        scale: float = 1000.0) -> LoadMapping:
    """One flat-Dirichlet row per load bus (uniform on the simplex)."""
    if n_loads < 1 or n_countries < 2:
        raise ValueError("need n_loads >= 1 and n_countries >= 2")
    rng = np.random.default_rng(child_seed(seed, "load_mapping"))
    weights = rng.dirichlet(np.ones(n_countries), size=n_loads)
    return LoadMapping(weights=weights, scale=scale)


def synthesize_bus_loads(source: LoadProfileSource, mapping: LoadMapping,
                         variation_std: float, seed: int) -> np.ndarray:
    """Mix country series onto load buses and add +/-variation_std jitter."""
    if mapping.weights.shape[1] != source.n_countries:
        raise DimensionMismatch(
            f"mapping has {mapping.weights.shape[1]} countries, "
            f"source has {source.n_countries}")
    mixture = (source.series / mapping.scale) @ mapping.weights.T
    if variation_std == 0:
        return mixture
    rng = np.random.default_rng(child_seed(seed, "load_variation"))
    eps = rng.normal(0.0, variation_std, size=mixture.shape)
    return np.maximum(0.0, mixture * (1.0 + eps))


# --- dispatch and snapshots --------------------------------------------------

def sample_cost_model(n_generators: int, seed: int,
                      c2_range=(0.085, 0.1225), c1_range=(1.0, 5.0)) -> CostModel:
    rng = np.random.default_rng(child_seed(seed, "costs"))
    return CostModel(c2=rng.uniform(*c2_range, size=n_generators),
                     c1=rng.uniform(*c1_range, size=n_generators))


def economic_dispatch(cost: CostModel, total_load: float) -> np.ndarray:
    """Closed-form equal-incremental-cost dispatch of the balance-only problem.

    Each unit runs at P_g = (lam - c1_g) / (2 c2_g) with the marginal
    price lam chosen so generation meets total_load exactly.  Negative
    output is permitted (capacities unenforced).
    """
    inv2c2 = 1.0 / (2.0 * cost.c2)
    lam = (total_load + np.sum(cost.c1 * inv2c2)) / np.sum(inv2c2)
    return (lam - cost.c1) * inv2c2


def assemble_snapshot(net: NetworkModel, loads, generations,
                      ptdf: PtdfMatrix | None = None,
                      timestamp: int = 0) -> OperatingSnapshot:
    """Place loads/generation on buses and compute DC flows via PTDF."""
    loads = np.asarray(loads, dtype=float)
    generations = np.asarray(generations, dtype=float)
    if loads.shape != (len(net.load_buses),) or generations.shape != (len(net.generator_buses),):
        raise DimensionMismatch(
            f"expected {len(net.load_buses)} loads and "
            f"{len(net.generator_buses)} generations, got {loads.shape}, {generations.shape}")
    if abs(float(generations.sum() - loads.sum())) > BALANCE_ATOL_MW:
        raise UnbalancedInjections(
            f"generation {generations.sum():.6f} != load {loads.sum():.6f} MW")
    if ptdf is None:
        ptdf = build_ptdf(net)
    inj = np.zeros(net.n_buses)
    np.add.at(inj, np.asarray(net.load_buses), -loads)
    np.add.at(inj, np.asarray(net.generator_buses), generations)
    flows = ptdf.values @ inj
    return OperatingSnapshot(loads=loads, generations=generations,
                             flows=flows, timestamp=timestamp)


def add_measurement_noise(features, rel_std: float, rel_cap: float, seed) -> np.ndarray:
    """Truncated-Gaussian relative noise: std rel_std*|v|, hard cap rel_cap*|v|.

    Sampling is by rejection; zero-valued features receive zero noise.
    `seed` may be an int (measurement-noise child stream) or a Generator.
    """
    if rel_cap <= 0:
        raise ValueError("rel_cap must be > 0")
    v = np.asarray(features, dtype=float)
    if rel_std == 0:
        return v.copy()
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(child_seed(seed, "measurement_noise"))
    e = rng.normal(0.0, rel_std, size=v.shape)
    bad = np.abs(e) >= rel_cap
    while np.any(bad):
        e[bad] = rng.normal(0.0, rel_std, size=int(bad.sum()))
        bad = np.abs(e) >= rel_cap
    return v * (1.0 + e)


# --- dataset assembly and persistence ---------------------------------------

def build_dataset(net: NetworkModel, source: LoadProfileSource, mapping: LoadMapping,
                  split_sizes, seed: int, variation_std: float = 0.05,
                  noise_rel_std: float = 0.0033, noise_rel_cap: float = 0.01,
                  resample_costs_hourly: bool = False) -> Dataset:
    """One noisy snapshot per source hour, split contiguously in time."""
    n_train, n_val, n_test = (int(s) for s in split_sizes)
    total = n_train + n_val + n_test
    if total > source.hours:
        raise ValueError(f"split sizes sum to {total} but source has {source.hours} hours")
    bus_loads = synthesize_bus_loads(source, mapping, variation_std, seed)
    ptdf = build_ptdf(net)
    cost_rng = np.random.default_rng(child_seed(seed, "costs"))
    noise_rng = np.random.default_rng(child_seed(seed, "measurement_noise"))
    cost = CostModel(c2=cost_rng.uniform(0.085, 0.1225, size=len(net.generator_buses)),
                     c1=cost_rng.uniform(1.0, 5.0, size=len(net.generator_buses)))
    rows = np.empty((total, net.feature_dim))
    negative_dispatch_hours = 0
    for t in range(total):
        if resample_costs_hourly and t > 0:
            cost = CostModel(
                c2=cost_rng.uniform(0.085, 0.1225, size=len(net.generator_buses)),
                c1=cost_rng.uniform(1.0, 5.0, size=len(net.generator_buses)))
        loads = bus_loads[t]
        gen = economic_dispatch(cost, float(loads.sum()))
        if np.any(gen < 0):
            negative_dispatch_hours += 1
        snap = assemble_snapshot(net, loads, gen, ptdf=ptdf, timestamp=t)
        rows[t] = add_measurement_noise(snap.features, noise_rel_std,
                                        noise_rel_cap, noise_rng)
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "seed": int(seed),
        "split_sizes": [n_train, n_val, n_test],
        "variation_std": variation_std,
        "noise_rel_std": noise_rel_std,
        "noise_rel_cap": noise_rel_cap,
        "scale": mapping.scale,
        "resample_costs_hourly": resample_costs_hourly,
        "cost_c2": [float(x) for x in cost.c2],
        "cost_c1": [float(x) for x in cost.c1],
        "negative_dispatch_hours": negative_dispatch_hours,
        "n_loads": len(net.load_buses),
        "n_generators": len(net.generator_buses),
        "n_branches": net.n_branches,
    }
    return Dataset(train=rows[:n_train], validation=rows[n_train:n_train + n_val],
                   test=rows[n_train + n_val:total], metadata=meta)


def feature_names(net: NetworkModel) -> list:
    names = [f"load_{b + 1}" for b in net.load_buses]
    names += [f"gen_{b + 1}" for b in net.generator_buses]
    names += [f"flow_{f + 1}_{t + 1}" for f, t, _x in net.branches]
    return names


def save_dataset(ds: Dataset, path, net: NetworkModel | None = None) -> None:
    """CSV of feature rows plus a JSON metadata sidecar with a checksum."""
    header = (feature_names(net) if net is not None
              else [f"f{i}" for i in range(ds.all_rows.shape[1])])
    lines = [",".join(header)]
    for row in ds.all_rows:
        lines.append(",".join(format_float(v) for v in row))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    meta = dict(ds.metadata)
    meta["format_version"] = DATASET_FORMAT_VERSION
    meta["split_sizes"] = [int(ds.train.shape[0]), int(ds.validation.shape[0]),
                           int(ds.test.shape[0])]
    meta["csv_sha256"] = hashlib.sha256(text.encode()).hexdigest()
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        fh.write(canonical_json(meta) + "\n")


def load_dataset(path) -> Dataset:
    meta_path = str(path) + ".meta.json"
    if not os.path.exists(meta_path):
        raise FormatVersionMismatch(f"missing metadata sidecar {meta_path}")
    with open(meta_path, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatVersionMismatch(f"{meta_path}: corrupt metadata: {exc}") from exc
    if meta.get("format_version") != DATASET_FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{meta_path}: format version {meta.get('format_version')}, "
            f"expected {DATASET_FORMAT_VERSION}")
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if digest != meta.get("csv_sha256"):
        raise ChecksumMismatch(f"{path}: checksum {digest[:12]}... does not match sidecar")
    lines = text.splitlines()
    n_cols = len(lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise ParseError(f"{path}: row {lineno} has {len(parts)} fields, expected {n_cols}")
        rows.append([float(p) for p in parts])
    data = np.array(rows, dtype=float)
    n_train, n_val, n_test = meta["split_sizes"]
    if data.shape[0] != n_train + n_val + n_test:
        raise ParseError(f"{path}: {data.shape[0]} rows, metadata says "
                         f"{n_train + n_val + n_test}")
    return Dataset(train=data[:n_train], validation=data[n_train:n_train + n_val],
                   test=data[n_train + n_val:], metadata=meta)
