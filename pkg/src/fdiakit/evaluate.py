"""Experiment drivers: effectiveness traces, confusion matrices, sweeps,
and the BDD-vs-autoencoder comparison under limited attacker knowledge."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import attack as atk_mod
from . import autoencoder as ae
from .attack import AttackSpec, build_attack_vector
from .errors import EmptySet
from .estimation import BddDetector, features_to_measurements
from .grid import NetworkModel
from .util import canonical_json, format_float


@dataclass
class ConfusionCounts:
    true_positive: int
    false_negative: int
    true_negative: int
    false_positive: int

    @property
    def total(self) -> int:
        return self.true_positive + self.false_negative + self.true_negative + self.false_positive

    @property
    def tpr(self) -> float:
        pos = self.true_positive + self.false_negative
        return self.true_positive / pos if pos else 0.0

    @property
    def fpr(self) -> float:
        neg = self.true_negative + self.false_positive
        return self.false_positive / neg if neg else 0.0

    @property
    def tnr(self) -> float:
        return 1.0 - self.fpr

    @property
    def fnr(self) -> float:
        return 1.0 - self.tpr


@dataclass
class DetectionCurve:
    """Detection probability as a function of a sweep value."""

    x: list
    y: list
    n_trials: list
    detector: str


def run_effectiveness_trace(state: ae.DetectorState, net: NetworkModel,
                            test_rows, spec: AttackSpec, window,
                            attack_hour: int):
    """Score each hour in `window`, attacking only `attack_hour`.

    Returns rows (hour, clean_score, attacked_score_or_None, threshold, flag).
    """
    window = list(window)
    if attack_hour not in window:
        raise ValueError(f"attack hour {attack_hour} not in window")
    rows = []
    for hour in window:
        feats = test_rows[hour]
        clean = ae.scores(state, feats)
        attacked = None
        score = clean
        if hour == attack_hour:
            spec_r = atk_mod.realize_gamma(spec, net)
            vec = build_attack_vector(net, spec_r, feats)
            attacked = ae.scores(state, atk_mod.apply_attack(feats, vec))
            score = attacked
        rows.append({"hour": hour, "clean_score": float(clean),
                     "attacked_score": None if attacked is None else float(attacked),
                     "threshold": state.threshold,
                     "flag": bool(score > state.threshold)})
    return rows


def evaluate_confusion(state: ae.DetectorState, normal_set, attacked_set) -> ConfusionCounts:
    normal = np.atleast_2d(np.asarray(normal_set, dtype=float))
    attacked = np.atleast_2d(np.asarray(attacked_set, dtype=float))
    if normal.shape[0] == 0 or attacked.shape[0] == 0:
        raise EmptySet("both normal and attacked sets must be nonempty")
    flags_n, _ = ae.detect(state, normal)
    flags_a, _ = ae.detect(state, attacked)
    return ConfusionCounts(
        true_positive=int(flags_a.sum()),
        false_negative=int((~flags_a).sum()),
        true_negative=int((~flags_n).sum()),
        false_positive=int(flags_n.sum()),
    )


def attacked_rows(net: NetworkModel, spec: AttackSpec, rows) -> np.ndarray:
    """Apply one realized attack per row.

    Vectorized equivalent of build_attack_vector + apply_attack over a
    batch: the attacker's PTDF is built once per call.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    spec_r = atk_mod.realize_gamma(spec, net).validate(net)
    h_att = atk_mod.attacker_ptdf(net, spec_r.gamma)
    n_l = len(net.load_buses)
    n_g = len(net.generator_buses)
    load_index = {b: i for i, b in enumerate(net.load_buses)}
    gen_index = {b: i for i, b in enumerate(net.generator_buses)}

    d_load = np.zeros((rows.shape[0], n_l))
    for b, beta in spec_r.load_targets:
        d_load[:, load_index[b]] += beta * rows[:, load_index[b]]
    total = d_load.sum(axis=1)
    lam = np.array([l for _b, l in spec_r.gen_targets], dtype=float)
    d_gen = np.zeros((rows.shape[0], n_g))
    for (b, _l), share in zip(spec_r.gen_targets, lam / lam.sum()):
        d_gen[:, gen_index[b]] += total * share
    d_inj = np.zeros((rows.shape[0], net.n_buses))
    for i, b in enumerate(net.load_buses):
        d_inj[:, b] -= d_load[:, i]
    for i, b in enumerate(net.generator_buses):
        d_inj[:, b] += d_gen[:, i]
    d_flow = d_inj @ h_att.T
    return rows + np.hstack([d_load, d_gen, d_flow])


def sweep_magnitude(state: ae.DetectorState, net: NetworkModel, test_rows,
                    base_spec: AttackSpec, magnitudes, hours_of_day=None):
    """One DetectionCurve per requested hour-of-day (None = all test rows).

    base_spec's betas define the 100% pattern; each sweep magnitude
    rescales them, e.g. magnitude 0.15 with beta=-1 reduces loads by 15%.
    """
    magnitudes = list(magnitudes)
    if not magnitudes:
        raise ValueError("magnitudes must be nonempty")
    rows = np.atleast_2d(np.asarray(test_rows, dtype=float))
    groups = {None: np.arange(rows.shape[0])} if hours_of_day is None else {
        h: np.arange(rows.shape[0])[np.arange(rows.shape[0]) % 24 == h]
        for h in hours_of_day}
    curves = []
    for label, idx in groups.items():
        y, n = [], []
        for mag in magnitudes:
            spec = base_spec.scaled(mag)
            if mag == 0:
                flags, _ = ae.detect(state, rows[idx])
            else:
                flags, _ = ae.detect(state, attacked_rows(net, spec, rows[idx]))
            y.append(float(np.mean(flags)))
            n.append(int(idx.size))
        name = "autoencoder" if label is None else f"autoencoder@{label:02d}h"
        curves.append(DetectionCurve(x=magnitudes, y=y, n_trials=n, detector=name))
    return curves


def compare_bdd_ae(state: ae.DetectorState, bdd: BddDetector, net: NetworkModel,
                   test_rows, base_spec: AttackSpec, gamma_magnitudes,
                   seeds_per_point: int, seed0: int = 0):
    """Detection probability vs knowledge deviation for both detectors.

    Signs of the reactance deviations are resampled per (point, seed);
    each draw attacks every test row once.
    """
    rows = np.atleast_2d(np.asarray(test_rows, dtype=float))
    ae_y, bdd_y, trials = [], [], []
    seed_ledger = {}
    for gm in gamma_magnitudes:
        ae_hits = bdd_hits = n = 0
        seeds = [seed0 + 1000 * int(round(gm * 1000)) + k for k in range(seeds_per_point)]
        seed_ledger[str(gm)] = seeds
        for s in seeds:
            gamma = atk_mod.perturb_reactances(net, gm, s)
            spec = AttackSpec(load_targets=base_spec.load_targets,
                              gen_targets=base_spec.gen_targets, gamma=gamma)
            za = attacked_rows(net, spec, rows)
            flags_ae, _ = ae.detect(state, za)
            flags_bdd = bdd.detect(features_to_measurements(net, za))
            ae_hits += int(flags_ae.sum())
            bdd_hits += int(np.sum(flags_bdd))
            n += rows.shape[0]
        ae_y.append(ae_hits / n)
        bdd_y.append(bdd_hits / n)
        trials.append(n)
    gx = list(gamma_magnitudes)
    return (DetectionCurve(x=gx, y=ae_y, n_trials=trials, detector="autoencoder"),
            DetectionCurve(x=gx, y=bdd_y, n_trials=trials, detector="bdd"),
            seed_ledger)


# --- report serialization ----------------------------------------------------

def write_report(curves, counts, path, fmt: str = "csv", extra=None) -> None:
    """Serialize curves (and optionally a confusion matrix) deterministically."""
    if fmt == "csv":
        lines = ["sweep_value,detector,n_trials,detected,probability"]
        for c in curves:
            for x, y, n in zip(c.x, c.y, c.n_trials):
                detected = int(round(y * n))
                lines.append(f"{format_float(x)},{c.detector},{n},{detected},{format_float(y)}")
        if counts is not None:
            lines.append("")
            lines.append("class,count,rate")
            lines.append(f"true_positive,{counts.true_positive},{format_float(counts.tpr)}")
            lines.append(f"false_negative,{counts.false_negative},{format_float(counts.fnr)}")
            lines.append(f"true_negative,{counts.true_negative},{format_float(counts.tnr)}")
            lines.append(f"false_positive,{counts.false_positive},{format_float(counts.fpr)}")
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        doc = {"curves": [{"detector": c.detector, "x": c.x, "y": c.y,
                           "n_trials": c.n_trials} for c in curves]}
        if counts is not None:
            doc["confusion"] = {"true_positive": counts.true_positive,
                                "false_negative": counts.false_negative,
                                "true_negative": counts.true_negative,
                                "false_positive": counts.false_positive,
                                "tpr": counts.tpr, "fpr": counts.fpr}
        if extra:
            doc["config"] = extra
        text = canonical_json(doc) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_report_csv(path):
    """Round-trip reader for the curve block of a CSV report."""
    curves = {}
    with open(path, encoding="utf-8") as fh:
        lines = [l.rstrip("\n") for l in fh]
    for line in lines[1:]:
        if not line or line.startswith("class,"):
            break
        x, det, n, _hits, y = line.split(",")
        curves.setdefault(det, DetectionCurve(x=[], y=[], n_trials=[], detector=det))
        curves[det].x.append(float(x))
        curves[det].y.append(float(y))
        curves[det].n_trials.append(int(n))
    return list(curves.values())
