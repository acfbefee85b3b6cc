"""Command-line pipeline: gen-data, train, calibrate, attack, detect,
evaluate, compare.

Every flag can also be given in a JSON config file (same name with
underscores); command-line values override the file.  All stages are
deterministic for a fixed config and seed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import attack as atk_mod
from . import autoencoder as ae
from . import evaluate as ev
from . import plots
from . import scenario
from .errors import FdiakitError
from .estimation import (BddDetector, NoiseModel, WlsEstimator,
                         calibrate_bdd_threshold, features_to_measurements)
from .grid import build_measurement_matrix, load_case_file, load_ieee118
from .util import canonical_json, format_float

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _load_net(args):
    if args.case:
        if not os.path.exists(args.case):
            raise ConfigError(f"case file not found: {args.case}")
        return load_case_file(args.case)
    return load_ieee118()


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _parse_splits(text):
    parts = [int(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise ConfigError(f"splits must be 'train,val,test', got {text!r}")
    return parts


def _load_dataset(args):
    if not args.dataset or not os.path.exists(args.dataset):
        raise ConfigError(f"dataset not found: {args.dataset}")
    return scenario.load_dataset(args.dataset)


def _load_model(args):
    if not args.model or not os.path.exists(args.model):
        raise ConfigError(f"model file not found: {args.model}")
    return ae.load_model(args.model)


def _train_config(args):
    cfg = ae.full_profile(args.seed) if args.profile == "full" else ae.desk_profile(args.seed)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.lr is not None:
        cfg.learning_rate = args.lr
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    return cfg


def _base_attack_spec(args, net):
    spec = atk_mod.parse_attack_spec(args.attack)
    return atk_mod.realize_gamma(spec, net)


def _bdd_detector(net, ds, quantile):
    z_train = features_to_measurements(net, ds.train)
    noise = NoiseModel.from_samples(z_train, rel_std=ds.metadata.get("noise_rel_std", 0.0033))
    est = WlsEstimator(build_measurement_matrix(net), noise)
    tau = calibrate_bdd_threshold(est, features_to_measurements(net, ds.validation), quantile)
    return BddDetector(estimator=est, threshold=tau)


# --- subcommands -------------------------------------------------------------

def cmd_gen_data(args):
    net = _load_net(args)
    out = _outdir(args)
    if args.load_csv:
        if not os.path.exists(args.load_csv):
            raise ConfigError(f"load CSV not found: {args.load_csv}")
        source = scenario.ingest_load_csv(args.load_csv)
    else:
        source = scenario.synthesize_load_source(args.hours, args.countries, args.seed)
    splits = _parse_splits(args.splits) if args.splits else None
    if splits is None:
        n = source.hours
        n_val = n_test = n // 5
        splits = [n - 2 * n_val, n_val, n_test]
    mapping = scenario.sample_load_mapping(len(net.load_buses), source.n_countries,
                                           args.seed, scale=args.scale)
    ds = scenario.build_dataset(net, source, mapping, splits, args.seed,
                                variation_std=args.variation_std,
                                noise_rel_std=args.noise_rel_std,
                                noise_rel_cap=args.noise_rel_cap,
                                resample_costs_hourly=args.resample_costs_hourly)
    path = os.path.join(out, "dataset.csv")
    scenario.save_dataset(ds, path, net=net)
    rows = ds.all_rows
    n_l = len(net.load_buses)
    n_g = len(net.generator_buses)
    imbalance = np.abs(rows[:, n_l:n_l + n_g].sum(axis=1) - rows[:, :n_l].sum(axis=1))
    print(f"wrote {path}: {rows.shape[0]} hours x {rows.shape[1]} features, "
          f"splits {splits}")
    print(f"post-noise |gen-load| imbalance: mean {imbalance.mean():.3f} MW, "
          f"max {imbalance.max():.3f} MW")
    print(f"hours with negative dispatch: {ds.metadata['negative_dispatch_hours']}")
    return EXIT_OK


def cmd_train(args):
    out = _outdir(args)
    ds = _load_dataset(args)
    cfg = _train_config(args)
    arch = ae.default_architecture(ds.train.shape[1])
    state, loss_log = ae.train(arch, cfg, ds.train, ds.validation)
    model_path = os.path.join(out, "model.json")
    ae.save_model(state, model_path)
    log_path = os.path.join(out, "loss_log.csv")
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(loss_log):
            fh.write(f"{i},{format_float(loss)}\n")
    plots.render_loss_log(loss_log, os.path.join(out, "loss_log.png"))
    print(f"wrote {model_path}; final training loss {loss_log[-1]:.3e} "
          f"after {cfg.epochs} epochs")
    return EXIT_OK


def cmd_calibrate(args):
    out = _outdir(args)
    ds = _load_dataset(args)
    state = _load_model(args)
    state, errs = ae.calibrate_threshold(state, ds.validation, args.alpha)
    ae.save_model(state, args.model)
    curve_path = os.path.join(out, "error_curve.csv")
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("rank,reconstruction_error\n")
        for i, e in enumerate(errs, start=1):
            fh.write(f"{i},{format_float(e)}\n")
    plots.render_error_distribution(errs, state.threshold,
                                    os.path.join(out, "error_curve.png"))
    print(f"threshold (alpha={args.alpha}): {state.threshold:.6e}; "
          f"updated {args.model}, wrote {curve_path}")
    return EXIT_OK


def cmd_attack(args):
    net = _load_net(args)
    out = _outdir(args)
    ds = _load_dataset(args)
    state = _load_model(args)
    if state.threshold is None:
        raise ConfigError("model is not calibrated; run 'calibrate' first")
    spec = _base_attack_spec(args, net)
    window = range(args.window_start, args.window_start + args.window_hours)
    trace = ev.run_effectiveness_trace(state, net, ds.test, spec, window,
                                       args.attack_hour)
    path = os.path.join(out, "trace.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("hour,clean_score,attacked_score,threshold,flag\n")
        for r in trace:
            att = "" if r["attacked_score"] is None else format_float(r["attacked_score"])
            fh.write(f"{r['hour']},{format_float(r['clean_score'])},{att},"
                     f"{format_float(r['threshold'])},{int(r['flag'])}\n")
    plots.render_trace(trace, os.path.join(out, "trace.png"))
    attacked = next(r for r in trace if r["attacked_score"] is not None)
    print(f"wrote {path}; attacked hour {args.attack_hour}: score "
          f"{attacked['clean_score']:.3e} -> {attacked['attacked_score']:.3e} "
          f"(threshold {state.threshold:.3e}, detected={attacked['flag']})")
    return EXIT_OK


def cmd_detect(args):
    out = _outdir(args)
    ds = _load_dataset(args)
    state = _load_model(args)
    if state.threshold is None:
        raise ConfigError("model is not calibrated; run 'calibrate' first")
    flags, r = ae.detect(state, ds.test)
    path = os.path.join(out, "scores.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("hour,reconstruction_error,flag\n")
        for i, (score, flag) in enumerate(zip(r, flags)):
            fh.write(f"{i},{format_float(score)},{int(flag)}\n")
    print(f"wrote {path}; {int(flags.sum())}/{flags.size} test hours flagged "
          f"({100 * flags.mean():.2f}%)")
    return EXIT_OK


def cmd_evaluate(args):
    net = _load_net(args)
    out = _outdir(args)
    ds = _load_dataset(args)
    state = _load_model(args)
    if state.threshold is None:
        raise ConfigError("model is not calibrated; run 'calibrate' first")
    spec = _base_attack_spec(args, net)
    # normalize the spec's betas into a unit pattern so --magnitudes are
    # absolute load-change fractions
    peak = max(abs(b) for _bus, b in spec.load_targets)
    unit = atk_mod.AttackSpec(
        load_targets=tuple((bus, b / peak) for bus, b in spec.load_targets),
        gen_targets=spec.gen_targets, gamma=spec.gamma)
    magnitudes = [float(m) for m in args.magnitudes.split(",")]
    curves = ev.sweep_magnitude(state, net, ds.test, unit, magnitudes,
                                hours_of_day=None)
    reference = spec if peak != 1 else unit.scaled(0.15)
    counts = ev.evaluate_confusion(state, ds.test,
                                   ev.attacked_rows(net, reference, ds.test))
    ev.write_report(curves, counts, os.path.join(out, "sweep.csv"), fmt="csv")
    ev.write_report(curves, counts, os.path.join(out, "report.json"), fmt="json",
                    extra={"attack": args.attack, "magnitudes": magnitudes,
                           "seed": args.seed})
    plots.render_detection_curves(curves, os.path.join(out, "sweep.png"),
                                  xlabel="load reduction fraction")
    print(f"wrote {out}/sweep.csv, report.json, sweep.png")
    print(f"confusion at the spec's own magnitude: TPR {counts.tpr:.3f} "
          f"({counts.true_positive}), FPR {counts.fpr:.3f} ({counts.false_positive})")
    return EXIT_OK


def cmd_compare(args):
    net = _load_net(args)
    out = _outdir(args)
    ds = _load_dataset(args)
    state = _load_model(args)
    if state.threshold is None:
        raise ConfigError("model is not calibrated; run 'calibrate' first")
    spec = _base_attack_spec(args, net)
    quantile = (state.alpha or 97.0) / 100.0
    bdd = _bdd_detector(net, ds, quantile)
    gammas = [float(g) for g in args.gammas.split(",")]
    curve_ae, curve_bdd, seed_ledger = ev.compare_bdd_ae(
        state, bdd, net, ds.test, spec, gammas, args.seeds_per_point, seed0=args.seed)
    ev.write_report([curve_ae, curve_bdd], None,
                    os.path.join(out, "compare.csv"), fmt="csv")
    ev.write_report([curve_ae, curve_bdd], None,
                    os.path.join(out, "compare.json"), fmt="json",
                    extra={"attack": args.attack, "gammas": gammas,
                           "seeds_per_point": args.seeds_per_point,
                           "seed_ledger": seed_ledger, "bdd_threshold": bdd.threshold})
    plots.render_detection_curves([curve_ae, curve_bdd],
                                  os.path.join(out, "compare.png"),
                                  xlabel="knowledge deviation magnitude")
    print(f"wrote {out}/compare.csv, compare.json, compare.png")
    for x, yb, ya in zip(curve_bdd.x, curve_bdd.y, curve_ae.y):
        print(f"gamma {x:.2f}: BDD {yb:.3f}, autoencoder {ya:.3f}")
    return EXIT_OK


# --- argument plumbing -------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--case", help="network case file (default: bundled IEEE 118-bus)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (1 = bit-reproducible)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fdiakit",
        description="Synthetic grid operating data, false data injection "
                    "attacks, and autoencoder-based detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a normal-operations dataset")
    _add_common(p)
    p.add_argument("--synthetic", action="store_true",
                   help="use the synthetic load-profile generator")
    p.add_argument("--load-csv", help="historical country-load CSV instead of --synthetic")
    p.add_argument("--hours", type=int, default=8760)
    p.add_argument("--countries", type=int, default=32)
    p.add_argument("--scale", type=float, default=1000.0)
    p.add_argument("--variation-std", type=float, default=0.05)
    p.add_argument("--noise-rel-std", type=float, default=0.0033)
    p.add_argument("--noise-rel-cap", type=float, default=0.01)
    p.add_argument("--splits", help="train,val,test row counts")
    p.add_argument("--resample-costs-hourly", action="store_true")

    p = sub.add_parser("train", help="train the autoencoder")
    _add_common(p)
    p.add_argument("--dataset", required=False)
    p.add_argument("--profile", choices=("full", "desk"), default="desk")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("calibrate", help="set the detection threshold")
    _add_common(p)
    p.add_argument("--dataset", required=False)
    p.add_argument("--model", required=False)
    p.add_argument("--alpha", type=float, default=97.0)

    default_attack = "loads 108:-0.15,109:-0.15,110:-0.15; gens 110:1,111:1"
    p = sub.add_parser("attack", help="single-attack effectiveness trace")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--attack", default=default_attack)
    p.add_argument("--window-start", type=int, default=0)
    p.add_argument("--window-hours", type=int, default=12)
    p.add_argument("--attack-hour", type=int, default=5)

    p = sub.add_parser("detect", help="score a dataset's test split")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")

    p = sub.add_parser("evaluate", help="confusion matrix and magnitude sweep")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--attack", default=default_attack)
    p.add_argument("--magnitudes", default="0.01,0.05,0.15,0.30")

    p = sub.add_parser("compare", help="BDD vs autoencoder under knowledge deviation")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--attack", default=default_attack)
    p.add_argument("--gammas", default="0.01,0.05,0.10,0.20")
    p.add_argument("--seeds-per-point", type=int, default=20)
    return parser


def _apply_config_file(parser, args, argv):
    """Fill defaults from the JSON config; explicit CLI flags win."""
    if not args.config:
        return args
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    with open(args.config, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    given = {a.split("=")[0].lstrip("-").replace("-", "_")
             for a in argv if a.startswith("--")}
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"{args.config}: unknown key {key!r}")
        if attr not in given:
            setattr(args, attr, value)
    return args


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "attack": cmd_attack,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(parser, args, argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FdiakitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        return exc.code if exc.code is not None else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
