"""Command-line entry point (``iotdos <subcommand>``).

Exit status: 0 success, 1 usage error, 2 validation failure,
3 attack goal unreachable, 4 data error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys

from . import attacker as atk
from .calibration import CalibrationError, CalibrationInput, drain_per_message, lifetime_estimate
from .config import ConfigError, errors, load_config_file, validate
from .dataset import (
    APACHE_COLUMNS,
    DatasetError,
    dumps_dataset,
    generate_dataset,
    ingest_apache_log,
    load_dataset,
    log_to_dataset,
    standardize,
)
from .ids import IdsError, evaluate, load_model, save_model, train_mlp, train_tree
from .pipeline import PipelineSpec, resolve_config, run_pipeline
from .semantics import SemanticsError, Stop, simulate, write_trace

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_UNREACHABLE, EXIT_DATA = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _fraction(text):
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def _csv_list(text):
    return tuple(x for x in (s.strip() for s in text.split(",")) if x)


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def _load(path):
    try:
        return load_config_file(resolve_config(path))
    except FileNotFoundError:
        raise DatasetError("NO_SUCH_FILE", f"config not found: {path}") from None


def _stop(args):
    return Stop(max_steps=args.max_steps, max_time=args.max_time)


def _checked(config):
    errs = errors(validate(config))
    if errs:
        for v in errs:
            print(v, file=sys.stderr)
        raise ConfigError(f"{len(errs)} violations")
    return config


def cmd_validate(args):
    try:
        config = _load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    vs = validate(config)
    for v in vs:
        print(v)
    n_err = len(errors(vs))
    print(f"{n_err} violations" + (f", {len(vs) - n_err} warnings" if len(vs) > n_err else ""))
    return EXIT_INVALID if n_err else EXIT_OK


def cmd_simulate(args):
    config = _checked(_load(args.config))
    seed = config.rng_seed if args.seed is None else args.seed
    trace = simulate(config, seed, _stop(args))
    with _open_out(args.out) as fh:
        write_trace(trace, config, fh)
    return EXIT_OK


def cmd_solve(args):
    config = _checked(_load(args.config))
    kappa = config.attacker.stealth_weight if args.stealth_weight is None else args.stealth_weight
    mdp, vf, policy = atk.solve(config, kappa)
    with _open_out(args.out) as fh:
        fh.write(atk.format_report(mdp, vf, policy))
    if math.isinf(vf.initial):
        print("goal unreachable from the initial state", file=sys.stderr)
        return EXIT_UNREACHABLE
    return EXIT_OK


def cmd_attack(args):
    config = _checked(_load(args.config))
    seed = config.rng_seed if args.seed is None else args.seed
    trace = atk.simulate_attack(config, args.mode, seed, _stop(args),
                                stealth_weight=args.stealth_weight)
    with _open_out(args.out) as fh:
        write_trace(trace, config, fh)
    return EXIT_OK


def cmd_gen_dataset(args):
    config = _checked(_load(args.config))
    seed = config.rng_seed if args.seed is None else args.seed
    ds = generate_dataset(config, args.size, args.attack_fraction, seed, modes=args.modes,
                          attack_labels=args.attacks or None)
    with _open_out(args.out) as fh:
        fh.write(dumps_dataset(ds, args.format))
    print(f"{len(ds)} rows, {ds.n_attack} attack", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args):
    with open(args.log, encoding="utf-8", errors="replace") as fh:
        result = ingest_apache_log(fh)
    for n, line, why in result.rejects:
        print(f"reject line {n}: {why}: {line}", file=sys.stderr)
    if args.binarise:
        ds, enc = log_to_dataset(result.rows, label=args.label, categorical=args.binarise,
                                 numeric=args.numeric)
        with _open_out(args.out) as fh:
            fh.write(dumps_dataset(ds, args.format))
        if args.encoding:
            with open(args.encoding, "w", encoding="utf-8") as fh:
                json.dump(enc.to_json(), fh, indent=1)
                fh.write("\n")
    else:
        with _open_out(args.out) as fh:
            if args.format == "jsonl":
                for row in result.rows:
                    fh.write(json.dumps(row) + "\n")
            else:
                w = csv.DictWriter(fh, fieldnames=APACHE_COLUMNS, lineterminator="\n")
                w.writeheader()
                w.writerows(result.rows)
    print(f"{len(result.rows)} rows, {len(result.rejects)} rejected", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args):
    inp = CalibrationInput(args.baseline, args.strain, args.msgs_per_second, args.capacity)
    print(f"drain_per_message={drain_per_message(inp)!r}")
    if args.capacity and args.strain > 0:
        print(f"lifetime_under_strain_s={lifetime_estimate(args.capacity, args.strain)!r}")
    if args.capacity and args.baseline > 0:
        print(f"lifetime_baseline_s={lifetime_estimate(args.capacity, args.baseline)!r}")
    return EXIT_OK


def cmd_train(args):
    ds = load_dataset(args.dataset)
    if args.model == "tree":
        model = train_tree(ds.X, ds.y, args.max_depth, args.min_samples)
        save_model(model, args.out, columns=ds.columns)
    else:
        (std,), scaler = standardize(ds)
        model = train_mlp(std.X, std.y, args.hidden, args.learning_rate, args.epochs,
                          args.batch_size, args.seed)
        save_model(model, args.out, scaler=scaler, columns=ds.columns)
    return EXIT_OK


def cmd_eval(args):
    model, scaler, columns = load_model(args.model)
    ds = load_dataset(args.dataset)
    if columns is not None and list(columns) != list(ds.columns):
        raise DatasetError("SCHEMA_MISMATCH", "dataset columns differ from the model's")
    X = scaler.apply(ds).X if scaler is not None else ds.X
    m = evaluate(model.predict(X), ds.y)
    print(m.table())
    print(json.dumps(m.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_pipeline(args):
    spec = PipelineSpec(
        config_path=args.config, train_size=args.train_size, train_attack=args.train_attack,
        test_size=args.test_size, test_attack=args.test_attack, modes=args.modes,
        classifiers=args.classifiers, seed=args.seed, out_dir=args.out,
        withhold=args.withhold, fmt=args.format, max_depth=args.max_depth,
        mlp_epochs=args.mlp_epochs,
    )
    manifest = run_pipeline(spec)
    for clf, m in manifest["metrics"].items():
        print(f"{clf}: f1={m['f1']:.4f} accuracy={m['accuracy']:.4f} "
              f"precision={m['precision']:.4f} recall={m['recall']:.4f}")
    print(f"manifest: {args.out}/manifest.json")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="iotdos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_stop(sp):
        sp.add_argument("--max-steps", type=int)
        sp.add_argument("--max-time", type=float)

    sp = sub.add_parser("validate", help="check a configuration")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="device-only trace as JSON lines")
    sp.add_argument("config")
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--out")
    with_stop(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="minimum expected time-to-kill and optimal policy")
    sp.add_argument("config")
    sp.add_argument("--stealth-weight", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("attack", help="attack trace as JSON lines")
    sp.add_argument("config")
    sp.add_argument("--mode", choices=atk.MODES, default="optimal")
    sp.add_argument("--stealth-weight", type=float)
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--out")
    with_stop(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("gen-dataset", help="labelled dataset from the model")
    sp.add_argument("config")
    sp.add_argument("--size", type=int, required=True)
    sp.add_argument("--attack-fraction", type=_fraction, required=True)
    sp.add_argument("--modes", type=_csv_list, default=("optimal", "stochastic"))
    sp.add_argument("--attacks", type=_csv_list, help="restrict to these attack labels")
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_dataset)

    sp = sub.add_parser("ingest", help="parse an Apache access log")
    sp.add_argument("log")
    sp.add_argument("--binarise", type=_csv_list, help="categorical columns to one-hot encode")
    sp.add_argument("--numeric", type=_csv_list, default=("size",))
    sp.add_argument("--label", type=int, default=0)
    sp.add_argument("--encoding", help="write the encoding map sidecar here")
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("calibrate", help="per-message drain from power measurements")
    sp.add_argument("--baseline", type=float, required=True)
    sp.add_argument("--strain", type=float, required=True)
    sp.add_argument("--msgs-per-second", type=float, required=True)
    sp.add_argument("--capacity", type=float, default=0.0)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("train", help="fit a classifier on a dataset file")
    sp.add_argument("dataset")
    sp.add_argument("--model", choices=("tree", "mlp"), default="tree")
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-depth", type=int, default=12)
    sp.add_argument("--min-samples", type=int, default=2)
    sp.add_argument("--hidden", type=lambda s: tuple(int(x) for x in _csv_list(s)), default=(16, 8))
    sp.add_argument("--learning-rate", type=float, default=0.05)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a saved model on a dataset file")
    sp.add_argument("model")
    sp.add_argument("dataset")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("pipeline", help="generate, train and evaluate end to end")
    sp.add_argument("--config", default="table1_attack.cfg")
    sp.add_argument("--train-size", type=int, default=20_000)
    sp.add_argument("--train-attack", type=_fraction, default=0.10)
    sp.add_argument("--test-size", type=int, default=100_000)
    sp.add_argument("--test-attack", type=_fraction, default=0.20)
    sp.add_argument("--modes", type=_csv_list, default=("optimal", "stochastic"))
    sp.add_argument("--classifiers", type=_csv_list, default=("tree",))
    sp.add_argument("--withhold", type=_csv_list, default=None,
                    help="attack labels kept out of training (default: upper half)")
    sp.add_argument("--max-depth", type=int, default=12)
    sp.add_argument("--mlp-epochs", type=int, default=30)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--out", default="run")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DatasetError, IdsError, CalibrationError, SemanticsError, atk.AttackError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
