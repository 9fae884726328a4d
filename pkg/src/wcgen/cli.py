"""Command-line front end: train / measure / rank / heatmap / selftest.

Experiments are described by a JSON config with `architecture`,
`input_shape`, `data`, and `training` sections; a handful of flags
override config values. Exit codes: 0 success, 2 config/usage error,
3 IO error, 4 numeric abort during training, 5 selftest failure.
"""

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import data_io, measures, nn, selftest, train
from .data_io import checkpoint_from_params

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_SELFTEST = 5


class ConfigError(ValueError):
    pass


def _require(section, key, where):
    if key not in section:
        raise ConfigError(f"missing field '{key}' in {where}")
    return section[key]


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from exc


def build_specs(config):
    arch = _require(config, "architecture", "config")
    input_shape = tuple(_require(config, "input_shape", "config"))
    try:
        specs = [nn.LayerSpec.from_dict(d) for d in arch]
        nn.check_composition(specs, input_shape)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"architecture: {exc}") from exc
    return specs, input_shape


def load_datasets(config):
    data = _require(config, "data", "config")
    source = _require(data, "source", "data section")
    if source == "synthetic":
        common = {k: data[k] for k in ("classes", "dims", "separation")}
        train_ds = data_io.synthetic_dataset(
            seed=data.get("seed", 0), n=_require(data, "n", "data section"),
            split="train", **common,
        )
        test_ds = data_io.synthetic_dataset(
            seed=data.get("seed", 0), n=data.get("test_n", data["n"]),
            split="test", **common,
        )
    elif source == "idx":
        train_ds = data_io.load_idx(
            _require(data, "train_images", "data section"),
            _require(data, "train_labels", "data section"),
        )
        test_ds = data_io.load_idx(
            _require(data, "test_images", "data section"),
            _require(data, "test_labels", "data section"),
            split="test",
        )
    elif source == "cifar":
        train_ds = data_io.load_cifar_binary(_require(data, "train_path", "data section"))
        test_ds = data_io.load_cifar_binary(
            _require(data, "test_path", "data section"), split="test"
        )
    else:
        raise ConfigError(f"unknown data source {source!r}")
    limit = data.get("limit")
    if limit:
        train_ds = data_io.Dataset(
            train_ds.inputs[:limit], train_ds.labels[:limit],
            train_ds.num_classes, train_ds.split,
        )
    return train_ds, test_ds


def build_train_config(config, args):
    section = dict(config.get("training", {}))
    for flag in ("alpha", "seed", "epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            section[flag] = value
    sigma_init = section.pop("sigma_init", 0.1)
    try:
        cfg = train.TrainConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training section: {exc}") from exc
    return cfg, sigma_init


def _run_one(specs, input_shape, datasets, cfg, sigma_init):
    params = nn.init_network(specs, input_shape, seed=cfg.seed, sigma_init=sigma_init)
    report = train.train(params, datasets[0].pair(), datasets[1].pair(), cfg)
    return params, report


def cmd_train(args):
    config = load_config(args.config)
    specs, input_shape = build_specs(config)
    datasets = load_datasets(config)
    cfg, sigma_init = build_train_config(config, args)
    runs = []
    if args.compare_wcd:
        alpha = cfg.alpha if cfg.alpha > 0 else 0.01
        base_cfg = dataclasses.replace(cfg, alpha=0.0)
        wcd_cfg = dataclasses.replace(cfg, alpha=alpha)
        runs.append(("base", *_run_one(specs, input_shape, datasets, base_cfg, sigma_init)))
        runs.append(("wcd", *_run_one(specs, input_shape, datasets, wcd_cfg, sigma_init)))
    else:
        runs.append(("run", *_run_one(specs, input_shape, datasets, cfg, sigma_init)))
    rows = []
    for tag, params, report in runs:
        ckpt = checkpoint_from_params(params, provenance={
            "seed": report.config.seed,
            "alpha": report.config.alpha,
            "epochs": len(report.history),
            "best_epoch": report.best_epoch,
        })
        data_io.save_checkpoint(ckpt, f"{args.out}/checkpoint_{tag}.bin")
        for record in report.rows():
            rows.append([tag] + [record[c] for c in train.TrainReport.COLUMNS])
    header = ["run"] + list(train.TrainReport.COLUMNS)
    if args.format == "jsonl":
        data_io.write_jsonl(f"{args.out}/train_report.jsonl",
                            [dict(zip(header, r)) for r in rows])
    else:
        data_io.write_csv(f"{args.out}/train_report.csv", header, rows)
    for tag, _, report in runs:
        best = report.history[report.best_epoch]
        print(f"{tag}: best epoch {best.epoch} test_loss {best.test_loss:.6f} "
              f"test_error {best.test_error:.4f} mean_wc {best.mean_wc:.4f}")
    return EXIT_OK


def cmd_measure(args):
    ckpt = data_io.load_checkpoint(args.checkpoint)
    cfg = measures.MeasureConfig(
        sigma_sq_rule=args.sigma_sq if args.sigma_sq is not None else "one_over_L"
    )
    report = measures.compute_measures(ckpt, cfg)
    if (args.train_loss is None) != (args.test_loss is None):
        raise ConfigError("--train-loss and --test-loss must be given together")
    if args.train_loss is not None:
        report.ge = measures.generalisation_error(args.test_loss, args.train_loss)
    data_io.write_measure_report(report, args.out, args.format)
    print(",".join(str(v) for v in report.row()))
    return EXIT_OK


def cmd_rank(args):
    header, raw_rows = data_io.read_table_csv(args.table)
    lowered = [h.lower() for h in header]
    if "ge" not in lowered:
        raise ConfigError(f"{args.table}: no GE column in {header}")
    ge_idx = lowered.index("ge")
    numeric = {}
    for j, name in enumerate(header):
        if j == ge_idx:
            continue
        try:
            numeric[name] = [float(row[j]) for row in raw_rows]
        except ValueError:
            continue               # non-numeric column (network names)
    if not numeric:
        raise ConfigError(f"{args.table}: no numeric measure columns")
    try:
        ge = [float(row[ge_idx]) for row in raw_rows]
    except ValueError as exc:
        raise ConfigError(f"{args.table}: non-numeric GE cell ({exc})") from exc
    rows = [
        [r.name, r.concordant, r.discordant, r.tau]
        for r in measures.rank_measures(numeric, ge)
    ]
    data_io.write_csv(args.out, ["measure", "concordant", "discordant", "tau"], rows)
    for row in rows:
        print(f"{row[0]}: concordant {row[1]} discordant {row[2]} tau {row[3]:.4f}")
    return EXIT_OK


def cmd_heatmap(args):
    ckpt = data_io.load_checkpoint(args.checkpoint)
    if not 0 <= args.layer < len(ckpt.specs):
        raise ConfigError(f"layer index {args.layer} out of range")
    spec = ckpt.specs[args.layer]
    if spec.kind != "conv2d":
        raise ConfigError(
            f"layer {args.layer} is {spec.kind!r}, heatmaps need a conv2d layer"
        )
    heat = measures.filter_heatmap(ckpt.theta_f_weights[args.layer])
    data_io.write_matrix_csv(heat, args.out)
    print(f"wrote {heat.shape[0]}x{heat.shape[1]} heatmap to {args.out}")
    return EXIT_OK


def cmd_selftest(args):
    results = selftest.run_all(seed=args.seed or 0)
    ok = True
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name}: max relative error {r.max_error:.3e} "
              f"(tolerance {r.tolerance:.0e}) {status}")
        if not r.ok:
            ok = False
            print(f"  failing case: {r.failing_seed}")
    return EXIT_OK if ok else EXIT_SELFTEST


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wcgen",
        description="Weight-correlation measures, ranking, and WCD training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network, optionally paired with/without WCD")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--compare-wcd", action="store_true")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("measure", help="complexity measures for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-loss", type=float, default=None)
    p.add_argument("--test-loss", type=float, default=None)
    p.add_argument("--sigma-sq", type=float, default=None)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("rank", help="Kendall's tau of measure columns against GE")
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("heatmap", help="per-filter correlation matrix of a conv layer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("selftest", help="run the numerical identity suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except data_io.DataFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except train.NumericAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
