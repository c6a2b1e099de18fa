"""Command-line interface: fetch, discretize, train-qgan, train-qcbm, compare-optim.

Exit codes: 0 success, 2 usage/config error, 3 runtime/numeric error,
4 transport error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfg
from .ansatz import GeneratorAnsatz, QcbmAnsatz
from .artifacts import params_json, write_atomic, write_outputs
from .data import (BASE_URL_ENV, align_series, build_dataset, build_histogram, dataset_metadata,
                   fetch_klines, format_csv, format_histogram_csv, load_features, synthetic_lognormal)
from .errors import ParseError, TransportError
from .gan import Discriminator, GanConfig, qgan_train
from .optim import SpsaConfig
from .qcbm import QcbmConfig, cobyla_vs_spsa_check, compare_optimizers, qcbm_train
from .svg import bar_plot, line_plot

log = logging.getLogger("qfin")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_TRANSPORT = 0, 2, 3, 4


class UsageError(Exception):
    pass


@contextmanager
def _config_errors(section: str):
    try:
        yield
    except cfg.ConfigError:
        raise
    except ValueError as exc:
        raise cfg.ConfigError(f"[{section}] {exc}") from exc


def _flag(f: cfg.Field) -> str:
    return "--" + f.key.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser, sections: Sequence[str]) -> None:
    parser.add_argument("--config", help="INI config file; flags override its values")
    parser.add_argument("--out-dir", default="runs", help="output directory (default: %(default)s)")
    for section in sections:
        group = parser.add_argument_group(f"[{section}]")
        for f in cfg.fields_for([section]):
            group.add_argument(_flag(f), dest=f"{section}.{f.key}", default=None, metavar="VALUE",
                               help=f"{f.help} (default: {f.default})")


def _resolved(args, sections) -> tuple[dict, dict]:
    overrides = {}
    for section in sections:
        for f in cfg.fields_for([section]):
            value = getattr(args, f"{section}.{f.key}")
            if value is not None:
                overrides[(section, f.key)] = value
    raw = cfg.resolve(sections, args.config, overrides)
    return raw, cfg.parse(raw)


def _dataset(data: dict):
    if data["source"] == "csv":
        if not data["csv"] or not data["features"]:
            raise cfg.ConfigError("[data] csv and features are required when source = csv")
        columns = load_features(data["csv"], data["features"])
        features = data["features"]
    else:
        n = len(data["resolutions"])
        columns = np.stack([synthetic_lognormal(data["synthetic_samples"], data["synthetic_seed"] + i,
                                                sigma=data["synthetic_sigma"]) for i in range(n)], axis=1)
        features = [f"synthetic{i}" for i in range(n)]
    if len(features) != len(data["resolutions"]):
        raise cfg.ConfigError(f"[data] resolutions: {len(data['resolutions'])} given for "
                              f"{len(features)} features")
    if any(k < 1 for k in data["resolutions"]):
        raise cfg.ConfigError("[data] resolutions: every entry must be >= 1")
    return build_dataset(columns, data["resolutions"], data["clip_lo"], data["clip_hi"], features)


def cmd_fetch(args) -> int:
    symbols = [s.strip() for s in args.symbols.split(",") if s.strip()]
    if not symbols:
        raise UsageError("--symbols: at least one symbol required")
    if args.limit < 1:
        raise UsageError("--limit must be >= 1")
    series = [fetch_klines(s, args.interval, args.limit, base_url=args.base_url) for s in symbols]
    times, matrix = align_series(series)
    write_atomic(args.out, format_csv(symbols, times, matrix))
    log.info("wrote %d rows x %d assets to %s", len(times), len(symbols), args.out)
    return EXIT_OK


def cmd_discretize(args) -> int:
    features = [f.strip() for f in args.features.split(",") if f.strip()]
    try:
        resolutions = [int(k) for k in args.resolutions.split(",")]
    except ValueError:
        raise UsageError(f"--resolutions: not a comma-separated integer list: {args.resolutions!r}") from None
    if len(resolutions) != len(features):
        raise UsageError(f"--resolutions: {len(resolutions)} given for {len(features)} features")
    if any(k < 1 for k in resolutions):
        raise UsageError("--resolutions: every entry must be >= 1")
    try:
        columns = load_features(args.csv, features)
        dataset = build_dataset(columns, resolutions, args.clip[0], args.clip[1], features)
    except ParseError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    hist = build_histogram(dataset)
    out = Path(args.out)
    meta = dataset_metadata(dataset) | {"clip": list(args.clip), "source": str(args.csv)}
    write_atomic(out.with_name(out.name + ".meta.json"), json.dumps(meta, indent=2) + "\n")
    write_atomic(out, format_histogram_csv(hist))
    return EXIT_OK


def cmd_train_qgan(args) -> int:
    sections = cfg.COMMAND_SECTIONS["train-qgan"]
    raw, conf = _resolved(args, sections)
    data, q = conf["data"], conf["qgan"]
    with _config_errors("data"):
        dataset = _dataset(data)
    target = build_histogram(dataset)
    with _config_errors("qgan"):
        gan_config = GanConfig(batch_size=q["batch_size"], epochs=q["epochs"], generator_lr=q["generator_lr"],
                               discriminator_lr=q["discriminator_lr"], d_steps=q["d_steps"], seed=q["seed"],
                               mode=q["mode"], saturating=q["saturating"])
        ansatz = GeneratorAnsatz(dataset.n_total_qubits, q["layers"])
        disc = Discriminator.for_features(dataset.n_features, q["hidden"])
    if gan_config.epochs == 0:
        log.warning("epochs = 0: writing an empty trace")
    trace = qgan_train(gan_config, target, ansatz, disc, dataset.resolutions)
    digest = cfg.config_hash(conf)
    loss_svg = line_plot({"L_D": (trace.epoch, trace.loss_d), "L_G": (trace.epoch, trace.loss_g),
                          "ln 2": (trace.epoch[:1] + trace.epoch[-1:], [np.log(2)] * min(2, len(trace)))},
                         "Generator vs discriminator loss", "epoch", "loss")
    fid_svg = line_plot({"fidelity": (trace.epoch, trace.fidelity)}, "Fidelity", "epoch", "fidelity")
    files = {
        "trace.csv": trace.to_csv(),
        "params.json": params_json(trace.theta, phi=[float(v) for v in trace.phi],
                                   ansatz={"kind": "generator", "n_qubits": ansatz.n_qubits,
                                           "n_layers": ansatz.n_layers},
                                   discriminator={"layer_sizes": list(disc.layer_sizes), "leak": disc.leak},
                                   seed=q["seed"], config_hash=digest,
                                   initial_fidelity=trace.initial_fidelity,
                                   final_fidelity=trace.fidelity[-1] if len(trace) else None),
        "loss.svg": loss_svg,
        "fidelity.svg": fid_svg,
        "target_histogram.csv": format_histogram_csv(target),
        "config.ini": cfg.to_ini(raw),
    }
    write_outputs(args.out_dir, files)
    if len(trace):
        log.info("final L_D %.4f L_G %.4f fidelity %.4f KL %.4f", trace.loss_d[-1], trace.loss_g[-1],
                 trace.fidelity[-1], trace.kl[-1])
    return EXIT_OK


def _qcbm_config(q: dict) -> QcbmConfig:
    spsa = SpsaConfig(a0=q["spsa_a0"], c0=q["spsa_c0"], alpha=q["spsa_alpha"], gamma=q["spsa_gamma"])
    return QcbmConfig(n_layers=q["layers"], epsilon=q["epsilon"], optimizer=q["optimizer"],
                      max_evals=q["max_evals"], seed=q["seed"], shots=q["shots"], cost_shots=q["cost_shots"],
                      rho_begin=q["rho_begin"], rho_end=q["rho_end"], spsa=spsa,
                      nelder_mead_step=q["nelder_mead_step"])


def cmd_train_qcbm(args) -> int:
    sections = cfg.COMMAND_SECTIONS["train-qcbm"]
    raw, conf = _resolved(args, sections)
    with _config_errors("data"):
        dataset = _dataset(conf["data"])
    with _config_errors("qcbm"):
        qcbm_config = _qcbm_config(conf["qcbm"])
        ansatz = QcbmAnsatz(dataset.n_total_qubits, qcbm_config.n_layers)
    report = qcbm_train(qcbm_config, dataset, ansatz)
    target = build_histogram(dataset)
    hist_svg = bar_plot({"target": report.target_probs, "model": report.model_probs,
                         "model (sampled)": report.sampled.probabilities},
                        "Target vs Born machine distribution", "bin index", "probability")
    files = {
        "trace.csv": report.trace_csv(),
        "params.json": params_json(report.best_theta,
                                   ansatz={"kind": "qcbm", "n_qubits": ansatz.n_qubits,
                                           "n_layers": ansatz.n_layers, "rotations": list(ansatz.rotations),
                                           "entangler": ansatz.entangler},
                                   seed=qcbm_config.seed, config_hash=cfg.config_hash(conf),
                                   best_cost=report.best_cost, entropy_bound=report.entropy_bound,
                                   total_variation=report.total_variation, fidelity=report.fidelity),
        "histogram.svg": hist_svg,
        "target_histogram.csv": format_histogram_csv(target),
        "model_histogram.csv": format_histogram_csv(report.sampled),
        "config.ini": cfg.to_ini(raw),
    }
    write_outputs(args.out_dir, files)
    log.info("best cost %.5f (bound %.5f), TV %.4f", report.best_cost, report.entropy_bound,
             report.total_variation)
    return EXIT_OK


def cmd_compare_optim(args) -> int:
    sections = cfg.COMMAND_SECTIONS["compare-optim"]
    raw, conf = _resolved(args, sections)
    with _config_errors("data"):
        dataset = _dataset(conf["data"])
    with _config_errors("qcbm"):
        base = _qcbm_config(conf["qcbm"])
    c = conf["compare"]
    unknown = [o for o in c["optimizers"] if o not in ("cobyla", "spsa", "nelder-mead")]
    if unknown or not c["optimizers"]:
        raise cfg.ConfigError(f"[compare] optimizers: unknown or empty: {', '.join(unknown)}")
    if c["seeds"] < 1 or c["budget"] < 1 or c["workers"] < 1:
        raise cfg.ConfigError("[compare] seeds, budget and workers must be >= 1")
    ansatz = QcbmAnsatz(dataset.n_total_qubits, base.n_layers)
    configs = {name: base for name in c["optimizers"]}
    report = compare_optimizers(dataset, ansatz, configs, n_seeds=c["seeds"], budget=c["budget"],
                                base_seed=c["base_seed"], workers=c["workers"])
    if not cobyla_vs_spsa_check(report):
        log.warning("expectation not met: COBYLA median cost exceeds SPSA median + 0.05")
    x = np.arange(1, report.budget + 1)
    traces_svg = line_plot({name: (x, report.median_trace(name)) for name in configs},
                           "Optimizer comparison (median running best)", "evaluation", "cost")
    files = {
        "comparison.csv": report.table_csv(),
        "summary.csv": report.summary_csv(),
        "traces.svg": traces_svg,
        "config.ini": cfg.to_ini(raw),
    }
    write_outputs(args.out_dir, files)
    for row in report.summary():
        print(f"{row['rank']}. {row['optimizer']:<12} median {row['median_final_cost']:.6f} "
              f"min {row['min_final_cost']:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download close prices from the public klines endpoint",
                       description=f"Fetch klines per symbol, inner-join on close time, write CSV. "
                                   f"${BASE_URL_ENV} overrides the exchange base URL.")
    p.add_argument("--symbols", required=True, help="comma-separated pairs, e.g. ETHBTC,LTCBTC")
    p.add_argument("--interval", default="1d", help="kline interval (default: %(default)s)")
    p.add_argument("--limit", type=int, default=1000, help="klines per symbol (default: %(default)s)")
    p.add_argument("--base-url", default=None, help=f"exchange base URL (default: ${BASE_URL_ENV} or public)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("discretize", help="clip, bin and histogram CSV features")
    p.add_argument("--csv", required=True, help="close-price CSV")
    p.add_argument("--features", required=True, help="comma-separated columns")
    p.add_argument("--resolutions", required=True, help="qubits per feature, comma-separated")
    p.add_argument("--clip", type=float, nargs=2, default=(0.05, 0.95), metavar=("LO", "HI"),
                   help="clipping quantiles (default: 0.05 0.95)")
    p.add_argument("--out", required=True, help="histogram CSV; edges go to <out>.meta.json")
    p.set_defaults(func=cmd_discretize)

    for name, func, text in (("train-qgan", cmd_train_qgan, "train the hybrid qGAN"),
                             ("train-qcbm", cmd_train_qcbm, "train the Born machine"),
                             ("compare-optim", cmd_compare_optim, "compare QCBM optimizers")):
        p = sub.add_parser(name, help=text, description=text)
        _add_config_flags(p, cfg.COMMAND_SECTIONS[name])
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, cfg.ConfigError, ParseError) as exc:
        print(f"qfin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"qfin {args.command}: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"qfin {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
