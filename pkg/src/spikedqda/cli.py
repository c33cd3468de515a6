"""Command line interface.

Subcommands:
  synth      Monte Carlo error sweep on the synthetic spiked population.
  real       Repeated stratified-split benchmark on a dataset file.
  histogram  Emit the two class-conditional decision-statistic samples.
  estimate   Spike-spectrum report (noise variance, spike count, strengths)
             for each class of a dataset.

Any flag can also be supplied through a plain-text config file of
``key = value`` lines (see --config); explicit command-line flags win.
Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigError, DataError
from .experiments import (
    ExperimentConfig,
    emit_report,
    run_estimate,
    run_histogram,
    run_real,
    run_synth,
)

#: Flags that are on/off switches; in a config file they take true/false.
BOOL_KEYS = {
    "estimate_params",
    "with_oracle",
    "no_imp",
    "no_rqda",
    "header",
    "pca_once",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _label_map(text: str) -> dict:
    out = {}
    try:
        for item in text.split(","):
            src, _, dst = item.partition(":")
            out[float(src)] = int(dst)
    except ValueError:
        raise ConfigError(
            f"expected a label map like '4:0,5:1', got {text!r}"
        ) from None
    return out


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="key = value file supplying any flag")
    sub.add_argument("--seed", type=int, default=0, help="master RNG seed")
    sub.add_argument("--reps", type=int, default=250, help="Monte Carlo repetitions")
    sub.add_argument("--out", help="report output path")
    sub.add_argument(
        "--format", dest="fmt", choices=["csv", "json-lines"], default="csv"
    )
    sub.add_argument("--workers", type=int, default=1, help="parallel repetition workers")


def _add_classifier_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--variant", choices=["general", "simplified"], default="general")
    sub.add_argument("--no-imp", action="store_true", help="skip the spike-aware rule")
    sub.add_argument("--no-rqda", action="store_true", help="skip the ridge baseline")
    sub.add_argument(
        "--gamma-mode", choices=["test-oracle", "k-fold"], default="test-oracle"
    )
    sub.add_argument("--gamma-folds", type=int, default=5)
    sub.add_argument(
        "--knn-k", type=_int_list, default=(),
        help="comma-separated neighbor counts to benchmark, e.g. 1,5",
    )


def _add_dataset_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--dataset", required=False, help="delimited text dataset")
    sub.add_argument(
        "--labels-file", help="separate one-label-per-line file (features-only dataset)"
    )
    sub.add_argument(
        "--label-column", type=int, default=0,
        help="column holding the label; negative counts from the end",
    )
    sub.add_argument(
        "--label-map", type=_label_map,
        help="select and encode classes, e.g. '4:0,5:1'; unmatched rows are dropped",
    )
    sub.add_argument("--header", action="store_true", help="skip the first line")
    sub.add_argument(
        "--delimiter", default=",",
        help="field separator; use 'whitespace' for any whitespace run",
    )
    sub.add_argument(
        "--drop-columns", type=_int_list, default=(),
        help="comma-separated identifier columns to discard",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="spikedqda", description=__doc__.split("\n\n")[0])
    commands = parser.add_subparsers(dest="mode", required=True)

    synth = commands.add_parser("synth", help="synthetic Monte Carlo sweep")
    _add_common(synth)
    _add_classifier_flags(synth)
    synth.add_argument("--p", type=int, default=500, help="feature dimension")
    synth.add_argument(
        "--n", dest="n_values", type=_int_list, default=(1000,),
        help="comma-separated total training sizes (split between classes)",
    )
    synth.add_argument("--a", type=float, default=0.5, help="mean separation scale")
    synth.add_argument("--sigma0-sq", type=float, default=1.0)
    synth.add_argument("--sigma1-sq", type=float, default=1.0)
    synth.add_argument("--lambdas0", type=_float_list, default=(5.0, 4.0, 3.0))
    synth.add_argument("--lambdas1", type=_float_list, default=(6.0, 5.0, 4.0))
    synth.add_argument("--test-size", type=int, default=2000)
    synth.add_argument(
        "--estimate-params", action="store_true",
        help="estimate noise variance and spike count instead of using the truth",
    )
    synth.add_argument(
        "--with-oracle", action="store_true",
        help="also evaluate the rule built from the true populations",
    )

    real = commands.add_parser("real", help="dataset benchmark")
    _add_common(real)
    _add_classifier_flags(real)
    _add_dataset_flags(real)
    real.add_argument(
        "--n", dest="n_values", type=_int_list, default=(1000,),
        help="comma-separated total training sizes",
    )
    real.add_argument("--pca-dim", type=int, help="reduce features to this dimension")
    real.add_argument(
        "--pca-once", action="store_true",
        help="fit the reduction once on the full dataset instead of per split",
    )
    real.add_argument(
        "--rqda-priors", choices=["empirical", "uniform"], default="empirical"
    )

    hist = commands.add_parser("histogram", help="decision-statistic samples")
    _add_common(hist)
    hist.add_argument("--p", type=int, default=500)
    hist.add_argument("--n", dest="n_values", type=_int_list, default=(1000,))
    hist.add_argument("--a", type=float, default=4.0, help="mean separation scale")
    hist.add_argument("--sigma0-sq", type=float, default=1.0)
    hist.add_argument("--sigma1-sq", type=float, default=1.0)
    hist.add_argument("--lambdas0", type=_float_list, default=(4.0, 3.0, 2.0))
    hist.add_argument("--lambdas1", type=_float_list, default=(4.0, 3.0, 2.0))
    hist.add_argument("--draws", dest="hist_draws", type=int, default=10_000)
    hist.add_argument("--variant", choices=["general", "simplified"], default="general")

    est = commands.add_parser("estimate", help="spike-spectrum report")
    _add_common(est)
    _add_dataset_flags(est)

    return parser


def _load_config_tokens(path: str, valid_flags: set) -> list[str]:
    """Turn a key = value file into argv tokens (placed before user flags
    so explicit flags override them)."""
    tokens = []
    try:
        with open(path) as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        raw_key, eq, value = stripped.partition("=")
        if not eq:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        raw_key = raw_key.strip()
        key = raw_key.replace("-", "_")
        value = value.strip()
        flag = "--" + key.replace("_", "-")
        if flag not in valid_flags:
            raise ConfigError(f"{path}: line {lineno}: unknown option {raw_key!r}")
        if key in BOOL_KEYS:
            if value.lower() in ("true", "1", "yes", "on"):
                tokens.append(flag)
            elif value.lower() not in ("false", "0", "no", "off"):
                raise ConfigError(
                    f"{path}: line {lineno}: boolean option {raw_key!r} got {value!r}"
                )
        else:
            tokens.extend([flag, value])
    return tokens


def _extract_config_path(argv: list[str]) -> tuple[str | None, list[str]]:
    remaining, path, skip = [], None, False
    for i, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config needs a file path")
            path = argv[i + 1]
            skip = True
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
        else:
            remaining.append(token)
    return path, remaining


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv:
        raise ConfigError("missing subcommand (synth, real, histogram, estimate)")
    config_path, argv = _extract_config_path(argv)
    if config_path is not None:
        subcommands = parser._subparsers._group_actions[0].choices
        if argv[0] not in subcommands:
            raise ConfigError(f"unknown subcommand {argv[0]!r}")
        valid = {
            opt
            for action in subcommands[argv[0]]._actions
            for opt in action.option_strings
        }
        tokens = _load_config_tokens(config_path, valid)
        argv = [argv[0]] + tokens + argv[1:]
    return parser.parse_args(argv)


def _to_config(ns: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig(mode=ns.mode)
    for key, value in vars(ns).items():
        if key in ("mode", "config", "no_imp", "no_rqda"):
            continue
        if value is not None and hasattr(config, key):
            setattr(config, key, value)
    if getattr(ns, "no_imp", False):
        config.with_imp = False
    if getattr(ns, "no_rqda", False):
        config.with_rqda = False
    return config.validate()


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        ns = parse_args(argv)
        config = _to_config(ns)
        if config.mode == "synth":
            report = run_synth(config)
        elif config.mode == "real":
            report = run_real(config)
        elif config.mode == "histogram":
            paths = run_histogram(config)
            print(f"wrote {paths[0]} and {paths[1]}")
            return 0
        else:
            summary = run_estimate(config)
            text = json.dumps(summary, indent=2)
            if config.out:
                try:
                    with open(config.out, "w") as handle:
                        handle.write(text + "\n")
                except OSError as exc:
                    raise DataError(f"cannot write {config.out}: {exc}") from exc
            else:
                print(text)
            return 0
        if config.out:
            emit_report(report, config.out, config.fmt)
            print(f"wrote {config.out} ({len(report.cells)} cells)")
        else:
            for cell in report.cells:
                print(
                    f"{cell.classifier:12s} n={cell.n:<6d} p={cell.p:<5d} "
                    f"error={cell.mean_error:.6f} +- {cell.std_error:.6f} "
                    f"reps={cell.reps} failures={cell.failures}"
                )
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
