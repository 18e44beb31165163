"""Command-line front end.

Subcommands::

    scorelab score       evaluate one (corrected) score, print a JSON line
    scorelab experiment  run a Monte Carlo experiment from a JSON config
    scorelab density     export density curves of the score streams as CSV

Exit codes: 0 success, 2 usage or configuration error, 3 numerical domain
error, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .distributions import GammaParams, GaussianParams, InvGammaParams, MvGaussianParams, RngSeed
from .errors import ConfigError, ConvergenceError, DomainError
from .experiments import (
    CurveKind,
    DensityGrid,
    ExperimentConfig,
    check_variance_inequality,
    density_curves,
    run_experiment,
)
from .models import EivModel, ModelA, ModelB
from .numerics import QuadratureSpec
from . import scores as sc

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "SCORELAB_SEED"

log = logging.getLogger("scorelab")


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".9g")


# --- config schema ------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_U64 = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}


def _obj(props, required=None):
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": False,
    }


CONFIG_SCHEMA = _obj(
    {
        "model": {
            "oneOf": [
                _obj(
                    {
                        "type": {"const": "additive-gaussian"},
                        "truth": _obj({"mean": _NUM, "variance": _POS}),
                        "noise_variance": _NONNEG,
                    }
                ),
                _obj(
                    {
                        "type": {"const": "multiplicative-gamma"},
                        "truth": _obj({"shape": _POS, "rate": _POS}),
                        "error": _obj({"shape": _POS, "scale": _POS}),
                    }
                ),
                _obj(
                    {
                        "type": {"const": "eiv"},
                        "truth": _obj({"mean": _VEC, "covariance": _MAT}),
                        "obs_bias": _VEC,
                        "obs_cov": _MAT,
                        "fc_bias": _VEC,
                        "fc_cov": _MAT,
                    }
                ),
            ]
        },
        "forecast": {
            "oneOf": [
                _obj({"family": {"const": "gaussian"}, "mean": _NUM, "variance": _POS}),
                _obj({"family": {"const": "gamma"}, "shape": _POS, "rate": _POS}),
                _obj({"family": {"const": "mv-gaussian"}, "mean": _VEC, "covariance": _MAT}),
            ]
        },
        "score": {"enum": ["log", "crps"]},
        "corrections": {
            "type": "array",
            "items": {"enum": ["none_on_truth", "none_on_obs", "wedge", "vee", "vee_joint"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "n": {"type": "integer", "minimum": 2},
        "seed": _U64,
        "stream": _U64,
        "density_grid": _obj({"lo": _NUM, "hi": _NUM, "points": {"type": "integer", "minimum": 2}}),
        "bandwidth": _POS,
        "quadrature": _obj(
            {
                "relative_tolerance": _POS,
                "max_subdivisions": {"type": "integer", "minimum": 1},
                "node_count": {"type": "integer", "minimum": 2},
            },
            required=[],
        ),
        "check_inequality": {"type": "boolean"},
        "output": _obj({"path": {"type": "string"}, "format": {"enum": ["csv", "json"]}}, required=[]),
    },
    required=["model", "forecast", "score", "corrections", "n"],
)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {where}: {exc.message}") from exc
    return doc


def _model_from_doc(doc):
    kind = doc["type"]
    if kind == "additive-gaussian":
        return ModelA(GaussianParams(**doc["truth"]), doc["noise_variance"])
    if kind == "multiplicative-gamma":
        return ModelB(GammaParams(**doc["truth"]), InvGammaParams(**doc["error"]))
    return EivModel(
        MvGaussianParams(doc["truth"]["mean"], doc["truth"]["covariance"]),
        doc["obs_bias"],
        doc["obs_cov"],
        doc["fc_bias"],
        doc["fc_cov"],
    )


def _forecast_from_doc(doc):
    fam = doc["family"]
    if fam == "gaussian":
        return GaussianParams(doc["mean"], doc["variance"])
    if fam == "gamma":
        return GammaParams(doc["shape"], doc["rate"])
    return MvGaussianParams(doc["mean"], doc["covariance"])


def config_from_doc(doc: dict, threads: int = 1) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a validated config document."""
    try:
        grid = doc.get("density_grid")
        return ExperimentConfig(
            model=_model_from_doc(doc["model"]),
            forecast=_forecast_from_doc(doc["forecast"]),
            score_kind=doc["score"],
            corrections=tuple(doc["corrections"]),
            n=doc["n"],
            seed=RngSeed(doc.get("seed", 0), doc.get("stream", 0)),
            density_grid=DensityGrid(**grid) if grid else None,
            bandwidth=doc.get("bandwidth"),
            quadrature=QuadratureSpec(**doc.get("quadrature", {})),
            threads=threads,
        )
    except DomainError as exc:
        raise ConfigError(f"invalid parameters in config: {exc}") from exc


def config_hash(doc: dict) -> str:
    canonical = {k: v for k, v in doc.items() if k != "output"}
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve_seed(flag_seed, doc: dict) -> dict:
    """Apply the seed precedence flag > environment > config file."""
    doc = dict(doc)
    if flag_seed is not None:
        doc["seed"] = flag_seed
    elif os.environ.get(SEED_ENV):
        try:
            doc["seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an unsigned integer") from exc
    if not 0 <= doc.get("seed", 0) <= 2**64 - 1:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return doc


# --- writers --------------------------------------------------------------------


def _metadata(doc):
    return {
        "config_hash": config_hash(doc),
        "library_version": __version__,
        "seed": doc.get("seed", 0),
        "stream": doc.get("stream", 0),
    }


def experiment_json(summary, report, doc) -> str:
    payload = {
        "metadata": _metadata(doc),
        "n": summary.n,
        "records": {
            name: {
                "mean": r.mean,
                "mean_std_error": r.mean_std_error,
                "variance": r.variance,
                "variance_std_error": r.variance_std_error,
            }
            for name, r in summary.records.items()
        },
    }
    if report is not None:
        payload["inequality"] = {
            "holds": report.holds,
            "checks": [
                {"larger": hi, "smaller": lo, "difference": d, "margin_se": m}
                for (hi, lo), d, m in zip(report.pairs, report.differences, report.margins)
            ],
        }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


EXPERIMENT_COLUMNS = [
    "record",
    "correction",
    "mean",
    "variance",
    "mean_std_error",
    "variance_std_error",
    "difference",
    "margin_se",
    "holds",
    "n",
    "seed",
    "stream",
    "config_hash",
    "library_version",
]


def experiment_csv(summary, report, doc) -> str:
    meta = _metadata(doc)
    tail = [str(summary.n), str(meta["seed"]), str(meta["stream"]), meta["config_hash"], meta["library_version"]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(EXPERIMENT_COLUMNS)
    for name, r in summary.records.items():
        stats = [_fmt(v) for v in (r.mean, r.variance, r.mean_std_error, r.variance_std_error)]
        w.writerow(["summary", name, *stats, "", "", ""] + tail)
    if report is not None:
        for (hi, lo), d, m in zip(report.pairs, report.differences, report.margins):
            w.writerow(
                ["inequality", f"{hi}>={lo}", "", "", "", "", _fmt(d), _fmt(m), str(m > -2.0).lower()] + tail
            )
    return buf.getvalue()


def density_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["label", "kind", "x", "density"])
    for c in curves:
        if c.kind is CurveKind.MEAN_MARKER:
            w.writerow([c.label, c.kind.value, _fmt(c.abscissae[0]), ""])
            continue
        for x, d in zip(c.abscissae, c.ordinates):
            w.writerow([c.label, c.kind.value, _fmt(x), _fmt(d)])
        if c.coverage < 0.99:
            w.writerow([c.label, "warning", _fmt(c.coverage), ""])
    return buf.getvalue()


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# --- score subcommand ---------------------------------------------------------


def _matrix(text):
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad matrix {text!r}; use '1,0;0,1'") from exc
    return rows


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"missing required flag(s): {flags}")


def _scalar(values, flag):
    if values is None:
        return None
    if len(values) != 1:
        raise UsageError(f"{flag} takes a single value here")
    return values[0]


def _variance(sd, flag):
    if not sd > 0:
        raise DomainError(f"{flag} must be positive")
    return sd * sd


def _score_forecast(args):
    if args.fc_shape is not None or args.fc_rate is not None:
        _need(args, "fc_shape", "fc_rate")
        return GammaParams(args.fc_shape, args.fc_rate)
    if args.model == "eiv" or args.fc_cov is not None:
        _need(args, "fc_mean", "fc_cov")
        return MvGaussianParams(args.fc_mean, args.fc_cov)
    _need(args, "fc_mean", "fc_sd")
    return GaussianParams(_scalar(args.fc_mean, "--fc-mean"), _variance(args.fc_sd, "--fc-sd"))


def compute_score(args) -> sc.ScoreValue:
    """Validate the flag combination and evaluate the requested score."""
    if args.correction in ("vee", "vee-joint") and args.model == "none":
        raise UsageError(f"--correction {args.correction} requires a --model")
    if args.correction == "vee-joint" and args.model != "eiv":
        raise UsageError("--correction vee-joint requires --model eiv")
    if args.correction == "wedge":
        if args.score != "log" or args.model not in ("none", "additive-gaussian"):
            raise UsageError("wedge correction exists only for the log score under additive Gaussian noise")
        _need(args, "omega2")
    if args.model == "eiv" and args.score != "log":
        raise UsageError("only the log score is available under the EIV model")
    _need(args, "obs")

    f = _score_forecast(args)
    family_ok = {
        "additive-gaussian": GaussianParams,
        "multiplicative-gamma": GammaParams,
        "eiv": MvGaussianParams,
    }.get(args.model)
    if args.correction != "none" and family_ok is not None and not isinstance(f, family_ok):
        raise UsageError(f"--model {args.model} needs a {family_ok.__name__} forecast")
    if args.correction == "wedge" and not isinstance(f, GaussianParams):
        raise UsageError("wedge correction needs a Gaussian forecast (--fc-mean, --fc-sd)")

    if isinstance(f, MvGaussianParams):
        obs = np.asarray(args.obs, dtype=float)
    else:
        obs = _scalar(args.obs, "--obs")

    if args.correction == "none":
        return sc.base_score(args.score, f, obs)
    if args.correction == "wedge":
        return sc.wedge_log_score_gaussian(f, obs, args.omega2)

    if args.model == "additive-gaussian":
        _need(args, "truth_mean", "truth_sd", "omega2")
        truth = GaussianParams(_scalar(args.truth_mean, "--truth-mean"), _variance(args.truth_sd, "--truth-sd"))
        model = ModelA(truth, args.omega2)
        fn = sc.vee_log_score_gaussian if args.score == "log" else sc.vee_crps_gaussian
        return fn(f, obs, model)
    if args.model == "multiplicative-gamma":
        _need(args, "truth_shape", "truth_rate", "err_shape", "err_scale")
        model = ModelB(GammaParams(args.truth_shape, args.truth_rate), InvGammaParams(args.err_shape, args.err_scale))
        if args.score == "log":
            return sc.vee_log_score_gamma(f, obs, model)
        return sc.vee_crps_gamma(f, obs, model, QuadratureSpec(relative_tolerance=args.rtol))
    _need(args, "truth_mean", "truth_cov", "obs_bias", "obs_cov", "fcerr_bias", "fcerr_cov")
    model = EivModel(
        MvGaussianParams(args.truth_mean, args.truth_cov),
        args.obs_bias,
        args.obs_cov,
        args.fcerr_bias,
        args.fcerr_cov,
    )
    z = None
    if args.correction == "vee-joint":
        _need(args, "fc_obs")
        z = np.asarray(args.fc_obs, dtype=float)
    return sc.eiv_vee_log_score(f, obs, z, model)


def cmd_score(args) -> int:
    try:
        result = compute_score(args)
    except UsageError as exc:
        print(f"scorelab score: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    value = result.value
    out = {
        "correction": args.correction,
        "numeric_error": result.numeric_error,
        "score_kind": result.score_kind.value,
        "value": float(value),
    }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# --- experiment and density subcommands ----------------------------------------


def _prepare(args):
    doc = resolve_seed(args.seed, load_config(args.config))
    return doc, config_from_doc(doc, threads=args.threads)


def cmd_experiment(args) -> int:
    doc, config = _prepare(args)
    out_doc = doc.get("output", {})
    path = args.out or out_doc.get("path")
    fmt = args.format or out_doc.get("format") or "csv"
    if not path:
        raise ConfigError("no output path: pass --out or set output.path in the config")
    summary = run_experiment(config)
    report = check_variance_inequality(config, summary) if doc.get("check_inequality") else None
    text = experiment_json(summary, report, doc) if fmt == "json" else experiment_csv(summary, report, doc)
    _write(path, text)
    parts = [f"{name}: mean={r.mean:.6g} var={r.variance:.6g}" for name, r in summary.records.items()]
    line = f"experiment n={summary.n} seed={doc.get('seed', 0)} " + "; ".join(parts)
    if report is not None:
        line += f"; inequality holds={str(report.holds).lower()}"
    print(line)
    return EXIT_OK


def cmd_density(args) -> int:
    doc, config = _prepare(args)
    if config.density_grid is None:
        raise ConfigError("density needs a density_grid in the config")
    path = args.out or doc.get("output", {}).get("path")
    if not path:
        raise ConfigError("no output path: pass --out or set output.path in the config")
    curves = density_curves(config)
    _write(path, density_csv(curves))
    _write(str(path) + ".meta.json", json.dumps(_metadata(doc), sort_keys=True, indent=2) + "\n")
    labels = [c.label for c in curves if c.kind is not CurveKind.MEAN_MARKER]
    print(f"density curves={','.join(labels)} mean={_fmt(curves[-1].abscissae[0])} -> {path}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scorelab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"scorelab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("score", help="evaluate a single score")
    s.add_argument("--score", choices=["log", "crps"], required=True)
    s.add_argument("--correction", choices=["none", "wedge", "vee", "vee-joint"], default="none")
    s.add_argument(
        "--model", choices=["none", "additive-gaussian", "multiplicative-gamma", "eiv"], default="none"
    )
    s.add_argument("--obs", type=float, nargs="+", help="verifying observation y")
    s.add_argument("--fc-obs", type=float, nargs="+", help="forecast variable z (EIV)")
    g = s.add_argument_group("forecast")
    g.add_argument("--fc-mean", type=float, nargs="+")
    g.add_argument("--fc-sd", type=float)
    g.add_argument("--fc-cov", type=_matrix)
    g.add_argument("--fc-shape", type=float)
    g.add_argument("--fc-rate", type=float)
    m = s.add_argument_group("noise model")
    m.add_argument("--omega2", type=float, help="additive noise variance")
    m.add_argument("--truth-mean", type=float, nargs="+")
    m.add_argument("--truth-sd", type=float)
    m.add_argument("--truth-cov", type=_matrix)
    m.add_argument("--truth-shape", type=float)
    m.add_argument("--truth-rate", type=float)
    m.add_argument("--err-shape", type=float)
    m.add_argument("--err-scale", type=float)
    m.add_argument("--obs-bias", type=float, nargs="+")
    m.add_argument("--obs-cov", type=_matrix)
    m.add_argument("--fcerr-bias", type=float, nargs="+")
    m.add_argument("--fcerr-cov", type=_matrix)
    s.add_argument("--rtol", type=float, default=1e-8, help="quadrature relative tolerance")
    s.set_defaults(func=cmd_score)

    for name, func, hlp in (
        ("experiment", cmd_experiment, "run a Monte Carlo experiment"),
        ("density", cmd_density, "export score density curves"),
    ):
        e = sub.add_parser(name, help=hlp)
        e.add_argument("--config", required=True)
        e.add_argument("--out")
        if name == "experiment":
            e.add_argument("--format", choices=["csv", "json"])
        e.add_argument("--seed", type=int, help=f"overrides ${SEED_ENV} and the config seed")
        e.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        e.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"scorelab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ConvergenceError) as exc:
        print(f"scorelab {args.command}: numeric domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"scorelab {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def run():
    sys.exit(main())
