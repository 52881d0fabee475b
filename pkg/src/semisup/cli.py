"""Command-line interface: ``semisup estimate | simulate | bounds``.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .basis import BasisSpec
from .core import InputError, LabeledData, NumericError, SemisupError, UnlabeledData
from .estimators import (PredictionModelSet, Regime, efficient_estimate, ppi_estimate,
                         ppi_plus_plus_baseline, safe_estimate, supervised_estimate)
from .problems import PROBLEMS, make_problem
from .simulate import (FAMILIES, DgpSpec, McConfig, bounds_table, estimate_bounds,
                       parse_estimator, run_monte_carlo)

EXIT_INPUT = 2
EXIT_NUMERIC = 3

METHODS = ("supervised", "safe", "efficient", "ppi", "ppi++")
RESPONSES = {"mean": ("y",), "poisson_glm": ("y",), "variance": ("y",),
             "kendall": ("u", "v"), "ate": ("a", "y")}

_DGP_SCHEMA = {
    "oneOf": [
        {"type": "string", "enum": sorted(FAMILIES)},
        {"type": "object", "additionalProperties": False, "required": ["name"],
         "properties": {
             "name": {"type": "string"},
             "terms": {"type": "array", "items": {
                 "type": "array", "minItems": 2, "maxItems": 2,
                 "prefixItems": [{"type": "number"},
                                 {"type": "array", "items": {"type": "integer", "minimum": 0},
                                  "minItems": 2, "maxItems": 2}]}},
             "link": {"enum": ["identity", "exp"]},
             "noise": {"enum": ["normal", "poisson"]},
             "response": {"enum": ["scalar", "pair"]},
             "problem": {"enum": sorted(PROBLEMS)}}},
    ]
}

ESTIMATE_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "labeled": {"type": "string"},
        "unlabeled": {"type": "string"},
        "labeled_predictions": {"type": "string"},
        "unlabeled_predictions": {"type": "string"},
        "problem": {"enum": sorted(PROBLEMS)},
        "method": {"enum": list(METHODS)},
        "basis": {"type": "string"},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "iss_mean": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "iss_gram": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "out": {"type": "string"},
        "table": {"type": "string"},
    },
}

SIMULATE_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["dgp"],
    "properties": {
        "dgp": _DGP_SCHEMA,
        "problem": {"enum": sorted(PROBLEMS)},
        "n": {"type": "integer", "minimum": 2},
        "gammas": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}},
        "replications": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer"},
        "estimators": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "prediction_sigma": {"type": "number", "minimum": 0},
        "out": {"type": "string"},
    },
}

BOUNDS_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["dgp"],
    "properties": {
        "dgp": _DGP_SCHEMA,
        "problem": {"enum": sorted(PROBLEMS)},
        "gammas": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "sample_size": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer"},
        "method": {"enum": ["auto", "closed_form", "nested_mc"]},
        "inner_draws": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
}


# ---------------------------------------------------------------- input files

def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row. Ragged or non-numeric rows are
    rejected with the offending line number."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise InputError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise InputError(f"{path}: row at line {line} has {len(row)} fields, "
                                 f"expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InputError(f"{path}: non-numeric value in row at line {line}") from None
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def _covariate_columns(header, problem: str) -> list[int]:
    pattern = r"[xu]\d+" if problem == "ate" else r"x\d+"
    cols = [i for i, h in enumerate(header) if re.fullmatch(pattern, h)]
    return sorted(cols, key=lambda i: int(header[i][1:]))


def _prediction_columns(header, q: int) -> list[list[int]]:
    """Group pred_k (q = 1) or pred_k_1..pred_k_q columns by model k."""
    groups = {}
    for i, h in enumerate(header):
        m = re.fullmatch(r"pred_(\d+)(?:_(\d+))?", h)
        if m:
            groups.setdefault(int(m.group(1)), {})[int(m.group(2) or 1)] = i
    out = []
    for k in sorted(groups):
        g = groups[k]
        if sorted(g) != list(range(1, q + 1)):
            raise InputError(f"prediction model {k} needs {q} column(s)")
        out.append([g[j] for j in range(1, q + 1)])
    return out


def load_inputs(problem_name: str, labeled_path, unlabeled_path=None,
                labeled_pred_path=None, unlabeled_pred_path=None):
    header, data = read_table(labeled_path)
    xcols = _covariate_columns(header, problem_name)
    if not xcols:
        raise InputError(f"{labeled_path}: no covariate columns (x1, x2, ...)")
    ycols = []
    for name in RESPONSES[problem_name]:
        if name not in header:
            raise InputError(f"{labeled_path}: problem {problem_name} needs a {name!r} column")
        ycols.append(header.index(name))
    labeled = LabeledData(data[:, xcols], data[:, ycols])
    q = len(ycols)
    xnames = [header[i] for i in xcols]

    lab_preds = [data[:, g] for g in _prediction_columns(header, q)]
    if unlabeled_path is not None:
        uheader, udata = read_table(unlabeled_path)
        missing = [c for c in xnames if c not in uheader]
        if missing:
            raise InputError(f"{unlabeled_path}: missing covariate columns {missing}")
        unlabeled = UnlabeledData(udata[:, [uheader.index(c) for c in xnames]], d=len(xnames))
        unl_preds = [udata[:, g] for g in _prediction_columns(uheader, q)]
    else:
        unlabeled = UnlabeledData.empty(labeled.d)
        unl_preds = [np.empty((0, q)) for _ in lab_preds]
    if labeled_pred_path is not None:
        ph, pd = read_table(labeled_pred_path)
        lab_preds = [pd[:, g] for g in _prediction_columns(ph, q)]
    if unlabeled_pred_path is not None:
        ph, pd = read_table(unlabeled_pred_path)
        unl_preds = [pd[:, g] for g in _prediction_columns(ph, q)]
    models = None
    if lab_preds:
        if len(unl_preds) != len(lab_preds):
            raise InputError("labeled and unlabeled inputs carry different numbers of prediction models")
        for k, (pl, pu) in enumerate(zip(lab_preds, unl_preds)):
            if pl.shape[0] != labeled.n or pu.shape[0] != unlabeled.N:
                raise InputError(f"prediction model {k + 1} does not align with the data rows")
        models = PredictionModelSet(tuple(lab_preds), tuple(unl_preds))
    return labeled, unlabeled, models


# ---------------------------------------------------------------- helpers

def load_config(path, schema) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    validate(cfg, schema)
    return cfg


def validate(cfg, schema) -> None:
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise InputError(f"config error at {where}: {exc.message}") from None


def dgp_from_config(value) -> DgpSpec:
    if isinstance(value, str):
        return FAMILIES[value]
    return DgpSpec(value["name"], tuple(tuple(t) for t in value.get("terms", ())),
                   value.get("link", "identity"), value.get("noise", "normal"),
                   value.get("response", "scalar"), value.get("problem", "mean"))


def _write(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def report_table(report) -> str:
    rows = ["component,theta,se,ci_lower,ci_upper"]
    for j in range(report.p):
        rows.append(",".join([str(j)] + [format(float(v), ".12g") for v in
                                         (report.theta[j], report.se[j],
                                          report.ci_lower[j], report.ci_upper[j])]))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- commands

def cmd_estimate(args) -> int:
    cfg = load_config(args.config, ESTIMATE_SCHEMA)
    opts = {k: v for k, v in vars(args).items() if v is not None}
    merged = {**cfg, **{k: opts[k] for k in ESTIMATE_SCHEMA["properties"] if k in opts}}
    validate(merged, ESTIMATE_SCHEMA)
    if "labeled" not in merged:
        raise InputError("a labeled CSV is required (--labeled)")
    problem_name = merged.get("problem", "mean")
    method = merged.get("method", "safe")
    level = merged.get("level", 0.95)
    labeled, unlabeled, models = load_inputs(
        problem_name, merged["labeled"], merged.get("unlabeled"),
        merged.get("labeled_predictions"), merged.get("unlabeled_predictions"))
    problem = make_problem(problem_name)
    regime = Regime.oss()
    if "iss_mean" in merged:
        regime = Regime.iss(merged["iss_mean"], merged.get("iss_gram"))
    if method == "supervised":
        report = supervised_estimate(problem, labeled, level, unlabeled)
    elif method == "safe":
        basis = BasisSpec.parse(merged.get("basis", "identity"))
        report = safe_estimate(problem, labeled, unlabeled, basis, regime, level)
    elif method == "efficient":
        basis = BasisSpec.parse(merged.get("basis", "spline:3"))
        if basis.kind != "spline":
            raise InputError("the efficient estimator takes --basis spline:DF")
        report = efficient_estimate(problem, labeled, unlabeled, basis.df, regime, level)
    else:
        if models is None:
            raise InputError(f"method {method} needs prediction columns pred_1, pred_2, ...")
        if method == "ppi":
            report = ppi_estimate(problem, labeled, unlabeled, models, level)
        else:
            report = ppi_plus_plus_baseline(problem, labeled, unlabeled, models, level)
    _write(json.dumps(report.to_dict(), indent=2) + "\n", merged.get("out"))
    if "table" in merged:
        _write(report_table(report), merged["table"])
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, SIMULATE_SCHEMA)
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    for label in cfg.get("estimators", ()):
        parse_estimator(label)
    kw = {k: cfg[k] for k in ("n", "replications", "base_seed", "level", "problem",
                              "prediction_sigma") if k in cfg}
    if "gammas" in cfg:
        kw["gammas"] = tuple(cfg["gammas"])
    if "estimators" in cfg:
        kw["estimators"] = tuple(cfg["estimators"])
    config = McConfig(dgp=dgp_from_config(cfg["dgp"]), **kw)
    result = run_monte_carlo(config)
    _write(result.to_csv(), args.out or cfg.get("out"))
    return 0


def cmd_bounds(args) -> int:
    cfg = load_config(args.config, BOUNDS_SCHEMA)
    if args.seed is not None:
        cfg["seed"] = args.seed
    kw = {k: cfg[k] for k in ("problem", "sample_size", "seed", "method", "inner_draws")
          if k in cfg}
    if "gammas" in cfg:
        kw["gammas"] = tuple(cfg["gammas"])
    result = estimate_bounds(dgp_from_config(cfg["dgp"]), **kw)
    _write(bounds_table(result), args.out or cfg.get("out"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semisup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a parameter from labeled + unlabeled CSVs")
    est.add_argument("--labeled")
    est.add_argument("--unlabeled")
    est.add_argument("--labeled-predictions", dest="labeled_predictions")
    est.add_argument("--unlabeled-predictions", dest="unlabeled_predictions")
    est.add_argument("--config")
    est.add_argument("--method", choices=METHODS)
    est.add_argument("--problem", choices=sorted(PROBLEMS))
    est.add_argument("--basis", help="identity | poly:R | spline:DF")
    est.add_argument("--level", type=float)
    est.add_argument("--out", help="report JSON path (default: stdout)")
    est.add_argument("--table", help="optional per-component CSV")
    est.add_argument("--seed", type=int, help="accepted for symmetry; estimation is deterministic")
    est.set_defaults(func=cmd_estimate)

    for name, func, text in (("simulate", cmd_simulate, "run a Monte Carlo study"),
                             ("bounds", cmd_bounds, "estimate ISS/OSS efficiency bounds")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="CSV path (default: stdout)")
        p.add_argument("--seed", type=int, help="overrides the seed in the config")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"semisup: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SemisupError, ValueError) as exc:
        print(f"semisup: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
