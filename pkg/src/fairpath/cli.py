"""Command-line entry point: ``fairpath <command> [options]``.

Every command writes one self-contained JSON report (CSV for ``simulate`` and
``predict``) that echoes the configuration and seed it ran with, so a run can
be repeated from its report alone.

Exit codes: 0 success, 1 invalid input, 2 effect not identified, 3 bounds not
reachable.
"""
from __future__ import annotations

import argparse
import os
import re
import sys

import numpy as np

from .constrained import Bounds, FairFitResult, fit_fair, select_outcome_model
from .data import Dataset, load_dataset, load_roles
from .estimators import estimate
from .exceptions import FairPathError, InfeasibleConstraintError, NotIdentifiedError
from .glm import Family, ModelSpec, fit_glm
from .graph import Scale, check_identification
from .io import load_graph, load_pse, read_json, write_json
from .predict import FairPredictor, batch_predict
from .simulate import bundled_sem, generate, load_sem

EXIT_INVALID = 1
EXIT_NOT_IDENTIFIED = 2
EXIT_INFEASIBLE = 3

_FAMILY_PREFIX = re.compile(r"^\s*[A-Za-z_]+\s*:\s*[^~:]*~")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p, data=True, models=True):
    p.add_argument("--graph", required=True, help="causal graph JSON")
    p.add_argument("--pse", required=True, help="path-specific effect JSON")
    if data:
        p.add_argument("--data", required=True, help="CSV with a header row")
        p.add_argument("--roles", help="column roles, inline JSON or a JSON file")
    if models:
        p.add_argument("--model", action="append", default=[], metavar="FORMULA",
                       help='model formula such as "Y ~ A + M"; repeat per variable')
        p.add_argument("--estimator", default="triply_robust")
        p.add_argument("--mc-draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")


def _bounds_args(p, lower, upper):
    p.add_argument("--lower", type=float, default=lower)
    p.add_argument("--upper", type=float, default=upper)
    p.add_argument("--scale", choices=[s.value for s in Scale], default=None,
                   help="bound scale (default: the effect spec's scale)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairpath", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("identify", help="check whether the effect is identified")
    _common(p, data=False, models=False)

    p = sub.add_parser("estimate", help="estimate the path-specific effect")
    _common(p)
    p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                   help="percentile bootstrap with N refitted replicates")

    p = sub.add_parser("fit-fair", help="constrained fit of the fair world")
    _common(p)
    _bounds_args(p, None, None)
    p.add_argument("--strategy", default="auto", choices=["auto", "box", "augmented_lagrangian"])
    p.add_argument("--bootstrap", type=int, default=0, metavar="N")

    p = sub.add_parser("predict", help="fair predictions from a fit-fair report")
    p.add_argument("--fit", required=True, help="fit-fair JSON report")
    p.add_argument("--data", required=True)
    p.add_argument("--w", help="comma-separated override of the W set")
    p.add_argument("--mc-draws", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="draw a dataset from a structural equation model")
    p.add_argument("--sem", default="sim1.json",
                   help="SEM JSON path, or the name of a bundled SEM (default sim1.json)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("select-model", help="choose the outcome model by fair validation rMSE")
    _common(p)
    _bounds_args(p, None, None)
    p.add_argument("--candidate", action="append", default=[], required=True, metavar="FORMULA",
                   help="outcome model candidate; repeat for each")
    p.add_argument("--validate", help="validation CSV (default: split --data in half)")
    p.add_argument("--train-fraction", type=float, default=0.5)
    return parser


def parse_model(text: str, data: Dataset) -> ModelSpec:
    """Formula with the family taken from an explicit prefix, else from the response column."""
    if _FAMILY_PREFIX.match(text):
        return ModelSpec.parse(text)
    spec = ModelSpec.parse(text)
    if spec.response in data.columns and np.isin(data[spec.response], (0.0, 1.0)).all():
        return ModelSpec.parse(text, Family.BERNOULLI)
    return spec


def _roles(args, spec) -> dict:
    roles = load_roles(getattr(args, "roles", None))
    for col, role in ((spec.treatment, "treatment"), (spec.outcome, "outcome")):
        if roles.setdefault(col, role) != role:
            raise FairPathError(f"role map gives {col!r} role {roles[col]!r}; the effect spec "
                                f"needs {role!r}")
    return roles


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "out"}


def _bounds(args, spec) -> Bounds:
    scale = Scale(args.scale) if args.scale else spec.scale
    default = Bounds() if scale is Scale.ODDS_RATIO else Bounds(-0.05, 0.05, scale)
    lower = default.lower if args.lower is None else args.lower
    upper = default.upper if args.upper is None else args.upper
    return Bounds(lower, upper, scale)


def _emit(report, args):
    text = write_json(report, args.out)
    if args.out is None:
        sys.stdout.write(text)


def _percentile(values) -> dict:
    values = np.asarray([v for v in values if np.isfinite(v)])
    if len(values) == 0:
        return {"replicates": 0}
    lo, hi = np.percentile(values, [2.5, 97.5])
    return {"replicates": int(len(values)), "lower_95": float(lo), "upper_95": float(hi),
            "sd": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0}


def _replicates(data: Dataset, n, seed):
    for b in range(n):
        rng = np.random.default_rng([seed, 1000 + b])
        yield b, data.take(rng.integers(0, len(data), len(data)))


def cmd_identify(args):
    graph, spec = load_graph(args.graph), load_pse(args.pse)
    verdict = check_identification(graph, spec)
    _emit({"config": _config(args), "seed": args.seed, "verdict": verdict.to_dict()}, args)
    if not verdict.identified:
        raise NotIdentifiedError(verdict)
    return 0


def _inputs(args):
    graph, spec = load_graph(args.graph), load_pse(args.pse)
    data = load_dataset(args.data, _roles(args, spec))
    specs = [parse_model(m, data) for m in args.model]
    return graph, spec, data, specs


def cmd_estimate(args):
    graph, spec, data, specs = _inputs(args)
    verdict = check_identification(graph, spec)
    if not verdict.identified:
        raise NotIdentifiedError(verdict)

    def run(frame):
        models = {s.response: fit_glm(frame, s) for s in specs}
        return estimate(args.estimator, models, frame, spec, graph, mc_draws=args.mc_draws,
                        seed=args.seed)

    report = {"config": _config(args), "seed": args.seed, **run(data).to_dict(),
              "models": [str(s) for s in specs]}
    if args.bootstrap:
        report["bootstrap"] = _percentile(
            [_safe(lambda: run(sample).value) for _, sample in _replicates(data, args.bootstrap, args.seed)])
    _emit(report, args)
    return 0


def _safe(fn):
    try:
        return fn()
    except FairPathError:
        return float("nan")


def cmd_fit_fair(args):
    graph, spec, data, specs = _inputs(args)
    bounds = _bounds(args, spec)

    def run(frame, raise_infeasible=True):
        return fit_fair(frame, graph, spec, args.estimator, specs, bounds, mc_draws=args.mc_draws,
                        seed=args.seed, strategy=args.strategy, raise_infeasible=raise_infeasible)

    code = 0
    try:
        result = run(data)
    except InfeasibleConstraintError as exc:
        result, code = exc.result, EXIT_INFEASIBLE
    report = {"config": _config(args), "seed": args.seed, **result.to_dict()}
    if args.bootstrap:
        fits = [_safe(lambda: run(sample, False)) for _, sample in
                _replicates(data, args.bootstrap, args.seed)]
        fits = [f for f in fits if isinstance(f, FairFitResult)]
        report["bootstrap"] = {
            "achieved_pse": _percentile([f.achieved_pse for f in fits]),
            "unconstrained_pse": _percentile([f.unconstrained_pse for f in fits]),
        }
    _emit(report, args)
    if code:
        print(f"fairpath: bounds [{bounds.lower}, {bounds.upper}] not reached; "
              f"closest value {result.achieved_pse:.6g}", file=sys.stderr)
    return code


def cmd_predict(args):
    report = read_json(args.fit)
    fit = FairFitResult.from_dict(report)
    data = load_dataset(args.data)
    kwargs = {"mc_draws": args.mc_draws if args.mc_draws is not None else fit.mc_draws or 1000,
              "seed": args.seed if args.seed is not None else fit.seed}
    if args.w:
        kwargs["w_set"] = tuple(c.strip() for c in args.w.split(",") if c.strip())
    pred = FairPredictor(fit, **kwargs)
    out = batch_predict(pred, data).to_frame()
    if args.format == "csv":
        text = out.to_csv(index=False, float_format="%.17g")
    else:
        text = out.to_json(orient="records", lines=True, double_precision=15)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args):
    sem = load_sem(args.sem) if os.path.isfile(args.sem) else bundled_sem(args.sem)
    data = generate(sem, args.n, args.seed)
    text = data.frame.to_csv(index=False, float_format="%.17g")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_select_model(args):
    graph, spec, data, fixed = _inputs(args)
    if args.validate:
        train, validate = data, load_dataset(args.validate, data.roles)
    else:
        train, validate = data.split(args.train_fraction, args.seed)
    candidates = [parse_model(c, data) for c in args.candidate]
    sel = select_outcome_model(candidates, train, validate, fixed, graph, spec, _bounds(args, spec),
                               args.estimator, mc_draws=args.mc_draws, seed=args.seed)
    _emit({"config": _config(args), "seed": args.seed, "chosen": str(sel.chosen), "rmse": sel.rmse,
           "candidates": [c.to_dict() for c in sel.candidates]}, args)
    return 0


COMMANDS = {
    "identify": cmd_identify,
    "estimate": cmd_estimate,
    "fit-fair": cmd_fit_fair,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "select-model": cmd_select_model,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NotIdentifiedError as exc:
        print(f"fairpath: {exc}", file=sys.stderr)
        return EXIT_NOT_IDENTIFIED
    except InfeasibleConstraintError as exc:
        print(f"fairpath: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FairPathError, ValueError, OSError) as exc:
        print(f"fairpath: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
