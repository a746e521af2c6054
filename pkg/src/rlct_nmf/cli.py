"""Command-line front end.

Every randomized subcommand needs ``--seed N`` or ``--seed auto``; the seed
actually used is written into the JSON report together with the resolved
configuration and the toolkit version.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .bayes_nmf import ChainConfig, PriorBox, default_prior, estimate_generalization_error, \
    generate_dataset
from .divergences import Family
from .errors import EstimationError, ValidationError
from .fileio import load_matrix_csv, make_report, read_dataset, write_dataset, write_report_json
from .model_select import (
    FE_CHAIN,
    estimate_free_energy,
    free_energy_experiment,
    sbic_select,
)
from .rlct_core import (
    ModelDims,
    RrrTruth,
    TrueStructure,
    comparison_table,
    nmf_rlct_bound,
    regular_half_dim,
    rrr_rlct,
    table_to_csv,
    table_to_json,
)
from .volume_probe import check_bound, estimate_volume, fit_lambda


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def default_factors(M: int, N: int, H0: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive factors of rank ``H0``: 1 on a cyclic diagonal, 0.2 elsewhere."""
    A = np.where(np.arange(M)[:, None] % max(H0, 1) == np.arange(H0)[None, :], 1.0, 0.2)
    B = np.where(np.arange(N)[None, :] % max(H0, 1) == np.arange(H0)[:, None], 1.0, 0.2)
    return A, B


def _truth(args) -> TrueStructure:
    if args.h0 == 0:
        return TrueStructure.zero(args.m, args.n)
    if (args.a is None) != (args.b is None):
        raise ValidationError("--a and --b must be given together")
    if args.a is None:
        A, B = default_factors(args.m, args.n, args.h0)
    else:
        A = load_matrix_csv(args.a, header=args.header)
        B = load_matrix_csv(args.b, header=args.header)
    if A.shape != (args.m, args.h0) or B.shape != (args.h0, args.n):
        raise ValidationError(f"factor shapes {A.shape}, {B.shape} do not match "
                              f"M={args.m}, N={args.n}, H0={args.h0}")
    return TrueStructure(args.h0, A, B)


def _truth_config(truth: TrueStructure) -> dict:
    return {"H0": truth.H0,
            "A": None if truth.A is None else truth.A.tolist(),
            "B": None if truth.B is None else truth.B.tolist()}


def _chain_config(args) -> ChainConfig:
    return ChainConfig(args.burn_in, args.samples, args.thinning, args.chains)


def _prior(args, family: Family, truth: TrueStructure | None) -> PriorBox:
    base = default_prior(family, truth)
    lower = base.lower if args.prior_lower is None else args.prior_lower
    upper = base.upper if args.prior_upper is None else args.prior_upper
    return PriorBox(lower, upper)


def _emit(args, report: dict) -> None:
    if getattr(args, "out", None):
        write_report_json(args.out, report)
    else:
        print(json.dumps(report, indent=2))


def _config(args) -> dict:
    skip = {"func", "seed", "out"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k not in skip}


# --- subcommands ------------------------------------------------------------


def cmd_rlct(args) -> int:
    dims = ModelDims(args.m, args.n, args.h)
    truth = TrueStructure(args.h0)
    bound = nmf_rlct_bound(dims, truth)
    print(bound)
    if args.verbose:
        print(f"source: {bound.source.value}")
        r = args.h0 if args.r is None else args.r
        if r <= min(args.m, args.n, args.h):
            print(f"rrr (r={r}): {rrr_rlct(dims, RrrTruth(r))}")
        print(f"regular d/2: {regular_half_dim(dims)}")
    return 0


def cmd_table(args) -> int:
    rows = comparison_table(args.sizes, args.max_h0)
    text = table_to_json(rows) + "\n" if args.format == "json" else table_to_csv(rows, args.sizes)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_volume(args) -> int:
    seed = seeding.resolve_seed(args.seed)
    dims = ModelDims(args.m, args.n, args.h)
    truth = _truth(args)
    scan = estimate_volume(dims, truth, seed=seed, box_upper=args.box_upper,
                           samples=args.samples, workers=args.workers)
    result = {"scan": scan.to_dict()}
    try:
        fit = fit_lambda(scan, args.min_hits)
        result["fit"] = fit.to_dict()
        result["bound_check"] = check_bound(dims, truth, fit).to_dict()
    except EstimationError as err:
        result["fit_error"] = {"message": str(err), "diagnostics": err.diagnostics}
    if args.csv:
        scan.write_csv(args.csv)
    cfg = _config(args)
    cfg["truth"] = _truth_config(truth)
    _emit(args, make_report("volume", cfg, seed, result))
    return 0 if "fit" in result else 3


def cmd_generr(args) -> int:
    seed = seeding.resolve_seed(args.seed)
    family = Family(args.family)
    truth = _truth(args)
    if truth.H0 == 0:
        raise ValidationError("generr needs a truth with H0 >= 1")
    results = []
    for n in args.n_obs:
        est = estimate_generalization_error(
            family, truth, n, args.replications, _chain_config(args), args.test_draws,
            seed=seed, H=args.h, prior=_prior(args, family, truth), workers=args.workers,
            truncate_gaussian=args.truncate_gaussian)
        d = est.to_dict()
        bound = nmf_rlct_bound(ModelDims(args.m, args.n, args.h), truth)
        d["bound"] = str(bound.value)
        d["bound_kind"] = bound.kind.value
        d["within_bound"] = est.n_g <= float(bound.value) + 3 * est.n_stderr
        results.append(d)
    cfg = _config(args)
    cfg["truth"] = _truth_config(truth)
    _emit(args, make_report("generr", cfg, seed, {"estimates": results}))
    return 0


def cmd_free_energy(args) -> int:
    seed = seeding.resolve_seed(args.seed)
    cfg = _config(args)
    if args.data:
        ds = read_dataset(args.data)
        prior = _prior(args, ds.family, ds.truth)
        est = estimate_free_energy(ds, prior, args.h, seed=seed, chain_config=_chain_config(args),
                                   workers=args.workers, rule=args.rule)
        result = {"estimate": est.to_dict(), "prior": prior.to_dict()}
    else:
        family = Family(args.family)
        truth = _truth(args)
        cfg["truth"] = _truth_config(truth)
        prior = _prior(args, family, truth)
        ex = free_energy_experiment(family, truth, args.n_obs, args.replications, seed=seed,
                                    H=args.h, prior=prior, chain_config=_chain_config(args),
                                    workers=args.workers, rule=args.rule)
        result = {"experiment": ex.to_dict(), "prior": prior.to_dict()}
    _emit(args, make_report("free-energy", cfg, seed, result))
    return 0


def cmd_sbic(args) -> int:
    seed = seeding.resolve_seed(args.seed)
    cfg = _config(args)
    if args.data:
        datasets = [read_dataset(args.data)]
    else:
        family = Family(args.family)
        truth = _truth(args)
        cfg["truth"] = _truth_config(truth)
        datasets = [generate_dataset(family, truth, args.n_obs[0], seed, stream=r,
                                     truncate_gaussian=args.truncate_gaussian)
                    for r in range(args.replications)]
    reports = []
    for r, ds in enumerate(datasets):
        prior = _prior(args, ds.family, ds.truth)
        rep = sbic_select(ds, args.candidates, prior, seed=seed,
                          chain_config=_chain_config(args), replication=r, workers=args.workers)
        reports.append(rep)
    if args.csv:
        Path(args.csv).write_text(reports[0].to_csv() if len(reports) == 1 else
                                  "replication,H,score\n" + "".join(
                                      f"{r},{line}\n" for r, rep in enumerate(reports)
                                      for line in rep.to_csv().splitlines()[1:]))
    selected = [rep.selected for rep in reports]
    result = {"reports": [rep.to_dict() for rep in reports], "selected": selected,
              "selection_counts": {str(h): selected.count(h) for h in sorted(set(args.candidates))}}
    _emit(args, make_report("sbic", cfg, seed, result))
    return 0


def cmd_gen_data(args) -> int:
    seed = seeding.resolve_seed(args.seed)
    truth = _truth(args)
    if truth.H0 == 0 and Family(args.family).needs_positive_mean:
        raise ValidationError(f"{args.family} data needs a positive mean; use --h0 >= 1")
    ds = generate_dataset(args.family, truth, args.n_obs[0], seed,
                          truncate_gaussian=args.truncate_gaussian)
    write_dataset(args.out_dir, ds)
    print(f"wrote {ds.n} observations to {args.out_dir} (seed {seed})")
    return 0


# --- parser -------------------------------------------------------------------


def _add_dims(p, h: bool = True, h0_default: int | None = None):
    p.add_argument("--m", type=int, required=True, help="rows M")
    p.add_argument("--n", type=int, required=True, help="columns N")
    if h:
        p.add_argument("--h", type=int, required=True, help="model inner dimension H")
    p.add_argument("--h0", type=int, required=h0_default is None, default=h0_default,
                   help="true nonnegative rank H0")


def _add_truth(p):
    p.add_argument("--a", type=Path, help="CSV file with the M x H0 true factor A")
    p.add_argument("--b", type=Path, help="CSV file with the H0 x N true factor B")
    p.add_argument("--header", action="store_true", help="factor CSVs carry a header row")


def _add_random(p):
    p.add_argument("--seed", help="master seed (integer) or 'auto'; required")
    p.add_argument("--workers", type=int, default=seeding.default_workers(),
                   help="worker threads (default $RLCT_NMF_WORKERS or 1)")
    p.add_argument("--out", type=Path, help="JSON report path (default stdout)")


def _add_chain(p, defaults: ChainConfig = ChainConfig()):
    p.add_argument("--burn-in", type=int, default=defaults.burn_in)
    p.add_argument("--samples", type=int, default=defaults.n_samples, help="retained per chain")
    p.add_argument("--thinning", type=int, default=defaults.thinning)
    p.add_argument("--chains", type=int, default=defaults.n_chains)
    p.add_argument("--prior-lower", type=float, help="prior box lower edge")
    p.add_argument("--prior-upper", type=float, help="prior box upper edge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlct-nmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rlct", help="closed-form thresholds for one configuration")
    _add_dims(p)
    p.add_argument("--r", type=int, help="rank for the RRR comparison (default H0)")
    p.add_argument("-v", "--verbose", action="store_true", help="also print RRR and d/2")
    p.set_defaults(func=cmd_rlct)

    p = sub.add_parser("table", help="NMF versus reduced rank regression table")
    p.add_argument("--sizes", type=_int_list, default=[2, 3, 4, 5])
    p.add_argument("--max-h0", type=int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("volume", help="estimate lambda from level-set volumes")
    _add_dims(p)
    _add_truth(p)
    _add_random(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--box-upper", type=float)
    p.add_argument("--min-hits", type=int, default=100)
    p.add_argument("--csv", type=Path, help="also write t,volume,stderr,hits")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("generr", help="Monte Carlo Bayesian generalization error")
    _add_dims(p)
    _add_truth(p)
    _add_random(p)
    _add_chain(p)
    p.add_argument("--family", choices=[f.value for f in Family], default="gaussian")
    p.add_argument("--n-obs", type=_int_list, default=[200], help="sample sizes, comma-separated")
    p.add_argument("--replications", type=int, default=50)
    p.add_argument("--test-draws", type=int, default=10**4)
    p.add_argument("--truncate-gaussian", action="store_true",
                   help="resample negative Gaussian draws (changes the model)")
    p.set_defaults(func=cmd_generr)

    p = sub.add_parser("free-energy", help="free energy and its slope in log n")
    _add_dims(p, h0_default=0)
    _add_truth(p)
    _add_random(p)
    _add_chain(p, FE_CHAIN)
    p.add_argument("--data", type=Path, help="dataset directory (single estimate)")
    p.add_argument("--family", choices=[f.value for f in Family], default="gaussian")
    p.add_argument("--n-obs", type=_int_list, default=[50, 100, 200])
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--rule", choices=["stepping-stone", "trapezoid"], default="stepping-stone")
    p.set_defaults(func=cmd_free_energy)

    p = sub.add_parser("sbic", help="rank selection with the closed-form penalty")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--h0", type=int, default=1)
    _add_truth(p)
    _add_random(p)
    _add_chain(p)
    p.add_argument("--candidates", type=_int_list, required=True)
    p.add_argument("--data", type=Path, help="dataset directory")
    p.add_argument("--family", choices=[f.value for f in Family], default="gaussian")
    p.add_argument("--n-obs", type=_int_list, default=[500])
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--truncate-gaussian", action="store_true")
    p.add_argument("--csv", type=Path, help="also write H,score")
    p.set_defaults(func=cmd_sbic)

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    _add_dims(p, h=False)
    _add_truth(p)
    p.add_argument("--seed", help="master seed (integer) or 'auto'; required")
    p.add_argument("--family", choices=[f.value for f in Family], default="gaussian")
    p.add_argument("--n-obs", type=_int_list, default=[100])
    p.add_argument("--truncate-gaussian", action="store_true")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sbic" and args.data is None and (args.m is None or args.n is None):
        parser.error("sbic needs --data or both --m and --n")
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
