"""Command-line interface.

One subcommand per solver family plus 'repro' for the reference data sets:

    wrisk discrete  --p ratings.csv --q shifted.csv --cost cost.csv ...
    wrisk density   --ref normal:0,1 --loss linear --alpha 0.5 --beta 0.2 ...
    wrisk gaussian  --mu mu.csv --sigma sigma.csv --A a.csv --method w ...
    wrisk frontier  --mu mu.csv --sigma sigma.csv --method kl --theta 0.01 ...
    wrisk hedge     --s0 100 --sigma 0.2 --strike 100 --T 1 --method w ...
    wrisk repro     all --out-dir out/

Exit codes: 0 success, 2 input validation error, 3 numerical infeasibility.
Outputs are comma-separated text with a manifest-hash comment header; a
.manifest sidecar is written next to every output file.  Flags can be
overridden from a flat key=value file via --config.  The WRISK_THREADS
environment variable caps the worker count of parallel loops.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

import wrisk
from wrisk.density import CostSpec, GridDensity, LossSpec, grid_nodes, kl_worst_case, worst_case_density
from wrisk.discrete import CostMatrix, DiscreteDistribution, discrete_worst_case, plan_cost
from wrisk.discrete import relative_entropy, wasserstein_distance
from wrisk.errors import InfeasibilityError, ValidationError
from wrisk.gaussian import GaussianSpec, QuadraticFormSpec, mvn_worst_case_kl, mvn_worst_case_w
from wrisk.hedging import (
    HedgeConfig,
    MarketConfig,
    VolDistribution,
    kl_hedging_risk,
    volatility_sampling_risk,
    worst_case_hedging_risk,
)
from wrisk.params import RobustnessParams
from wrisk.portfolio import PortfolioProblem, cml_curve
from wrisk.repro import compare_against, run_target
from wrisk.textio import (
    RunManifest,
    read_config,
    read_grid_table,
    read_labeled_distribution,
    read_matrix,
    read_vector,
    write_blocks,
    write_table,
)


def _parse_grid(spec: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = spec.split(",")
        return float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ValidationError(f"--grid expects LO,HI,N, got {spec!r}") from exc


def _parse_float_list(spec: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in spec.split(","))
    except ValueError as exc:
        raise ValidationError(f"{flag} expects a comma list of numbers, got {spec!r}") from exc


def _parse_lambda_grid(spec: str) -> tuple[float, ...]:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise ValidationError(f"--lambda expects LO:HI:STEP, got {spec!r}") from exc
    if step <= 0.0 or hi < lo:
        raise ValidationError("--lambda needs step > 0 and hi >= lo")
    return tuple(np.arange(lo, hi + 0.5 * step, step))


def _parse_ref(spec: str, grid: tuple[float, float, int]) -> GridDensity:
    kind, _, arg = spec.partition(":")
    lo, hi, n = grid
    if kind == "normal":
        mean, std = _parse_float_list(arg, "--ref normal:MEAN,STD")
        return GridDensity.normal(mean, std, lo, hi, n)
    if kind == "dirac":
        return GridDensity.dirac_proxy(float(arg), lo, hi, n)
    if kind == "table":
        values = read_grid_table(Path(arg), grid_nodes(lo, hi, n))
        return GridDensity.from_values(lo, hi, values)
    raise ValidationError(f"--ref expects normal:M,S | dirac:P | table:FILE, got {spec!r}")


def _parse_loss(spec: str, grid: tuple[float, float, int] | None) -> LossSpec:
    kind, _, arg = spec.partition(":")
    if kind == "linear":
        return LossSpec.linear()
    if kind == "quadratic":
        return LossSpec.quadratic(float(arg) if arg else 0.0)
    if kind == "table":
        if grid is None:
            raise ValidationError("tabulated loss needs --grid")
        lo, hi, n = grid
        return LossSpec.tabulated(read_grid_table(Path(arg), grid_nodes(lo, hi, n)))
    raise ValidationError(f"--loss expects linear | quadratic:CENTER | table:FILE, got {spec!r}")


def _parse_prior(spec: str, grid: tuple[float, float, int]) -> GridDensity:
    kind, _, arg = spec.partition(":")
    lo, hi, n = grid
    if kind == "uniform":
        return GridDensity.uniform(lo, hi, n)
    if kind == "table":
        return GridDensity.from_values(lo, hi, read_grid_table(Path(arg), grid_nodes(lo, hi, n)))
    raise ValidationError(f"--prior expects uniform | table:FILE, got {spec!r}")


def _parse_vol_dist(spec: str) -> VolDistribution:
    kind, _, arg = spec.partition(":")
    a, b = _parse_float_list(arg, "--vol-dist")
    if kind == "uniform":
        return VolDistribution.uniform(a, b)
    if kind == "lognormal":
        return VolDistribution.lognormal(a, b)
    raise ValidationError(f"--vol-dist expects uniform:LO,HI | lognormal:M,S, got {spec!r}")


def _manifest(
    args: argparse.Namespace,
    outputs: list[str],
    skip=("config", "out", "out_dir", "check", "func", "subcommand", "seed"),
) -> RunManifest:
    params = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip and value is not None and not callable(value)
    }
    return RunManifest(
        subcommand=args.subcommand,
        params=params,
        seed=getattr(args, "seed", None),
        version=wrisk.__version__,
        outputs=outputs,
    )


def _emit(path_str: str | None, manifest: RunManifest, writer) -> None:
    """Write through `writer(path)` plus the manifest sidecar, or to stdout."""
    if path_str is None:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "out.csv"
            writer(target)
            sys.stdout.write(target.read_text())
        return
    path = Path(path_str)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    writer(path)
    manifest.write(path.with_suffix(path.suffix + ".manifest"))


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_discrete(args: argparse.Namespace) -> int:
    labels, probs = read_labeled_distribution(Path(args.p))
    p = DiscreteDistribution(labels, probs)
    cost = None
    if args.cost:
        cost = CostMatrix(read_matrix(Path(args.cost)), power=args.power)
    elif args.q or args.loss:
        cost = CostMatrix.rating_ladder(p.n_states, power=args.power)

    summary_rows = []
    blocks = []
    if args.q:
        q_labels, q_probs = read_labeled_distribution(Path(args.q))
        q = DiscreteDistribution(q_labels, q_probs)
        summary_rows.append(("relative_entropy", relative_entropy(q, p)))
        result = wasserstein_distance(p, q, cost)
        summary_rows.append(("wasserstein_distance", result.distance))
        summary_rows.append(("optimal_plan_cost", plan_cost(result.plan, cost)))
        blocks.append(
            ("optimal_plan", ("source", "target", "mass"),
             [(labels[i], labels[j], result.plan.gamma[i, j])
              for i in range(p.n_states) for j in range(p.n_states)
              if result.plan.gamma[i, j] > 0.0])
        )
    if args.loss:
        if args.alpha is None or args.beta is None:
            raise ValidationError("--loss needs --alpha and --beta for the worst case")
        loss = read_vector(Path(args.loss))
        prior = DiscreteDistribution(labels, read_vector(Path(args.prior))) if args.prior else \
            DiscreteDistribution(labels, np.full(p.n_states, 1.0 / p.n_states))
        wc = discrete_worst_case(p, loss, cost, RobustnessParams(alpha=args.alpha, beta=args.beta), prior)
        blocks.append(("worst_case", ("label", "q_star"), list(zip(labels, wc.probs))))
    if not summary_rows and not blocks:
        raise ValidationError("nothing to do: provide --q and/or --loss")

    manifest = _manifest(args, [Path(args.out).name] if args.out else [])
    all_blocks = ([("summary", ("quantity", "value"), summary_rows)] if summary_rows else []) + blocks
    _emit(args.out, manifest, lambda path: write_blocks(path, manifest, all_blocks))
    return 0


def _cmd_density(args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid)
    p = _parse_ref(args.ref, grid)
    loss = _parse_loss(args.loss, grid)
    if args.theta is not None:
        q = kl_worst_case(p, loss, args.theta)
    else:
        if args.alpha is None or args.beta is None:
            raise ValidationError("provide --alpha and --beta (transport) or --theta (entropy)")
        prior = _parse_prior(args.prior, grid)
        q = worst_case_density(
            p, loss, CostSpec(args.cost_power), RobustnessParams(alpha=args.alpha, beta=args.beta), prior
        )
    manifest = _manifest(args, [Path(args.out).name] if args.out else [])
    _emit(args.out, manifest, lambda path: write_table(path, manifest, ("x", "q_star"), zip(q.x, q.values)))
    return 0


def _cmd_gaussian(args: argparse.Namespace) -> int:
    mu = read_vector(Path(args.mu))
    sigma = read_matrix(Path(args.sigma))
    model = GaussianSpec(mu, sigma)
    a = read_matrix(Path(args.A))
    if args.method == "w":
        if args.alpha is None or args.beta is None:
            raise ValidationError("--method w needs --alpha and --beta")
        b = read_matrix(Path(args.B)) if args.B else None
        forms = QuadraticFormSpec(a, b)
        out = mvn_worst_case_w(model, forms, RobustnessParams(alpha=args.alpha, beta=args.beta))
    else:
        if args.theta is None:
            raise ValidationError("--method kl needs --theta")
        out = mvn_worst_case_kl(model, a, args.theta)

    eig_in = np.linalg.eigvalsh(model.sigma)
    eig_out = np.linalg.eigvalsh(out.sigma)
    blocks = [
        ("mu_out", ("value",), [(v,) for v in out.mu]),
        ("sigma_out", tuple(f"c{j+1}" for j in range(out.n_assets)), [tuple(row) for row in out.sigma]),
        ("eigenvalues", ("reference", "worst_case"), list(zip(eig_in, eig_out))),
    ]
    manifest = _manifest(args, [Path(args.out).name] if args.out else [])
    _emit(args.out, manifest, lambda path: write_blocks(path, manifest, blocks))
    return 0


def _cmd_frontier(args: argparse.Namespace) -> int:
    mu = read_vector(Path(args.mu))
    sigma = read_matrix(Path(args.sigma))
    model = GaussianSpec(mu, sigma)
    problem = PortfolioProblem(model=model, lambda_grid=_parse_lambda_grid(args.lam))
    params = RobustnessParams(theta=args.theta or 0.0, beta=args.beta or 0.0)
    points = cml_curve(problem, args.method, params)
    names = ("lambda", "std_dev", "excess_return", "sharpe") + tuple(
        f"w_{j+1}" for j in range(model.n_assets)
    )
    rows = [(pt.lam, pt.std_dev, pt.excess_return, pt.sharpe, *pt.weights) for pt in points]
    manifest = _manifest(args, [Path(args.out).name] if args.out else [])
    _emit(args.out, manifest, lambda path: write_table(path, manifest, names, rows))
    return 0


def _cmd_hedge(args: argparse.Namespace) -> int:
    market = MarketConfig(s0=args.s0, mu=args.mu, sigma=args.sigma, r=args.r)
    hedge = HedgeConfig(strike=args.strike, maturity=args.T, n_hedge=args.n_hedge, option_type=args.option_type)
    if args.method == "w":
        if args.alpha is None or args.beta is None:
            raise ValidationError("--method w needs --alpha and --beta")
        ladder = _parse_float_list(args.ladder, "--ladder") if args.ladder else None
        res = worst_case_hedging_risk(
            market, hedge, args.n_paths, args.m_children,
            RobustnessParams(alpha=args.alpha, beta=args.beta),
            ladder=ladder, tol=args.tol, seed=args.seed, n_steps=args.n_steps,
        )
        row = (args.n_hedge, "w", res.final_risk, int(res.converged), res.rungs_used)
    elif args.method == "kl":
        if args.theta is None:
            raise ValidationError("--method kl needs --theta")
        risk = kl_hedging_risk(market, hedge, args.n_paths, args.theta, args.seed, args.n_steps)
        row = (args.n_hedge, "kl", risk, 1, 0)
    else:
        dist = _parse_vol_dist(args.vol_dist)
        risk = volatility_sampling_risk(market, hedge, dist, args.n_paths, args.seed, args.n_steps)
        row = (args.n_hedge, "volsample", risk, 1, 0)
    manifest = _manifest(args, [Path(args.out).name] if args.out else [])
    _emit(
        args.out,
        manifest,
        lambda path: write_table(path, manifest, ("n_hedge", "method", "risk", "converged", "rungs_used"), [row]),
    )
    return 0


def _cmd_repro(args: argparse.Namespace) -> int:
    files = run_target(args.target, Path(args.out_dir))
    sys.stdout.write("\n".join(str(f) for f in files) + "\n")
    if args.check:
        problems = compare_against(files, Path(args.check))
        if problems:
            sys.stderr.write("\n".join(problems) + "\n")
            return 1
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wrisk {wrisk.__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value file; entries override flags")

    d = sub.add_parser("discrete", help="finite-state entropy, transport distance, worst case")
    d.add_argument("--p", required=True, help="reference distribution file (labels row, probs row)")
    d.add_argument("--q", help="alternative distribution file for entropy/distance")
    d.add_argument("--cost", help="square cost-matrix file; defaults to the |i-j| ladder")
    d.add_argument("--power", type=int, default=1, help="metric power n in c = d**n")
    d.add_argument("--alpha", type=float)
    d.add_argument("--beta", type=float)
    d.add_argument("--loss", help="per-state loss file, turns on the worst case")
    d.add_argument("--prior", help="prior distribution file (default uniform)")
    d.add_argument("--out")
    add_config(d)
    d.set_defaults(func=_cmd_discrete)

    de = sub.add_parser("density", help="grid worst-case density (transport or entropy)")
    de.add_argument("--ref", required=True, help="normal:MEAN,STD | dirac:POINT | table:FILE")
    de.add_argument("--loss", default="linear", help="linear | quadratic:CENTER | table:FILE")
    de.add_argument("--cost-power", type=float, default=2.0, dest="cost_power")
    de.add_argument("--alpha", type=float)
    de.add_argument("--beta", type=float)
    de.add_argument("--theta", type=float, help="entropy multiplier; selects the entropy route")
    de.add_argument("--prior", default="uniform", help="uniform | table:FILE")
    de.add_argument("--grid", required=True, help="LO,HI,N")
    de.add_argument("--out")
    add_config(de)
    de.set_defaults(func=_cmd_density)

    g = sub.add_parser("gaussian", help="multivariate closed-form worst case")
    g.add_argument("--mu", required=True)
    g.add_argument("--sigma", required=True)
    g.add_argument("--A", required=True, help="loss matrix file")
    g.add_argument("--B", help="metric matrix file (default identity)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--theta", type=float)
    g.add_argument("--method", choices=("w", "kl"), required=True)
    g.add_argument("--out")
    add_config(g)
    g.set_defaults(func=_cmd_gaussian)

    f = sub.add_parser("frontier", help="capital market line under a chosen measure")
    f.add_argument("--mu", required=True)
    f.add_argument("--sigma", required=True)
    f.add_argument("--method", choices=("nominal", "kl", "w"), required=True)
    f.add_argument("--theta", type=float)
    f.add_argument("--beta", type=float)
    f.add_argument("--lambda", dest="lam", required=True, help="LO:HI:STEP")
    f.add_argument("--out")
    add_config(f)
    f.set_defaults(func=_cmd_frontier)

    h = sub.add_parser("hedge", help="dynamic-hedging model risk")
    h.add_argument("--s0", type=float, default=100.0)
    h.add_argument("--mu", type=float, default=0.05)
    h.add_argument("--sigma", type=float, default=0.2)
    h.add_argument("--r", type=float, default=0.0)
    h.add_argument("--strike", type=float, default=100.0)
    h.add_argument("--T", type=float, default=1.0)
    h.add_argument("--n-hedge", type=int, default=50, dest="n_hedge")
    h.add_argument("--n-steps", type=int, dest="n_steps", help="path grid (default n_hedge)")
    h.add_argument("--n-paths", type=int, default=200, dest="n_paths")
    h.add_argument("--m-children", type=int, default=20, dest="m_children")
    h.add_argument("--alpha", type=float)
    h.add_argument("--beta", type=float)
    h.add_argument("--theta", type=float, help="entropy multiplier for --method kl")
    h.add_argument("--ladder", help="comma list of perturbation scales (default fractions of sigma)")
    h.add_argument("--tol", type=float, default=0.02)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--method", choices=("w", "kl", "volsample"), required=True)
    h.add_argument("--vol-dist", default="uniform:0.15,0.25", dest="vol_dist",
                   help="volatility law for --method volsample: uniform:LO,HI | lognormal:M,S")
    h.add_argument("--option-type", choices=("call", "put"), default="call", dest="option_type")
    h.add_argument("--out")
    add_config(h)
    h.set_defaults(func=_cmd_hedge)

    r = sub.add_parser("repro", help="regenerate reference data sets")
    r.add_argument("target", help="table1 | fig-intro | fig-gauss | fig-cml | fig-hedge | all")
    r.add_argument("--out-dir", default="repro-out", dest="out_dir")
    r.add_argument("--check", help="directory of golden files to byte-compare against")
    r.set_defaults(func=_cmd_repro)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into trailing flags (config entries override flags)."""
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    expanded = list(argv)
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            cfg = read_config(Path(argv[i + 1]))
        elif arg.startswith("--config="):
            cfg = read_config(Path(arg.partition("=")[2]))
        else:
            continue
        for key, value in cfg.items():
            expanded.extend([f"--{key.replace('_', '-')}", value])
    return expanded


def dispatch(argv: list[str]) -> int:
    """Parse argv and run the selected subcommand."""
    parser = build_parser()
    args = parser.parse_args(_apply_config(argv))
    return args.func(args)


def main(argv: list[str] | None = None) -> int:
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except InfeasibilityError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
