"""Command-line runner for the varsmooth experiments."""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from varsmooth.atomic import decompose, read_series, reconstruct, write_series
from varsmooth.config import Command, ExperimentConfig, load_config
from varsmooth.errors import InvalidInputError, NumericalError
from varsmooth.families import family
from varsmooth.gridfn import read_gridfn, write_gridfn
from varsmooth.logging_config import configure_logging
from varsmooth.norms import (
    HardyBranch,
    NormVariant,
    breakdown_rows,
    compute_norm,
    default_k_work,
    hardy_family_check,
    n_functionals,
    spline_approx_numbers,
)
from varsmooth.seqspace import brute_force_operator_norm, embedding_criterion, read_seqspace
from varsmooth.suite import run_suite, write_suite_csv
from varsmooth.traceext import (
    PlaneSpec,
    besov_extend,
    besov_trace,
    extension_mass_ratio,
    make_averaging_op,
    sobolev_energy,
    sobolev_extend,
    sobolev_trace_report,
    trace_mass_ratio,
    write_slab,
)
from varsmooth.weights import (
    MultiSeq,
    ProductPowerWeight,
    check_nontrivial,
    check_X_class,
    check_Y_class,
    estimate_deltas,
    example_weight,
    parse_weight_spec,
    theta_sigma,
)
from varsmooth.workers import set_thread_count

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

FUNCTION_VARIANTS = (
    NormVariant.bbar,
    NormVariant.btilde,
    NormVariant.seq,
    NormVariant.v2,
    NormVariant.v3,
    NormVariant.v4,
)


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "inf" if math.isinf(value) else format(float(value), ".17g")
    return str(value)


def _emit(header: Sequence[str], rows: Iterable[Sequence[object]], path: Optional[Path]) -> None:
    """Write CSV to ``path`` or stdout."""

    handle = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if path:
            handle.close()


def _require_output(cfg: ExperimentConfig) -> Path:
    if cfg.output is None:
        raise InvalidInputError(f"`{cfg.command.value}` writes a file and needs --out")
    return cfg.output


def _weights(cfg: ExperimentConfig, n: int, level: int) -> MultiSeq:
    k_work = cfg.k_work if cfg.k_work is not None else default_k_work(level, cfg.l)
    return parse_weight_spec(cfg.weights, n, cfg.p, k_work)


def _gamma(cfg: ExperimentConfig, n: int):
    """Power weight in the normal variable, or the unit weight for ``beta = 0``."""

    if cfg.beta == 0.0:
        return ProductPowerWeight((0.0,) * (n + 1), cfg.p)
    return example_weight("normal", n, cfg.p, cfg.beta)


def cmd_norm(cfg: ExperimentConfig) -> int:
    phi = read_gridfn(cfg.input)
    bp = cfg.besov
    ms = _weights(cfg, phi.n, phi.level)
    rows = [compute_norm(phi, ms, bp, variant, cfg.k_work) for variant in FUNCTION_VARIANTS]
    rows.extend(n_functionals(phi, ms, bp, cfg.k_work).breakdowns.values())
    _emit(["variant", "k", "term", "total"], breakdown_rows(rows), cfg.output)
    return EXIT_OK


def cmd_equiv(cfg: ExperimentConfig) -> int:
    bp = cfg.besov
    members = family(cfg.family, cfg.n, cfg.k_max, cfg.seed, degree=cfg.l)
    ms = _weights(cfg, cfg.n, cfg.k_max)
    variants = (NormVariant.seq, NormVariant.v2, NormVariant.v3, NormVariant.v4)
    totals: Dict[NormVariant, List[float]] = {v: [] for v in variants}
    for index, phi in enumerate(members):
        for v in variants:
            totals[v].append(compute_norm(phi, ms, bp, v, cfg.k_work).total)
        logger.info("Member %d/%d done", index + 1, len(members))
    rows = []
    for a, b in itertools.combinations(variants, 2):
        ratios = np.array(totals[a]) / np.array(totals[b])
        rows.append([a.value, b.value, ratios.min(), ratios.max(), ratios.max() / ratios.min()])
    _emit(["variant_a", "variant_b", "min_ratio", "max_ratio", "spread"], rows, cfg.output)
    return EXIT_OK


def cmd_decompose(cfg: ExperimentConfig) -> int:
    phi = read_gridfn(cfg.input)
    bp = cfg.besov
    ms = _weights(cfg, phi.n, phi.level)
    series = decompose(phi, ms, bp, cfg.k_work)
    write_series(series, _require_output(cfg))
    logger.info("Wrote %d-level series to %s", series.K + 1, cfg.output)
    return EXIT_OK


def cmd_reconstruct(cfg: ExperimentConfig) -> int:
    series = read_series(cfg.input)
    J = series.K if cfg.j is None else cfg.j
    g = reconstruct(series, J, max(series.K, cfg.k_max))
    write_gridfn(g, _require_output(cfg))
    return EXIT_OK


def cmd_snumbers(cfg: ExperimentConfig) -> int:
    phi = read_gridfn(cfg.input)
    ms = _weights(cfg, phi.n, phi.level)
    numbers = spline_approx_numbers(phi, ms, cfg.besov, cfg.k_work)
    rows = [[k, numbers.values[k], numbers.exact] for k in sorted(numbers.values)]
    _emit(["k", "s_k", "exact"], rows, cfg.output)
    return EXIT_OK


def cmd_weightclass(cfg: ExperimentConfig) -> int:
    ms = _weights(cfg, cfg.n, cfg.k_max)
    theta = min(1.0, cfg.p, cfg.r)
    reports = {
        "X": check_X_class(ms, cfg.p, theta_sigma(cfg.p, theta), cfg.p),
        "Y": check_Y_class(ms, cfg.p),
    }
    nontrivial = check_nontrivial(ms, cfg.l, cfg.p, cfg.q)
    rows = [
        [name, r.alpha1, r.alpha2, r.alpha3, r.c1, r.c2, r.verdict, nontrivial.nontrivial, nontrivial.tail_estimate]
        for name, r in reports.items()
    ]
    _emit(["class", "alpha1", "alpha2", "alpha3", "c1", "c2", "passed", "nontrivial", "tail"], rows, cfg.output)
    return EXIT_OK


def cmd_deltas(cfg: ExperimentConfig) -> int:
    ms = _weights(cfg, cfg.n, cfg.k_max)
    d = estimate_deltas(ms, cfg.p)
    _emit(
        ["delta1", "delta2", "delta3", "c_delta1", "c_delta2"],
        [[d.delta1, d.delta2, d.delta3, d.constants["delta1"], d.constants["delta2"]]],
        cfg.output,
    )
    return EXIT_OK


def cmd_hardy(cfg: ExperimentConfig) -> int:
    lam = cfg.lam if cfg.lam is not None else cfg.beta + 1.0
    report = hardy_family_check(cfg.q, cfg.mu, cfg.beta, lam, cfg.branch, trials=cfg.trials, seed=cfg.seed)
    rows = [[cfg.q, cfg.mu, cfg.beta, lam, cfg.branch.value, report.max_ratio, report.bound, report.verdict]]
    _emit(["q", "mu", "beta", "lambda", "branch", "max_ratio", "bound", "verdict"], rows, cfg.output)
    return EXIT_OK


def cmd_embed(cfg: ExperimentConfig) -> int:
    sp1, sp2 = read_seqspace(cfg.space1), read_seqspace(cfg.space2)
    verdict = embedding_criterion(sp1, sp2)
    estimate = brute_force_operator_norm(sp1, sp2, cfg.trials, cfg.seed)
    rows = [[verdict.continuous, verdict.compact, verdict.value, verdict.p_star, verdict.q_star, estimate]]
    _emit(["continuous", "compact", "criterion", "p_star", "q_star", "estimate"], rows, cfg.output)
    return EXIT_OK


def cmd_trace(cfg: ExperimentConfig) -> int:
    series = read_series(cfg.input)
    ps = PlaneSpec(series.n, cfg.nprime)
    ms = parse_weight_spec(cfg.weights, series.n, cfg.p, series.K)
    traced = besov_trace(series, ps)
    if cfg.output is not None:
        write_series(traced, cfg.output)
    rows = [[series.n, cfg.nprime, trace_mass_ratio(series, ms, ps, cfg.q),
             extension_mass_ratio(traced, ms, ps, cfg.q)]]
    _emit(["n", "nprime", "trace_mass_ratio", "extension_mass_ratio"], rows, None)
    return EXIT_OK


def cmd_extend(cfg: ExperimentConfig) -> int:
    series = read_series(cfg.input)
    target = cfg.n if cfg.n > series.n else series.n + 1
    ps = PlaneSpec(target, series.n)
    ms = parse_weight_spec(cfg.weights, ps.n, cfg.p, series.K)
    write_series(besov_extend(series, ps), _require_output(cfg))
    _emit(["n", "nprime", "extension_mass_ratio"], [[ps.n, ps.n_prime, extension_mass_ratio(series, ms, ps, cfg.q)]], None)
    return EXIT_OK


def cmd_sobolev_ext(cfg: ExperimentConfig) -> int:
    phi = read_gridfn(cfg.input)
    ao = make_averaging_op(cfg.l, phi.n)
    slab = sobolev_extend(phi, ao, cfg.levels, cfg.ky)
    write_slab(slab, _require_output(cfg))
    gamma = _gamma(cfg, phi.n)
    report = sobolev_trace_report(phi, gamma, cfg.besov, cfg.levels, cfg.ky)
    rows = [[sobolev_energy(slab, gamma, cfg.l, cfg.p), report.trace_norm, report.ratio]]
    _emit(["energy", "trace_norm", "ratio"], rows, None)
    return EXIT_OK


def cmd_suite(cfg: ExperimentConfig) -> int:
    rows = run_suite(cfg.scale)
    write_suite_csv(rows, cfg.output)
    failed = [row.criterion for row in rows if not row.passed]
    if failed:
        raise NumericalError(f"criteria not met: {', '.join(failed)}", "suite", "run_suite")
    return EXIT_OK


HANDLERS: Dict[Command, Callable[[ExperimentConfig], int]] = {
    Command.norm: cmd_norm,
    Command.equiv: cmd_equiv,
    Command.decompose: cmd_decompose,
    Command.reconstruct: cmd_reconstruct,
    Command.snumbers: cmd_snumbers,
    Command.weightclass: cmd_weightclass,
    Command.deltas: cmd_deltas,
    Command.hardy: cmd_hardy,
    Command.embed: cmd_embed,
    Command.trace: cmd_trace,
    Command.extend: cmd_extend,
    Command.sobolev_ext: cmd_sobolev_ext,
    Command.suite: cmd_suite,
}


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="YAML or key=value file with defaults for this run")
    parent.add_argument("--threads", type=int, help="Worker pool bound (default: VARSMOOTH_THREADS or 1)")
    parent.add_argument("--in", dest="input", help="Input VSGF1 or VSSS1 file")
    parent.add_argument("--out", dest="output", help="Output file; CSV goes to stdout when omitted")
    parent.add_argument("--weights", help="const:s=S | power:beta=B[,s=S] | generated:beta=B[,s=S][,d=D] | file:PATH")
    parent.add_argument("--l", type=int, help="Difference order")
    parent.add_argument("--p", type=float, help="Inner exponent")
    parent.add_argument("--q", type=float, help="Level exponent")
    parent.add_argument("--r", type=float, help="Local L_r exponent")
    parent.add_argument("--c", type=float, help="Cube dilation")
    parent.add_argument("--seed", type=int, help="Root random seed")
    parent.add_argument("--n", type=int, help="Dimension of generated data")
    parent.add_argument("--k-max", dest="k_max", type=int, help="Grid level of generated data")
    parent.add_argument("--k-work", dest="k_work", type=int, help="Finest level used by the norms")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varsmooth", description="Variable-smoothness Besov space experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options()
    for command in Command:
        sp = sub.add_parser(command.value, parents=[common])
        if command is Command.equiv:
            sp.add_argument("--family", help="Family name such as smooth20")
        if command is Command.reconstruct:
            sp.add_argument("--j", type=int, help="Partial-sum level")
        if command is Command.trace:
            sp.add_argument("--nprime", type=int, help="Dimension of the trace plane")
        if command in (Command.hardy, Command.embed):
            sp.add_argument("--trials", type=int, help="Random trials")
        if command in (Command.hardy, Command.sobolev_ext):
            sp.add_argument("--beta", type=float, help="Hardy damping or normal weight exponent")
        if command is Command.hardy:
            sp.add_argument("--mu", type=float, help="Inner exponent of the sums")
            sp.add_argument("--lam", type=float, help="Head-branch exponent (default beta + 1)")
            sp.add_argument("--branch", choices=[b.value for b in HardyBranch])
        if command is Command.embed:
            sp.add_argument("--space1", help="Source VSQS1 file")
            sp.add_argument("--space2", help="Target VSQS1 file")
        if command is Command.sobolev_ext:
            sp.add_argument("--ky", type=int, help="Normal grid level of the slab")
            sp.add_argument("--levels", type=int, help="Averaging levels of the extension")
        if command is Command.suite:
            sp.add_argument("--scale", choices=["reduced", "desk"])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = vars(build_parser().parse_args(argv))
    config_file = args.pop("config", None)
    try:
        cfg = load_config(args, config_file)
    except ValidationError as exc:
        print(f"invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID

    set_thread_count(cfg.threads)
    logger.info("Running %s", cfg.command.value)
    try:
        return HANDLERS[cfg.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure in {exc.describe()}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        set_thread_count(None)


if __name__ == "__main__":
    sys.exit(main())
