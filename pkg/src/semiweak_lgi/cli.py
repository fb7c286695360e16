"""Command-line driver for theta sweeps, full inequality scans, and tomography.

Examples::

    semiweak-lgi --preset fig4 --out fig4.csv
    semiweak-lgi --preset fig5 --mode sampled --pairs 1e6 --seed 7
    semiweak-lgi --preset fig3 --scan-m 3 --out violations.csv
    semiweak-lgi --tomography counts.csv --out rho.json

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from .exceptions import LgiError, ScenarioError, UnsupportedSize, ZeroConditioningProbability
from .lgi import (
    MAX_DETECTORS,
    ca_conditions,
    chain_for_size,
    coefficient_blocks,
    conditioned_average_from_joint,
    convex_sum_from_joint,
    correlations_from_joint,
    evaluate_lgi,
    find_violations,
    joint_distribution,
    parity_matrix,
)
from .scenario import PRESETS, load_scenario
from .simulate import (
    estimate_conditioned_average,
    estimate_convex_sum,
    estimate_correlations,
    estimate_lgi_values,
    sample_counts,
    z_scores,
)
from .tomography import mle_reconstruct, read_counts_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def fmt(x):
    """17 significant digits so golden-file comparisons are exact."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % x


# ---------------------------------------------------------------------------
# Sweeps


def _standard_shaped(chain):
    return chain.m == 3 and len(chain.semi_weak_indices) == 1 and len(chain.projective_indices) == 2


def sweep_header(scenario):
    chain = scenario.chain(scenario.thetas[0])
    sampled = scenario.mode == "sampled"
    cols = ["theta_deg"]
    for lab in chain.subset_labels:
        cols.append(f"corr_{lab}")
        if sampled:
            cols.append(f"se_{lab}")
    if len(chain.semi_weak_indices) == 1:
        for name, _ in ca_conditions(chain):
            cols.append(f"ca_{name}")
            if sampled:
                cols.append(f"se_ca_{name}")
    if _standard_shaped(chain):
        cols += ["convex_lhs", "convex_p_plus", "convex_p_minus", "convex_violated"]
        if sampled:
            cols.append("se_convex_lhs")
    for spec in scenario.lgi_specs(chain):
        name = spec.name(chain)
        cols += [f"lgi_{name}", f"lower_{name}", f"upper_{name}", f"violated_{name}"]
        if sampled:
            cols += [f"se_{name}", f"z_{name}"]
    return cols


def sweep_row(scenario, index):
    """One output row for grid point ``index``; sampled mode seeds with ``seed + index``."""
    theta = float(scenario.thetas[index])
    chain = scenario.chain(theta)
    rho = scenario.rho()
    row = [theta]
    nan = float("nan")
    if scenario.mode == "analytic":
        joint = joint_distribution(chain, rho)
        corr = correlations_from_joint(chain, joint)
        row += list(corr.values)
        if len(chain.semi_weak_indices) == 1:
            for _, cond in ca_conditions(chain):
                try:
                    row.append(conditioned_average_from_joint(chain, joint, cond))
                except ZeroConditioningProbability:
                    row.append(nan)
        if _standard_shaped(chain):
            try:
                cs = convex_sum_from_joint(chain, joint)
                row += [cs.lhs, cs.p_plus, cs.p_minus, cs.violated]
            except ZeroConditioningProbability:
                row += [nan, nan, nan, False]
        for spec in scenario.lgi_specs(chain):
            ev = evaluate_lgi(spec, corr)
            row += [ev.value, spec.lower, spec.upper, ev.violated]
        return row

    table = sample_counts(chain, rho, scenario.pairs, scenario.seed + index)
    corr = estimate_correlations(table, chain)
    for v, s in zip(corr.values, corr.stderr):
        row += [v, s]
    if len(chain.semi_weak_indices) == 1:
        for _, cond in ca_conditions(chain):
            try:
                row += list(estimate_conditioned_average(table, chain, cond))
            except ZeroConditioningProbability:
                row += [nan, nan]
    if _standard_shaped(chain):
        try:
            cs, se = estimate_convex_sum(table, chain)
            row += [cs.lhs, cs.p_plus, cs.p_minus, cs.violated, se]
        except ZeroConditioningProbability:
            row += [nan, nan, nan, False, nan]
    for spec in scenario.lgi_specs(chain):
        v, se = estimate_lgi_values(spec.coeffs, table, chain)
        viol = v > spec.upper or v < spec.lower
        row += [v, spec.lower, spec.upper, viol, se, float(z_scores(v, se, spec.lower, spec.upper))]
    return row


def _ordered_map(fn, args, jobs):
    """``map`` over grid points, in a process pool when ``jobs > 1``; order is preserved."""
    if jobs <= 1:
        yield from map(fn, args)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(fn, args)


def _sweep_task(args):
    return sweep_row(*args)


def run_sweep(scenario, jobs=1):
    """Yield the header, then one row per theta."""
    yield sweep_header(scenario)
    yield from _ordered_map(_sweep_task, [(scenario, i) for i in range(len(scenario.thetas))], jobs)


# ---------------------------------------------------------------------------
# Full scans


def scan_chain(scenario, m, theta):
    chain = scenario.chain(theta)
    if chain.m == m:
        return chain
    a_sign = scenario.detectors.get("a_sign", 1) if isinstance(scenario.detectors, dict) else 1
    return chain_for_size(m, scenario.meter, theta, scenario.meter2, a_sign)


def scan_header(scenario):
    cols = ["theta_deg", "spec_id", "value", "lower", "upper", "violated"]
    if scenario.mode == "sampled":
        cols += ["stderr", "z"]
    return cols


def _scan_rows(args):
    scenario, m, index = args
    theta = float(scenario.thetas[index])
    chain = scan_chain(scenario, m, theta)
    rho = scenario.rho()
    rows = []
    if scenario.mode == "analytic":
        corr = correlations_from_joint(chain, joint_distribution(chain, rho))
        for sid, val, lo, hi in find_violations(corr, m):
            rows.append([theta, sid, val, lo, hi, True])
    else:
        table = sample_counts(chain, rho, scenario.pairs, scenario.seed + index)
        parity = parity_matrix(m)
        for start, block in coefficient_blocks(m):
            b = block.astype(np.int64)
            vals, se = estimate_lgi_values(b, table, chain)
            bounds = b @ parity
            lo, hi = bounds.min(axis=1), bounds.max(axis=1)
            z = z_scores(vals, se, lo, hi)
            for i in np.nonzero((vals > hi) | (vals < lo))[0]:
                rows.append([theta, start + int(i), vals[i], lo[i], hi[i], True, se[i], z[i]])
    total = [theta, "total", len(rows), "", "", len(rows) > 0]
    if scenario.mode == "sampled":
        total += ["", ""]
    rows.append(total)
    return rows


def scan_all(scenario, m, jobs=1):
    """Yield the header, then every violated spec per theta followed by a ``total`` row.

    The ``total`` row carries the number of violated specs in the ``value`` column.
    """
    if not 1 <= m <= MAX_DETECTORS:
        raise UnsupportedSize(f"scan supports m in 1..{MAX_DETECTORS}, got {m}")
    yield scan_header(scenario)
    args = [(scenario, m, i) for i in range(len(scenario.thetas))]
    for rows in _ordered_map(_scan_rows, args, jobs):
        yield from rows


# ---------------------------------------------------------------------------
# Entry point


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_rows(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    for row in rows:
        w.writerow([fmt(x) for x in row])


def build_parser():
    p = argparse.ArgumentParser(
        prog="semiweak-lgi",
        description="Simulate generalized Leggett-Garg inequality tests with a semi-weak meter.",
    )
    p.add_argument("--scenario", metavar="PATH", help="JSON scenario file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    p.add_argument("--mode", choices=("analytic", "sampled"))
    p.add_argument("--pairs", type=float, metavar="N", help="expected pairs per grid point (sampled mode)")
    p.add_argument("--seed", type=int, metavar="S", help="base seed; grid point i uses S + i")
    p.add_argument("--scan-m", type=int, metavar="M", help="scan every inequality for M detectors instead of sweeping")
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    p.add_argument("--counts-dir", metavar="DIR", help="also write each sampled count table as CSV here")
    p.add_argument("--tomography", metavar="COUNTS", help="reconstruct a state from setting_label,count CSV")
    p.add_argument("--tolerance", type=float, default=1e-10, help="tomography log-likelihood tolerance")
    return p


def _write_count_tables(scenario, directory):
    os.makedirs(directory, exist_ok=True)
    rho = scenario.rho()
    for i, theta in enumerate(scenario.thetas):
        chain = scenario.chain(float(theta))
        table = sample_counts(chain, rho, scenario.pairs, scenario.seed + i)
        table.to_csv(os.path.join(directory, f"counts_theta_{theta:g}.csv"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.tomography:
            labels, settings, counts = read_counts_csv(args.tomography)
            run = mle_reconstruct(settings, counts, tolerance=args.tolerance)
            payload = run.to_json()
            payload["settings"] = labels
            with _output(args.out) as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            return EXIT_OK

        overrides = {"mode": args.mode, "pairs": args.pairs, "seed": args.seed}
        scenario = load_scenario(args.scenario, args.preset, overrides)
        if args.scan_m is not None:
            if not 1 <= args.scan_m <= MAX_DETECTORS:
                raise ScenarioError(f"--scan-m: must be in 1..{MAX_DETECTORS}, got {args.scan_m}")
            rows = scan_all(scenario, args.scan_m, args.jobs)
        else:
            rows = run_sweep(scenario, args.jobs)
        with _output(args.out) as fh:
            write_rows(rows, fh)
        if args.counts_dir and scenario.mode == "sampled":
            _write_count_tables(scenario, args.counts_dir)
    except (ScenarioError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LgiError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        if isinstance(exc, ValueError) and not isinstance(exc, LgiError) and args.tomography:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
