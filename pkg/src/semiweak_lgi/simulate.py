"""Coincidence-count simulation, plug-in estimators, and classical macrorealist models.

Counts per outcome bin are independent Poisson variables, and every estimator
here is a ratio of linear functions of the counts, so standard errors follow
from the delta method with ``Var(n_k) = n_k``.
"""

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyData, ZeroConditioningProbability
from .lgi import (
    BASIC_TERMS,
    ConvexSum,
    CorrelationVector,
    DetectorChain,
    VIOLATION_TOL,
    _lgi_values,
    _check_standard_shape,
    _condition_mask,
    _single_meter,
    joint_distribution,
    parity_matrix,
    projective,
    semi_weak,
    spec_from_terms,
)
from .meter import SemiWeakMeter
from .qstate import SIGMA_Z


def make_rng(seed):
    """Counter-based generator; sweeps use ``seed = base_seed + grid_index``."""
    return np.random.Generator(np.random.Philox(int(seed)))


# ---------------------------------------------------------------------------
# Count tables


def _outcome_token(o):
    if o in ("r", "t"):
        return o
    return "+" if o == 1 else "-"


def _token_index(tok):
    if tok in ("r", "+"):
        return 0
    if tok in ("t", "-"):
        return 1
    raise ValueError(f"bad outcome token {tok!r}")


@dataclass(frozen=True)
class CountTable:
    """Counts per outcome tuple, stored as an array of shape ``(2,) * m``.

    Index 0 on an axis is ``r`` for a meter and ``+1`` for a polarizer.
    """

    labels: tuple
    counts: np.ndarray
    pairs_expected: float
    seed: object = None
    outcomes: tuple = field(default=None, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (2,) * len(self.labels):
            raise ValueError(f"counts must have shape {(2,) * len(self.labels)}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.outcomes is None:
            raise ValueError("outcome labels per detector are required")
        object.__setattr__(self, "outcomes", tuple(tuple(o) for o in self.outcomes))

    @property
    def total(self):
        return float(self.counts.sum())

    def rows(self):
        """``(outcome_tuple_string, count)`` rows in C order, e.g. ``("r:+:-", 12)``."""
        kinds = self.outcomes
        for combo in itertools.product(*kinds):
            idx = tuple(k.index(o) for k, o in zip(kinds, combo))
            yield ":".join(_outcome_token(o) for o in combo), self.counts[idx]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# detectors={','.join(self.labels)}\n")
            fh.write(f"# seed={self.seed}\n")
            fh.write(f"# pairs_expected={self.pairs_expected!r}\n")
            w = csv.writer(fh)
            w.writerow(["outcome_tuple", "count"])
            for key, n in self.rows():
                w.writerow([key, int(n) if float(n).is_integer() else repr(float(n))])

    @classmethod
    def from_csv(cls, path):
        meta, body = {}, []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    k, _, v = line[1:].strip().partition("=")
                    meta[k.strip()] = v.strip()
                else:
                    body.append(line)
        labels = tuple(meta["detectors"].split(","))
        counts = np.zeros((2,) * len(labels))
        kinds = [None] * len(labels)
        for row in csv.DictReader(body):
            tokens = row["outcome_tuple"].split(":")
            if len(tokens) != len(labels):
                raise ValueError(f"outcome tuple {row['outcome_tuple']!r} does not match detectors {labels}")
            for i, t in enumerate(tokens):
                kinds[i] = ("r", "t") if t in ("r", "t") else (1, -1)
            counts[tuple(_token_index(t) for t in tokens)] = float(row["count"])
        seed = meta.get("seed")
        seed = None if seed in (None, "None") else int(seed)
        if np.all(counts == np.round(counts)):
            counts = counts.astype(np.int64)
        return cls(labels, counts, float(meta.get("pairs_expected", "nan")), seed, tuple(kinds))


def _table(chain, counts, pairs_expected, seed):
    return CountTable(chain.labels, counts, pairs_expected, seed, tuple(d.outcomes for d in chain.detectors))


def sample_counts(chain, rho, pairs_expected, seed):
    """Independent Poisson counts with means ``pairs_expected * P(tuple)``."""
    if pairs_expected < 0:
        raise ValueError("pairs_expected must be nonnegative")
    p = joint_distribution(chain, rho)
    if pairs_expected == 0:
        return _table(chain, np.zeros(p.shape, dtype=np.int64), 0.0, seed)
    rng = make_rng(seed)
    counts = rng.poisson(pairs_expected * np.clip(p, 0.0, None))
    return _table(chain, counts.astype(np.int64), float(pairs_expected), seed)


def expected_counts(chain, rho, pairs_expected):
    """Noise-free table of mean counts (not integers in general)."""
    return _table(chain, pairs_expected * joint_distribution(chain, rho), float(pairs_expected), None)


# ---------------------------------------------------------------------------
# Estimators


def ratio_estimate(counts, numer, denom=None):
    """Estimate ``sum(n w) / sum(n u)`` and its delta-method standard error.

    ``numer`` may be 2-D (one row per estimate); counts are flat.
    """
    n = np.asarray(counts, dtype=float).reshape(-1)
    w = np.asarray(numer, dtype=float)
    u = np.ones_like(n) if denom is None else np.asarray(denom, dtype=float).reshape(-1)
    d = n @ u
    if d <= 0:
        raise EmptyData("estimator denominator has zero counts")
    f = (w @ n) / d
    resid = w - np.multiply.outer(f, u) if w.ndim > 1 else w - f * u
    var = (resid**2) @ n / d**2
    return f, np.sqrt(var)


def _check_labels(table, chain):
    if tuple(table.labels) != chain.labels:
        raise ValueError(f"table detectors {table.labels} do not match chain {chain.labels}")


def estimate_correlations(table, chain):
    """Plug-in correlation estimates with Poissonian standard errors."""
    _check_labels(table, chain)
    if table.total <= 0:
        raise EmptyData("count table is empty")
    vals, se = ratio_estimate(table.counts, chain.value_table)
    return CorrelationVector(chain.subset_labels, vals, se)


def estimate_lgi_values(coeffs, table, chain):
    """Values and standard errors for one or many coefficient vectors."""
    _check_labels(table, chain)
    if table.total <= 0:
        raise EmptyData("count table is empty")
    corr, _ = ratio_estimate(table.counts, chain.value_table)
    w = np.asarray(coeffs, dtype=float) @ chain.value_table
    _, se = ratio_estimate(table.counts, w)
    # the value is linear in the correlations; reuse the analytic reduction for identical rounding
    return _lgi_values(coeffs, corr), se


def z_scores(values, stderr, lower, upper):
    """Distance beyond the violated bound in standard errors; 0 inside the bounds."""
    values, stderr = np.asarray(values, dtype=float), np.asarray(stderr, dtype=float)
    excess = np.maximum(values - np.asarray(upper), np.asarray(lower) - values)
    excess = np.maximum(excess, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(excess > 0, excess / stderr, 0.0)
    return z


def estimate_conditioned_average(table, chain, condition):
    _check_labels(table, chain)
    a = _single_meter(chain)
    mask = _condition_mask(chain, condition)
    shape = [1] * chain.m
    shape[a] = 2
    vals = np.broadcast_to(chain.detectors[a].values.reshape(shape), mask.shape)
    if table.counts[mask].sum() <= 0:
        raise ZeroConditioningProbability(f"no counts satisfy condition {condition!r}")
    return ratio_estimate(table.counts, (vals * mask).reshape(-1), mask.reshape(-1).astype(float))


def estimate_convex_sum(table, chain):
    """Convex sum of conditioned averages from counts, with its standard error."""
    _check_labels(table, chain)
    _check_standard_shape(chain)
    plus = _condition_mask(chain, (1, 1))
    minus = _condition_mask(chain, (-1, -1))
    sel = plus | minus
    n = np.asarray(table.counts, dtype=float)
    s = n[sel].sum()
    if s <= 0:
        raise ZeroConditioningProbability("no counts with b1 b2 = +1")
    a = _single_meter(chain)
    shape = [1] * 3
    shape[a] = 2
    vals = np.broadcast_to(chain.detectors[a].values.reshape(shape), n.shape)
    lhs, se = ratio_estimate(n, (vals * sel).reshape(-1), sel.reshape(-1).astype(float))
    p_plus = n[plus].sum() / s
    return ConvexSum(float(lhs), float(p_plus), float(1 - p_plus), lhs > 1 + VIOLATION_TOL), float(se)


# ---------------------------------------------------------------------------
# Classical macrorealist models


@dataclass(frozen=True)
class MrModel:
    """Classical object pairs measured by an ambiguous, possibly invasive detector.

    Parameters
    ----------
    ensemble : array, shape (2, 2, 2)
        ``P(a1, b1, b2)`` of the hidden properties; index 0 means +1.
    response : array, shape (2, 2)
        ``P(report | a1)`` with rows ``(r, t)`` and columns ``a1 = (+1, -1)``.
    values : (float, float)
        Generalized values reported for ``r`` and ``t``.  Calibration requires
        ``sum_report value * P(report | a) = a``.
    disturbance : array, shape (2, 4, 4), optional
        For each report, a column-stochastic map ``D[new, old]`` on the flat
        index ``2 * b1_index + b2_index``.  ``None`` means noninvasive.
    """

    ensemble: np.ndarray
    response: np.ndarray
    values: tuple
    disturbance: np.ndarray = None

    def __post_init__(self):
        ens = np.asarray(self.ensemble, dtype=float).reshape(2, 2, 2)
        resp = np.asarray(self.response, dtype=float)
        vals = tuple(float(v) for v in self.values)
        if np.any(ens < 0) or abs(ens.sum() - 1) > 1e-12:
            raise ValueError("ensemble must be a probability table")
        if resp.shape != (2, 2) or np.any(resp < 0) or np.max(np.abs(resp.sum(axis=0) - 1)) > 1e-12:
            raise ValueError("response columns must be probability distributions")
        calib = np.array(vals) @ resp
        if np.max(np.abs(calib - np.array([1.0, -1.0]))) > 1e-10:
            raise ValueError(f"detector is not calibrated: averages {calib} instead of (+1, -1)")
        dist = self.disturbance
        if dist is not None:
            dist = np.asarray(dist, dtype=float)
            if dist.shape != (2, 4, 4) or np.any(dist < 0) or np.max(np.abs(dist.sum(axis=1) - 1)) > 1e-12:
                raise ValueError("disturbance must hold two 4x4 column-stochastic maps")
        object.__setattr__(self, "ensemble", ens)
        object.__setattr__(self, "response", resp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "disturbance", dist)

    @classmethod
    def from_meter(cls, meter, ensemble, disturbance=None):
        """Classical detector with the same response table as ``meter``."""
        return cls(ensemble, meter.response(), meter.contextual_values, disturbance)

    @property
    def invasive(self):
        return self.disturbance is not None and not np.allclose(self.disturbance, np.eye(4))

    @property
    def ambiguous(self):
        return not np.allclose(sorted(self.values), [-1.0, 1.0])

    def chain(self):
        """Three-detector chain whose value table matches this model's reports."""
        meter = SemiWeakMeter(self.response[0, 0], self.response[0, 1])
        if not np.allclose(meter.contextual_values, self.values, rtol=1e-9, atol=1e-9):
            raise ValueError("model values do not match its response table")
        return DetectorChain((semi_weak(meter, 1, "A1"), projective(SIGMA_Z, 1, "B1"), projective(SIGMA_Z, 2, "B2")))

    def joint_distribution(self):
        """Exact ``P(report, b1, b2)`` after any disturbance, shape (2, 2, 2)."""
        pair = self.ensemble.reshape(2, 4)  # [a, b-pair]
        out = np.einsum("ra,ab->rb", self.response, pair)
        if self.disturbance is not None:
            out = np.einsum("rnb,rb->rn", self.disturbance, out)
        return out.reshape(2, 2, 2)


def flip_disturbance(flip_r, flip_t):
    """Disturbance that flips ``b2`` with probability ``flip[b1, b2]`` after each report."""
    maps = np.zeros((2, 4, 4))
    for r, flip in enumerate((flip_r, flip_t)):
        flip = np.asarray(flip, dtype=float)
        for b1, b2 in itertools.product((0, 1), repeat=2):
            old = 2 * b1 + b2
            maps[r, old, old] += 1 - flip[b1, b2]
            maps[r, 2 * b1 + (1 - b2), old] += flip[b1, b2]
    return maps


def random_mr_model(rng, meter=None, invasive=False):
    """Random model for property tests: Dirichlet ensemble, random calibrated detector."""
    if meter is None:
        while True:
            r_h, r_v = rng.uniform(0, 1, size=2)
            if abs(r_h - r_v) > 0.05:
                break
        meter = SemiWeakMeter(r_h, r_v)
    ensemble = rng.dirichlet(np.ones(8))
    dist = None
    if invasive:
        dist = rng.dirichlet(np.ones(4), size=(2, 4)).transpose(0, 2, 1)
    return MrModel.from_meter(meter, ensemble, dist)


def sample_mr(model, n, seed):
    """Simulate ``n`` object pairs through the model, one draw per stage.

    Hidden properties come from the ensemble, the report from the response
    column of ``a1``, and (if invasive) the final ``(b1, b2)`` from the
    disturbance map selected by the report.
    """
    rng = make_rng(seed)
    flat = model.ensemble.reshape(-1)
    hidden = rng.choice(8, size=n, p=flat / flat.sum())
    a_idx, pair = hidden // 4, hidden % 4
    report = (rng.random(n) >= model.response[0, a_idx]).astype(np.int64)
    if model.disturbance is not None:
        cum = np.cumsum(model.disturbance[report, :, pair], axis=1)
        u = rng.random(n)[:, None]
        pair = np.minimum((u >= cum).sum(axis=1), 3)
    counts = np.bincount(4 * report + pair, minlength=8).reshape(2, 2, 2)
    chain = model.chain()
    return _table(chain, counts, float(n), seed)


def mr_lgi_values(model, coeffs):
    """Exact expected values of LGI correlations under the model."""
    chain = model.chain()
    p = model.joint_distribution().reshape(-1)
    return np.asarray(coeffs, dtype=float) @ (chain.value_table @ p)


FLIP_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

# Frozen result of search_counterexample(calibrated_meter()): after a reflected report
# b2 is flipped when b1 b2 = +1, after a transmitted report when b1 b2 = -1.
COUNTEREXAMPLE_FLIPS = {
    "r": ((1.0, 0.0), (0.0, 1.0)),
    "t": ((0.0, 1.0), (1.0, 0.0)),
}


def search_counterexample(meter, ensemble=None, grid=FLIP_GRID, terms=BASIC_TERMS):
    """Grid search over b2-flip disturbances maximizing an inequality under an MR model.

    Every flip probability (one per report and ``(b1, b2)``) ranges over
    ``grid``.  Returns ``(best_value, flip_r, flip_t)``; ties resolve to the
    first grid point in lexicographic order.
    """
    ensemble = np.full(8, 1 / 8) if ensemble is None else np.asarray(ensemble, dtype=float)
    base = MrModel.from_meter(meter, ensemble)
    coeffs = np.array(spec_from_terms(base.chain(), terms).coeffs, dtype=float)
    w = coeffs @ base.chain().value_table  # value of each (report, b1, b2) outcome
    w = w.reshape(2, 4)
    pre = np.einsum("ra,ab->rb", base.response, base.ensemble.reshape(2, 4))
    flipped = np.array([[2 * (b // 2) + (1 - b % 2) for b in range(4)]])
    stay = (pre * w).sum()
    gain = (pre * (w[np.arange(2)[:, None], flipped] - w)).reshape(-1)
    grid = np.asarray(grid, dtype=float)
    combos = np.array(list(itertools.product(grid, repeat=8)))
    vals = stay + combos @ gain
    best = int(np.argmax(vals))
    q = combos[best].reshape(2, 2, 2)
    return float(vals[best]), q[0], q[1]


def counterexample_model(meter=None):
    """Invasive and ambiguous MR model that violates the upper bound of the basic LGI."""
    from .meter import calibrated_meter

    meter = calibrated_meter() if meter is None else meter
    return MrModel.from_meter(
        meter,
        np.full(8, 1 / 8),
        flip_disturbance(COUNTEREXAMPLE_FLIPS["r"], COUNTEREXAMPLE_FLIPS["t"]),
    )


def mr_bounds_hold(model, tol=VIOLATION_TOL):
    """True when every m=3 canonical inequality holds exactly for the model."""
    from .lgi import coefficient_blocks

    parity = parity_matrix(3)
    for _, block in coefficient_blocks(3):
        b = block.astype(np.int64)
        vals = mr_lgi_values(model, b)
        bounds = b @ parity
        if np.any(vals > bounds.max(axis=1) + tol) or np.any(vals < bounds.min(axis=1) - tol):
            return False
    return True

