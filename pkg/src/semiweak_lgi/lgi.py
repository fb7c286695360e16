"""Generalized Leggett-Garg inequalities over a chain of detectors.

A :class:`DetectorChain` lists detectors in time order.  Each detector acts on
one of the two photons and is either a semi-weak meter (reporting contextual
values) or a projective polarizer (reporting +-1).  From one joint outcome
distribution all ``2**m - 1`` correlation terms follow, and any coefficient
vector in ``{-1, 0, 1}**(2**m - 1)`` defines an inequality whose macrorealist
bounds are the extremes over deterministic +-1 assignments.

Subsets of detectors are always ordered by ``(size, detector indices)``; the
coefficient tuple of an :class:`LgiSpec` and the entries of a
:class:`CorrelationVector` follow that order.
"""

import itertools
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import UnsupportedSize, ZeroConditioningProbability
from .qstate import (
    SIGMA_Z,
    check_density_matrix,
    dichotomic_projectors,
    embed,
    is_dichotomic,
    stokes_theta,
)

MAX_DETECTORS = 4
VIOLATION_TOL = 1e-9
CONDITIONING_TOL = 1e-12

# Coefficient maps of the inequalities shown in the experiment.
BASIC_TERMS = {"A1": 1, "A1B1B2": 1, "B1B2": -1}
FIG4_TERMS = {"A1": -1, "A1B1B2": -1, "B1B2": -1}
FIG5_TERMS = (
    {"A1B2": 1, "B1B2": 1, "A1B1": -1},
    {"A1B2": -1, "B1B2": 1, "A1B1": 1},
)


# ---------------------------------------------------------------------------
# Detectors and chains


@dataclass(frozen=True)
class Detector:
    """One measurement in the chain.

    Exactly one of ``meter`` (semi-weak) or ``observable`` (projective, a 2x2
    matrix with eigenvalues +-1) must be given.  ``sign=-1`` on a semi-weak
    detector reports the negated observable, i.e. ``-sigma_z``.
    """

    party: int
    label: str
    meter: object = None
    observable: np.ndarray = field(default=None, compare=False, repr=False)
    sign: int = 1

    def __post_init__(self):
        if self.party not in (1, 2):
            raise ValueError(f"party must be 1 or 2, got {self.party!r}")
        if (self.meter is None) == (self.observable is None):
            raise ValueError("a detector needs exactly one of meter or observable")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.observable is not None:
            obs = np.array(self.observable, dtype=complex)
            if not is_dichotomic(obs):
                raise ValueError(f"detector {self.label}: observable must have eigenvalues exactly +-1")
            if self.sign != 1:
                raise ValueError("negate projective observables directly instead of using sign")
            obs.flags.writeable = False
            object.__setattr__(self, "observable", obs)
            projs = dichotomic_projectors(obs)
            ops = (projs[1], projs[-1])
        else:
            ops = (self.meter.kraus_r, self.meter.kraus_t)
        object.__setattr__(self, "_ops", ops)

    @property
    def kind(self):
        return "semi_weak" if self.meter is not None else "projective"

    @property
    def outcomes(self):
        """Outcome labels in index order."""
        return ("r", "t") if self.meter is not None else (1, -1)

    @property
    def values(self):
        """Reported values in outcome-index order (contextual values or eigenvalues)."""
        if self.meter is not None:
            return np.array([self.sign * self.meter.cv_r, self.sign * self.meter.cv_t])
        return np.array([1.0, -1.0])

    def kraus(self, index):
        """Single-qubit Kraus operator for outcome index 0 or 1."""
        return self._ops[index]

    def outcome_index(self, outcome):
        if self.meter is not None:
            try:
                return ("r", "t").index(outcome)
            except ValueError:
                raise ValueError(f"{self.label}: meter outcome must be 'r' or 't', got {outcome!r}") from None
        if outcome in (1, "+", "+1"):
            return 0
        if outcome in (-1, "-", "-1"):
            return 1
        raise ValueError(f"{self.label}: projective outcome must be +1 or -1, got {outcome!r}")


def semi_weak(meter, party=1, label="A1", sign=1):
    return Detector(party=party, label=label, meter=meter, sign=sign)


def projective(observable, party, label):
    return Detector(party=party, label=label, observable=observable)


@lru_cache(maxsize=None)
def subsets(m):
    """Nonempty subsets of ``range(m)`` ordered by (size, indices)."""
    if not 1 <= m <= MAX_DETECTORS:
        raise UnsupportedSize(f"detector count must be in 1..{MAX_DETECTORS}, got {m}")
    return tuple(s for k in range(1, m + 1) for s in itertools.combinations(range(m), k))


@lru_cache(maxsize=None)
def parity_matrix(m):
    """``P[s, j] = prod_{i in s} a_i`` over assignments ``a`` in ``{+1,-1}**m``.

    Assignment ``j`` is the C-order flat index of an outcome tuple, index 0
    meaning +1 for each detector.
    """
    signs = np.array(list(itertools.product((1, -1), repeat=m)), dtype=np.int64)
    p = np.array([np.prod(signs[:, list(s)], axis=1) for s in subsets(m)], dtype=np.int64)
    p.flags.writeable = False
    return p


@dataclass(frozen=True)
class DetectorChain:
    """Time-ordered detectors; list order is time order."""

    detectors: tuple

    def __post_init__(self):
        dets = tuple(self.detectors)
        object.__setattr__(self, "detectors", dets)
        m = len(dets)
        if not 1 <= m <= MAX_DETECTORS:
            raise UnsupportedSize(f"chains hold 1..{MAX_DETECTORS} detectors, got {m}")
        labels = [d.label for d in dets]
        if len(set(labels)) != m:
            raise ValueError(f"detector labels must be unique: {labels}")
        for party in (1, 2):
            if sum(d.kind == "semi_weak" and d.party == party for d in dets) > 1:
                raise ValueError(f"at most one semi-weak meter per party (party {party})")
        vals = np.array([d.values for d in dets])
        table = np.ones((len(subsets(m)), 2**m))
        grid = np.array(list(itertools.product((0, 1), repeat=m)))
        for row, s in enumerate(subsets(m)):
            for i in s:
                table[row] *= vals[i, grid[:, i]]
        table.flags.writeable = False
        object.__setattr__(self, "_value_table", table)

    @property
    def m(self):
        return len(self.detectors)

    @property
    def labels(self):
        return tuple(d.label for d in self.detectors)

    @property
    def subsets(self):
        return subsets(self.m)

    @property
    def subset_labels(self):
        return tuple("".join(self.detectors[i].label for i in s) for s in self.subsets)

    @property
    def value_table(self):
        """``V[s, j]``: product of reported values of subset ``s`` for flat outcome tuple ``j``."""
        return self._value_table

    @property
    def semi_weak_indices(self):
        return tuple(i for i, d in enumerate(self.detectors) if d.kind == "semi_weak")

    @property
    def projective_indices(self):
        return tuple(i for i, d in enumerate(self.detectors) if d.kind == "projective")

    def outcome_tuples(self):
        """All outcome label tuples in C order (matching flat joint indices)."""
        return list(itertools.product(*(d.outcomes for d in self.detectors)))

    def subset_index(self, label):
        """Index of a subset given its label, e.g. ``"A1B1B2"`` (term order free)."""
        tokens = _tokenize(label, self.labels)
        key = tuple(sorted(self.labels.index(t) for t in tokens))
        if len(set(key)) != len(key):
            raise ValueError(f"repeated detector in term {label!r}")
        return self.subsets.index(key)

    def without(self, label):
        """Chain with one detector ignored (non-selective), e.g. dropping ``"B2"``."""
        return DetectorChain(tuple(d for d in self.detectors if d.label != label))


def _tokenize(label, names):
    names = sorted(names, key=len, reverse=True)
    pattern = re.compile("|".join(re.escape(n) for n in names))
    pos, out = 0, []
    while pos < len(label):
        match = pattern.match(label, pos)
        if match is None:
            raise ValueError(f"cannot parse term {label!r} with detectors {sorted(names)}")
        out.append(match.group())
        pos = match.end()
    if not out:
        raise ValueError("empty term label")
    return out


def standard_chain(meter, theta, a_sign=1):
    """Meter A1 on party 1, then B1 = sigma_theta on party 1 and B2 = sigma_z on party 2."""
    return DetectorChain(
        (
            semi_weak(meter, 1, "A1", a_sign),
            projective(stokes_theta(theta), 1, "B1"),
            projective(SIGMA_Z, 2, "B2"),
        )
    )


def chain_for_size(m, meter, theta, meter2=None, a_sign=1):
    """Standard chain with ``m`` detectors.

    ``m=1``: A1; ``m=2``: A1, B1 (single object); ``m=3``: the two-party chain;
    ``m=4``: A1, B1 on party 1 and A2, B2 on party 2.
    """
    if not 1 <= m <= MAX_DETECTORS:
        raise UnsupportedSize(f"detector count must be in 1..{MAX_DETECTORS}, got {m}")
    full = standard_chain(meter, theta, a_sign)
    if m == 1:
        return DetectorChain(full.detectors[:1])
    if m == 2:
        return full.without("B2")
    if m == 3:
        return full
    a2 = semi_weak(meter if meter2 is None else meter2, 2, "A2")
    d = full.detectors
    return DetectorChain((d[0], d[1], a2, d[2]))


# ---------------------------------------------------------------------------
# Inequality specifications


def lgi_count(m):
    """Number of inequalities up to overall sign: ``(3**(2**m - 1) - 1) / 2``."""
    k = len(subsets(m))
    return (3**k - 1) // 2


def mr_bounds(coeffs):
    """Macrorealist bounds of ``sum_T c_T prod_{i in T} a_i`` over ``a`` in ``{+1,-1}**m``.

    Extremal macrorealist ensembles are deterministic, so a brute-force
    scan over the ``2**m`` assignments gives the exact bounds.
    """
    c = np.asarray(coeffs, dtype=np.int64)
    m = _size_from_length(c.shape[-1])
    vals = c @ parity_matrix(m)
    return int(vals.min(axis=-1)), int(vals.max(axis=-1))


def _size_from_length(k):
    for m in range(1, MAX_DETECTORS + 1):
        if 2**m - 1 == k:
            return m
    raise UnsupportedSize(f"coefficient vector of length {k} does not match 2**m - 1 for m <= {MAX_DETECTORS}")


def is_canonical(coeffs):
    """True when the first nonzero coefficient is +1."""
    for c in coeffs:
        if c:
            return c == 1
    return False


@dataclass(frozen=True, slots=True)
class LgiSpec:
    """One generalized inequality ``lower <= sum_T coeffs[T] <T> <= upper``.

    ``index`` is the position in :func:`enumerate_lgis` order for canonical
    specs and ``None`` for user-supplied ones whose sign is not canonical.
    """

    coeffs: tuple
    lower: int
    upper: int
    index: object = None

    @property
    def m(self):
        return _size_from_length(len(self.coeffs))

    @property
    def canonical(self):
        return is_canonical(self.coeffs)

    def terms(self, chain):
        """Nonzero coefficients keyed by subset label."""
        return {lab: c for lab, c in zip(chain.subset_labels, self.coeffs) if c}

    def name(self, chain):
        """Compact label such as ``+A1+A1B1B2-B1B2``."""
        return "".join(("+" if c > 0 else "-") + lab for lab, c in self.terms(chain).items())

    def to_json(self, chain):
        return {
            "coefficients": dict(zip(chain.subset_labels, self.coeffs)),
            "lower": self.lower,
            "upper": self.upper,
        }


def make_spec(coeffs):
    """Build an :class:`LgiSpec` from a coefficient vector, computing its bounds."""
    c = tuple(int(x) for x in coeffs)
    if any(x not in (-1, 0, 1) for x in c):
        raise ValueError("coefficients must be -1, 0 or 1")
    if not any(c):
        raise ValueError("at least one coefficient must be nonzero")
    lo, hi = mr_bounds(c)
    return LgiSpec(c, lo, hi, spec_index(c) if is_canonical(c) else None)


def spec_from_terms(chain, terms):
    """Spec from a mapping of subset labels to coefficients, e.g. ``{"A1": 1, "B1B2": -1}``."""
    c = [0] * len(chain.subsets)
    for label, coef in terms.items():
        c[chain.subset_index(label)] = int(coef)
    return make_spec(c)


def spec_from_json(data, chain):
    """Inverse of :meth:`LgiSpec.to_json`; stored bounds must match recomputed ones."""
    terms = data.get("coefficients", data)
    spec = spec_from_terms(chain, {k: v for k, v in terms.items() if v})
    for key in ("lower", "upper"):
        if key in data and data[key] != getattr(spec, key):
            raise ValueError(f"stored {key} bound {data[key]} disagrees with computed {getattr(spec, key)}")
    return spec


def dump_specs(specs, chain, path):
    with open(path, "w") as fh:
        json.dump([s.to_json(chain) for s in specs], fh, indent=2)


def spec_index(coeffs):
    """Position of a canonical coefficient vector in enumeration order."""
    c = list(coeffs)
    if not is_canonical(c):
        raise ValueError("only canonical specs have an enumeration index")
    k = len(c)
    lead = next(i for i, x in enumerate(c) if x)
    offset = sum(3 ** (k - 1 - j) for j in range(lead))
    rest = 0
    for x in c[lead + 1 :]:
        rest = 3 * rest + {0: 0, 1: 1, -1: 2}[x]
    return offset + rest


_DIGIT_TO_COEF = np.array([0, 1, -1], dtype=np.int8)


def coefficient_blocks(m, block_size=1 << 16):
    """Yield ``(start_index, block)`` pairs covering all canonical specs.

    ``block`` is an int8 array of shape ``(n, 2**m - 1)``.  Specs are ordered
    by the position of their leading +1, then by the remaining coefficients
    read as base-3 digits (0 -> 0, 1 -> +1, 2 -> -1).  Memory use is bounded
    by ``block_size`` regardless of ``m``.
    """
    k = len(subsets(m))
    index = 0
    for lead in range(k):
        free = k - 1 - lead
        total = 3**free
        powers = 3 ** np.arange(free - 1, -1, -1, dtype=np.int64)
        for start in range(0, total, block_size):
            n = np.arange(start, min(start + block_size, total), dtype=np.int64)
            block = np.zeros((n.size, k), dtype=np.int8)
            block[:, lead] = 1
            if free:
                block[:, lead + 1 :] = _DIGIT_TO_COEF[(n[:, None] // powers) % 3]
            yield index, block
            index += n.size


def enumerate_lgis(m, block_size=1 << 16):
    """Lazily yield every canonical :class:`LgiSpec` for ``m`` detectors.

    Yields exactly :func:`lgi_count` specs (1, 13, 1093, 7174453 for m=1..4).
    """
    if not 1 <= m <= MAX_DETECTORS:
        raise UnsupportedSize(f"enumeration supports 1..{MAX_DETECTORS} detectors, got {m}")
    parity = parity_matrix(m)
    for start, block in coefficient_blocks(m, block_size):
        vals = block.astype(np.int64) @ parity
        lows, highs = vals.min(axis=1).tolist(), vals.max(axis=1).tolist()
        for i, (row, lo, hi) in enumerate(zip(map(tuple, block.tolist()), lows, highs)):
            yield LgiSpec(row, lo, hi, start + i)


def is_chsh_candidate(spec, chain):
    """Flag specs supported only on two-detector, cross-party subsets.

    Such a spec has the algebraic form of a CHSH expression; no claim of
    identity with the Bell inequality is made.
    """
    for s, c in zip(chain.subsets, spec.coeffs):
        if not c:
            continue
        if len(s) != 2 or chain.detectors[s[0]].party == chain.detectors[s[1]].party:
            return False
    return True


# ---------------------------------------------------------------------------
# Quantum predictions


def _walk(chain, rho, index_tuple):
    state = rho
    for det, k in zip(chain.detectors, index_tuple):
        op = embed(det.kraus(k), det.party)
        state = op @ state @ op.conj().T
    return float(np.trace(state).real)


def joint_distribution(chain, rho):
    """Joint outcome probabilities, shape ``(2,) * m``, by walking the chain in time order.

    Each detector applies its Kraus operator (the projector for polarizers)
    to the running unnormalized state; the probability is the final trace.
    """
    rho = check_density_matrix(rho)
    m = chain.m
    out = np.empty((2,) * m)
    for idx in itertools.product((0, 1), repeat=m):
        out[idx] = _walk(chain, rho, idx)
    return out


def joint_probability(chain, rho, outcomes):
    """Probability of one outcome tuple, e.g. ``("r", 1, -1)``."""
    if len(outcomes) != chain.m:
        raise ValueError(f"need {chain.m} outcomes, got {len(outcomes)}")
    idx = tuple(d.outcome_index(o) for d, o in zip(chain.detectors, outcomes))
    return _walk(chain, check_density_matrix(rho), idx)


@dataclass(frozen=True)
class CorrelationVector:
    """Expectation values of all detector-subset products, in subset order."""

    labels: tuple
    values: np.ndarray
    stderr: np.ndarray = None

    def __getitem__(self, label):
        return float(self.values[self.labels.index(label)])

    def as_dict(self):
        return dict(zip(self.labels, self.values.tolist()))


def correlations_from_joint(chain, joint):
    """Correlation vector from a normalized joint distribution."""
    p = np.asarray(joint, dtype=float).reshape(-1)
    return CorrelationVector(chain.subset_labels, chain.value_table @ p)


def correlation_vector(chain, rho):
    """All ``2**m - 1`` correlations, weighting meter outcomes by their contextual values."""
    return correlations_from_joint(chain, joint_distribution(chain, rho))


@dataclass(frozen=True)
class LgiValue:
    value: float
    violated_upper: bool
    violated_lower: bool

    @property
    def violated(self):
        return self.violated_upper or self.violated_lower


def _lgi_values(coeffs, cvals):
    # One row-wise reduction for single specs and whole blocks, so values agree bit for bit.
    return np.sum(np.asarray(coeffs, dtype=float) * cvals, axis=-1)


def evaluate_lgi(spec, corr, tol=VIOLATION_TOL):
    value = float(_lgi_values(spec.coeffs, np.asarray(corr.values, dtype=float)))
    return LgiValue(value, value > spec.upper + tol, value < spec.lower - tol)


def find_violations(corr, m, tol=VIOLATION_TOL, block_size=1 << 16):
    """Yield ``(spec_index, value, lower, upper)`` for every violated canonical spec.

    Evaluates the full enumeration block by block against one correlation
    vector, so memory stays bounded for ``m=4``.
    """
    parity = parity_matrix(m)
    cvals = np.asarray(corr.values, dtype=float)
    for start, block in coefficient_blocks(m, block_size):
        b = block.astype(np.int64)
        vals = _lgi_values(b, cvals)
        bounds = b @ parity
        lo, hi = bounds.min(axis=1), bounds.max(axis=1)
        hit = np.nonzero((vals > hi + tol) | (vals < lo - tol))[0]
        for i in hit:
            yield start + int(i), float(vals[i]), int(lo[i]), int(hi[i])


# ---------------------------------------------------------------------------
# Conditioned averages


def _condition_mask(chain, condition):
    """Boolean mask over the joint array selecting the conditioning event.

    ``condition`` lists one entry per projective detector in chain order, each
    +1, -1 or ``None`` (ignored); a dict keyed by detector label also works.
    """
    proj = chain.projective_indices
    if isinstance(condition, dict):
        cond = [condition.get(chain.detectors[i].label) for i in proj]
        unknown = set(condition) - {chain.detectors[i].label for i in proj}
        if unknown:
            raise ValueError(f"condition names non-projective or unknown detectors: {sorted(unknown)}")
    else:
        cond = list(condition)
        if len(cond) != len(proj):
            raise ValueError(f"condition needs {len(proj)} entries, got {len(cond)}")
    mask = np.ones((2,) * chain.m, dtype=bool)
    for i, b in zip(proj, cond):
        if b is None:
            continue
        k = chain.detectors[i].outcome_index(b)
        sl = [slice(None)] * chain.m
        sl[i] = 1 - k
        mask[tuple(sl)] = False
    return mask


def _single_meter(chain):
    idx = chain.semi_weak_indices
    if len(idx) != 1:
        raise ValueError("conditioned averages need exactly one semi-weak detector in the chain")
    return idx[0]


def conditioned_average_from_joint(chain, joint, condition):
    a = _single_meter(chain)
    joint = np.asarray(joint, dtype=float)
    mask = _condition_mask(chain, condition)
    vals = chain.detectors[a].values
    shape = [1] * chain.m
    shape[a] = 2
    weights = np.broadcast_to(vals.reshape(shape), joint.shape)
    denom = joint[mask].sum()
    if denom <= CONDITIONING_TOL * max(joint.sum(), 1.0):
        raise ZeroConditioningProbability(f"condition {condition!r} has probability {denom:.3g}")
    return float((weights * joint)[mask].sum() / denom)


def conditioned_average(chain, rho, condition):
    """Contextual-value average of the meter given later projective outcomes.

    Raises :class:`ZeroConditioningProbability` when the condition has
    probability at most 1e-12.
    """
    return conditioned_average_from_joint(chain, joint_distribution(chain, rho), condition)


def ca_conditions(chain):
    """Every nontrivial condition on the projective detectors, with a column label."""
    proj = chain.projective_indices
    out = []
    for cond in itertools.product((1, -1, None), repeat=len(proj)):
        if all(c is None for c in cond):
            continue
        parts = [
            f"{chain.detectors[i].label}={'+' if c == 1 else '-'}" for i, c in zip(proj, cond) if c is not None
        ]
        meter = chain.detectors[_single_meter(chain)].label
        out.append((f"{meter}|{'&'.join(parts)}", cond))
    return out


@dataclass(frozen=True)
class ConvexSum:
    lhs: float
    p_plus: float
    p_minus: float
    violated: bool


def _check_standard_shape(chain):
    if chain.m != 3 or len(chain.semi_weak_indices) != 1 or len(chain.projective_indices) != 2:
        raise ValueError("convex-sum constraint needs one semi-weak and two projective detectors")


def convex_sum_from_joint(chain, joint, tol=VIOLATION_TOL):
    _check_standard_shape(chain)
    joint = np.asarray(joint, dtype=float)
    plus = _condition_mask(chain, (1, 1))
    minus = _condition_mask(chain, (-1, -1))
    p_pp, p_mm = joint[plus].sum(), joint[minus].sum()
    s = p_pp + p_mm
    if s < CONDITIONING_TOL * max(joint.sum(), 1.0):
        raise ZeroConditioningProbability("P(1,1) + P(-1,-1) vanishes")
    a = _single_meter(chain)
    shape = [1] * 3
    shape[a] = 2
    weighted = chain.detectors[a].values.reshape(shape) * joint
    # CA(1,1) p+ + CA(-1,-1) p- with the conditioning probabilities cancelled.
    lhs = float((weighted[plus].sum() + weighted[minus].sum()) / s)
    return ConvexSum(lhs, float(p_pp / s), float(p_mm / s), lhs > 1 + tol)


def convex_sum_constraint(chain, rho, tol=VIOLATION_TOL):
    """Left side of the convex-sum bound on conditioned averages.

    ``lhs = CA(+1,+1) p+ + CA(-1,-1) p-`` with
    ``p+- = P(+-1, +-1) / (P(1,1) + P(-1,-1))``; ``violated`` means
    ``lhs > 1 + tol``.
    """
    return convex_sum_from_joint(chain, joint_distribution(chain, rho), tol)
