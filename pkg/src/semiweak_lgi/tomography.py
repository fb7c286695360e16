"""Maximum-likelihood two-qubit state tomography and entanglement metrics.

The density operator is parameterized as ``rho = T^dagger T / Tr(T^dagger T)``
with ``T`` lower triangular (real diagonal, 16 real parameters), so every
iterate is a valid state.  The unnormalized ``T^dagger T`` also carries the
pair rate, and the Poisson log-likelihood
``sum_k n_k log(mu_k) - mu_k`` with ``mu_k = Tr(E_k T^dagger T)`` is maximized
by gradient ascent with a backtracking (Armijo) line search.
"""

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InsufficientSettings, NonConvergence
from .qstate import SIGMA_Y, check_density_matrix, ket, matrix_to_pairs, projector

MAX_ITERATIONS = 10_000
PATIENCE = 25
PRESET_LETTERS = "HVDR"
_TRIL = np.tril_indices(4)
_DIAG = _TRIL[0] == _TRIL[1]


def setting_projector(letter):
    return projector(ket(letter.lower()))


def preset_settings(letters=PRESET_LETTERS):
    """The 16 settings ``{H, V, D, R} x {H, V, D, R}`` as ``(label, (P1, P2))``."""
    return [(a + b, (setting_projector(a), setting_projector(b))) for a, b in itertools.product(letters, repeat=2)]


def parse_setting(label):
    """``"HD"`` -> projector pair for party 1 = H and party 2 = D."""
    if len(label) != 2:
        raise ValueError(f"setting labels have two letters, got {label!r}")
    return setting_projector(label[0]), setting_projector(label[1])


def _effects(settings):
    return np.array([np.kron(p1, p2) for p1, p2 in settings])


def simulate_counts(rho, pairs_per_setting, seed, settings=None):
    """Poisson counts with mean ``pairs_per_setting * Tr[(P1 (x) P2) rho]`` per setting."""
    settings = [s for _, s in preset_settings()] if settings is None else settings
    probs = np.einsum("kij,ji->k", _effects(settings), rho).real
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return rng.poisson(pairs_per_setting * np.clip(probs, 0, None))


# ---------------------------------------------------------------------------
# Metrics


def purity(rho):
    rho = np.asarray(rho)
    return float(np.trace(rho @ rho).real)


def concurrence(rho):
    """Wootters concurrence ``max(0, l1 - l2 - l3 - l4)``.

    ``l_i`` are the decreasing square roots of the eigenvalues of
    ``rho (sy x sy) rho* (sy x sy)``, computed as the singular values of
    ``sqrt(rho) (sy x sy) sqrt(rho)*`` to avoid square roots of round-off.
    """
    rho = check_density_matrix(rho)
    yy = np.kron(SIGMA_Y, SIGMA_Y)
    s = _sqrtm_psd(rho)
    lam = np.linalg.svd(s @ yy @ s.conj(), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1:].sum()))


def _sqrtm_psd(m):
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho, sigma):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    s = _sqrtm_psd(np.asarray(rho, dtype=complex))
    w = np.linalg.eigvalsh(s @ np.asarray(sigma, dtype=complex) @ s)
    return float(np.sqrt(np.clip(w, 0, None)).sum() ** 2)


# ---------------------------------------------------------------------------
# Reconstruction


@dataclass(frozen=True)
class TomographyRun:
    settings: list
    counts: np.ndarray
    result: np.ndarray
    log_likelihood: float
    iterations: int
    history: list = field(default_factory=list, repr=False)

    def metrics(self):
        return {
            "concurrence": concurrence(self.result),
            "purity": purity(self.result),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
        }

    def to_json(self):
        return {"basis": ["hh", "hv", "vh", "vv"], "rho": matrix_to_pairs(self.result), "metrics": self.metrics()}


def _t_from_params(x):
    t = np.zeros((4, 4), dtype=complex)
    im = np.zeros(10)
    im[~_DIAG] = x[10:]
    t[_TRIL] = x[:10] + 1j * im
    return t


def _params_from_t(t):
    vals = t[_TRIL]
    return np.concatenate([vals.real, vals.imag[~_DIAG]])


def _grad_params(g_complex):
    vals = g_complex[_TRIL]
    return np.concatenate([vals.real, vals.imag[~_DIAG]])


def linear_inversion(effects, counts):
    """Least-squares density matrix, Hermitized and trace-normalized (may be non-positive)."""
    a = effects.transpose(0, 2, 1).reshape(len(effects), 16)
    x, *_ = np.linalg.lstsq(a, np.asarray(counts, dtype=complex), rcond=None)
    rho = x.reshape(4, 4)
    rho = (rho + rho.conj().T) / 2
    tr = np.trace(rho).real
    if tr <= 0:
        raise InsufficientSettings("linear inversion gives a state with nonpositive trace")
    return rho / tr


def _initial_t(effects, counts, mix=1e-3):
    rho = linear_inversion(effects, counts)
    w, v = np.linalg.eigh(rho)
    if w.min() <= 0:
        w = np.clip(w, 0, None)
        rho = (v * w) @ v.conj().T
        rho /= np.trace(rho).real
    rho = (1 - mix) * rho + mix * np.eye(4) / 4
    scale = counts.sum() / np.einsum("kij,ji->k", effects, rho).real.sum()
    # rho = T^dagger T with T lower triangular: Cholesky of the index-reversed matrix.
    j = np.eye(4)[::-1]
    low = np.linalg.cholesky(j @ (scale * rho) @ j)
    return j @ low.conj().T @ j


def _loglik(effects, counts, t):
    mu = np.einsum("kij,ji->k", effects, t.conj().T @ t).real
    pos = counts > 0
    if np.any(mu[pos] <= 0):
        return -np.inf, mu
    return float(counts[pos] @ np.log(mu[pos]) - mu.sum()), mu


def mle_reconstruct(settings, counts, tolerance=1e-10, max_iterations=MAX_ITERATIONS):
    """Maximum-likelihood state from projector-pair settings and their counts.

    Parameters
    ----------
    settings : sequence of (P1, P2)
        Party-1 and party-2 projectors for each setting.
    counts : sequence of int
    tolerance : float
        Stop once the relative log-likelihood gain per step stays below this
        for ``PATIENCE`` consecutive steps.

    Raises
    ------
    InsufficientSettings
        Fewer than 16 linearly independent settings, or no counts at all.
    NonConvergence
        ``max_iterations`` reached.
    """
    counts = np.asarray(counts, dtype=float)
    effects = _effects(settings)
    if len(effects) != len(counts):
        raise ValueError("one count per setting is required")
    if np.linalg.matrix_rank(effects.reshape(len(effects), 16)) < 16:
        raise InsufficientSettings("settings do not span the two-qubit operator space")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if counts.sum() <= 0:
        raise InsufficientSettings("all counts are zero; the likelihood is degenerate")

    t = _initial_t(effects, counts)
    x = _params_from_t(t)
    ll, mu = _loglik(effects, counts, t)
    history = [ll]
    step = None
    quiet = 0
    prev_x = prev_g = None
    for it in range(1, max_iterations + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(mu > 0, counts / mu, 0.0)
        gmat = np.einsum("k,kij->ij", ratio - 1.0, effects)
        g = _grad_params(2 * t @ gmat)
        gg = g @ g
        if gg == 0:
            break
        if step is None:
            step = 0.1 * np.linalg.norm(x) / np.sqrt(gg)
        elif prev_g is not None:
            # Barzilai-Borwein trial step; the Armijo loop below keeps ascent monotone.
            s, y = x - prev_x, g - prev_g
            sy = s @ y
            step = -(s @ s) / sy if sy < 0 else 2 * step
        while True:
            x_new = x + step * g
            t_new = _t_from_params(x_new)
            ll_new, mu_new = _loglik(effects, counts, t_new)
            if ll_new >= ll + 1e-4 * step * gg:
                break
            step *= 0.5
            if step * np.sqrt(gg) < 1e-300:
                ll_new, x_new, t_new, mu_new = ll, x, t, mu
                break
        gain = ll_new - ll
        prev_x, prev_g = x, g
        x, t, ll, mu = x_new, t_new, ll_new, mu_new
        history.append(ll)
        # Gradient ascent can crawl; require a run of negligible gains before stopping.
        quiet = quiet + 1 if gain <= tolerance * max(1.0, abs(ll)) else 0
        if quiet >= PATIENCE:
            break
    else:
        raise NonConvergence(f"log-likelihood still changing after {max_iterations} iterations")

    rho = t.conj().T @ t
    rho /= np.trace(rho).real
    return TomographyRun(list(settings), counts, rho, ll, it, history)


def read_counts_csv(path):
    """Read ``setting_label,count`` rows; returns ``(labels, settings, counts)``."""
    labels, counts = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            labels.append(row["setting_label"].strip())
            counts.append(float(row["count"]))
    return labels, [parse_setting(lab) for lab in labels], np.array(counts)


def write_counts_csv(path, labels, counts):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["setting_label", "count"])
        for lab, n in zip(labels, counts):
            w.writerow([lab, int(n)])
