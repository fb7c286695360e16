"""One- and two-qubit polarization linear algebra.

Conventions used throughout the package:

* Polarization basis ``h = (1, 0)``, ``v = (0, 1)``.
* Linear polarization at angle ``theta`` (degrees) is
  ``cos(theta) h + sin(theta) v``, so ``sigma_theta`` has period 180 degrees,
  ``sigma_0 = sigma_z`` and ``sigma_45 = sigma_x``.
* Party 1 (the photon that meets the coverslip) is the left tensor factor.
  Two-qubit basis order is ``hh, hv, vh, vv``.

Operators are plain ``numpy`` complex arrays.
"""

import json
import warnings

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
SYMMETRIZE_WARN = 1e-8

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_S = 1 / np.sqrt(2)
KETS = {
    "h": np.array([1, 0], dtype=complex),
    "v": np.array([0, 1], dtype=complex),
    "a": np.array([_S, _S], dtype=complex),
    "d": np.array([_S, -_S], dtype=complex),
    "r": np.array([_S, 1j * _S], dtype=complex),
    "l": np.array([_S, -1j * _S], dtype=complex),
}

for _k in (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, *KETS.values()):
    _k.flags.writeable = False


def ket(label):
    """Return a fresh copy of a named polarization ket (h, v, a, d, r, l)."""
    try:
        return KETS[label.lower()].copy()
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def projector(vec):
    """Rank-one projector onto ``vec`` (normalized on the fly)."""
    vec = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("cannot project onto the zero vector")
    vec = vec / norm
    return np.outer(vec, vec.conj())


def linear_ket(theta):
    """Ket of linear polarization at ``theta`` degrees."""
    t = np.deg2rad(theta)
    return np.array([np.cos(t), np.sin(t)], dtype=complex)


def theta_projectors(theta):
    """Return ``(Pi_theta, Pi_theta_perp)`` for the rotated linear basis."""
    t = np.deg2rad(theta)
    c, s = np.cos(t), np.sin(t)
    p = np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)
    return p, IDENTITY - p


def stokes_theta(theta):
    """Stokes observable ``sigma_theta = |theta><theta| - |theta_perp><theta_perp|``.

    Parameters
    ----------
    theta : float
        Polarizer angle in degrees.

    Returns
    -------
    numpy.ndarray
        2x2 Hermitian matrix equal to ``cos(2 theta) sigma_z + sin(2 theta) sigma_x``.
    """
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    t = 2 * np.deg2rad(theta)
    return np.cos(t) * SIGMA_Z + np.sin(t) * SIGMA_X


def dichotomic_projectors(observable):
    """Spectral projectors ``{+1: (I + B)/2, -1: (I - B)/2}`` of a +-1 observable."""
    b = np.asarray(observable, dtype=complex)
    if not is_dichotomic(b):
        raise ValueError("observable must be Hermitian with eigenvalues exactly +1 and -1")
    return {1: (IDENTITY + b) / 2, -1: (IDENTITY - b) / 2}


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def is_dichotomic(b, tol=HERMITIAN_TOL):
    """True for a Hermitian 2x2 matrix with ``B^2 = I`` and zero trace."""
    b = np.asarray(b)
    if b.shape != (2, 2) or not is_hermitian(b, tol):
        return False
    return bool(np.max(np.abs(b @ b - IDENTITY)) <= 1e3 * tol and abs(np.trace(b)) <= 1e3 * tol)


def is_projector(p, tol=HERMITIAN_TOL):
    p = np.asarray(p)
    return (
        is_hermitian(p, tol)
        and bool(np.max(np.abs(p @ p - p)) <= tol)
        and abs(np.trace(p) - 1) <= tol
    )


def tensor(a, b):
    """Kronecker product with party 1 as the left factor."""
    return np.kron(a, b)


def embed(op, party):
    """Lift a single-qubit operator to the two-qubit space on ``party`` (1 or 2)."""
    if party == 1:
        return np.kron(op, IDENTITY)
    if party == 2:
        return np.kron(IDENTITY, op)
    raise ValueError(f"party must be 1 or 2, got {party!r}")


def partial_trace(rho, keep):
    """Reduced state of party ``keep`` (1 or 2) from a 4x4 operator."""
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    if keep == 1:
        return np.einsum("ijkj->ik", r)
    if keep == 2:
        return np.einsum("ijil->jl", r)
    raise ValueError(f"keep must be 1 or 2, got {keep!r}")


def pure_density(amplitudes):
    """Density operator of a normalized ket of length 2 or 4."""
    psi = np.asarray(amplitudes, dtype=complex)
    if psi.shape not in ((2,), (4,)):
        raise ValueError("pure states must have 2 or 4 amplitudes")
    if abs(np.linalg.norm(psi) - 1) > HERMITIAN_TOL:
        raise ValueError("pure state is not normalized")
    return np.outer(psi, psi.conj())


def ideal_state(which):
    """Pure biphoton states used in the experiment.

    ``"psi"`` is ``(|hv> + i|vh>)/sqrt(2)`` and ``"psi_double_prime"`` is
    ``(|ha> + i|vd>)/sqrt(2)``, both written upper-arm photon first.  The
    returned density operators are reordered so that the lower-arm photon,
    which carries the coverslip and the theta polarizer, is party 1.
    """
    h, v, a, d = (KETS[k] for k in "hvad")
    if which == "psi":
        amp = (np.kron(v, h) + 1j * np.kron(h, v)) / np.sqrt(2)
    elif which in ("psi_double_prime", "psi''"):
        amp = (np.kron(a, h) + 1j * np.kron(d, v)) / np.sqrt(2)
    else:
        raise ValueError(f"unknown ideal state {which!r}")
    return pure_density(amp)


def product_state(label1, label2):
    """Density operator of ``|label1>|label2>`` (for example ``"h", "v"``)."""
    return pure_density(np.kron(ket(label1), ket(label2)))


def werner_state(p, which="psi"):
    """Mixture ``p * ideal + (1 - p) * I/4``."""
    return p * ideal_state(which) + (1 - p) * np.eye(4) / 4


def check_density_matrix(rho, dim=4):
    """Validate a density operator; returns it as a complex array or raises ValueError."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {rho.shape}")
    if not is_hermitian(rho):
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho).real - 1) > TRACE_TOL:
        raise ValueError(f"density operator has trace {np.trace(rho).real!r}")
    if np.linalg.eigvalsh(rho).min() < -POSITIVITY_TOL:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def as_density_matrix(m, dim=4):
    """Symmetrize a user-supplied matrix, warn on large corrections, then validate."""
    m = np.asarray(m, dtype=complex)
    sym = (m + m.conj().T) / 2
    correction = np.max(np.abs(sym - m)) if m.size else 0.0
    if correction > SYMMETRIZE_WARN:
        warnings.warn(
            f"density matrix was not Hermitian; symmetrization changed entries by up to {correction:.3g}",
            stacklevel=2,
        )
    return check_density_matrix(sym, dim)


def random_density_matrix(rng, dim=4, rank=None):
    """Random density operator from a Ginibre ensemble (test and demo helper)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def matrix_to_pairs(m):
    """Serialize a complex matrix as nested ``[re, im]`` pairs, row-major."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def matrix_from_pairs(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("expected a matrix of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def load_density_matrix(path):
    """Read a 4x4 density matrix stored as JSON ``[re, im]`` pairs (basis hh, hv, vh, vv).

    The file may hold the bare array or an object with a ``"rho"`` key.
    """
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["rho"]
    return as_density_matrix(matrix_from_pairs(data))


def dump_density_matrix(rho, path, **extra):
    payload = {"basis": ["hh", "hv", "vh", "vv"], "rho": matrix_to_pairs(rho)}
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
