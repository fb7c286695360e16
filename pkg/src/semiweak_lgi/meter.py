"""Semi-weak polarization meter built from a partially reflecting coverslip.

The coverslip splits a photon into a reflected (``"r"``) and transmitted
(``"t"``) mode with polarization dependent probabilities.  Each outcome has a
diagonal Kraus operator in the h/v basis, and the pair of outcomes is assigned
contextual values chosen so that their POVM-weighted sum is exactly sigma_z.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateMeter
from .qstate import check_density_matrix, embed

OUTCOMES = ("r", "t")
DEGENERACY_TOL = 1e-9

# Calibration of the glass coverslip (reflectivity, one-sigma uncertainty).
CALIBRATED_R_H = 0.0390
CALIBRATED_R_V = 0.175
CALIBRATED_SIGMA_R_H = 0.0007
CALIBRATED_SIGMA_R_V = 0.001


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SemiWeakMeter:
    """Two-outcome meter for sigma_z with reflectivities ``r_h`` and ``r_v``.

    All derived quantities (Kraus operators, POVM elements, contextual values)
    are computed on construction.  Raises :class:`DegenerateMeter` when the two
    reflectivities coincide, because no finite contextual values exist then.
    """

    r_h: float
    r_v: float
    kraus_r: np.ndarray = field(init=False, repr=False, compare=False)
    kraus_t: np.ndarray = field(init=False, repr=False, compare=False)
    povm_r: np.ndarray = field(init=False, repr=False, compare=False)
    povm_t: np.ndarray = field(init=False, repr=False, compare=False)
    cv_r: float = field(init=False)
    cv_t: float = field(init=False)

    def __post_init__(self):
        r_h, r_v = float(self.r_h), float(self.r_v)
        for name, r in (("r_h", r_h), ("r_v", r_v)):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {r!r}")
        diff = r_h - r_v
        if abs(diff) <= DEGENERACY_TOL:
            raise DegenerateMeter(
                f"r_h={r_h} and r_v={r_v} coincide; contextual values diverge"
            )
        t_h, t_v = 1.0 - r_h, 1.0 - r_v
        set_ = object.__setattr__
        set_(self, "r_h", r_h)
        set_(self, "r_v", r_v)
        set_(self, "kraus_r", _frozen(np.diag([np.sqrt(r_h), np.sqrt(r_v)])))
        # Positive sign on the transmitted branch: a global phase per outcome is unobservable.
        set_(self, "kraus_t", _frozen(np.diag([np.sqrt(t_h), np.sqrt(t_v)])))
        set_(self, "povm_r", _frozen(np.diag([r_h, r_v])))
        set_(self, "povm_t", _frozen(np.diag([t_h, t_v])))
        set_(self, "cv_r", (t_h + t_v) / diff)
        set_(self, "cv_t", -(r_h + r_v) / diff)

    @property
    def t_h(self):
        return 1.0 - self.r_h

    @property
    def t_v(self):
        return 1.0 - self.r_v

    @property
    def contextual_values(self):
        """Generalized value set ``(cv_r, cv_t)`` in outcome order."""
        return (self.cv_r, self.cv_t)

    @property
    def is_projective(self):
        return {self.r_h, self.r_v} == {0.0, 1.0}

    def kraus(self, outcome):
        return {"r": self.kraus_r, "t": self.kraus_t}[outcome]

    def povm(self, outcome):
        return {"r": self.povm_r, "t": self.povm_t}[outcome]

    def cv(self, outcome):
        return {"r": self.cv_r, "t": self.cv_t}[outcome]

    def response(self):
        """Outcome probabilities given a sigma_z eigenstate.

        Returns a 2x2 array ``P[outcome, a]`` with outcome order ``(r, t)``
        and eigenvalue order ``(+1, -1)``.
        """
        return np.array([[self.r_h, self.r_v], [self.t_h, self.t_v]])


def meter_from_reflectivities(r_h, r_v):
    return SemiWeakMeter(r_h, r_v)


def calibrated_meter():
    """Meter with the calibrated coverslip reflectivities R_h=0.0390, R_v=0.175."""
    return SemiWeakMeter(CALIBRATED_R_H, CALIBRATED_R_V)


def cv_uncertainty(meter, sigma_r_h, sigma_r_v):
    """First-order propagation of reflectivity uncertainties into ``(sigma_cv_r, sigma_cv_t)``.

    Only used for reporting; simulations always take the reflectivities as exact.
    """
    d2 = (meter.r_h - meter.r_v) ** 2
    dr_dh, dr_dv = -2 * meter.t_v / d2, 2 * meter.t_h / d2
    dt_dh, dt_dv = 2 * meter.r_v / d2, -2 * meter.r_h / d2
    s_r = np.hypot(dr_dh * sigma_r_h, dr_dv * sigma_r_v)
    s_t = np.hypot(dt_dh * sigma_r_h, dt_dv * sigma_r_v)
    return float(s_r), float(s_t)


def apply_meter(meter, rho, outcome, party=1):
    """Unnormalized post-measurement state and probability of ``outcome``.

    Parameters
    ----------
    meter : SemiWeakMeter
    rho : array_like
        4x4 density operator.
    outcome : {"r", "t"}
    party : {1, 2}
        Which photon passes through the meter.

    Returns
    -------
    post : numpy.ndarray
        ``(M (x) I) rho (M (x) I)^dagger``.
    probability : float
        Trace of ``post``.
    """
    rho = check_density_matrix(rho)
    k = embed(meter.kraus(outcome), party)
    post = k @ rho @ k.conj().T
    return post, float(np.trace(post).real)


def cv_reconstruction(meter):
    """``cv_r E_r + cv_t E_t``; equals sigma_z for every valid meter."""
    return meter.cv_r * meter.povm_r + meter.cv_t * meter.povm_t

