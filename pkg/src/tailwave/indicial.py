"""Closed-form boundary exponents, the indicial gap, and decay predictions.

Everything here is arithmetic on

    nu_ell   = sqrt(((n-2)/2 + ell)^2 + alpha)        (principal branch),
    lambda_- = (n-2)/2 - nu_ell,   lambda_+ = (n-2)/2 + nu_ell,

with the gap endpoints beta_-+ = Re lambda_-+ of mode zero.  The predicted
late-time rates are (n-1)/2 + Re S toward null infinity, beta_+ + 1 along
interior rays, and beta_+ - beta_- + 1 at fixed radius.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

from .errors import InadmissibleAlpha
from .model import ModeModel

LOG_CASE_TOL = 1e-10
LOG_CASE_WARN = 1e-4


def nu(model: ModeModel, ell: int) -> complex:
    """nu_ell with Re > 0; raises InadmissibleAlpha on the removed ray."""
    base = ((model.n - 2) / 2.0 + ell) ** 2 + model.alpha
    if base.imag == 0.0 and base.real <= 0.0 and ell == 0:
        raise InadmissibleAlpha(f"alpha = {model.alpha} is on the removed ray for n = {model.n}")
    root = cmath.sqrt(base)
    if root.real < 0 or (root.real == 0 and root.imag < 0):
        root = -root
    return root


@dataclass(frozen=True)
class IndicialData:
    nu: tuple[complex, ...]
    lambda_minus: tuple[complex, ...]
    lambda_plus: tuple[complex, ...]
    beta_minus: float
    beta_plus: float
    k: int
    exponents: dict

    def as_dict(self) -> dict:
        return {
            "nu": [[z.real, z.imag] for z in self.nu],
            "lambda_minus": [[z.real, z.imag] for z in self.lambda_minus],
            "lambda_plus": [[z.real, z.imag] for z in self.lambda_plus],
            "gap": [self.beta_minus, self.beta_plus],
            "k": self.k,
            "exponents": dict(self.exponents),
        }


@dataclass(frozen=True)
class NondegeneracyReport:
    simple_pole: bool
    f_chain_nonzero: bool
    first_vanishing_index: Optional[int]
    tf_log_case: bool
    eqev_alpha_violation: Optional[int]
    warning: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "simple_pole": self.simple_pole,
            "f_chain_nonzero": self.f_chain_nonzero,
            "first_vanishing_index": self.first_vanishing_index,
            "tf_log_case": self.tf_log_case,
            "eqev_alpha_violation": self.eqev_alpha_violation,
            "warning": self.warning,
        }


def indicial_roots(model: ModeModel, ell_max: int) -> IndicialData:
    """Boundary exponents for ell = 0..ell_max and the mode-zero gap."""
    half = (model.n - 2) / 2.0
    nus, lams_m, lams_p = [], [], []
    for ell in range(ell_max + 1):
        nu_l = nu(model, ell)
        nus.append(nu_l)
        lams_m.append(half - nu_l)
        lams_p.append(half + nu_l)
    beta_minus = lams_m[0].real
    beta_plus = lams_p[0].real
    k = math.ceil(beta_plus - beta_minus - 1e-13)
    return IndicialData(
        nu=tuple(nus),
        lambda_minus=tuple(lams_m),
        lambda_plus=tuple(lams_p),
        beta_minus=beta_minus,
        beta_plus=beta_plus,
        k=k,
        exponents=_exponents(model, beta_minus, beta_plus),
    )


def _exponents(model: ModeModel, beta_minus: float, beta_plus: float) -> dict:
    return {
        "scri": (model.n - 1) / 2.0 + model.S.real,
        "iota": beta_plus + 1.0,
        "T": beta_plus - beta_minus + 1.0,
    }


def decay_predictions(model: ModeModel) -> dict:
    """Predicted decay rates at scri / iota / T; 'upper bound only' if degenerate."""
    data = indicial_roots(model, 0)
    out = dict(data.exponents)
    report = nondegeneracy_check(model)
    if not report.f_chain_nonzero:
        out["sharpness"] = "upper bound only"
    elif report.tf_log_case:
        out["sharpness"] = "sharp (log case: possible logarithmic corrections at T)"
    else:
        out["sharpness"] = "sharp"
    return out


def _f_chain_float(model: ModeModel) -> list[complex]:
    """Leading-coefficient chain in plain double precision.

    Kept separate from the exact-arithmetic route in low_energy so the two
    can be cross-checked against each other.
    """
    nu0 = nu(model, 0)
    n = model.n
    lam_p = (n - 2) / 2.0 + nu0
    k = math.ceil(2.0 * nu0.real - 1e-13)
    S = model.S

    def p(mu: complex) -> complex:
        return -mu * mu + (n - 2) * mu + model.alpha

    chain = [-2j * (lam_p - (n - 1) / 2.0 - S)]
    for j in range(1, k):
        denom = p(lam_p - j)
        chain.append(-2j * (lam_p - j - (n - 1) / 2.0 - S) * chain[-1] / denom)
    return chain


def nondegeneracy_check(model: ModeModel, ell_scan: int = 32) -> NondegeneracyReport:
    """Diagnostics deciding whether the sharp-profile machinery applies."""
    nu0 = nu(model, 0)

    # Pole at the gap endpoint must be unique across modes and simple.
    half = (model.n - 2) / 2.0
    beta_plus = half + nu0.real
    beta_minus = half - nu0.real
    simple = nu0 != 0
    for ell in range(1, ell_scan + 1):
        nu_l = nu(model, ell)
        for lam in (half - nu_l, half + nu_l):
            if abs(lam.real - beta_plus) < 1e-12 or abs(lam.real - beta_minus) < 1e-12:
                simple = False

    chain = _f_chain_float(model)
    scale = max(1.0, max(abs(c) for c in chain))
    first_zero = None
    for j, c in enumerate(chain, start=1):
        if abs(c) < 1e-12 * scale:
            first_zero = j
            break

    two_nu = 2.0 * nu0
    dist = abs(two_nu - round(two_nu.real)) if round(two_nu.real) >= 1 else math.inf
    log_case = dist <= LOG_CASE_TOL
    warning = None
    if LOG_CASE_TOL < dist <= LOG_CASE_WARN:
        warning = (
            f"2 nu_0 = {two_nu} is within {dist:.2e} of an integer; "
            "transition-face solves are numerically stiff"
        )

    violation = None
    if model.alpha.imag == 0.0:
        a = model.alpha.real
        for ell in range(ell_scan + 1):
            if model.n % 2 == 1:
                boundary = ell * (ell + model.n - 2)
            else:
                boundary = (ell + 0.5) * (ell + model.n - 1.5)
            if abs(a - boundary) < 1e-10 * max(1.0, abs(a)):
                violation = ell
                break

    return NondegeneracyReport(
        simple_pole=simple,
        f_chain_nonzero=first_zero is None,
        first_vanishing_index=first_zero,
        tf_log_case=log_case,
        eqev_alpha_violation=violation,
        warning=warning,
    )
