"""Low-energy resolvent ledger: coefficient chain, transition-face solves,
and asymptotic-profile assembly.

The expansion of the resolvent in the spectral parameter proceeds by
inverting the zero-energy operator k = ceil(beta_+ - beta_-) times.  Each
step multiplies the leading far-field coefficient by
-2i(lambda_+ - j - (n-1)/2 - S) and divides by the indicial polynomial
p(lambda_+ - j); the resulting chain f_{1,0}..f_{k,0} decides whether the
late-time profile is sharp (all nonzero) or the decay is strictly faster
(chain hits zero).  The k-th error term lives on the transition face
|sigma| r ~ 1, where the model operator is the sigma = +-1 mode operator
with pure inverse-square potential; its solution's r^-lambda_minus
amplitude u'_0 (log-augmented when 2 nu_0 is an integer) is the last
ingredient of the profile.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import indicial, radial_ode, zero_energy
from .errors import (
    ConfigInvalid,
    DegenerateLedger,
    IndicialCollision,
    SlowConvergence,
    UnhandledResonantCase,
)
from .model import ModeCoefficients, ModeModel, cutoff_chi, mode_coefficients

CHAIN_ZERO_TOL = 1e-12
TF_FIT_TOL = 1e-4


# ---------------------------------------------------------------------------
# Exact arithmetic over Q(sqrt(d))
# ---------------------------------------------------------------------------

class QuadExt:
    """Number a + b sqrt(d) with rational a, b and fixed rational d >= 0."""

    __slots__ = ("a", "b", "d")

    def __init__(self, a, b, d):
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.d = Fraction(d)
        # Canonicalize perfect-square radicands so exact zeros are decidable.
        if self.b != 0 and self.d != 0:
            num, den = self.d.numerator, self.d.denominator
            sn, sd = math.isqrt(num), math.isqrt(den)
            if sn * sn == num and sd * sd == den:
                self.a += self.b * Fraction(sn, sd)
                self.b = Fraction(0)

    def _match(self, other: "QuadExt") -> None:
        if self.d != other.d:
            raise ValueError("mixed radicands")

    def __add__(self, o):
        self._match(o)
        return QuadExt(self.a + o.a, self.b + o.b, self.d)

    def __sub__(self, o):
        self._match(o)
        return QuadExt(self.a - o.a, self.b - o.b, self.d)

    def __mul__(self, o):
        if isinstance(o, Fraction):
            return QuadExt(self.a * o, self.b * o, self.d)
        self._match(o)
        return QuadExt(self.a * o.a + self.b * o.b * self.d,
                       self.a * o.b + self.b * o.a, self.d)

    def __truediv__(self, o):
        if isinstance(o, Fraction):
            return QuadExt(self.a / o, self.b / o, self.d)
        self._match(o)
        den = o.a * o.a - o.b * o.b * o.d
        if den == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt(d))")
        return QuadExt((self.a * o.a - self.b * o.b * o.d) / den,
                       (self.b * o.a - self.a * o.b) / den, self.d)

    def __neg__(self):
        return QuadExt(-self.a, -self.b, self.d)

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def to_float(self) -> float:
        return float(self.a) + float(self.b) * math.sqrt(float(self.d))

    def rational(self, q) -> "QuadExt":
        return QuadExt(q, 0, self.d)


@dataclass(frozen=True)
class ComplexQuad:
    re: QuadExt
    im: QuadExt

    def __mul__(self, o: "ComplexQuad") -> "ComplexQuad":
        return ComplexQuad(self.re * o.re - self.im * o.im,
                           self.re * o.im + self.im * o.re)

    def div_real(self, x: QuadExt) -> "ComplexQuad":
        return ComplexQuad(self.re / x, self.im / x)

    def is_zero(self) -> bool:
        return self.re.is_zero() and self.im.is_zero()

    def to_complex(self) -> complex:
        return complex(self.re.to_float(), self.im.to_float())


def _as_small_rational(x: float, max_den: int = 10000) -> Optional[Fraction]:
    fr = Fraction(x).limit_denominator(max_den)
    if abs(float(fr) - x) <= 1e-12 * max(1.0, abs(x)):
        return fr
    return None


def _ceil_twice_sqrt(q: Fraction) -> int:
    """ceil(2 sqrt(q)) for rational q > 0, exactly."""
    m = max(1, math.isqrt(int(4 * q)))
    while Fraction(m * m) < 4 * q:
        m += 1
    while m > 1 and Fraction((m - 1) * (m - 1)) >= 4 * q:
        m -= 1
    return m


def _chain_exact(n: int, alpha: Fraction, s_re: Fraction, s_im: Fraction) -> Optional[list[ComplexQuad]]:
    """Coefficient chain over Q(sqrt(nu0^2)); None when nu0^2 <= 0."""
    q = Fraction(n - 2, 2) ** 2 + alpha
    if q <= 0:
        return None
    k = _ceil_twice_sqrt(q)
    nu0 = QuadExt(0, 1, q)
    zero = QuadExt(0, 0, q)

    def real_quad(fr) -> QuadExt:
        return QuadExt(fr, 0, q)

    def p_at(j: int) -> QuadExt:
        # p(lambda_+ - j) with lambda_+ - j = (n-2)/2 - j + nu0.
        c = Fraction(n - 2, 2) - j
        rational = -c * c - q + alpha + (n - 2) * c
        radical = Fraction(n - 2) - 2 * c
        return QuadExt(rational, radical, q)

    def step_factor(j: int) -> ComplexQuad:
        # -2i (lambda_+ - j - (n-1)/2 - S) with S = s_re + i s_im.
        x = nu0 + real_quad(Fraction(-1, 2) - j - s_re)
        return ComplexQuad(real_quad(-2 * s_im), x * Fraction(-2))

    chain = [step_factor(0)]
    for j in range(1, k):
        pj = p_at(j)
        if pj.is_zero():
            raise IndicialCollision(f"recursion denominator p(lambda_+ - {j}) = 0")
        chain.append((step_factor(j) * chain[-1]).div_real(pj))
    return chain


def _chain_float(model: ModeModel) -> list[complex]:
    nu0 = indicial.nu(model, 0)
    n = model.n
    lam_p = (n - 2) / 2.0 + nu0
    k = math.ceil(2.0 * nu0.real - 1e-13)
    S = model.S

    def p(mu: complex) -> complex:
        return -mu * mu + (n - 2) * mu + model.alpha

    chain = [-2j * (lam_p - (n - 1) / 2.0 - S)]
    for j in range(1, k):
        denom = p(lam_p - j)
        if abs(denom) < 1e-12 * (1.0 + abs(lam_p - j) ** 2):
            raise IndicialCollision(
                f"recursion denominator p(lambda_+ - {j}) vanishes (boundary-spectrum hit)"
            )
        chain.append(-2j * (lam_p - j - (n - 1) / 2.0 - S) * chain[-1] / denom)
    return chain


@dataclass(frozen=True)
class ChainDetail:
    values: tuple[complex, ...]
    exact: bool
    first_zero: Optional[int]  # 1-based index of the first vanishing entry


def chain_detail(model: ModeModel) -> ChainDetail:
    """Coefficient chain plus provenance (exact-arithmetic path when available)."""
    values = _chain_float(model)
    exact = False
    a_fr = _as_small_rational(model.alpha.real) if model.alpha.imag == 0 else None
    sre_fr = _as_small_rational(model.S.real)
    sim_fr = _as_small_rational(model.S.imag)
    if a_fr is not None and sre_fr is not None and sim_fr is not None \
            and len(values) <= 8:
        exact_chain = _chain_exact(model.n, a_fr, sre_fr, sim_fr)
        if exact_chain is not None:
            ex = [c.to_complex() for c in exact_chain]
            scale = max(1.0, max(abs(c) for c in ex))
            if max(abs(x - y) for x, y in zip(ex, values)) > 1e-10 * scale:
                raise ConfigInvalid(
                    "exact and floating-point coefficient chains disagree"
                )
            # Exact zeros beat float noise.
            values = [0.0 if c.is_zero() else c.to_complex() for c in exact_chain]
            exact = True
    scale = max(1.0, max(abs(c) for c in values))
    first_zero = None
    for j, c in enumerate(values, start=1):
        if abs(c) < CHAIN_ZERO_TOL * scale:
            first_zero = j
            break
    return ChainDetail(tuple(values), exact, first_zero)


def leading_coefficient_chain(model: ModeModel) -> list[complex]:
    """[f_{1,0}, ..., f_{k,0}]: the leading far-field coefficients of the
    iterated zero-energy corrections, in the gauge where the gap-endpoint
    eigenfunction is the constant 1."""
    return list(chain_detail(model).values)


# ---------------------------------------------------------------------------
# Transition-face operator and its origin series (with log ladder)
# ---------------------------------------------------------------------------

def tf_coefficients(model: ModeModel, sign: int) -> ModeCoefficients:
    """sigma = +-1 mode-zero operator with the bare inverse-square strength.

    Unlike the bulk operator there is no origin cutoff: the face carries the
    full alpha down to r_hat = 0.
    """
    if sign not in (1, -1):
        raise ConfigInvalid("sign must be +1 or -1")
    n, alpha, S = model.n, model.alpha, model.S
    sigma = complex(sign)

    def a(r: float) -> complex:
        return (n - 1) / r + 2j * sigma

    def b(r: float) -> complex:
        return alpha / (r * r) - 1j * sigma * (n - 1 + 2.0 * S) / r

    return ModeCoefficients(
        a=a, b=b, n=n, ell=0, sigma=sigma, S=S, alpha=alpha, lambda_ell=0,
        v_taylor0=(0.0,) * 26, r_match=1.0, breakpoints=(),
    )


@dataclass
class TfSeries:
    """Truncated generalized power series sum c_{m,q} r^(s+m) (log r)^q, q <= 1."""

    s: complex
    c0: list[complex]  # plain coefficients c_{m,0}
    c1: list[complex]  # log coefficients  c_{m,1}

    def eval(self, r: float) -> tuple[complex, complex]:
        lg = math.log(r)
        u0 = 0.0j
        u1 = 0.0j
        d0 = 0.0j
        d1 = 0.0j
        for m in range(len(self.c0) - 1, -1, -1):
            u0 = u0 * r + self.c0[m]
            u1 = u1 * r + self.c1[m]
            d0 = d0 * r + (self.s + m) * self.c0[m]
            d1 = d1 * r + (self.s + m) * self.c1[m]
        pref = cmath.exp(self.s * cmath.log(r))
        val = pref * (u0 + lg * u1)
        der = pref / r * (d0 + lg * d1 + u1)
        return val, der

    def basis(self) -> Callable[[float], tuple[complex, complex]]:
        return self.eval


def tf_origin_series(
    model: ModeModel,
    sign: int,
    s: complex,
    c00: complex,
    c01: complex,
    forcing_amp: complex = 0.0,
    M: int = 40,
) -> TfSeries:
    """Solve the transition-face ODE by a Frobenius ladder at r_hat = 0.

    The seed fills slot m = 0; the ladder then determines every higher slot,
    promoting a plain power to a log power exactly at a resonant slot
    (vanishing indicial factor).  forcing_amp adds F = forcing_amp r^s to
    the right-hand side of r^2 N u = F at slot zero, which is how forced
    particular series and unit-log responses are built.
    """
    n, alpha, S = model.n, model.alpha, model.S
    sigma = complex(sign)

    def Q(mu: complex) -> complex:
        return -mu * mu - (n - 2) * mu + alpha

    def Qp(mu: complex) -> complex:
        return -2 * mu - (n - 2)

    def rho(mu: complex) -> complex:
        return -1j * sigma * (2 * mu + (n - 1) + 2.0 * S)

    rho_p = -2j * sigma

    c0 = [complex(c00)]
    c1 = [complex(c01)]
    for m in range(1, M + 1):
        mu = s + m
        rhs1 = -rho(mu - 1) * c1[m - 1]
        rhs0 = -rho(mu - 1) * c0[m - 1] - rho_p * c1[m - 1]
        qm = Q(mu)
        if abs(qm) > 1e-9 * (1.0 + abs(mu) ** 2):
            c1m = rhs1 / qm
            c0m = (rhs0 - Qp(mu) * c1m) / qm
        else:
            # Resonant slot: the log equation must be consistent, the plain
            # coefficient is free (taken 0), and the log amplitude is forced.
            if abs(rhs1) > 1e-9 * (1.0 + abs(rhs0)):
                raise UnhandledResonantCase(
                    "double resonance would require a log^2 term"
                )
            c1m = rhs0 / Qp(mu)
            c0m = 0.0
        c1.append(c1m)
        c0.append(c0m)

    series = TfSeries(s=complex(s), c0=c0, c1=c1)
    if forcing_amp != 0.0:
        # Redo slot zero with the forcing: Q(s) c00 + Qp(s) c01 = forcing_amp.
        qs = Q(s)
        if abs(qs) > 1e-9 * (1.0 + abs(s) ** 2):
            series.c0[0] = complex(forcing_amp / qs)
            series.c1[0] = 0.0
        else:
            series.c1[0] = complex(forcing_amp / Qp(s))
            series.c0[0] = 0.0
        return tf_origin_series(model, sign, s, series.c0[0], series.c1[0], 0.0, M)
    return series


@dataclass(frozen=True)
class TfSolveResult:
    u_prime_0: complex
    log_case: bool
    c_star: complex
    residuals: dict
    sign: int


def _tf_particular_far(coeffs: ModeCoefficients, lam_p: complex, k: int,
                       f_k0: complex, m: int, tol: float,
                       R_floor: float = 10.0) -> tuple[float, complex, complex]:
    """Start radius, value and derivative of the forced far-field series.

    The particular solution behaves like r^-(lambda_+ - k + 1) at infinity
    with coefficients from the same two-term recursion as the homogeneous
    outgoing series.
    """
    sigma = coeffs.sigma
    P = coeffs.far_indicial_poly
    mu_p = lam_p - k + 1.0

    def E(mu: complex) -> complex:
        return 2.0 * mu - (coeffs.n - 1) - 2.0 * coeffs.S

    if abs(E(mu_p)) < 1e-9 * (1.0 + abs(mu_p)):
        raise UnhandledResonantCase(
            "forcing tail resonates with the outgoing exponent"
        )
    g = [f_k0 / (1j * sigma * E(mu_p))]
    for j in range(1, m + 1):
        g.append(-P(mu_p + j - 1) * g[j - 1] / (1j * sigma * E(mu_p + j)))

    R = max(10.0, R_floor)
    while radial_ode.series_tail_estimate(g, R) > tol:
        R *= 1.4
        if R > 1e7:
            raise SlowConvergence("no admissible particular start radius")
    u = 0.0j
    du = 0.0j
    x = 1.0 / R
    for j in range(m, -1, -1):
        u = u * x + g[j]
        du = du * x + (mu_p + j) * g[j]
    pref = cmath.exp(-mu_p * cmath.log(R))
    return R, pref * u, -pref * du / R


def transition_face_solve(
    model: ModeModel,
    f_k0: complex,
    sign: int = 1,
    tol: float = 1e-11,
    fit_pairs: Sequence[tuple[float, float]] = ((0.4, 0.8), (0.3, 0.6)),
    series_m: int = 12,
    fit_tol: float = TF_FIT_TOL,
) -> TfSolveResult:
    """Solve the transition-face model problem and extract u'_0.

    The boundary-value problem (outgoing power law at infinity, no
    r^-lambda_plus branch at zero) is solved by matching an inward-integrated
    particular solution plus a multiple of the outgoing homogeneous solution
    against exact origin series; u'_0 is the fitted amplitude of
    r^-lambda_minus (of r^-lambda_minus log r in the resonant case).
    """
    if f_k0 == 0:
        return TfSolveResult(0.0, False, 0.0, {"note": "zero forcing"}, sign)
    nu0 = indicial.nu(model, 0)
    n = model.n
    lam_m = (n - 2) / 2.0 - nu0
    lam_p = (n - 2) / 2.0 + nu0
    k = math.ceil(2.0 * nu0.real - 1e-13)
    report = indicial.nondegeneracy_check(model)
    log_case = report.tf_log_case
    if not log_case:
        gap = lam_p - k - lam_m
        if abs(gap.imag) < 1e-10 and abs(gap.real - round(gap.real)) < 1e-10 \
                and round(gap.real) != 0:
            raise UnhandledResonantCase(
                "integer exponent gap with distinct transition-face exponents"
            )
    loosen = 10.0 if report.warning else 1.0

    coeffs = tf_coefficients(model, sign)
    sigma = complex(sign)
    lam_out = coeffs.outgoing_exponent()

    radii = sorted({r for pair in fit_pairs for r in pair})
    R_out = max(radial_ode.choose_start_radius(coeffs, lam_out, m=series_m,
                                               tail_tol=min(tol, 1e-12)), radii[-1])
    u0, du0 = radial_ode.power_asymptotic_start(coeffs, lam_out, m=series_m, R=R_out,
                                                tail_tol=min(tol, 1e-12))
    u_out = radial_ode.integrate(coeffs.a, coeffs.b, (u0, du0), (R_out, radii[0]),
                                 tol=tol, r_eval=radii, renormalize=True)

    R_p, up0, dup0 = _tf_particular_far(coeffs, lam_p, k, f_k0, series_m,
                                        min(tol, 1e-12), R_floor=radii[-1])

    def forcing(r: float) -> complex:
        return f_k0 * cmath.exp((-(lam_p - k) - 2.0) * cmath.log(r))
    u_par = radial_ode.integrate(coeffs.a, coeffs.b, (up0, dup0), (R_p, radii[0]),
                                 tol=tol, r_eval=radii, forcing=forcing,
                                 renormalize=False)

    # Origin bases: phi1 (tame branch), phi2 (singular branch, log-continued
    # in the resonant case), and the local response functions.
    phi1 = tf_origin_series(model, sign, -lam_m, 1.0, 0.0)
    phi2 = tf_origin_series(model, sign, -lam_p, 1.0, 0.0)
    if log_case:
        # Unit log response: solves r^2 N u = Q'(-lam_m) r^-lam_m.
        b_log = tf_origin_series(model, sign, -lam_m, 0.0, 1.0)
        basis = [phi2.basis(), phi1.basis(), b_log.basis()]
        subtract = None
    else:
        # Forced pure-power local particular series.
        phi3 = tf_origin_series(model, sign, -(lam_p - k), 0.0, 0.0,
                                forcing_amp=f_k0)
        basis = [phi2.basis(), phi1.basis()]
        subtract = phi3

    def fit(sol: radial_ode.RadialSolution, take_off: Optional[TfSeries]):
        groups = [tuple(pair) for pair in fit_pairs]
        if take_off is None:
            work = sol
        else:
            w_u = sol.u.copy()
            w_du = sol.du.copy()
            for i, r in enumerate(sol.r):
                val, der = take_off.eval(r)
                s = math.exp(-sol.log_scale[i]) if sol.log_scale[i] else 1.0
                w_u[i] -= val * s
                w_du[i] -= der * s
            work = radial_ode.RadialSolution(r=sol.r, u=w_u, du=w_du,
                                             log_scale=sol.log_scale)
        return radial_ode.fit_onto_basis(work, groups, basis,
                                         fit_tol=fit_tol * loosen)

    fit_par = fit(u_par, subtract)
    fit_out = fit(u_out, None)

    A_p, B_p = fit_par.amplitudes[0], fit_par.amplitudes[1]
    A_o, B_o = fit_out.amplitudes[0], fit_out.amplitudes[1]
    c_star = -A_p / A_o
    if log_case:
        G_p = fit_par.amplitudes[2]
        G_o = fit_out.amplitudes[2]
        u_prime_0 = G_p + c_star * G_o
    else:
        u_prime_0 = B_p + c_star * B_o

    residuals = {
        "fit_particular": fit_par.residual,
        "fit_outgoing": fit_out.residual,
        "agreement_particular": fit_par.agreement,
        "agreement_outgoing": fit_out.agreement,
    }
    return TfSolveResult(u_prime_0=complex(u_prime_0), log_case=log_case,
                         c_star=complex(c_star), residuals=residuals, sign=sign)


# ---------------------------------------------------------------------------
# Hankel oracle for the transition-face machinery
# ---------------------------------------------------------------------------

def hankel_outgoing(
    nu: complex,
    z_grid: Sequence[float],
    tol: float = 1e-11,
    series_m: int = 16,
) -> np.ndarray:
    """Outgoing solution of the Bessel equation on a real positive grid.

    Asymptotics sqrt(2/(pi z)) e^{i(z - nu pi/2 - pi/4)} (1 + O(1/z));
    computed by an asymptotic start at large z and inward ODE integration.
    """
    if complex(nu).real <= 0:
        raise ConfigInvalid("hankel_outgoing requires Re nu > 0")
    z = np.asarray(sorted(float(x) for x in z_grid), dtype=float)
    if z.size == 0 or z[0] <= 0:
        raise ConfigInvalid("z grid must be positive")
    nu = complex(nu)

    # a_k(nu) = prod_{j<=k} (4 nu^2 - (2j-1)^2) / (8 j)
    a = [1.0 + 0.0j]
    for j in range(1, series_m + 1):
        a.append(a[-1] * (4.0 * nu * nu - (2 * j - 1) ** 2) / (8.0 * j))

    Z = max(z[-1], 10.0)
    def tail(Zv: float) -> float:
        terms = [abs(ak) * Zv ** (-kk) for kk, ak in enumerate(a)]
        return terms[-1] / max(sum(terms), 1e-300)
    while tail(Z) > min(tol, 1e-12):
        Z *= 1.3
        if Z > 1e7:
            raise SlowConvergence("Hankel asymptotic series will not converge")

    # T(z) = sum c_k z^-k with c_k = i^k a_k; dT/dz = -(1/z) sum k c_k z^-k.
    T = 0.0j
    U = 0.0j
    x = 1.0 / Z
    for kk in range(series_m, -1, -1):
        ck = (1j) ** kk * a[kk]
        T = T * x + ck
        U = U * x + kk * ck
    dT = -U / Z
    pref = cmath.sqrt(2.0 / (math.pi * Z)) * cmath.exp(1j * (Z - nu * math.pi / 2 - math.pi / 4))
    w0 = pref * T
    dw0 = pref * ((1j - 0.5 / Z) * T + dT)

    # Bessel: w'' + w'/z + (1 - nu^2/z^2) w = 0, i.e. a = 1/z, b = nu^2/z^2 - 1.
    def a_coeff(r: float) -> complex:
        return 1.0 / r

    def b_coeff(r: float) -> complex:
        return nu * nu / (r * r) - 1.0

    sol = radial_ode.integrate(a_coeff, b_coeff, (w0, dw0), (Z, z[0]),
                               tol=tol, r_eval=list(z), renormalize=True)
    return sol.u * np.exp(sol.log_scale)


# ---------------------------------------------------------------------------
# Ledger and profile
# ---------------------------------------------------------------------------

@dataclass
class ProfileData:
    """Late-time asymptotic profile: exponents, spatial shape, ray shape."""

    t_exponent_T: float
    t_exponent_iota: float
    lambda_minus: complex
    nu0: complex
    a_T: radial_ode.RadialSolution
    a_plus_tag: str
    a_plus: Callable[[float], complex]
    amplitude: Optional[complex] = None  # fitted from evolution data, never predicted

    def as_dict(self) -> dict:
        return {
            "t_exponent_T": self.t_exponent_T,
            "t_exponent_iota": self.t_exponent_iota,
            "lambda_minus": [self.lambda_minus.real, self.lambda_minus.imag],
            "nu0": [self.nu0.real, self.nu0.imag],
            "a_plus_tag": self.a_plus_tag,
            "amplitude": None if self.amplitude is None
            else [complex(self.amplitude).real, complex(self.amplitude).imag],
        }


@dataclass
class ExpansionLedger:
    k: int
    f0_chain: list[complex]
    log_case: bool
    degenerate: bool
    degenerate_note: Optional[str] = None
    u_prime_plus0: Optional[complex] = None
    u_prime_minus0: Optional[complex] = None
    u_j: Optional[list] = None
    profile: Optional[ProfileData] = None
    checks: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "f0_chain": [[c.real, c.imag] for c in map(complex, self.f0_chain)],
            "log_case": self.log_case,
            "degenerate": self.degenerate,
            "degenerate_note": self.degenerate_note,
            "u_prime_plus0": None if self.u_prime_plus0 is None
            else [self.u_prime_plus0.real, self.u_prime_plus0.imag],
            "u_prime_minus0": None if self.u_prime_minus0 is None
            else [self.u_prime_minus0.real, self.u_prime_minus0.imag],
            "checks": dict(self.checks),
            "profile": None if self.profile is None else self.profile.as_dict(),
        }


def build_ledger(
    model: ModeModel,
    tol: float = 1e-11,
    check_admissibility: bool = True,
    compute_corrections: bool = False,
    with_profile: bool = True,
) -> ExpansionLedger:
    """Run the full expansion: chain, transition-face solves, profile.

    A vanishing chain entry marks the ledger degenerate (decay is strictly
    faster than the generic rate) and suppresses the transition-face and
    profile stages.
    """
    checks: dict = {}
    if check_admissibility:
        from .spectral_family import build_sigma_grid, mode_stability_scan

        scan = mode_stability_scan(model, 2, build_sigma_grid(0.2, 5.0, 5), tol=1e-9)
        checks["mode_stability_min_W"] = scan.min_abs_w()
        if scan.flagged:
            raise ConfigInvalid(f"mode instability flagged for ell in {scan.flagged}")
        c_minus = zero_energy.resonance_indicator(model, 0, tol=1e-9)
        checks["resonance_c_minus"] = abs(c_minus)
        if abs(c_minus) <= zero_energy.RES_TOL:
            raise ConfigInvalid("zero-energy resonance in mode 0")

    detail = chain_detail(model)
    data = indicial.indicial_roots(model, 0)
    checks["chain_exact_arithmetic"] = detail.exact

    if detail.first_zero is not None:
        return ExpansionLedger(
            k=data.k, f0_chain=list(detail.values), log_case=False,
            degenerate=True,
            degenerate_note=(
                f"degenerate: stronger decay (f_{detail.first_zero},0 = 0)"
            ),
            checks=checks,
        )

    f_k0 = detail.values[-1]
    res_p = transition_face_solve(model, f_k0, +1, tol=tol)
    res_m = transition_face_solve(model, f_k0, -1, tol=tol)
    checks["tf_residuals_plus"] = res_p.residuals
    checks["tf_residuals_minus"] = res_m.residuals

    u_j = None
    if compute_corrections:
        u_j = correction_solutions(model, detail.values, tol=tol)

    ledger = ExpansionLedger(
        k=data.k, f0_chain=list(detail.values), log_case=res_p.log_case,
        degenerate=False,
        u_prime_plus0=res_p.u_prime_0, u_prime_minus0=res_m.u_prime_0,
        u_j=u_j, checks=checks,
    )
    if with_profile:
        ledger.profile = assemble_profile(model, ledger)
    return ledger


def correction_solutions(model: ModeModel, chain: Sequence[complex],
                         tol: float = 1e-10) -> list:
    """Radial corrections u_j: zero-energy solves against the iterated
    error-term forcings with tails r^(-lambda_+ + j - 2)."""
    nu0 = indicial.nu(model, 0)
    lam_p = (model.n - 2) / 2.0 + nu0
    out = []
    for j, f_j0 in enumerate(chain, start=1):
        if f_j0 == 0:
            break
        expo = (lam_p - j).real + 2.0

        def f_func(r: float, amp=f_j0, e=(lam_p - j) + 2.0) -> complex:
            return amp * cutoff_chi(r) * r ** (-e)

        f = zero_energy.Forcing(f_func, support=None, tail_exponent=expo,
                                label=f"error_term_{j}")
        out.append(zero_energy.solve_zero_energy(model, 0, f, tol=tol,
                                                 resid_tol=1e-5))
    return out


def assemble_profile(model: ModeModel, ledger: ExpansionLedger,
                     tol: float = 1e-10) -> ProfileData:
    """Profile with exponents from the gap, spatial shape from the large
    zero-energy state, and the closed-form ray shape (v/(2+v))^(1/2+nu0)."""
    if ledger.degenerate:
        raise DegenerateLedger(ledger.degenerate_note or "degenerate ledger")
    data = indicial.indicial_roots(model, 0)
    nu0 = data.nu[0]
    a_T = zero_energy.large_zero_state(model, tol=tol)

    if model.alpha == 0 and model.n % 2 == 0:
        tag = f"minkowski_even({model.n})"
    elif nu0.imag == 0:
        tag = f"inverse_square({nu0.real:.12g})"
    else:
        tag = "unavailable"

    power = 0.5 + nu0

    def a_plus(v):
        v = np.asarray(v, dtype=float)
        ratio = np.where(v > 0, v / (2.0 + v), 0.0)
        with np.errstate(invalid="ignore"):
            out = np.where(ratio > 0, ratio ** complex(power), 0.0)
        if np.isrealobj(out) or not np.any(np.iscomplex(out)):
            out = out.real
        return out if out.ndim else out[()]

    return ProfileData(
        t_exponent_T=data.exponents["T"],
        t_exponent_iota=data.exponents["iota"],
        lambda_minus=data.lambda_minus[0],
        nu0=nu0,
        a_T=a_T,
        a_plus_tag=tag,
        a_plus=a_plus,
    )
