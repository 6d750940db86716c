"""Complex linear second-order radial ODE engine.

Solves -u'' - a(r) u' + b(r) u = f(r) with an embedded Dormand-Prince 5(4)
pair under PI step control, in either direction, with optional running
magnitude renormalization (values are stored together with a per-point log
scale so that true u = u * exp(log_scale); Wronskians combine the scale
factors exactly).  Frobenius starters provide regular-branch data at the
origin, power-law starters provide far-field branch data, and a shared
least-squares machinery extracts branch amplitudes at paired radii.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigInvalid,
    FitInvalid,
    GridMismatch,
    NonFinite,
    ResonantExponent,
    SlowConvergence,
    StepFailure,
)
from .model import ModeCoefficients

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))

RENORM_THRESHOLD = 1e120
MAX_STEPS_DEFAULT = 10_000_000


@dataclass
class RadialSolution:
    """Field values and derivative on a strictly increasing radial grid.

    True values are u * exp(log_scale) pointwise; log_scale is zero unless
    the integration renormalized on the fly.  Connection coefficients, when
    present, are amplitudes of the r^-lambda_minus / r^-lambda_plus far-field
    branches together with the residual of the two-radius fit.
    """

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    log_scale: np.ndarray = None
    c_minus: Optional[complex] = None
    c_plus: Optional[complex] = None
    fit_residual: Optional[float] = None
    fit_radii: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.u = np.asarray(self.u, dtype=complex)
        self.du = np.asarray(self.du, dtype=complex)
        if self.log_scale is None:
            self.log_scale = np.zeros_like(self.r)
        else:
            self.log_scale = np.asarray(self.log_scale, dtype=float)
        if self.r.size >= 2 and np.any(np.diff(self.r) <= 0):
            raise ConfigInvalid("radial grid must be strictly increasing")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.du))):
            raise NonFinite("solution contains non-finite values")

    def index_of(self, r: float, rel_tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.r - r)))
        if abs(self.r[i] - r) > rel_tol * max(1.0, abs(r)):
            raise GridMismatch(f"radius {r:g} not on grid (nearest {self.r[i]:g})")
        return i

    def values_true(self) -> np.ndarray:
        """u with scale factors folded in; may overflow for large scales."""
        return self.u * np.exp(self.log_scale)

    def eval(self, r) -> np.ndarray:
        """Cubic Hermite interpolation (uses u and du; O(h^4) between nodes)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        idx = np.clip(np.searchsorted(self.r, r) - 1, 0, self.r.size - 2)
        r0, r1 = self.r[idx], self.r[idx + 1]
        h = r1 - r0
        t = (r - r0) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        s0, s1 = np.exp(self.log_scale[idx]), np.exp(self.log_scale[idx + 1])
        out = (
            h00 * self.u[idx] * s0
            + h10 * h * self.du[idx] * s0
            + h01 * self.u[idx + 1] * s1
            + h11 * h * self.du[idx + 1] * s1
        )
        return out if out.size > 1 else out[0]


def integrate(
    a: Callable[[float], complex],
    b: Callable[[float], complex],
    y0: tuple[complex, complex],
    r_span: tuple[float, float],
    tol: float = 1e-10,
    r_eval: Optional[Sequence[float]] = None,
    breakpoints: Sequence[float] = (),
    forcing: Optional[Callable[[float], complex]] = None,
    renormalize: bool = False,
    log_scale0: float = 0.0,
    max_steps: int = MAX_STEPS_DEFAULT,
) -> RadialSolution:
    """Adaptively integrate -u'' - a u' + b u = forcing over r_span.

    Local relative error per step is held at tol (1e-14 < tol < 1e-4).
    Steps are clamped to land exactly on every requested output radius and
    every breakpoint, so recorded values carry only the integration error.
    """
    if not (1e-14 < tol < 1e-4):
        raise ConfigInvalid("tol must lie in (1e-14, 1e-4)")
    r0, r1 = float(r_span[0]), float(r_span[1])
    if r0 == r1 or r0 == 0.0 or r1 == 0.0 or (r0 < 0.0) != (r1 < 0.0):
        raise ConfigInvalid("r_span must avoid r = 0 and have nonzero length")
    direction = 1.0 if r1 > r0 else -1.0

    # Stops: output radii plus coefficient breakpoints, ordered along the
    # direction of travel; every stop is landed on exactly.
    lo, hi = min(r0, r1), max(r0, r1)
    if r_eval is not None:
        targets = sorted(float(p) for p in r_eval)
        if targets and (targets[0] < lo - 1e-9 or targets[-1] > hi + 1e-9):
            raise ConfigInvalid("r_eval points must lie inside r_span")
        target_set = set(targets)
    else:
        targets, target_set = [], set()
    record_all = r_eval is None
    stops = sorted(
        {*target_set, *(bp for bp in breakpoints if lo < bp < hi), r1},
        reverse=(direction < 0),
    )

    u, v = complex(y0[0]), complex(y0[1])
    log_scale = float(log_scale0)
    r = r0

    def rhs(rr: float, uu: complex, vv: complex) -> tuple[complex, complex]:
        acc = b(rr) * uu - a(rr) * vv
        if forcing is not None:
            acc -= forcing(rr) * math.exp(-log_scale) if log_scale else forcing(rr)
        return vv, acc

    out_r, out_u, out_du, out_ls = [], [], [], []

    def record():
        out_r.append(r)
        out_u.append(u)
        out_du.append(v)
        out_ls.append(log_scale)

    if record_all or r in target_set:
        record()

    # Initial step from the local coefficient scale; the controller adapts.
    scale0 = abs(a(r)) + math.sqrt(abs(b(r))) + 1.0 / abs(r)
    h_free = direction * min(abs(r1 - r0) * 0.1, 0.1 / scale0)

    err_prev = 1.0
    steps = 0
    ki = rhs(r, u, v)
    for stop in stops:
        while (stop - r) * direction > 1e-14 * max(1.0, abs(r)):
            if steps >= max_steps:
                raise StepFailure(f"exceeded {max_steps} steps")
            clamped = (r + h_free - stop) * direction >= 0
            h = stop - r if clamped else h_free
            k = [ki]
            for i in range(1, 7):
                du_acc = 0.0 + 0.0j
                dv_acc = 0.0 + 0.0j
                for j, aij in enumerate(_A[i]):
                    if aij != 0.0:
                        du_acc += aij * k[j][0]
                        dv_acc += aij * k[j][1]
                k.append(rhs(r + _C[i] * h, u + h * du_acc, v + h * dv_acc))
            u_new = u + h * (
                _B5[0] * k[0][0] + _B5[2] * k[2][0] + _B5[3] * k[3][0]
                + _B5[4] * k[4][0] + _B5[5] * k[5][0]
            )
            v_new = v + h * (
                _B5[0] * k[0][1] + _B5[2] * k[2][1] + _B5[3] * k[3][1]
                + _B5[4] * k[4][1] + _B5[5] * k[5][1]
            )
            e_u = h * (
                _E[0] * k[0][0] + _E[2] * k[2][0] + _E[3] * k[3][0]
                + _E[4] * k[4][0] + _E[5] * k[5][0] + _E[6] * k[6][0]
            )
            e_v = h * (
                _E[0] * k[0][1] + _E[2] * k[2][1] + _E[3] * k[3][1]
                + _E[4] * k[4][1] + _E[5] * k[5][1] + _E[6] * k[6][1]
            )
            au, av = abs(u_new), abs(v_new)
            if not (au < 1e300 and av < 1e300):
                raise NonFinite(f"overflow at r = {r + h:g}; enable renormalize")
            if au != au or av != av:  # NaN
                raise NonFinite(f"non-finite state at r = {r + h:g}")
            # Component scales floored at 1% of the joint magnitude so a zero
            # crossing of one component cannot stall the controller.
            mag = max(abs(u), abs(v), au, av)
            sc_u = tol * max(abs(u), au, 0.01 * mag)
            sc_v = tol * max(abs(v), av, 0.01 * mag)
            err = 0.0
            if sc_u > 0:
                err = abs(e_u) / sc_u
            if sc_v > 0:
                err = max(err, abs(e_v) / sc_v)
            steps += 1
            if err <= 1.0 or mag == 0.0:
                r = stop if clamped else r + h
                u, v = u_new, v_new
                ki = k[6]  # FSAL: last stage is the derivative at the new point
                if renormalize:
                    m = max(abs(u), abs(v))
                    if m > RENORM_THRESHOLD or (0.0 < m < 1.0 / RENORM_THRESHOLD):
                        u /= m
                        v /= m
                        log_scale += math.log(m)
                        ki = rhs(r, u, v)
                if record_all or (clamped and r == stop and stop in target_set):
                    record()
                fac = min(5.0, max(0.2, 0.9 * (err + 1e-30) ** -0.17 * err_prev**0.04))
                err_prev = max(err, 1e-10)
                # A clamped landing must not shrink the controller's step.
                h_free = max(abs(h_free), abs(h) * fac) * direction if clamped \
                    else h * fac
            else:
                h_free = h * max(0.2, 0.9 * err**-0.2)
                ki = k[0]
            if abs(h_free) < 1e-14 * max(1.0, abs(r)):
                raise StepFailure(f"step size underflow at r = {r:g}")

    order = np.argsort(out_r)
    return RadialSolution(
        r=np.array(out_r)[order],
        u=np.array(out_u)[order],
        du=np.array(out_du)[order],
        log_scale=np.array(out_ls)[order],
        meta={"steps": steps, "tol": tol, "direction": direction},
    )


# ---------------------------------------------------------------------------
# Frobenius start at the regular-singular origin
# ---------------------------------------------------------------------------

def frobenius_coefficients(coeffs: ModeCoefficients, mu: complex, m: int) -> list[complex]:
    """Series coefficients c_0..c_m of u = r^mu sum c_j r^j at the origin.

    The recursion follows from the operator with the origin cutoff active
    (alpha_eff = 0 for r <= 1) and V given by its Laurent data.
    """
    n, sig, S = coeffs.n, coeffs.sigma, coeffs.S
    v = coeffs.v_taylor0
    Q = coeffs.origin_indicial_poly
    if abs(Q(mu)) > 1e-9 * (1.0 + abs(mu) ** 2):
        raise ConfigInvalid(f"mu = {mu} is not an indicial exponent at the origin")
    c = [1.0 + 0.0j]
    for j in range(1, m + 1):
        denom = Q(mu + j)
        if abs(denom) < 1e-9 * (1.0 + abs(mu + j) ** 2):
            raise ResonantExponent(
                f"recursion denominator vanishes at step {j} for mu = {mu}; "
                "a log-augmented start is required"
            )
        rhs = 1j * sig * (2 * (mu + j - 1) + (n - 1) + 2 * S) * c[j - 1]
        for l in range(-1, j - 1):
            idx = l + 1
            if idx < len(v) and v[idx] != 0:
                rhs -= v[idx] * c[j - 2 - l]
        c.append(rhs / denom)
    return c


def frobenius_start(
    coeffs: ModeCoefficients,
    mu: complex,
    m: int,
    r0: float,
    tail_tol: float = 1e-9,
) -> tuple[complex, complex]:
    """Value and derivative at r0 of the series branch u = r^mu (1 + ...)."""
    c = frobenius_coefficients(coeffs, mu, m)
    u = 0.0 + 0.0j
    du = 0.0 + 0.0j
    for j in range(m, -1, -1):
        u = u * r0 + c[j]
        du = du * r0 + (mu + j) * c[j]
    pref = r0**mu if isinstance(mu, (int, float)) else cmath.exp(mu * cmath.log(r0))
    tail = abs(c[m]) * r0**m / max(abs(u), 1e-300)
    if tail > tail_tol:
        raise SlowConvergence(
            f"Frobenius tail {tail:.2e} at r0 = {r0:g} exceeds {tail_tol:g}; shrink r0"
        )
    return pref * u, pref * du / r0


# ---------------------------------------------------------------------------
# Far-field power-law starts
# ---------------------------------------------------------------------------

def asymptotic_coefficients(coeffs: ModeCoefficients, lam: complex, m: int) -> list[complex]:
    """Coefficients d_0..d_m of u = r^-lam sum d_j r^-j beyond r_match.

    At sigma = 0 any far-field indicial exponent gives the exact single-term
    branch; at sigma != 0 only the outgoing exponent (n-1)/2 + S admits a
    pure power-law expansion (coefficients then grow factorially: the series
    is asymptotic and must be truncated).
    """
    sig = coeffs.sigma
    P = coeffs.far_indicial_poly
    if sig == 0:
        if abs(P(lam)) > 1e-8 * (1.0 + abs(lam) ** 2):
            raise ConfigInvalid(f"lambda = {lam} is not a far-field indicial root")
        return [1.0 + 0.0j] + [0.0j] * m
    lam_out = coeffs.outgoing_exponent()
    if abs(lam - lam_out) > 1e-10 * (1.0 + abs(lam_out)):
        raise ConfigInvalid(
            "power-law far-field expansion at sigma != 0 exists only for the "
            f"outgoing exponent {lam_out}"
        )
    d = [1.0 + 0.0j]
    for k in range(1, m + 1):
        d.append(-P(lam + k - 1) * d[k - 1] / (2j * sig * k))
    return d


def series_tail_estimate(d: Sequence[complex], R: float) -> float:
    """Relative size of the last retained term of sum d_k R^-k.

    A series that terminates before its last slot is exact; the estimate is
    then zero.  A single-term series is exact by construction (sigma = 0).
    """
    if len(d) == 1:
        return 0.0
    last = max((k for k, dk in enumerate(d) if dk != 0.0), default=0)
    if last < len(d) - 1:
        return 0.0
    terms = [abs(dk) * R ** (-k) for k, dk in enumerate(d)]
    total = max(sum(terms), 1e-300)
    return terms[-1] / total


def power_asymptotic_start(
    coeffs: ModeCoefficients,
    lam: complex,
    m: int,
    R: float,
    tail_tol: float = 1e-12,
) -> tuple[complex, complex]:
    """Value and derivative at R of the branch u = r^-lam (1 + sum d_k r^-k).

    Raises SlowConvergence when the truncation estimate exceeds tail_tol at
    R (the caller should raise R).
    """
    if R < coeffs.r_match * (1.0 - 1e-12):
        raise ConfigInvalid(f"start radius {R:g} below r_match = {coeffs.r_match:g}")
    d = asymptotic_coefficients(coeffs, lam, m)
    if series_tail_estimate(d, R) > tail_tol:
        raise SlowConvergence(
            f"asymptotic tail {series_tail_estimate(d, R):.2e} at R = {R:g} "
            f"exceeds {tail_tol:g}; raise R"
        )
    u = 0.0 + 0.0j
    du = 0.0 + 0.0j
    x = 1.0 / R
    for k in range(m, -1, -1):
        u = u * x + d[k]
        du = du * x + (lam + k) * d[k]
    pref = cmath.exp(-lam * cmath.log(R))
    return pref * u, -pref * du / R


def choose_start_radius(
    coeffs: ModeCoefficients,
    lam: complex,
    m: int = 12,
    tail_tol: float = 1e-12,
    r_cap: float = 1e7,
) -> float:
    """Smallest start radius >= r_match with series tail below tail_tol."""
    d = asymptotic_coefficients(coeffs, lam, m)
    R = coeffs.r_match
    if all(abs(dk) == 0.0 for dk in d[1:]):
        return R
    while series_tail_estimate(d, R) > tail_tol:
        R *= 1.4
        if R > r_cap:
            raise SlowConvergence(f"no admissible start radius below {r_cap:g}")
    return R


# ---------------------------------------------------------------------------
# Wronskians
# ---------------------------------------------------------------------------

def wronskian_weight(n: int, sigma: complex, r: float) -> complex:
    """mu(r) = r^(n-1) exp(2 i sigma r), the integrating factor of a(r)."""
    return r ** (n - 1) * cmath.exp(2j * sigma * r)


def wronskian(
    u: RadialSolution,
    v: RadialSolution,
    sigma: complex,
    n: int,
    r: float,
) -> complex:
    """W = mu(r) (u v' - u' v) with stored scale factors combined exactly.

    Constancy of W across r is the defining property; both solutions must
    carry the requested radius on their grids.
    """
    i = u.index_of(r)
    j = v.index_of(r)
    w = u.u[i] * v.du[j] - u.du[i] * v.u[j]
    scale = u.log_scale[i] + v.log_scale[j] + 2j * sigma * r
    return w * r ** (n - 1) * cmath.exp(scale)


def wronskian_drift(
    u: RadialSolution,
    v: RadialSolution,
    sigma: complex,
    n: int,
    radii: Sequence[float],
) -> tuple[complex, float]:
    """Wronskian at the middle radius plus max relative drift across radii."""
    radii = sorted(radii)
    ws = [wronskian(u, v, sigma, n, r) for r in radii]
    w_mid = ws[len(ws) // 2]
    if w_mid == 0:
        return w_mid, 0.0 if all(w == 0 for w in ws) else math.inf
    drift = max(abs(w - w_mid) for w in ws) / abs(w_mid)
    return w_mid, drift


# ---------------------------------------------------------------------------
# Branch-amplitude fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisFit:
    amplitudes: tuple[complex, ...]
    residual: float
    agreement: float
    radii: tuple


def fit_onto_basis(
    sol: RadialSolution,
    radius_groups: Sequence[Sequence[float]],
    basis: Sequence[Callable[[float], tuple[complex, complex]]],
    fit_tol: float = 1e-6,
    raise_on_disagreement: bool = True,
) -> BasisFit:
    """Least-squares amplitudes of basis functions matched to (u, du).

    Each radius contributes the two equations u(r), u'(r); each group is fit
    independently and the groups must agree to fit_tol relative (FitInvalid
    otherwise).  Rows are balanced by the local solution magnitude so that
    radii with wildly different scales are weighted evenly.
    """
    fits = []
    residuals = []
    for group in radius_groups:
        rows = []
        rhs = []
        for r in group:
            i = sol.index_of(r)
            s = math.exp(sol.log_scale[i]) if sol.log_scale[i] else 1.0
            uval, duval = sol.u[i] * s, sol.du[i] * s
            w = 1.0 / max(abs(uval), abs(r * duval), 1e-300)
            rows.append([w * f(r)[0] for f in basis])
            rhs.append(w * uval)
            rows.append([w * r * f(r)[1] for f in basis])
            rhs.append(w * r * duval)
        A = np.array(rows, dtype=complex)
        y = np.array(rhs, dtype=complex)
        col_scale = np.maximum(np.abs(A).max(axis=0), 1e-300)
        amps, res, *_ = np.linalg.lstsq(A / col_scale, y, rcond=None)
        amps = amps / col_scale
        resid = float(np.linalg.norm(A @ amps - y) / max(np.linalg.norm(y), 1e-300))
        fits.append(amps)
        residuals.append(resid)

    ref = fits[0]
    scale = max(max(abs(a) for a in f) for f in fits)
    agreement = 0.0
    for other in fits[1:]:
        agreement = max(
            agreement,
            max(abs(x - y) for x, y in zip(ref, other)) / max(scale, 1e-300),
        )
    if raise_on_disagreement and agreement > fit_tol:
        raise FitInvalid(
            f"branch amplitudes disagree across radius groups by {agreement:.2e} "
            f"(tol {fit_tol:g})"
        )
    mean = tuple(sum(f[i] for f in fits) / len(fits) for i in range(len(ref)))
    return BasisFit(
        amplitudes=mean,
        residual=max(residuals),
        agreement=agreement,
        radii=tuple(tuple(g) for g in radius_groups),
    )


def power_branch(lam: complex) -> Callable[[float], tuple[complex, complex]]:
    """Evaluator (value, derivative) for r^-lam."""

    def f(r: float) -> tuple[complex, complex]:
        val = cmath.exp(-lam * cmath.log(r))
        return val, -lam * val / r

    return f


def log_power_branch(lam: complex) -> Callable[[float], tuple[complex, complex]]:
    """Evaluator for r^-lam log r."""

    def f(r: float) -> tuple[complex, complex]:
        val = cmath.exp(-lam * cmath.log(r))
        lg = math.log(r)
        return val * lg, val * (1.0 - lam * lg) / r

    return f


def connection_fit(
    sol: RadialSolution,
    lam_minus: complex,
    lam_plus: complex,
    radii: tuple[float, float],
    fit_tol: float = 1e-6,
    include_log: bool = False,
) -> BasisFit:
    """Amplitudes (c_minus, c_plus[, c_log]) of the far-field branches.

    Beyond r_match the stationary far field is an exact Euler operator, so
    the branches are pure powers; when lambda_+ - lambda_- is a positive
    integer the basis is extended by r^-lambda_minus log r.  The two radii
    are fit separately and must agree to fit_tol.
    """
    basis = [power_branch(lam_minus), power_branch(lam_plus)]
    if include_log:
        basis.append(log_power_branch(lam_minus))
        r1, r2 = radii
        groups = [(r1, math.sqrt(r1 * r2)), (math.sqrt(r1 * r2), r2)]
    else:
        groups = [(radii[0],), (radii[1],)]
    fit = fit_onto_basis(sol, groups, basis, fit_tol=fit_tol)
    return fit
