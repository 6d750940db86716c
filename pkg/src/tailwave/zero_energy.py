"""Zero-energy operator: Green's-function inversion and resonance detection.

The zero-energy mode operator is inverted by variation of parameters from
the Frobenius-regular branch u_reg ~ r^ell and the decaying far-field branch
u_dec ~ r^-lambda_plus,

    u(r) = -( u_reg(r) I2(r) + u_dec(r) I1(r) ) / W,
    I1(r) = int_0^r u_reg f mu0,   I2(r) = int_r^inf u_dec f mu0,

with weight mu0(s) = s^(n-1) and r-independent Wronskian W.  A mode carries
a zero-energy resonance exactly when the regular branch loses its
r^-lambda_minus far-field component, so the connection coefficient c_minus
doubles as the resonance indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from . import indicial, radial_ode
from .errors import ConfigInvalid, ResidualTooLarge, ResonanceDetected
from .model import ModeCoefficients, ModeModel, mode_coefficients

RES_TOL = 1e-8
RESID_TOL = 1e-7
FIT_TOL = 1e-6


@dataclass(frozen=True)
class Forcing:
    """Radial forcing profile with the support/decay metadata quadrature needs."""

    func: Callable[[float], complex]
    support: Optional[tuple[float, float]] = None
    tail_exponent: Optional[float] = None  # f ~ r^-tail_exponent beyond support
    label: str = "forcing"

    def __call__(self, r: float) -> complex:
        if self.support is not None and not (self.support[0] <= r <= self.support[1]):
            return 0.0
        return self.func(r)

    def array(self, r: np.ndarray) -> np.ndarray:
        out = np.array([self.func(float(x)) for x in r], dtype=complex)
        if self.support is not None:
            lo, hi = self.support
            out[(r < lo) | (r > hi)] = 0.0
        return out


def bump_forcing(lo: float, hi: float, amplitude: complex = 1.0) -> Forcing:
    """Indicator forcing: amplitude on [lo, hi], zero elsewhere."""
    if not 0 < lo < hi:
        raise ConfigInvalid("bump forcing needs 0 < lo < hi")
    return Forcing(lambda r: amplitude, support=(lo, hi), label=f"bump({lo:g},{hi:g})")


def power_tail_forcing(exponent: float, amplitude: complex, r_on: float) -> Forcing:
    """f = amplitude * chi-like turn-on at r_on, then r^-exponent decay."""
    from .model import cutoff_chi

    def f(r: float) -> complex:
        ramp = cutoff_chi(1.0 + (r - r_on))  # rises over [r_on, r_on + 1]
        return amplitude * ramp * r ** (-exponent)

    return Forcing(f, support=None, tail_exponent=exponent,
                   label=f"power_tail({exponent:g})")


# ---------------------------------------------------------------------------
# Regular solution and connection data
# ---------------------------------------------------------------------------

def _start_radius(model: ModeModel) -> float:
    r0 = model.origin_radius()
    return max(1e-3, r0) if r0 > 0 else 1e-3


def _fit_radius(model: ModeModel) -> float:
    return max(1.25 * model.r_match, 8.0)


@dataclass(frozen=True)
class ConnectionData:
    solution: radial_ode.RadialSolution
    c_minus: complex
    c_plus: complex
    residual: float
    lam_minus: complex
    lam_plus: complex


def regular_connection(
    model: ModeModel,
    ell: int,
    tol: float = 1e-10,
    fit_radius: Optional[float] = None,
    fit_tol: float = FIT_TOL,
    r_eval: Optional[Sequence[float]] = None,
) -> ConnectionData:
    """Frobenius-regular zero-energy solution with far-field branch amplitudes."""
    work = model if ell == model.ell else _with_ell(model, ell)
    coeffs = mode_coefficients(work, 0.0)
    lam_m = (model.n - 2) / 2.0 - indicial.nu(work, ell)
    lam_p = (model.n - 2) / 2.0 + indicial.nu(work, ell)

    R = fit_radius if fit_radius is not None else _fit_radius(model)
    r0 = _start_radius(model)
    u0, du0 = radial_ode.frobenius_start(coeffs, ell, m=10, r0=r0)
    pts = sorted({*(r_eval if r_eval is not None else ()), R, 2.0 * R})
    pts = [p for p in pts if p >= r0] or [R, 2.0 * R]
    if pts[0] > r0:
        pts = [r0, *pts]
    sol = radial_ode.integrate(
        coeffs.a, coeffs.b, (u0, du0), (r0, pts[-1]),
        tol=tol, r_eval=pts, breakpoints=coeffs.breakpoints,
    )
    fit = radial_ode.connection_fit(sol, lam_m, lam_p, (R, 2.0 * R), fit_tol=fit_tol)
    sol.c_minus, sol.c_plus = fit.amplitudes[0], fit.amplitudes[1]
    sol.fit_residual = fit.agreement
    sol.fit_radii = (R, 2.0 * R)
    return ConnectionData(sol, fit.amplitudes[0], fit.amplitudes[1],
                          fit.agreement, lam_m, lam_p)


def _with_ell(model: ModeModel, ell: int) -> ModeModel:
    from dataclasses import replace

    return replace(model, ell=ell)


def resonance_indicator(
    model: ModeModel,
    ell: int,
    tol: float = 1e-10,
    fit_radius: Optional[float] = None,
) -> complex:
    """Far-field r^-lambda_minus amplitude of the regular branch.

    |c_minus| below res_tol (relative to |c_plus|) flags a zero-energy
    resonance in this mode.
    """
    data = regular_connection(model, ell, tol=tol, fit_radius=fit_radius)
    return data.c_minus


# ---------------------------------------------------------------------------
# Green's-function solve
# ---------------------------------------------------------------------------

def _quad_grid(model: ModeModel, f: Forcing, r0: float, R_far: float,
               sigma_scale: float = 0.0) -> tuple[np.ndarray, list[float]]:
    """Geometric master grid with uniform refinement over the forcing support."""
    splits = [bp for bp in (*model.V_short.breakpoints(), 1.0, 2.0) if r0 < bp < R_far]
    base = np.geomspace(r0, R_far, max(400, int(120 * math.log(R_far / r0))))
    pieces = [base]
    if f.support is not None:
        lo, hi = max(f.support[0], r0), min(f.support[1], R_far)
        splits += [s for s in (lo, hi) if r0 < s < R_far]
        n_sup = max(1201, int(60 * sigma_scale * (hi - lo)) | 1)
        pieces.append(np.linspace(lo, hi, n_sup))
    grid = np.unique(np.concatenate(pieces))
    # Drop near-duplicates that would break Simpson weights.
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * np.maximum(1.0, grid[1:])])
    return grid[keep], sorted(set(splits))


def _cumulative_simpson_complex(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    re = cumulative_simpson(y.real, x=x, initial=0.0)
    if np.any(y.imag):
        return re + 1j * cumulative_simpson(y.imag, x=x, initial=0.0)
    return re.astype(complex)


def _cumulative(grid: np.ndarray, base: np.ndarray, f: Forcing,
                splits: Sequence[float]) -> np.ndarray:
    """Cumulative Simpson of base(r) * f(r), restarted at forcing breakpoints.

    At a segment edge the forcing is sampled from just inside the segment,
    so one-sided values of a discontinuous forcing never leak across.
    """
    out = np.zeros(grid.size, dtype=complex)
    edges = [grid[0], *[s for s in splits if grid[0] < s < grid[-1]], grid[-1]]
    offset = 0.0 + 0.0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        i0 = int(np.searchsorted(grid, lo))
        i1 = int(np.searchsorted(grid, hi)) + 1
        seg = slice(i0, i1)
        fv = f.array(grid[seg])
        eps_lo = 1e-9 * max(1.0, abs(lo))
        eps_hi = 1e-9 * max(1.0, abs(hi))
        fv[0] = f(lo + eps_lo)
        fv[-1] = f(hi - eps_hi)
        vals = base[seg] * fv
        if i1 - i0 >= 3:
            cs = _cumulative_simpson_complex(vals, grid[seg])
        else:
            cs = np.concatenate([[0.0], np.cumsum(
                0.5 * (vals[1:] + vals[:-1]) * np.diff(grid[seg]))])
        out[seg] = offset + cs
        offset = out[i1 - 1]
    return out


def solve_zero_energy(
    model: ModeModel,
    ell: int,
    f: Forcing,
    tol: float = 1e-10,
    resid_tol: float = RESID_TOL,
    res_tol: float = RES_TOL,
    check_residual: bool = True,
) -> radial_ode.RadialSolution:
    """Solve the zero-energy mode equation L u = f, regular at 0, decaying at inf."""
    work = model if ell == model.ell else _with_ell(model, ell)
    coeffs = mode_coefficients(work, 0.0)
    n = model.n
    nu_l = indicial.nu(work, ell)
    lam_m = (n - 2) / 2.0 - nu_l
    lam_p = (n - 2) / 2.0 + nu_l

    if f.support is None and f.tail_exponent is not None:
        if f.tail_exponent <= lam_p.real + 2.0:
            raise ConfigInvalid(
                f"forcing tail r^-{f.tail_exponent:g} too slow for the decaying "
                f"branch (needs exponent > {lam_p.real + 2:g})"
            )

    r0 = _start_radius(model)
    R_fit = _fit_radius(model)
    sup_hi = f.support[1] if f.support is not None else None
    R_far = max(4.0 * R_fit, 2.0 * (sup_hi or 0.0), 40.0)
    grid, splits = _quad_grid(model, f, r0, R_far)
    patches = _residual_patches(grid, splits) if check_residual else []
    extra = [np.array([R_fit, 2.0 * R_fit])]
    extra.extend(p for _, _, p in patches)
    grid = np.unique(np.concatenate([grid, *extra]))
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * np.maximum(1.0, grid[1:])])
    grid = grid[keep]

    u0, du0 = radial_ode.frobenius_start(coeffs, ell, m=10, r0=r0)
    u_reg = radial_ode.integrate(coeffs.a, coeffs.b, (u0, du0), (r0, R_far),
                                 tol=tol, r_eval=grid, breakpoints=coeffs.breakpoints)
    ud0, dud0 = radial_ode.power_asymptotic_start(coeffs, lam_p, m=0, R=R_far)
    u_dec = radial_ode.integrate(coeffs.a, coeffs.b, (ud0, dud0), (R_far, r0),
                                 tol=tol, r_eval=grid, breakpoints=coeffs.breakpoints)

    # Resonance guard: amplitudes of the regular branch at the fit radii.
    fit = radial_ode.connection_fit(u_reg, lam_m, lam_p, (R_fit, 2.0 * R_fit),
                                    fit_tol=FIT_TOL)
    c_minus, c_plus = fit.amplitudes
    if abs(c_minus) <= res_tol * max(abs(c_plus), 1.0):
        raise ResonanceDetected(
            f"mode ell={ell}: |c_minus| = {abs(c_minus):.2e} below threshold"
        )

    W, drift = radial_ode.wronskian_drift(
        u_reg, u_dec, 0.0, n, [grid[grid.size // 3], grid[grid.size // 2], grid[2 * grid.size // 3]]
    )
    if drift > 5e3 * tol:
        raise ResidualTooLarge(f"Wronskian drift {drift:.2e} signals integrator trouble")

    fv = f.array(grid)
    mu0 = grid ** (n - 1)
    g2 = u_dec.u * fv * mu0
    I1 = _cumulative(grid, u_reg.u * mu0, f, splits)
    C2 = _cumulative(grid, u_dec.u * mu0, f, splits)
    I2 = C2[-1] - C2

    trunc_bound = 0.0
    if f.support is None:
        # Recorded bound on the truncated upper tail of I2 (power-law model).
        p = (f.tail_exponent or (lam_p.real + 3.0)) + lam_p.real - (n - 1)
        trunc_bound = abs(g2[-1]) * R_far / max(p - 1.0, 0.1)

    u = -(u_reg.u * I2 + u_dec.u * I1) / W
    du = -(u_reg.du * I2 + u_dec.du * I1) / W  # I' terms cancel pairwise in V.o.P.

    sol = radial_ode.RadialSolution(
        r=grid, u=u, du=du,
        meta={"W": W, "wronskian_drift": drift, "truncation_bound": trunc_bound,
              "forcing": f.label, "ell": ell},
    )
    sol.c_minus, sol.c_plus = c_minus, c_plus

    if check_residual:
        resid = residual_norm(coeffs, sol, f, lam_m, patches)
        sol.meta["residual"] = resid
        fnorm = float(np.max(np.abs(fv))) or 1.0
        if resid > resid_tol * fnorm:
            raise ResidualTooLarge(
                f"weighted residual {resid:.2e} exceeds {resid_tol:g} * |f|"
            )
    return sol


def _residual_patches(
    grid: np.ndarray,
    splits: Sequence[float],
    n_patches: int = 9,
    sigma_scale: float = 0.0,
) -> list[tuple[float, float, np.ndarray]]:
    """Five-point uniform stencils at sample radii, kept clear of forcing kinks.

    The spacing balances fourth-order truncation against roundoff; for
    oscillatory solutions it shrinks with the frequency scale.
    """
    r_lo, r_hi = grid[0], grid[-1]
    h0 = 0.02 / max(1.0, sigma_scale) ** 0.9
    patches = []
    for rp in np.geomspace(max(3.0 * r_lo, 1.5 * r_lo), r_hi / 2.0, n_patches):
        h = min(h0, 0.05 * rp)
        if any(abs(rp - s) < 5.0 * h for s in splits):
            continue
        patches.append((float(rp), float(h), rp + h * np.arange(-3.0, 4.0)))
    return patches


def residual_norm(
    coeffs: ModeCoefficients,
    sol: radial_ode.RadialSolution,
    f: Forcing,
    lam_minus: complex,
    patches: Sequence[tuple[float, float, np.ndarray]],
) -> float:
    """sup over sample radii of (1+r)^(Re lam_minus + 2) |L u - f|.

    The operator is applied by sixth-order finite differences on uniform
    seven-point stencils whose nodes sit exactly on the solution grid, so
    the check is independent of the variation-of-parameters construction.
    """
    sup = 0.0
    for rp, h, pts in patches:
        uv = np.array([sol.u[sol.index_of(p)] for p in pts])
        d2 = (2 * uv[0] - 27 * uv[1] + 270 * uv[2] - 490 * uv[3]
              + 270 * uv[4] - 27 * uv[5] + 2 * uv[6]) / (180 * h * h)
        d1 = (-uv[0] + 9 * uv[1] - 45 * uv[2]
              + 45 * uv[4] - 9 * uv[5] + uv[6]) / (60 * h)
        Lu = -d2 - coeffs.a(rp) * d1 + coeffs.b(rp) * uv[3]
        w = (1.0 + rp) ** (lam_minus.real + 2.0)
        sup = max(sup, w * abs(Lu - f(rp)))
    return sup


# ---------------------------------------------------------------------------
# Large zero-energy state
# ---------------------------------------------------------------------------

def large_zero_state(
    model: ModeModel,
    tol: float = 1e-10,
    r_max: Optional[float] = None,
    res_tol: float = RES_TOL,
) -> radial_ode.RadialSolution:
    """Slowest-decaying zero-energy state of mode 0, r^lambda_minus u -> 1.

    This is the regular solution renormalized by its r^-lambda_minus
    amplitude; it solves the homogeneous equation and is independent of any
    forcing normalization.
    """
    R_view = r_max if r_max is not None else max(50.0, 3.0 * model.r_match)
    r0 = _start_radius(model)
    grid = np.geomspace(r0, R_view, max(300, int(80 * math.log(R_view / r0))))
    data = regular_connection(model, 0, tol=tol, r_eval=grid)
    if abs(data.c_minus) <= res_tol * max(abs(data.c_plus), 1.0):
        raise ResonanceDetected("mode 0 is resonant; no large zero-energy state")
    sol = data.solution
    out = radial_ode.RadialSolution(
        r=sol.r,
        u=sol.u / data.c_minus,
        du=sol.du / data.c_minus,
        log_scale=sol.log_scale,
        meta={"lam_minus": data.lam_minus, "normalization": "r^lambda_minus u -> 1"},
    )
    out.c_minus, out.c_plus = 1.0, data.c_plus / data.c_minus
    return out
