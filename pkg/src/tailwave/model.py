"""Per-mode operator class: coefficients, potentials, regions.

One spherical-harmonic sector of a stationary wave-type operator on an
n-dimensional asymptotically flat space is the radial operator

    L u = -u'' - a(r) u' + b(r) u,
    a(r) = (n-1)/r + 2 i sigma,
    b(r) = (lambda_ell + alpha_eff(r))/r^2 - i sigma (n-1)/r
           - 2 i sigma S / r + V_short(r),

with angular eigenvalue lambda_ell = ell (ell + n - 2).  The inverse-square
strength is ramped on by a fixed smooth cutoff, alpha_eff = alpha * chi(r)
with chi = 0 for r <= 1 and chi = 1 for r >= 2, so the origin keeps the flat
indicial behaviour r^ell while the far field carries the full alpha.
"""

from __future__ import annotations

import math
import cmath
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigInvalid, InadmissibleAlpha

CUTOFF_LO = 1.0
CUTOFF_HI = 2.0
DEFAULT_MATCH_TOL = 1e-12


def cutoff_chi(r: float) -> float:
    """Quintic smoothstep: 0 for r <= 1, 1 for r >= 2, C^2 in between."""
    if r <= CUTOFF_LO:
        return 0.0
    if r >= CUTOFF_HI:
        return 1.0
    s = (r - CUTOFF_LO) / (CUTOFF_HI - CUTOFF_LO)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def cutoff_chi_array(r: np.ndarray) -> np.ndarray:
    s = np.clip((np.asarray(r, dtype=float) - CUTOFF_LO) / (CUTOFF_HI - CUTOFF_LO), 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


# ---------------------------------------------------------------------------
# Short-range potentials
# ---------------------------------------------------------------------------

class RadialPotential:
    """Short-range radial profile V(r) with sup |r^{2+delta} V| finite.

    Subclasses provide pointwise evaluation, the Laurent coefficients at the
    origin needed by Frobenius starts (powers r^-1, r^0, r^1, ...), and the
    radius beyond which |V| drops under a given tolerance.
    """

    def __call__(self, r: float) -> complex:
        raise NotImplementedError

    def array(self, r: np.ndarray) -> np.ndarray:
        return np.array([self(float(x)) for x in np.asarray(r).ravel()]).reshape(np.shape(r))

    def taylor0(self, m: int) -> list[complex]:
        """Coefficients [v_{-1}, v_0, ..., v_{m}] of V = sum v_j r^j near 0."""
        raise NotImplementedError

    def negligible_radius(self, tol: float) -> float:
        """Smallest sampled radius with |V| < tol from there on."""
        r = 1.0
        while abs(self(r)) >= tol and r < 1e6:
            r *= 1.25
        return r

    def breakpoints(self) -> tuple[float, ...]:
        """Radii where V is not smooth (integration steps must land on them)."""
        return ()

    def is_real(self) -> bool:
        return True

    def describe(self) -> str:
        raise NotImplementedError


class NonePotential(RadialPotential):
    def __call__(self, r: float) -> complex:
        return 0.0

    def array(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def taylor0(self, m):
        return [0.0] * (m + 2)

    def negligible_radius(self, tol):
        return 1.0

    def describe(self):
        return "none"


class YukawaPotential(RadialPotential):
    """V(r) = A exp(-mu r) / r."""

    def __init__(self, A: complex, mu: float):
        if mu <= 0:
            raise ConfigInvalid("yukawa decay rate mu must be positive")
        self.A = complex(A)
        self.mu = float(mu)

    def __call__(self, r):
        return self.A * math.exp(-self.mu * r) / r

    def array(self, r):
        r = np.asarray(r, dtype=float)
        return self.A * np.exp(-self.mu * r) / r

    def taylor0(self, m):
        # A/r * sum (-mu r)^k / k!
        return [self.A * (-self.mu) ** (j + 1) / math.factorial(j + 1) for j in range(-1, m + 1)]

    def is_real(self):
        return self.A.imag == 0.0

    def describe(self):
        return f"yukawa({_num_str(self.A)},{_num_str(self.mu)})"


class ExpPotential(RadialPotential):
    """V(r) = A exp(-mu r).  Covers pure exponential wells and barriers."""

    def __init__(self, A: complex, mu: float):
        if mu <= 0:
            raise ConfigInvalid("exp decay rate mu must be positive")
        self.A = complex(A)
        self.mu = float(mu)

    def __call__(self, r):
        return self.A * math.exp(-self.mu * r)

    def array(self, r):
        return self.A * np.exp(-self.mu * np.asarray(r, dtype=float))

    def taylor0(self, m):
        out = [0.0]
        out += [self.A * (-self.mu) ** j / math.factorial(j) for j in range(0, m + 1)]
        return out

    def is_real(self):
        return self.A.imag == 0.0

    def describe(self):
        return f"exp({_num_str(self.A)},{_num_str(self.mu)})"


class GaussPotential(RadialPotential):
    """V(r) = A exp(-(r/w)^2)."""

    def __init__(self, A: complex, w: float):
        if w <= 0:
            raise ConfigInvalid("gauss width w must be positive")
        self.A = complex(A)
        self.w = float(w)

    def __call__(self, r):
        return self.A * math.exp(-((r / self.w) ** 2))

    def array(self, r):
        r = np.asarray(r, dtype=float)
        return self.A * np.exp(-((r / self.w) ** 2))

    def taylor0(self, m):
        out = [0.0] * (m + 2)
        k = 0
        while 2 * k <= m:
            out[2 * k + 1] = self.A * (-1.0 / self.w**2) ** k / math.factorial(k)
            k += 1
        return out

    def is_real(self):
        return self.A.imag == 0.0

    def describe(self):
        return f"gauss({_num_str(self.A)},{_num_str(self.w)})"


class TablePotential(RadialPotential):
    """Tabulated (r, V) samples with cubic interpolation.

    Evaluation outside [r_min, r_max] raises rather than extrapolating;
    beyond the table the model is expected to be past r_match anyway.
    """

    def __init__(self, r: Sequence[float], v: Sequence[complex], path: str | None = None):
        r = np.asarray(r, dtype=float)
        v = np.asarray(v)
        if r.ndim != 1 or r.size < 4 or np.any(np.diff(r) <= 0):
            raise ConfigInvalid("table potential needs >= 4 strictly increasing radii")
        self.r = r
        self.v = v.astype(complex)
        self.path = path
        from scipy.interpolate import CubicSpline

        self._re = CubicSpline(r, self.v.real)
        self._im = CubicSpline(r, self.v.imag) if np.any(self.v.imag) else None

    def __call__(self, r):
        if r < self.r[0] or r > self.r[-1]:
            raise ConfigInvalid(
                f"table potential evaluated at r={r:g} outside [{self.r[0]:g}, {self.r[-1]:g}]"
            )
        out = complex(self._re(r))
        if self._im is not None:
            out += 1j * complex(self._im(r))
        return out

    def array(self, r):
        r = np.asarray(r, dtype=float)
        if r.size and (r.min() < self.r[0] or r.max() > self.r[-1]):
            raise ConfigInvalid("table potential evaluated outside tabulated range")
        out = self._re(r).astype(complex)
        if self._im is not None:
            out += 1j * self._im(r)
        return out

    def taylor0(self, m):
        # Quadratic fit over the first few points; enough for starts at
        # r0 <= first tabulated radius is not available, so the start moves
        # to r_min instead (handled by callers via origin_radius()).
        k = min(6, self.r.size)
        coeff = np.polyfit(self.r[:k], self.v[:k], 2)
        out = [0.0] * (m + 2)
        for j in range(min(m, 2) + 1):
            out[j + 1] = complex(coeff[2 - j])
        return out

    def origin_radius(self) -> float:
        return float(self.r[0])

    def negligible_radius(self, tol):
        idx = np.nonzero(np.abs(self.v) >= tol)[0]
        if idx.size == 0:
            return float(self.r[0])
        if idx[-1] == self.r.size - 1:
            raise ConfigInvalid("table potential does not decay below match_tol within its range")
        return float(self.r[idx[-1] + 1])

    def is_real(self):
        return self._im is None

    def describe(self):
        return f"table({self.path})" if self.path else "table(<inline>)"


def _num_str(x) -> str:
    if isinstance(x, complex):
        if x.imag == 0:
            return repr(x.real)
        return f"{x.real!r}{x.imag:+}j"
    return repr(float(x))


# ---------------------------------------------------------------------------
# Non-stationary perturbation and sampling regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NonstatPerturbation:
    """Decaying potential Vt(t_*, r) = eps (1+t_*)^{-delta_t} w(r), t_* >= 0.

    w carries sup |r^2 w| < inf; the induced potential then sits inside the
    admissible class t^{-delta} <r>^{-2} t/<t-r> up to a constant.
    """

    eps: float
    delta_t: float
    w: Callable[[np.ndarray], np.ndarray]
    w_label: str = "cutoff_r2"

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ConfigInvalid("perturbation temporal rate delta_t must be positive")

    def value(self, t_star: float, r: np.ndarray) -> np.ndarray:
        if t_star < 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.eps * (1.0 + t_star) ** (-self.delta_t) * self.w(np.asarray(r, dtype=float))


def cutoff_over_r2(r: np.ndarray) -> np.ndarray:
    """w(r) = chi(r)/r^2: smooth, supported in r >= 1, sup |r^2 w| = 1."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > CUTOFF_LO, cutoff_chi_array(r) / np.maximum(r, CUTOFF_LO) ** 2, 0.0)
    return out


@dataclass(frozen=True)
class RegionSpec:
    """Observer region: fixed radius, outgoing ray r = q t, or fixed t_* = t - r."""

    kind: str  # "Tplus" | "IotaPlus" | "ScriPlus"
    parameter: float

    def __post_init__(self):
        if self.kind == "Tplus":
            if self.parameter <= 0:
                raise ConfigInvalid("Tplus observer needs r > 0")
        elif self.kind == "IotaPlus":
            if not 0.0 < self.parameter < 1.0:
                raise ConfigInvalid("IotaPlus observer needs 0 < q < 1")
        elif self.kind == "ScriPlus":
            if self.parameter <= 0:
                raise ConfigInvalid("ScriPlus observer needs t_* > 0")
        else:
            raise ConfigInvalid(f"unknown region kind {self.kind!r}")

    def key(self) -> str:
        tags = {"Tplus": "r", "IotaPlus": "ray", "ScriPlus": "scri"}
        return f"{tags[self.kind]}:{self.parameter:g}"

    @staticmethod
    def rho_T(t: float, r: float) -> float:
        return math.hypot(1.0, r) / t

    @staticmethod
    def rho_plus(t: float, r: float) -> float:
        return t / (math.hypot(1.0, r) * math.hypot(1.0, t - r))

    @staticmethod
    def rho_scri(t: float, r: float) -> float:
        return math.hypot(1.0, t - r) / t


# ---------------------------------------------------------------------------
# The mode model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeModel:
    """One spherical-harmonic sector of the stationary operator.

    Immutable after construction; safe to share across parallel workers.
    """

    n: int
    ell: int
    alpha: complex = 0.0
    S: complex = 0.0
    V_short: RadialPotential = field(default_factory=NonePotential)
    delta: float = 1.0
    r_match: Optional[float] = None
    match_tol: float = DEFAULT_MATCH_TOL
    perturbation: Optional[NonstatPerturbation] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigInvalid("dimension n must be an integer >= 1")
        if int(self.ell) != self.ell or self.ell < 0:
            raise ConfigInvalid("mode number ell must be an integer >= 0")
        if self.delta <= 0:
            raise ConfigInvalid("short-range decay rate delta must be positive")
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "S", complex(self.S))
        _check_alpha(self.n, self.alpha)
        if self.alpha == 0 and self.n < 3:
            raise ConfigInvalid("n >= 3 required for a nonempty indicial gap when alpha = 0")
        if self.r_match is None:
            rm = max(CUTOFF_HI, self.V_short.negligible_radius(self.match_tol))
            object.__setattr__(self, "r_match", float(rm))
        elif self.r_match < CUTOFF_HI:
            raise ConfigInvalid("r_match must lie beyond the inverse-square cutoff (r >= 2)")

    @property
    def lambda_ell(self) -> int:
        return self.ell * (self.ell + self.n - 2)

    def alpha_eff(self, r: float) -> complex:
        return self.alpha * cutoff_chi(r)

    def nu0_squared(self) -> complex:
        return ((self.n - 2) / 2.0) ** 2 + self.alpha

    def is_real(self) -> bool:
        return self.alpha.imag == 0 and self.S.imag == 0 and self.V_short.is_real()

    def origin_radius(self) -> float:
        """Smallest radius at which the operator coefficients are evaluable."""
        if isinstance(self.V_short, TablePotential):
            return self.V_short.origin_radius()
        return 0.0

    def check_match_radius(self, n_samples: int = 64) -> float:
        """Verify sup_{r >= r_match} |r^{2+delta} V| < match_tol * r_match^delta.

        Returns the measured supremum on a geometric sample grid.
        """
        if isinstance(self.V_short, NonePotential):
            return 0.0
        hi = self.r_match * 8.0
        if isinstance(self.V_short, TablePotential):
            hi = min(hi, self.V_short.r[-1])
        rs = np.geomspace(self.r_match, hi, n_samples)
        sup = float(np.max(np.abs(rs ** (2.0 + self.delta) * self.V_short.array(rs))))
        bound = self.match_tol * self.r_match**self.delta
        if sup >= bound:
            raise ConfigInvalid(
                f"|r^(2+delta) V| = {sup:.3e} beyond r_match, exceeds {bound:.3e}; "
                "raise r_match or match_tol"
            )
        return sup


def _check_alpha(n: int, alpha: complex) -> None:
    thr = -(((n - 2) / 2.0) ** 2)
    if alpha.imag == 0.0 and alpha.real <= thr:
        raise InadmissibleAlpha(
            f"alpha = {alpha} lies on the removed ray (-inf, {thr}] for n = {n}"
        )


# ---------------------------------------------------------------------------
# Operator coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeCoefficients:
    """Coefficient closures of L u = -u'' - a u' + b u, plus the structured
    data (origin Laurent series, far-field exponents) the series starters need.

    Iterable as the pair (a, b).
    """

    a: Callable[[float], complex]
    b: Callable[[float], complex]
    n: int
    ell: int
    sigma: complex
    S: complex
    alpha: complex
    lambda_ell: int
    v_taylor0: tuple[complex, ...]  # V coefficients of r^-1, r^0, r^1, ...
    r_match: float
    breakpoints: tuple[float, ...]

    def __iter__(self):
        return iter((self.a, self.b))

    def far_indicial_poly(self, mu: complex) -> complex:
        """P(mu) = -mu^2 + (n-2) mu + lambda_ell + alpha; roots are lambda_+-."""
        return -mu * mu + (self.n - 2) * mu + self.lambda_ell + self.alpha

    def origin_indicial_poly(self, mu: complex) -> complex:
        """Q(mu) = -mu^2 - (n-2) mu + lambda_ell; roots ell and -(ell+n-2)."""
        return -mu * mu - (self.n - 2) * mu + self.lambda_ell

    def outgoing_exponent(self) -> complex:
        return (self.n - 1) / 2.0 + self.S


def mode_coefficients(model: ModeModel, sigma: complex = 0.0) -> ModeCoefficients:
    """Coefficients of the mode operator at spectral parameter sigma.

    At sigma = 0 these are the zero-energy operator coefficients; the sigma
    dependence is linear (a) and linear-in-sigma (the extra part of b).
    """
    n = model.n
    ell = model.ell
    lam = model.lambda_ell
    alpha = model.alpha
    S = model.S
    V = model.V_short
    sigma = complex(sigma)

    two_i_sigma = 2j * sigma
    i_sigma_n1 = 1j * sigma * (n - 1)
    two_i_sigma_S = 2j * sigma * S

    def a(r: float) -> complex:
        return (n - 1) / r + two_i_sigma

    def b(r: float) -> complex:
        out = (lam + alpha * cutoff_chi(r)) / (r * r)
        if sigma != 0:
            out += -(i_sigma_n1 + two_i_sigma_S) / r
        v = V(r)
        if v != 0:
            out += v
        return out

    brk = tuple(sorted({CUTOFF_LO, CUTOFF_HI, *V.breakpoints()}))
    return ModeCoefficients(
        a=a,
        b=b,
        n=n,
        ell=ell,
        sigma=sigma,
        S=S,
        alpha=alpha,
        lambda_ell=lam,
        v_taylor0=tuple(V.taylor0(24)),
        r_match=model.r_match,
        breakpoints=brk,
    )


def effective_potential(model: ModeModel) -> Callable[[np.ndarray], np.ndarray]:
    """Potential of the reduced 1+1 wave equation psi_tt = psi_rr - W_eff psi.

    W_eff(r) = (nu_c(r)^2 - 1/4)/r^2 + V(r) with
    nu_c(r)^2 = ((n-2)/2 + ell)^2 + alpha_eff(r); equivalently
    (lambda_ell + alpha_eff + (n-1)(n-3)/4)/r^2 + V.
    """
    n = model.n
    const = model.lambda_ell + (n - 1) * (n - 3) / 4.0
    alpha = model.alpha
    V = model.V_short

    def W_eff(r):
        r = np.asarray(r, dtype=float)
        out = (const + alpha * cutoff_chi_array(r)) / (r * r)
        out = out + V.array(r)
        return out.real if np.isrealobj(out) or not np.any(out.imag) else out

    return W_eff


def potential_from_spec(kind: str, *params) -> RadialPotential:
    """Build a potential from its config name: none, yukawa, exp, gauss, table."""
    kind = kind.lower()
    if kind == "none":
        return NonePotential()
    if kind == "yukawa":
        return YukawaPotential(*params)
    if kind == "exp":
        return ExpPotential(*params)
    if kind == "gauss":
        return GaussPotential(*params)
    if kind == "table":
        (path,) = params
        data = np.loadtxt(path)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ConfigInvalid(f"table file {path} must have two columns (r, V)")
        return TablePotential(data[:, 0], data[:, 1], path=str(path))
    raise ConfigInvalid(f"unknown potential family {kind!r}")
