"""Covariance kernels for the Gaussian processes under study.

The central object is the centered Gaussian process obtained by freezing
the space variable of a stochastic heat equation driven by space-time
white noise and watching it in time.  Its covariance is

    heat:        rho(s, t) = ((t + s)^(1/2) - |t - s|^(1/2)) / sqrt(2*pi)

Two companions appear throughout:

    xi:          rho(s, t) = (s^(1/2) + t^(1/2) - (s + t)^(1/2)) / 2
    fbm_quarter: rho(s, t) = (s^(1/2) + t^(1/2) - |t - s|^(1/2)) / 2

`xi` is the smooth-away-from-zero remainder process with spectral
representation (16*pi)^(-1/4) * integral of (1 - exp(-u*t)) u^(-3/4) dW(u);
its closed form is validated against direct quadrature of that integral by
`xi_cov_quadrature`.  `fbm_quarter` is fractional Brownian motion with
Hurst index 1/4, and the three kernels tie together exactly:

    fbm_quarter = c^2 * heat + xi,   c = (pi/2)^(1/4).

All kernels are positive semidefinite on nonnegative times and vanish
when either argument is 0, so covariance matrices are built on the grid
times t_1 .. t_N, never t_0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Scale tying fbm_quarter to the heat kernel: c = (pi/2)^(1/4).
FBM_HEAT_SCALE = (math.pi / 2.0) ** 0.25

_SQRT_2PI = math.sqrt(2.0 * math.pi)

KERNEL_KINDS = ("heat", "xi", "fbm_quarter", "bm", "composite")


def _check_nonnegative(s, t):
    if np.any(np.asarray(s) < 0) or np.any(np.asarray(t) < 0):
        raise DomainError("covariance kernels are defined for s, t >= 0")


def rho_heat(s, t):
    """Heat-kernel time-slice covariance; scalar or elementwise on arrays."""
    _check_nonnegative(s, t)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = (np.sqrt(s + t) - np.sqrt(np.abs(t - s))) / _SQRT_2PI
    return out if out.ndim else float(out)

def rho_xi_lei_nualart(s, t):
    """Covariance of the smooth remainder process, closed form."""
    _check_nonnegative(s, t)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = 0.5 * (np.sqrt(s) + np.sqrt(t) - np.sqrt(s + t))
    return out if out.ndim else float(out)


def rho_fbm_quarter(s, t):
    """Fractional Brownian motion covariance at Hurst index 1/4."""
    _check_nonnegative(s, t)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = 0.5 * (np.sqrt(s) + np.sqrt(t) - np.sqrt(np.abs(t - s)))
    return out if out.ndim else float(out)


def rho_bm(s, t):
    """Standard Brownian motion covariance min(s, t)."""
    _check_nonnegative(s, t)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = np.minimum(s, t)
    return out if out.ndim else float(out)


def xi_cov_quadrature(s, t, epsabs=1e-10):
    """Remainder-process covariance by direct quadrature of its spectrum.

    Integrates (16*pi)^(-1/2) * (1-exp(-u*s)) * (1-exp(-u*t)) * u^(-3/2)
    over u in (0, inf), mapped to v in (0, 1) via u = v/(1-v).  Exists as
    an independent check on `rho_xi_lei_nualart`; the closed form is what
    production code uses.
    """
    from scipy.integrate import quad

    _check_nonnegative(s, t)
    s = float(s)
    t = float(t)
    if s == 0.0 or t == 0.0:
        return 0.0
    front = 1.0 / math.sqrt(16.0 * math.pi)

    def integrand(v):
        u = v / (1.0 - v)
        # (1 - e^{-us})(1 - e^{-ut}) u^{-3/2} du, du = dv / (1-v)^2
        return (
            front
            * (-math.expm1(-u * s))
            * (-math.expm1(-u * t))
            * u ** -1.5
            / (1.0 - v) ** 2
        )

    value, _err = quad(integrand, 0.0, 1.0, epsabs=epsabs, limit=200)
    return value


@dataclass(frozen=True)
class Grid:
    """Uniform time grid with n steps per unit time on [0, horizon].

    Grid times are t_j = j/n for 0 <= j <= floor(n*horizon).  At least
    two steps are required.
    """

    n: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("grid needs n >= 1 steps per unit time")
        if not (self.horizon > 0):
            raise DomainError("grid horizon must be positive")
        if self.nsteps < 2:
            raise DomainError("grid must contain at least 2 steps")

    @property
    def nsteps(self):
        """Number of steps N = floor(n * horizon)."""
        return int(math.floor(self.n * self.horizon + 1e-9))

    @property
    def dt(self):
        return 1.0 / self.n

    def times(self):
        """All grid times t_0 .. t_N as an array."""
        return np.arange(self.nsteps + 1, dtype=np.float64) / self.n

    def index_at(self, t):
        """Largest j with t_j <= t, clipped to N.

        The 1e-9 slack heals float representation of t = j/n; callers
        probe at (multiples of) grid times.
        """
        if t < 0:
            raise DomainError("time must be nonnegative")
        return min(int(math.floor(self.n * t + 1e-9)), self.nsteps)


@dataclass(frozen=True)
class CovKernel:
    """Tagged covariance kernel.

    kind: one of "heat", "xi", "fbm_quarter", "bm", "composite".
    c: scale applied (squared) to the first component of a composite.
    components: sub-kernels of a composite; rho = c^2*rho_0 (+ rho_1).
    mean_coeffs: optional polynomial-in-t deterministic mean, added to
        sampled paths after the Gaussian draw; empty means centered.
    """

    kind: str
    c: float | None = None
    components: tuple["CovKernel", ...] = ()
    mean_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DomainError(
                f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}"
            )
        if self.kind == "composite":
            if self.c is None:
                raise DomainError("composite kernel requires a scale c")
            if not 1 <= len(self.components) <= 2:
                raise DomainError("composite kernel takes one or two components")
            for comp in self.components:
                if comp.kind == "composite":
                    raise DomainError("composite kernels do not nest")
        else:
            if self.c is not None:
                raise DomainError(f"kernel {self.kind!r} takes no scale c")
            if self.components:
                raise DomainError(f"kernel {self.kind!r} takes no components")
        if self.mean_coeffs and self.kind != "composite":
            raise DomainError("deterministic means attach to composite kernels")

    def rho(self, s, t):
        """Covariance rho(s, t); elementwise on array input."""
        if self.kind == "heat":
            return rho_heat(s, t)
        if self.kind == "xi":
            return rho_xi_lei_nualart(s, t)
        if self.kind == "fbm_quarter":
            return rho_fbm_quarter(s, t)
        if self.kind == "bm":
            return rho_bm(s, t)
        value = self.c**2 * self.components[0].rho(s, t)
        if len(self.components) == 2:
            value = value + self.components[1].rho(s, t)
        return value

    def mean_at(self, t):
        """Deterministic mean path evaluated at t (scalar or array)."""
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros_like(t)
        for k, coeff in enumerate(self.mean_coeffs):
            out = out + coeff * t**k
        return out if out.ndim else float(out)

    def canonical_id(self):
        """Stable text id used in cache keys and file headers."""
        if self.kind != "composite":
            return self.kind
        inner = "+".join(comp.canonical_id() for comp in self.components)
        tag = f"composite(c={self.c!r};{inner})"
        if self.mean_coeffs:
            tag += f"|mean={list(self.mean_coeffs)!r}"
        return tag

    def to_dict(self):
        rec = {"kind": self.kind}
        if self.kind == "composite":
            rec["c"] = self.c
            rec["components"] = [comp.to_dict() for comp in self.components]
            if self.mean_coeffs:
                rec["mean_coeffs"] = list(self.mean_coeffs)
        return rec

    @staticmethod
    def from_dict(rec):
        if not isinstance(rec, dict) or "kind" not in rec:
            raise DomainError("kernel record must be a dict with a 'kind' tag")
        known = {"kind", "c", "components", "mean_coeffs"}
        extra = set(rec) - known
        if extra:
            raise DomainError(f"unknown kernel record keys: {sorted(extra)}")
        kind = rec["kind"]
        if kind != "composite":
            if set(rec) - {"kind"}:
                raise DomainError(f"kernel {kind!r} takes only a 'kind' tag")
            return CovKernel(kind)
        comps = tuple(CovKernel.from_dict(c) for c in rec.get("components", []))
        return CovKernel(
            "composite",
            c=float(rec.get("c", 1.0)),
            components=comps,
            mean_coeffs=tuple(float(v) for v in rec.get("mean_coeffs", ())),
        )


def heat_kernel():
    return CovKernel("heat")


def fbm_quarter_kernel():
    return CovKernel("fbm_quarter")


def fbm_composite_kernel():
    """fbm_quarter expressed as c^2 * heat + xi with c = (pi/2)^(1/4)."""
    return CovKernel(
        "composite",
        c=FBM_HEAT_SCALE,
        components=(CovKernel("heat"), CovKernel("xi")),
    )


def build_cov_matrix(kernel, grid):
    """Dense covariance matrix on grid times t_1 .. t_N.

    t_0 = 0 is excluded: every kernel here vanishes at 0, so including it
    would make the matrix exactly singular.  Paths reattach the zero at
    sampling time.
    """
    times = grid.times()[1:]
    s = times[:, None]
    t = times[None, :]
    cov = kernel.rho(s, t)
    return np.ascontiguousarray(cov, dtype=np.float64)
