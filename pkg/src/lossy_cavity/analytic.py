"""Closed-form no-jump dynamics and the probability bookkeeping built on it.

The no-jump amplitudes solve

    alpha' = -i (delta - i gamma/2) alpha - i g beta
    beta'  = -i g alpha - (kappa/2) beta

with alpha(0) = 1, beta(0) = 0.  Cumulative channel probabilities are
integrals of |beta|^2 and |alpha|^2, evaluated with adaptive Gauss-Kronrod
quadrature (QUADPACK via scipy).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import NoJumpAmplitudes, SystemParams, compute_omega

# |Omega t| below this uses the Taylor series of sinh(x)/x.
SERIES_THRESHOLD = 1e-4
# Above this |Re(Omega t/2)| sinh and cosh are split into decaying exponentials.
_SPLIT_THRESHOLD = 300.0

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


def _coefficients(params: SystemParams, omega: complex | None):
    if omega is None:
        omega = compute_omega(params)
    lam = complex(0.25 * (params.kappa + params.gamma), 0.5 * params.delta)
    # kappa/2 - i (delta - i gamma/2)
    c = complex(0.5 * (params.kappa - params.gamma), -params.delta)
    return omega, lam, c


def alpha_beta(params: SystemParams, t, omega: complex | None = None):
    """Vectorized no-jump amplitudes ``(alpha(t), beta(t))``.

    ``omega`` may be passed explicitly to check branch independence; it
    defaults to the principal root from :func:`compute_omega`.
    """
    omega, lam, c = _coefficients(params, omega)
    t = np.asarray(t, dtype=float)
    x = 0.5 * omega * t
    damp = np.exp(-lam * t)

    small = np.abs(omega * t) < SERIES_THRESHOLD
    split = np.abs(x.real) > _SPLIT_THRESHOLD
    with np.errstate(over="ignore", invalid="ignore"):
        # sinh(x)/omega and cosh(x), both multiplied by exp(-lam t)
        x2 = x * x
        s_series = 0.5 * t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0) * damp
        c_series = np.cosh(x) * damp

        s_direct = np.sinh(x) * damp / omega if omega != 0 else s_series
        c_direct = c_series

        ep = np.exp(x - lam * t)
        em = np.exp(-x - lam * t)
        s_split = 0.5 * (ep - em) / omega if omega != 0 else s_series
        c_split = 0.5 * (ep + em)

    s = np.where(small, s_series, np.where(split, s_split, s_direct))
    ch = np.where(small, c_series, np.where(split, c_split, c_direct))
    alpha = c * s + ch
    beta = -2j * params.g * s
    return alpha, beta


def _scalar_pops(params: SystemParams):
    """Fast scalar |alpha|^2, |beta|^2 evaluators for the quadrature integrands."""
    omega, lam, c = _coefficients(params, None)
    g = params.g

    def amps(t: float):
        x = 0.5 * omega * t
        damp = cmath.exp(-lam * t)
        if abs(omega * t) < SERIES_THRESHOLD:
            x2 = x * x
            s = 0.5 * t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0) * damp
            ch = cmath.cosh(x) * damp
        elif abs(x.real) > _SPLIT_THRESHOLD:
            ep = cmath.exp(x - lam * t)
            em = cmath.exp(-x - lam * t)
            s = 0.5 * (ep - em) / omega
            ch = 0.5 * (ep + em)
        else:
            s = cmath.sinh(x) * damp / omega
            ch = cmath.cosh(x) * damp
        return c * s + ch, -2j * g * s

    def pa(t: float) -> float:
        a = amps(t)[0]
        return a.real * a.real + a.imag * a.imag

    def pb(t: float) -> float:
        b = amps(t)[1]
        return b.real * b.real + b.imag * b.imag

    return pa, pb


def amplitudes(params: SystemParams, t: float) -> NoJumpAmplitudes:
    """No-jump amplitudes at a single time ``t >= 0``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    a, b = alpha_beta(params, t)
    return NoJumpAmplitudes(complex(a), complex(b), float(t))


def survival(params: SystemParams, t):
    """p_no(t) = |alpha|^2 + |beta|^2, the probability of no jump up to t."""
    a, b = alpha_beta(params, t)
    return np.abs(a) ** 2 + np.abs(b) ** 2


def resonant_limit_populations(params: SystemParams, t):
    """Damped Rabi oscillation valid for delta = 0 and g >> kappa, gamma."""
    t = np.asarray(t, dtype=float)
    env = np.exp(-0.5 * params.total_loss * t)
    return np.cos(params.g * t) ** 2 * env, np.sin(params.g * t) ** 2 * env


def _time_cap(params: SystemParams) -> float:
    return 1e5 / (params.kappa if params.kappa > 0 else params.gamma)


def decay_horizon(params: SystemParams, tol: float = 1e-12) -> float:
    """Smallest time after which the no-jump probability stays below ``tol``.

    p_no is nonincreasing and equals the total probability of all jumps still
    to come, so any integral of jump rates beyond the returned time is
    bounded by ``tol``.
    """
    if params.total_loss <= 0:
        raise ValueError("no dissipation channel; limit undefined (periodic dynamics)")
    cap = _time_cap(params)
    lo, hi = 0.0, 1.0 / params.total_loss
    while survival(params, hi) >= tol:
        lo, hi = hi, 2.0 * hi
        if lo >= cap:
            raise ValueError(f"no-jump probability does not decay below {tol} before t={cap:g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if survival(params, mid) < tol:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * hi:
            break
    return hi


def _subdivide(params: SystemParams, t0: float, t1: float) -> np.ndarray:
    """Breakpoints for quad: oscillation periods plus geometric refinement near 0."""
    omega = compute_omega(params)
    pts = [t0, t1]
    if abs(omega.imag) > 0:
        period = 2.0 * math.pi / abs(omega.imag)
        n = int((t1 - t0) / period)
        if 1 <= n <= 20000:
            pts.extend(t0 + period * np.arange(1, n + 1))
    fast = 1.0 / max(abs(omega), params.total_loss, params.g, 1e-300)
    s = fast
    while s < t1:
        if s > t0:
            pts.append(s)
        s *= 2.0
    pts = np.unique(np.clip(pts, t0, t1))
    return pts


def _integrate(f, t0: float, t1: float, params: SystemParams) -> float:
    if t1 <= t0:
        return 0.0
    edges = _subdivide(params, t0, t1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        total += val
    return total


def cumulative_integrals(params: SystemParams, t_grid) -> tuple[np.ndarray, np.ndarray]:
    """Running integrals of |beta|^2 and |alpha|^2 from 0 to each grid time."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if t[0] < 0:
        raise ValueError("time grid must start at t >= 0")
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be ascending")
    pa, pb = _scalar_pops(params)
    ib = np.empty_like(t)
    ia = np.empty_like(t)
    acc_b = acc_a = 0.0
    prev = 0.0
    for k, tk in enumerate(t):
        if tk > prev:
            if params.g != 0.0:
                acc_b += _integrate(pb, prev, tk, params)
            acc_a += _integrate(pa, prev, tk, params)
            prev = tk
        ib[k] = acc_b
        ia[k] = acc_a
    return ib, ia


@dataclass(frozen=True, eq=False)
class ProbabilityBundle:
    """Populations and cumulative channel probabilities on a time grid."""

    t: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray
    p_ext: np.ndarray
    p_abs: np.ndarray
    p_spo: np.ndarray
    p_yes: np.ndarray

    @property
    def p_no(self) -> np.ndarray:
        return self.p_a + self.p_b

    @property
    def p_jumped(self) -> np.ndarray:
        """Sum of the three channel probabilities (quadrature route to p_yes)."""
        return self.p_ext + self.p_abs + self.p_spo


def populations_and_cumulative(params: SystemParams, t_grid) -> ProbabilityBundle:
    t = np.asarray(t_grid, dtype=float)
    ib, ia = cumulative_integrals(params, t)
    a, b = alpha_beta(params, t)
    p_a = np.abs(a) ** 2
    p_b = np.abs(b) ** 2
    return ProbabilityBundle(
        t=t,
        p_a=p_a,
        p_b=p_b,
        p_ext=params.kappa1 * ib,
        p_abs=params.kappa2 * ib,
        p_spo=params.gamma * ia,
        p_yes=np.clip(1.0 - (p_a + p_b), 0.0, 1.0),
    )


def asymptotic_budget(params: SystemParams) -> tuple[float, float, float]:
    """(p_ext, p_abs, p_spo) in the limit t -> infinity."""
    t_max = decay_horizon(params)
    ib, ia = cumulative_integrals(params, [t_max])
    return (
        min(max(params.kappa1 * ib[0], 0.0), 1.0),
        min(max(params.kappa2 * ib[0], 0.0), 1.0),
        min(max(params.gamma * ia[0], 0.0), 1.0),
    )


def p_ext_infinity(params: SystemParams) -> float:
    """Probability that the photon eventually leaves through the output mirror."""
    if params.total_loss <= 0:
        raise ValueError("no dissipation channel; limit undefined (periodic dynamics)")
    if params.kappa1 == 0.0:
        return 0.0
    return asymptotic_budget(params)[0]


@dataclass(frozen=True)
class TruncatedScenario:
    """Atom-cavity coupling switched off at time ``tau``."""

    params: SystemParams
    tau: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")

    @classmethod
    def half_rabi(cls, params: SystemParams) -> "TruncatedScenario":
        return cls(params, math.pi / abs(compute_omega(params)))

    @classmethod
    def full_rabi(cls, params: SystemParams) -> "TruncatedScenario":
        return cls(params, 2.0 * math.pi / abs(compute_omega(params)))

    @property
    def is_continuous(self) -> bool:
        return math.isinf(self.tau)


def _beta_tau_sq(sc: TruncatedScenario) -> float:
    if sc.is_continuous:
        return 0.0
    return float(np.abs(alpha_beta(sc.params, sc.tau)[1]) ** 2)


def p_in(scenario: TruncatedScenario, t):
    """Probability of a photon inside the cavity; free cavity decay after tau."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    tau = scenario.tau
    before = np.minimum(t, tau)
    pb = np.abs(alpha_beta(scenario.params, before)[1]) ** 2
    if scenario.is_continuous:
        return pb
    # at t == tau the pre-tau branch is used; both branches agree there
    after = np.exp(-scenario.params.kappa * np.maximum(t - tau, 0.0))
    return np.where(t <= tau, pb, pb * after)


def _post_tau_fraction(kappa: float, dt):
    """(1 - exp(-kappa dt)) / kappa, with the kappa -> 0 limit dt."""
    dt = np.asarray(dt, dtype=float)
    if kappa == 0.0:
        return dt
    return -np.expm1(-kappa * dt) / kappa


def p_ext_bar(scenario: TruncatedScenario, t):
    """Extraction probability up to ``t`` for the truncated interaction."""
    p = scenario.params
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    scalar = t.ndim == 0
    tt = np.atleast_1d(t)
    before = np.minimum(tt, scenario.tau)
    order = np.argsort(before, kind="stable")
    ib_sorted, _ = cumulative_integrals(p, before[order])
    ib = np.empty_like(ib_sorted)
    ib[order] = ib_sorted
    out = p.kappa1 * ib
    if not scenario.is_continuous:
        dt = np.maximum(tt - scenario.tau, 0.0)
        out = out + p.kappa1 * _beta_tau_sq(scenario) * _post_tau_fraction(p.kappa, dt)
    return out[0] if scalar else out


@dataclass(frozen=True)
class TruncatedBudget:
    """Where the excitation ends up when the interaction stops at tau."""

    p_ext_bar_inf: float
    alpha_tau_sq: float
    beta_tau_sq: float
    p_spo_tau: float
    p_abs_inf: float
    p_ext_tau: float

    @property
    def total(self) -> float:
        return self.p_ext_bar_inf + self.alpha_tau_sq + self.p_spo_tau + self.p_abs_inf

    @property
    def p_ext_bar_inf_complement(self) -> float:
        """Same limit written as 1 - |alpha(tau)|^2 - p_spo(tau) - p_abs(inf)."""
        return 1.0 - self.alpha_tau_sq - self.p_spo_tau - self.p_abs_inf


def truncated_budget(scenario: TruncatedScenario) -> TruncatedBudget:
    p = scenario.params
    if scenario.is_continuous:
        ext, ab, spo = asymptotic_budget(p)
        return TruncatedBudget(ext, 0.0, 0.0, spo, ab, ext)
    if p.kappa == 0.0:
        raise ValueError("kappa = 0: a photon left in the cavity at tau never escapes")
    ib, ia = cumulative_integrals(p, [scenario.tau])
    a, b = alpha_beta(p, scenario.tau)
    a2 = float(abs(a) ** 2)
    b2 = float(abs(b) ** 2)
    p_ext_tau = p.kappa1 * ib[0]
    return TruncatedBudget(
        p_ext_bar_inf=p_ext_tau + p.kappa1 / p.kappa * b2,
        alpha_tau_sq=a2,
        beta_tau_sq=b2,
        p_spo_tau=p.gamma * ia[0],
        p_abs_inf=p.kappa2 * ib[0] + p.kappa2 / p.kappa * b2,
        p_ext_tau=p_ext_tau,
    )


def p_ext_bar_infinity(scenario: TruncatedScenario) -> float:
    if scenario.is_continuous:
        return p_ext_infinity(scenario.params)
    return truncated_budget(scenario).p_ext_bar_inf


def truncated_populations(scenario: TruncatedScenario, t):
    """Expected (atom excited, photon in cavity, neither) probabilities.

    Before tau these are |alpha|^2, |beta|^2 and 1 - p_no.  After tau the
    decoupled atom keeps |alpha(tau)|^2 and the photon decays at kappa.
    """
    t = np.asarray(t, dtype=float)
    before = np.minimum(t, scenario.tau)
    a, _ = alpha_beta(scenario.params, before)
    pa = np.abs(a) ** 2
    pb = p_in(scenario, t)
    return pa, pb, 1.0 - pa - pb
