"""Mode envelope of the extracted single-photon wave packet.

The photodetection rate at the output mirror, kappa1 |beta(t)|^2, equals
p_ext(inf) times the squared amplitude envelope, which fixes

    eps(t) = sqrt(kappa1 / p_ext(inf)) |beta(t)|

for continuous interaction.  When the coupling stops at tau the intracavity
photon simply decays afterwards, giving an exponential tail
|beta(tau)| exp(-kappa (t - tau)/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .analytic import (
    TruncatedScenario,
    alpha_beta,
    cumulative_integrals,
    decay_horizon,
    p_ext_bar_infinity,
    p_ext_infinity,
    p_in,
    truncated_budget,
)
from .model import SystemParams, compute_omega

System = Union[SystemParams, TruncatedScenario]


def _as_scenario(system: System) -> TruncatedScenario:
    if isinstance(system, TruncatedScenario):
        return system
    return TruncatedScenario(system, math.inf)


def _scaled_amplitude(sc: TruncatedScenario, t) -> np.ndarray:
    """eps * sqrt(p_ext_bar(inf)/kappa1): |beta| before tau, decaying tail after."""
    t = np.asarray(t, dtype=float)
    causal = t > 0
    tt = np.where(causal, t, 0.0)
    if sc.is_continuous:
        amp = np.abs(alpha_beta(sc.params, tt)[1])
    else:
        b_tau = abs(complex(alpha_beta(sc.params, sc.tau)[1]))
        before = np.abs(alpha_beta(sc.params, np.minimum(tt, sc.tau))[1])
        tail = b_tau * np.exp(-0.5 * sc.params.kappa * np.maximum(tt - sc.tau, 0.0))
        amp = np.where(tt <= sc.tau, before, tail)
    return np.where(causal, amp, 0.0)


def _phase(sc: TruncatedScenario, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    tt = np.clip(t, 0.0, sc.tau)
    return np.angle(alpha_beta(sc.params, tt)[1])


@dataclass(frozen=True, eq=False)
class PulseEnvelope:
    """Sampled amplitude envelope together with what is needed to evaluate it anywhere.

    ``phase`` holds arg(beta) as a candidate phase.  Photodetection fixes
    only the magnitude, so treat it as informational.
    """

    t_grid: np.ndarray
    epsilon: np.ndarray
    p_ext_inf: float
    scenario: TruncatedScenario
    phase: Optional[np.ndarray] = None

    @property
    def params(self) -> SystemParams:
        return self.scenario.params

    @property
    def tau(self) -> float:
        return self.scenario.tau

    @property
    def scale(self) -> float:
        """sqrt(p_ext(inf)/kappa1), the factor used on plot axes."""
        return math.sqrt(self.p_ext_inf / self.params.kappa1)

    def __call__(self, t):
        return _scaled_amplitude(self.scenario, t) / self.scale

    def scaled(self, t=None):
        if t is None:
            return self.epsilon * self.scale
        return _scaled_amplitude(self.scenario, t)

    def normalization(self) -> float:
        """Integral of eps^2: trapezoid on the grid plus the exact remainder.

        Beyond tau the envelope is a pure exponential and is integrated in
        closed form, so the trapezoid only sees the smooth pre-tau part.
        """
        p = self.params
        t = self.t_grid
        coupled = t[t <= self.tau]
        eps2 = self(coupled) ** 2
        total = float(np.trapezoid(eps2, coupled)) if coupled.size > 1 else 0.0
        t_end = float(coupled[-1]) if coupled.size else 0.0

        if self.scenario.is_continuous:
            t_max = max(decay_horizon(p), t_end)
            ib = cumulative_integrals(p, [t_end, t_max])[0]
            return total + p.kappa1 * (ib[1] - ib[0]) / self.p_ext_inf
        if t_end < self.tau:
            ib = cumulative_integrals(p, [t_end, self.tau])[0]
            total += p.kappa1 * (ib[1] - ib[0]) / self.p_ext_inf
        eps_tau2 = float(self(self.tau)) ** 2
        return total + eps_tau2 / p.kappa

    def cumulative(self) -> np.ndarray:
        """Running trapezoid integral of eps^2 over the grid."""
        e2 = self.epsilon ** 2
        steps = 0.5 * (e2[1:] + e2[:-1]) * np.diff(self.t_grid)
        return np.concatenate([[0.0], np.cumsum(steps)])


def default_grid(system: System, points_per_period: int = 40, min_points: int = 2000) -> np.ndarray:
    """Uniform grid to the decay horizon, refined to resolve the Rabi period.

    For truncated interaction the coupled part [0, tau] gets its own dense
    grid with tau as a node, since the envelope has a kink there.
    """
    sc = _as_scenario(system)
    p = sc.params
    omega = abs(compute_omega(p))
    period = 2.0 * math.pi / omega if omega > 0 else math.inf
    if sc.is_continuous:
        t_max = decay_horizon(p)
        step = min(period / points_per_period, t_max / (min_points - 1))
        return np.linspace(0.0, t_max, max(min_points, math.ceil(t_max / step) + 1))
    t_max = sc.tau + 30.0 / p.kappa
    pre_step = min(period / 1000.0, sc.tau / 2000.0) if sc.tau > 0 else 1.0
    n_pre = max(2, math.ceil(sc.tau / pre_step) + 1) if sc.tau > 0 else 1
    pre = np.linspace(0.0, sc.tau, n_pre)
    post = np.linspace(sc.tau, t_max, max(min_points, 2))[1:]
    return np.concatenate([pre, post])


def _build(sc: TruncatedScenario, p_ext_inf: float, t_grid) -> PulseEnvelope:
    t = default_grid(sc) if t_grid is None else np.asarray(t_grid, dtype=float)
    scale = math.sqrt(p_ext_inf / sc.params.kappa1)
    eps = _scaled_amplitude(sc, t) / scale
    return PulseEnvelope(t, eps, p_ext_inf, sc, phase=_phase(sc, t))


def envelope_continuous(params: SystemParams, t_grid=None) -> PulseEnvelope:
    """Envelope for an interaction that never stops."""
    if params.kappa1 == 0.0:
        raise ValueError("no extracted mode exists (kappa1 = 0)")
    p_inf = p_ext_infinity(params)
    if p_inf <= 0.0:
        raise ValueError("no extracted mode exists (p_ext(inf) = 0)")
    return _build(TruncatedScenario(params, math.inf), p_inf, t_grid)


def envelope_truncated(scenario: TruncatedScenario, t_grid=None) -> PulseEnvelope:
    """Envelope when the atom-cavity coupling is switched off at ``scenario.tau``."""
    if scenario.params.kappa1 == 0.0:
        raise ValueError("no extracted mode exists (kappa1 = 0)")
    if scenario.is_continuous:
        return envelope_continuous(scenario.params, t_grid)
    p_bar = p_ext_bar_infinity(scenario)
    if p_bar <= 0.0:
        raise ValueError("no extracted mode exists (extraction probability is zero)")
    return _build(scenario, p_bar, t_grid)


def envelope_at_z(envelope: PulseEnvelope, z, c: float, t):
    """Envelope seen at distance ``z`` from the mirror, via the retarded time t - z/c."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    if not c > 0:
        raise ValueError("speed of light must be positive")
    return envelope(np.asarray(t, dtype=float) - z / c)


def detector_response(envelope: PulseEnvelope, eta: float, T: float, t):
    """Click probability in a window of width T centred on t (slowly varying envelope)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("detector efficiency must lie in [0, 1]")
    if not T > 0:
        raise ValueError("resolution time must be positive")
    return eta * envelope.p_ext_inf * envelope(t) ** 2 * T


def jump_click_probability(system: System, eta: float, T: float, t):
    """Same window probability from the extraction jump rate eta kappa1 p_in(t) T."""
    sc = _as_scenario(system)
    return eta * sc.params.kappa1 * p_in(sc, np.asarray(t, dtype=float)) * T


@dataclass(frozen=True)
class OutputFieldState:
    """Output field as a mixture of one photon in the extracted mode and vacuum."""

    weight_one_photon: float
    weight_vacuum: float


def output_state(system: System) -> OutputFieldState:
    sc = _as_scenario(system)
    if sc.is_continuous:
        p = p_ext_infinity(sc.params) if sc.params.kappa1 > 0 else 0.0
    else:
        p = truncated_budget(sc).p_ext_bar_inf
    return OutputFieldState(p, 1.0 - p)
