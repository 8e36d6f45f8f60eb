"""Physical parameters, basis conventions and operator matrices.

The atom-cavity system lives in the single-excitation sector spanned by

    |a> = |2,0>   atom excited, cavity empty
    |b> = |1,1>   atom in ground state, one photon
    |c> = |1,0>   atom in ground state, cavity empty

Everything is written in the interaction picture with hbar = 1, so the only
frequency that survives is the atom-cavity detuning ``delta``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class BasisState(enum.IntEnum):
    A = 0
    B = 1
    C = 2


@dataclass(frozen=True)
class SystemParams:
    """Rates of the damped Jaynes-Cummings model, all in one common unit.

    Parameters
    ----------
    g : float
        Atom-cavity coupling.
    kappa1 : float
        Photon escape rate through the output mirror.
    kappa2 : float
        Mirror absorption and scattering rate.
    gamma : float
        Spontaneous emission rate of the atom out of the side of the cavity.
    delta : float
        Detuning between atomic transition and cavity mode (any sign).
    """

    g: float
    kappa1: float
    kappa2: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa1", "kappa2", "gamma", "delta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if name != "delta" and value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value!r}")

    @classmethod
    def from_ratios(
        cls,
        two_g_over_kappa: float,
        delta_over_kappa: float = 0.0,
        kappa1_over_kappa: float = 1.0,
        gamma_over_kappa: float = 0.0,
        kappa: float = 1.0,
    ) -> "SystemParams":
        """Build parameters from the dimensionless ratios used for plotting."""
        if not 0.0 <= kappa1_over_kappa <= 1.0:
            raise ValueError("kappa1/kappa must lie in [0, 1]")
        return cls(
            g=0.5 * two_g_over_kappa * kappa,
            kappa1=kappa1_over_kappa * kappa,
            kappa2=(1.0 - kappa1_over_kappa) * kappa,
            gamma=gamma_over_kappa * kappa,
            delta=delta_over_kappa * kappa,
        )

    @property
    def kappa(self) -> float:
        return self.kappa1 + self.kappa2

    @property
    def total_loss(self) -> float:
        """kappa + gamma; zero means the excitation can never leave."""
        return self.kappa + self.gamma

    @property
    def max_rate(self) -> float:
        return max(self.g, self.kappa, self.gamma, abs(self.delta))

    def replace(self, **changes) -> "SystemParams":
        fields = dict(g=self.g, kappa1=self.kappa1, kappa2=self.kappa2,
                      gamma=self.gamma, delta=self.delta)
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True)
class NoJumpAmplitudes:
    """Amplitudes of the unnormalized no-jump state alpha|a> + beta|b> at time t."""

    alpha: complex
    beta: complex
    t: float = 0.0

    @property
    def p_a(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def p_b(self) -> float:
        return abs(self.beta) ** 2

    @property
    def p_no(self) -> float:
        """Squared norm, i.e. the probability that no jump has happened yet."""
        return self.p_a + self.p_b


@dataclass(frozen=True, eq=False)
class DensityMatrix3:
    """Reduced density operator on the (|a>, |b>, |c>) basis."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, state: BasisState) -> "DensityMatrix3":
        m = np.zeros((3, 3), dtype=complex)
        m[state, state] = 1.0
        return cls(m)

    @classmethod
    def from_amplitudes(cls, amps: NoJumpAmplitudes) -> "DensityMatrix3":
        """Ensemble average of the no-jump branch and the collapsed |c> branch."""
        a, b = amps.alpha, amps.beta
        m = np.zeros((3, 3), dtype=complex)
        m[0, 0] = abs(a) ** 2
        m[1, 1] = abs(b) ** 2
        m[0, 1] = a * b.conjugate()
        m[1, 0] = a.conjugate() * b
        m[2, 2] = 1.0 - amps.p_no
        return cls(m)

    def population(self, state: BasisState) -> float:
        return float(self.matrix[state, state].real)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def check(self, herm_tol: float = 1e-12, trace_tol: float = 1e-10) -> None:
        """Raise ValueError unless the matrix is a valid density operator."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace} differs from 1")
        diag = m.diagonal().real
        if np.any(diag < -trace_tol) or np.any(diag > 1 + trace_tol):
            raise ValueError("diagonal entries outside [0, 1]")


# Operators on the three-state space, ordered (a, b, c).
# Cavity annihilation only acts as |1,1> -> |1,0>.
ANNIHILATION = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0]], dtype=complex)
# Atomic lowering |2><1| acts as |2,0> -> |1,0>.
ATOM_LOWERING = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], dtype=complex)
EXCITED_PROJECTOR = np.diag([1, 0, 0]).astype(complex)


def compute_omega(params: SystemParams) -> complex:
    """Principal square root of kappa^2/4 - 4g^2 - i kappa D - D^2, D = delta - i gamma/2."""
    d = complex(params.delta, -0.5 * params.gamma)
    k = params.kappa
    return cmath.sqrt(0.25 * k * k - 4.0 * params.g ** 2 - 1j * k * d - d * d)


def hamiltonian_matrix(params: SystemParams) -> np.ndarray:
    """Interaction Hamiltonian restricted to span{|a>, |b>}."""
    return np.array([[params.delta, params.g], [params.g, 0.0]], dtype=complex)


def hamiltonian_3(params: SystemParams) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    h[:2, :2] = hamiltonian_matrix(params)
    return h


StateLike = Union[NoJumpAmplitudes, DensityMatrix3]


def jump_rates(state: StateLike, params: SystemParams) -> tuple[float, float, float]:
    """Jump rates (extraction, absorption, spontaneous) for the given state.

    For unnormalized no-jump amplitudes the rates are the jump probability
    densities, so their sum equals the decay rate of the squared norm.
    """
    if isinstance(state, DensityMatrix3):
        p_a = state.population(BasisState.A)
        p_b = state.population(BasisState.B)
    else:
        p_a, p_b = state.p_a, state.p_b
    return (params.kappa1 * p_b, params.kappa2 * p_b, params.gamma * p_a)
