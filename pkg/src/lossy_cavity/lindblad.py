"""Direct integration of the master equation on the three-state basis.

This is the independent reference for the closed-form solution: the
generator is written out with explicit 3x3 operator algebra and propagated
with classical fixed-step fourth-order Runge-Kutta.  No trace
renormalization is applied, so trace drift stays visible as a diagnostic.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    ANNIHILATION,
    ATOM_LOWERING,
    EXCITED_PROJECTOR,
    DensityMatrix3,
    SystemParams,
    hamiltonian_3,
)


class LindbladGenerator:
    """Master-equation generator for one parameter set.

    The action on a density matrix is defined by :meth:`apply`.  The same
    action is tabulated once as a 9x9 superoperator (row-major vec) for
    stepping.
    """

    def __init__(self, params: SystemParams):
        self.params = params
        self._h = hamiltonian_3(params)
        a = ANNIHILATION
        self._a = a
        self._ad = a.conj().T
        self._n = self._ad @ a
        self._lower = ATOM_LOWERING
        self._raise = ATOM_LOWERING.conj().T
        self._proj = EXCITED_PROJECTOR
        basis = np.eye(9, dtype=complex).reshape(9, 3, 3)
        self.superoperator = np.stack([self.apply(e).ravel() for e in basis], axis=1)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        p = self.params
        h = self._h
        out = -1j * (h @ rho - rho @ h)
        cavity = 2.0 * self._a @ rho @ self._ad - self._n @ rho - rho @ self._n
        out += 0.5 * p.kappa * cavity  # kappa1 and kappa2 share the same operator
        atom = 2.0 * self._lower @ rho @ self._raise - self._proj @ rho - rho @ self._proj
        out += 0.5 * p.gamma * atom
        return out

    def step_ceiling(self) -> float:
        """Largest allowed RK4 step, 1 / (20 max(g, kappa, gamma, |delta|))."""
        rate = self.params.max_rate
        return math.inf if rate == 0 else 1.0 / (20.0 * rate)

    def default_step(self) -> float:
        return self.step_ceiling() / 10.0


def lindblad_rhs(gen: LindbladGenerator, rho) -> np.ndarray:
    """Time derivative of ``rho`` (a DensityMatrix3 or a 3x3 array)."""
    m = rho.matrix if isinstance(rho, DensityMatrix3) else np.asarray(rho, dtype=complex)
    return gen.apply(m)


def integrate(gen: LindbladGenerator, rho0, t_grid, step: float | None = None) -> np.ndarray:
    """Propagate ``rho0`` from ``t_grid[0]`` and return rho at every grid time.

    Each grid interval is split into the smallest number of equal RK4 steps
    not exceeding ``step`` (default: a tenth of the ceiling).  Returns an
    array of shape ``(len(t_grid), 3, 3)``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be ascending")
    ceiling = gen.step_ceiling()
    if step is None:
        step = gen.default_step()
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if step > ceiling * (1 + 1e-12):
        raise ValueError(f"step {step:g} exceeds the stability ceiling {ceiling:g}")

    m0 = rho0.matrix if isinstance(rho0, DensityMatrix3) else np.asarray(rho0, dtype=complex)
    L = gen.superoperator
    y = m0.ravel().copy()
    out = np.empty((t.size, 9), dtype=complex)
    out[0] = y
    for k in range(1, t.size):
        span = t[k] - t[k - 1]
        if span > 0:
            if math.isinf(step):
                nsub = 1
            else:
                nsub = max(1, math.ceil(span / step - 1e-9))
            h = span / nsub
            for _ in range(nsub):
                k1 = L @ y
                k2 = L @ (y + 0.5 * h * k1)
                k3 = L @ (y + 0.5 * h * k2)
                k4 = L @ (y + h * k3)
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k] = y
    return out.reshape(t.size, 3, 3)


def analytic_density(params: SystemParams, t_grid) -> np.ndarray:
    """rho(t) assembled from the closed-form amplitudes, for comparison."""
    from .analytic import alpha_beta

    a, b = alpha_beta(params, np.asarray(t_grid, dtype=float))
    rho = np.zeros((a.size, 3, 3), dtype=complex)
    rho[:, 0, 0] = np.abs(a) ** 2
    rho[:, 1, 1] = np.abs(b) ** 2
    rho[:, 0, 1] = a * b.conj()
    rho[:, 1, 0] = a.conj() * b
    rho[:, 2, 2] = 1.0 - rho[:, 0, 0].real - rho[:, 1, 1].real
    return rho
