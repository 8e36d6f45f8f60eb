"""Monte Carlo unraveling by direct photon counting.

Each trajectory draws its jump time from the closed-form no-jump
probability (delay-function method): the jump happens at the root of
p_no(t) = u for a uniform u.  After a jump the state is |c> and nothing else
can happen, so a trajectory is fully described by at most one
(channel, time) pair.

Randomness is counter-based: trajectory ``i`` of a run with master seed
``s`` reads its uniforms from a SplitMix64 stream keyed by ``s ^ i``.  The
ensemble is therefore a pure function of ``(inputs, s)`` and does not depend
on how trajectories are distributed over worker threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .analytic import TruncatedScenario, alpha_beta, decay_horizon, survival
from .model import NoJumpAmplitudes, SystemParams, compute_omega

BLOCK_SIZE = 4096
_N_UNIFORMS = 4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class JumpChannel(enum.IntEnum):
    EXTRACTION = 0
    ABSORPTION = 1
    SPONTANEOUS = 2


@dataclass(frozen=True)
class TrajectoryRecord:
    """One realization: at most one jump before ``horizon``.

    ``atom_excited_at_tau`` marks truncated-interaction trajectories whose
    atom left the cavity still excited.
    """

    jump: Optional[tuple[JumpChannel, float]]
    horizon: float
    seed_index: int
    atom_excited_at_tau: bool = False

    def __post_init__(self):
        if self.jump is not None:
            t = self.jump[1]
            if not 0.0 < t <= self.horizon:
                raise ValueError(f"jump time {t} outside (0, {self.horizon}]")


# -- random numbers -----------------------------------------------------------

def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def trajectory_uniforms(seed_index, count: int = _N_UNIFORMS) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape ``(count, len(seed_index))``."""
    s = np.atleast_1d(np.asarray(seed_index, dtype=np.uint64))
    with np.errstate(over="ignore"):
        key = _mix(s + _GOLDEN)
        out = np.empty((count, s.size))
        for k in range(count):
            z = _mix(key + np.uint64(k + 1) * _GOLDEN)
            out[k] = ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return out


def seed_indices(master_seed: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.uint64)
    return np.uint64(master_seed & _MASK64) ^ idx


# -- jump time and channel ----------------------------------------------------

def _bracket_step(params: SystemParams) -> float:
    omega = abs(compute_omega(params))
    scales = [1.0 / params.total_loss]
    if omega > 0:
        scales.append(math.pi / omega)
    return min(scales) / 8.0


def _time_tolerance(params: SystemParams) -> float:
    rate = params.kappa if params.kappa > 0 else params.total_loss
    return 1e-10 / rate


def _jump_times(params: SystemParams, u: np.ndarray, horizon: float) -> np.ndarray:
    """Roots of p_no(t) = u in (0, horizon]; NaN where no root exists."""
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, np.nan)
    if params.total_loss <= 0 or horizon <= 0 or u.size == 0:
        return out
    h = _bracket_step(params)
    n_steps = math.ceil(horizon / h)
    table = np.minimum(h * np.arange(n_steps + 1), horizon)
    p_table = survival(params, table)
    # p_no is nonincreasing; a root exists iff p_no(horizon) <= u
    hit = u >= p_table[-1]
    if not np.any(hit):
        return out
    uh = u[hit]
    k = np.searchsorted(-p_table, -uh, side="left")
    k = np.clip(k, 1, table.size - 1)
    lo = table[k - 1]
    hi = table[k]
    tol = _time_tolerance(params)
    n_iter = max(1, math.ceil(math.log2(max(h / tol, 2.0))))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = survival(params, mid) <= uh
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    out[hit] = hi
    return out


def sample_jump_time(params: SystemParams, u: float, horizon: float) -> Optional[float]:
    """Jump time for uniform draw ``u``, or None if no jump occurs by ``horizon``."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u}")
    if math.isinf(horizon):
        horizon = decay_horizon(params, tol=0.5 * u)
    t = _jump_times(params, np.array([u]), horizon)[0]
    return None if math.isnan(t) else float(t)


def _channel_codes(params: SystemParams, t: np.ndarray, u2: np.ndarray) -> np.ndarray:
    codes = np.full(t.shape, -1, dtype=np.int8)
    jumped = ~np.isnan(t)
    if not np.any(jumped):
        return codes
    a, b = alpha_beta(params, t[jumped])
    r_ext = params.kappa1 * np.abs(b) ** 2
    r_abs = params.kappa2 * np.abs(b) ** 2
    r_spo = params.gamma * np.abs(a) ** 2
    total = r_ext + r_abs + r_spo
    if np.any(total <= 0):
        raise ValueError("zero total jump rate at a sampled jump time")
    x = u2[jumped] * total
    codes[jumped] = np.where(x < r_ext, 0, np.where(x < r_ext + r_abs, 1, 2))
    return codes


def sample_channel(params: SystemParams, amps: NoJumpAmplitudes, u2: float) -> JumpChannel:
    """Pick the jump channel with probabilities proportional to the jump rates."""
    r_ext = params.kappa1 * amps.p_b
    r_abs = params.kappa2 * amps.p_b
    r_spo = params.gamma * amps.p_a
    total = r_ext + r_abs + r_spo
    if total <= 0:
        raise ValueError("zero total jump rate; no jump can occur")
    x = u2 * total
    if x < r_ext:
        return JumpChannel.EXTRACTION
    if x < r_ext + r_abs:
        return JumpChannel.ABSORPTION
    return JumpChannel.SPONTANEOUS


# -- ensemble -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleEstimate:
    """Ensemble means of the basis-state populations and the raw jump record.

    ``jump_times`` holds NaN for trajectories without a jump before the
    horizon; ``channels`` holds the JumpChannel value or -1.
    """

    t_grid: np.ndarray
    est_p_a: np.ndarray
    est_p_b: np.ndarray
    est_p_c: np.ndarray
    se_a: np.ndarray
    se_b: np.ndarray
    se_c: np.ndarray
    counts: dict
    n_trajectories: int
    horizon: float
    tau: float
    master_seed: int
    jump_times: np.ndarray
    channels: np.ndarray
    atom_excited: np.ndarray

    def channel_fractions(self) -> dict:
        return {ch: c / self.n_trajectories for ch, c in self.counts.items()}

    def records(self) -> Iterator[TrajectoryRecord]:
        seeds = seed_indices(self.master_seed, 0, self.n_trajectories)
        for i in range(self.n_trajectories):
            code = int(self.channels[i])
            jump = None if code < 0 else (JumpChannel(code), float(self.jump_times[i]))
            yield TrajectoryRecord(jump, self.horizon, int(seeds[i]), bool(self.atom_excited[i]))


def _simulate_block(params: SystemParams, tau: float, horizon: float,
                    master_seed: int, start: int, stop: int):
    u = trajectory_uniforms(seed_indices(master_seed, start, stop))
    coupled_until = min(tau, horizon)
    t_jump = _jump_times(params, u[0], coupled_until)
    codes = _channel_codes(params, t_jump, u[1])
    excited = np.zeros(t_jump.shape, dtype=bool)

    if tau < horizon:
        survivors = np.isnan(t_jump)
        if tau == 0.0:
            cond_b = 0.0
        else:
            a, b = alpha_beta(params, tau)
            cond_b = abs(b) ** 2 / (abs(a) ** 2 + abs(b) ** 2)
        photon = survivors & (u[2] < cond_b)
        excited = survivors & ~photon
        if params.kappa > 0 and np.any(photon):
            t_free = tau - np.log(u[3][photon]) / params.kappa
            inside = t_free <= horizon
            idx = np.flatnonzero(photon)[inside]
            t_jump[idx] = t_free[inside]
            to_ext = u[1][idx] * params.kappa < params.kappa1
            codes[idx] = np.where(to_ext, 0, 1)
    return t_jump, codes, excited


def run_ensemble(
    system: Union[SystemParams, TruncatedScenario],
    n: int,
    t_grid,
    master_seed: int,
    threads: int = 1,
    horizon: float | None = None,
) -> EnsembleEstimate:
    """Simulate ``n`` trajectories and average them on ``t_grid``.

    Before a jump a trajectory contributes its normalized conditioned
    populations |alpha|^2/p_no and |beta|^2/p_no; after a jump it sits in
    |c>.  For a truncated interaction, trajectories still coherent at tau
    keep the photon with probability |beta(tau)|^2/p_no(tau) and then lose
    it at rate kappa.
    """
    if n < 1:
        raise ValueError("number of trajectories must be at least 1")
    if isinstance(system, TruncatedScenario):
        params, tau = system.params, system.tau
    else:
        params, tau = system, math.inf
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("time grid must be non-empty, nonnegative and ascending")
    if horizon is None:
        horizon = float(t[-1])
    if threads < 1:
        raise ValueError("threads must be at least 1")

    bounds = [(s, min(s + BLOCK_SIZE, n)) for s in range(0, n, BLOCK_SIZE)]

    def work(b):
        return _simulate_block(params, tau, horizon, master_seed, *b)

    if threads == 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    t_jump = np.concatenate([p[0] for p in parts])
    codes = np.concatenate([p[1] for p in parts])
    excited = np.concatenate([p[2] for p in parts])

    # one (channel, time) slot per trajectory: a second jump is unrepresentable
    assert np.all(np.isnan(t_jump) == (codes < 0)), "jump time without channel"

    est, se = _populations(params, tau, t, t_jump, excited, n)
    counts = {ch: int(np.count_nonzero(codes == ch.value)) for ch in JumpChannel}
    return EnsembleEstimate(
        t_grid=t,
        est_p_a=est[0], est_p_b=est[1], est_p_c=est[2],
        se_a=se[0], se_b=se[1], se_c=se[2],
        counts=counts,
        n_trajectories=n,
        horizon=float(horizon),
        tau=float(tau),
        master_seed=int(master_seed),
        jump_times=t_jump,
        channels=codes,
        atom_excited=excited,
    )


def _populations(params, tau, t, t_jump, excited, n):
    jumped_sorted = np.sort(t_jump[~np.isnan(t_jump)])
    n_jumped = np.searchsorted(jumped_sorted, t, side="right")

    est = np.empty((3, t.size))
    se = np.empty((3, t.size))

    pre = t <= tau
    if np.any(pre):
        a, b = alpha_beta(params, t[pre])
        pa, pb = np.abs(a) ** 2, np.abs(b) ** 2
        cond_b = pb / (pa + pb)
        f = (n - n_jumped[pre]) / n
        est[1, pre] = f * cond_b
        est[0, pre] = f - est[1, pre]
        est[2, pre] = 1.0 - f
        spread = np.sqrt(f * (1.0 - f) / n)
        se[0, pre] = (1.0 - cond_b) * spread
        se[1, pre] = cond_b * spread
        se[2, pre] = spread

    post = ~pre
    if np.any(post):
        # photons lost after tau, counted from the sorted jump list
        n_before_tau = np.searchsorted(jumped_sorted, tau, side="right")
        n_photon = n - n_before_tau - int(np.count_nonzero(excited))
        lost = n_jumped[post] - n_before_tau
        q_b = (n_photon - lost) / n
        q_a = np.full(q_b.shape, np.count_nonzero(excited) / n)
        est[0, post] = q_a
        est[1, post] = q_b
        est[2, post] = 1.0 - q_a - q_b
        for row, q in ((0, q_a), (1, q_b), (2, est[2, post])):
            se[row, post] = np.sqrt(q * (1.0 - q) / n)
    return est, se


# -- click statistics ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClickHistogram:
    """Jump-time histogram for one channel, normalized as a rate density."""

    channel: JumpChannel
    edges: np.ndarray
    counts: np.ndarray
    n_trajectories: int

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        """counts / (n T): estimates kappa1 |beta(t)|^2 for the extraction channel."""
        return self.counts / (self.n_trajectories * self.bin_width)

    @property
    def stderr(self) -> np.ndarray:
        p = self.counts / self.n_trajectories
        return np.sqrt(p * (1.0 - p) / self.n_trajectories) / self.bin_width

    def integral(self) -> float:
        return float(np.sum(self.counts)) / self.n_trajectories


def click_histogram(ensemble: EnsembleEstimate, channel: JumpChannel, bin_width: float) -> ClickHistogram:
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    n_bins = max(1, math.ceil(ensemble.horizon / bin_width - 1e-9))
    edges = bin_width * np.arange(n_bins + 1)
    times = ensemble.jump_times[ensemble.channels == channel.value]
    counts, _ = np.histogram(times, bins=edges)
    return ClickHistogram(channel, edges, counts, ensemble.n_trajectories)


def ks_survival_distance(ensemble: EnsembleEstimate, params: SystemParams) -> float:
    """Kolmogorov-Smirnov distance between empirical and analytic first-jump CDFs.

    Only meaningful for continuous interaction; both CDFs are compared on
    [0, horizon] where the empirical one is censored.
    """
    n = ensemble.n_trajectories
    times = np.sort(ensemble.jump_times[~np.isnan(ensemble.jump_times)])
    if times.size == 0:
        return float(1.0 - survival(params, ensemble.horizon))
    cdf = 1.0 - survival(params, times)
    i = np.arange(1, times.size + 1)
    d = max(np.max(np.abs(i / n - cdf)), np.max(np.abs((i - 1) / n - cdf)))
    end = abs(times.size / n - (1.0 - survival(params, ensemble.horizon)))
    return float(max(d, end))
