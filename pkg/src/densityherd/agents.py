"""Agent-based counterpart of the density controller on the circle.

Leaders follow ``dx = u(x) dt`` where ``u`` is the macroscopic control
sampled at their positions; followers are repelled by every leader and
diffuse (Euler-Maruyama).  The controller only sees kernel density
estimates of both populations.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import default_floor, flux_rhs_array
from .errors import MassMismatch, TooFewAgents
from .feasibility import reference_leader_density_1d
from .governor import Governor
from .grid import TWO_PI, PeriodicField, PeriodicGrid, cumulative_midpoint
from .kernel import KernelSpec, kernel_eval_1d
from .metrics import kl_array, percentage_error
from .pde import SimConfig

IMAGE_TOL = 1e-12
MAX_EXP_ARG = 600.0


def wrap(x):
    """Positions wrapped into ``[-pi, pi)``."""
    return np.mod(x + np.pi, TWO_PI) - np.pi


@dataclass(eq=False)
class AgentState:
    leaders: np.ndarray
    followers: np.ndarray
    rng_seed: int | None = None

    def __post_init__(self):
        self.leaders = wrap(np.asarray(self.leaders, dtype=float))
        self.followers = wrap(np.asarray(self.followers, dtype=float))

    @property
    def n_total(self) -> int:
        return self.leaders.size + self.followers.size

    @classmethod
    def uniform(cls, N_L, N_F, rng):
        return cls(rng.uniform(-np.pi, np.pi, N_L), rng.uniform(-np.pi, np.pi, N_F))


@dataclass(frozen=True)
class KdeConfig:
    """Wrapped-Gaussian kernel density estimate.

    With ``bandwidth=None`` the bandwidth is ``1.06 sigma N^(-1/5)`` using the
    circular standard deviation ``sqrt(-2 log R)``, clamped to
    ``[2 dx, pi/4]``.
    """

    bandwidth: float | None = None
    image_tol: float = IMAGE_TOL

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def select(self, positions: np.ndarray, dx: float, resultant: float | None = None) -> float:
        if self.bandwidth is not None:
            return self.bandwidth
        if resultant is None:
            resultant = abs(np.exp(1j * positions).mean())
        sigma = math.sqrt(-2.0 * math.log(max(resultant, 1e-300)))
        h = 1.06 * sigma * positions.size ** -0.2
        return min(max(h, 2 * dx), np.pi / 4)


def _kde_values(positions, mass, h, grid, tol, z=None):
    """Density estimate on the grid; ``z`` may carry precomputed ``exp(-1j * positions)``."""
    n, N = grid.n, positions.size
    spread = math.sqrt(-2.0 * math.log(tol))
    M = math.ceil(spread / h)
    if M < n // 2:
        # Fourier series of the wrapped Gaussian: exact up to the tol-sized tail
        if z is None:
            z = np.exp(-1j * positions)
        powers = np.empty((M, N), complex)
        powers[0] = z
        for k in range(1, M):
            np.multiply(powers[k - 1], z, out=powers[k])
        m = np.arange(M + 1)
        coef = np.zeros(n // 2 + 1, complex)
        coef[0] = N
        coef[1:M + 1] = powers.sum(axis=1)
        coef[: M + 1] *= np.exp(-0.5 * (m * h) ** 2 + 1j * m * grid.nodes[0])
        vals = np.fft.irfft(coef, n) * (n / TWO_PI)
    else:
        images = math.ceil(spread * h / TWO_PI) + 1
        d = wrap(grid.nodes[:, None] - positions[None, :])
        shifts = TWO_PI * np.arange(-images, images + 1)
        vals = sum(np.exp(-0.5 * ((d + s) / h) ** 2) for s in shifts).sum(axis=1)
        # sampled bumps narrower than a few cells lose mass under the
        # midpoint rule; restore it
        vals *= N / (vals.sum() * grid.dx)
    np.maximum(vals, 0.0, out=vals)
    return vals * (mass / N)


def _estimate(positions, mass, kde, grid):
    z = np.exp(-1j * positions)
    h = kde.select(positions, grid.dx, abs(z.mean()))
    return _kde_values(positions, mass, h, grid, kde.image_tol, z)


def estimate_density(positions, mass: float, kde: KdeConfig, grid: PeriodicGrid) -> PeriodicField:
    """Wrapped-Gaussian density estimate of total ``mass`` on ``grid``."""
    positions = wrap(np.asarray(positions, dtype=float))
    if positions.size < 2:
        raise TooFewAgents(f"need at least 2 agents for a density estimate, got {positions.size}")
    return PeriodicField(grid, _estimate(positions, mass, kde, grid), "density")


# ---------------------------------------------------------------------------
# interactions


def _pairwise_drift(followers, leaders, kernel):
    return kernel_eval_1d(kernel, followers[:, None] - leaders[None, :]).sum(axis=1)


def leader_drift(followers, leaders, kernel: KernelSpec) -> np.ndarray:
    """``sum_j f(x_k - y_j)`` for every follower ``x_k``.

    For displacements ``d`` in ``(0, 2 pi)`` each component is
    ``a e^{-d/L} + b e^{d/L}``, so sorting the leaders and keeping prefix sums
    of ``e^{+-y/L}`` gives all follower sums in O((N_L + N_F) log N_L).
    """
    if leaders.size == 0:
        return np.zeros_like(followers)
    if any(3 * np.pi / c.L > MAX_EXP_ARG for c in kernel.components):
        return _pairwise_drift(followers, leaders, kernel)
    ys = np.sort(leaders)
    idx = np.searchsorted(ys, followers)
    total = np.zeros_like(followers)
    for c in kernel.components:
        q = math.expm1(TWO_PI / c.L)
        a, b = (q + 1) / q, -1.0 / q
        ep, em = np.exp(ys / c.L), np.exp(-ys / c.L)
        cp = np.concatenate(([0.0], np.cumsum(ep)))
        cm = np.concatenate(([0.0], np.cumsum(em)))
        xp, xm = np.exp(followers / c.L), np.exp(-followers / c.L)
        below_p, below_m = cp[idx], cm[idx]
        above_p, above_m = cp[-1] - below_p, cm[-1] - below_m
        # leaders below x: d = x - y; above: d = x - y + 2 pi
        s = a * xm * below_p + b * xp * below_m
        s += a * xm * math.exp(-TWO_PI / c.L) * above_p + b * xp * math.exp(TWO_PI / c.L) * above_m
        total += c.weight * s
    # a coincident leader was counted at displacement 2 pi (value -weight);
    # the kernel is zero there
    ties = np.searchsorted(ys, followers, side="right") - idx
    if ties.any():
        total += ties * sum(c.weight for c in kernel.components)
    return total


def sample_periodic(values: np.ndarray, positions: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Linear interpolation of grid values at arbitrary positions on the circle."""
    s = (positions - grid.nodes[0]) / grid.dx
    i = np.floor(s)
    frac = s - i
    i = i.astype(np.intp) % grid.n
    j = i + 1
    j[j == grid.n] = 0
    return values[i] * (1.0 - frac) + values[j] * frac


def step_agents(state: AgentState, u_field, kernel: KernelSpec, D: float, dt: float, rng,
                grid: PeriodicGrid | None = None) -> AgentState:
    """Advance leaders along ``u`` and followers by one Euler-Maruyama step.

    ``u_field`` is a PeriodicField (or array on ``grid``); follower drift is
    normalised by the total number of agents.
    """
    if isinstance(u_field, PeriodicField):
        grid, u = u_field.grid, u_field.values
    else:
        u = np.asarray(u_field, dtype=float)
    N = state.n_total
    leaders = state.leaders
    if leaders.size:
        leaders = wrap(leaders + dt * sample_periodic(u, leaders, grid))
    f = state.followers
    drift = leader_drift(f, state.leaders, kernel) / N
    noise = rng.standard_normal(f.size) * math.sqrt(2.0 * D * dt)
    return AgentState(leaders, f + dt * drift + noise, state.rng_seed)


def brownian_displacements(n_agents: int, n_steps: int, D: float, dt: float, rng, dim: int = 1) -> np.ndarray:
    """Unwrapped Euler-Maruyama displacements of free diffusers on the torus.

    Returns shape ``(n_steps + 1, n_agents, dim)`` starting at zero; the
    positions themselves are ``wrap(x0 + displacement)``.  Per axis the
    variance grows like ``2 D t``.
    """
    steps = rng.standard_normal((n_steps, n_agents, dim)) * math.sqrt(2.0 * D * dt)
    out = np.zeros((n_steps + 1, n_agents, dim))
    np.cumsum(steps, axis=0, out=out[1:])
    return out


# ---------------------------------------------------------------------------
# closed loop


@dataclass(eq=False)
class AgentTrialRecord:
    trial: int
    seed: int
    N_L: int
    N_F: int
    times: np.ndarray
    sq_err_F: np.ndarray
    KL_F: np.ndarray
    alpha: np.ndarray
    mass_L: np.ndarray
    mass_F: np.ndarray
    final_state: AgentState
    steady_fraction: float = 0.1

    @property
    def E_F(self) -> np.ndarray:
        return percentage_error(self.sq_err_F)

    def _tail(self, s):
        k = max(1, int(round(len(s) * self.steady_fraction)))
        return float(np.mean(s[-k:]))

    @property
    def steady_E_F(self) -> float:
        return self._tail(self.E_F)

    @property
    def steady_KL_F(self) -> float:
        return self._tail(self.KL_F)


@dataclass(eq=False)
class EnsembleRecord:
    trials: list = field(default_factory=list)

    @property
    def steady_E_F(self) -> np.ndarray:
        return np.array([t.steady_E_F for t in self.trials])

    @property
    def steady_KL_F(self) -> np.ndarray:
        return np.array([t.steady_KL_F for t in self.trials])

    def summary(self) -> dict:
        e, k = self.steady_E_F, self.steady_KL_F
        return dict(
            N_L=self.trials[0].N_L, n_trials=len(self.trials),
            mean_E_F=float(e.mean()), std_E_F=float(e.std()),
            mean_KL_F=float(k.mean()), std_KL_F=float(k.std()),
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "seed", "N_L", "steady_E_F", "steady_KL_F"])
            for t in self.trials:
                w.writerow([t.trial, t.seed, t.N_L, repr(t.steady_E_F), repr(t.steady_KL_F)])


def write_aggregate_csv(ensembles, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N_L", "n_trials", "mean_E_F", "std_E_F", "mean_KL_F", "std_KL_F"])
        for ens in ensembles:
            s = ens.summary()
            w.writerow([s["N_L"], s["n_trials"]] + [repr(s[k]) for k in
                       ("mean_E_F", "std_E_F", "mean_KL_F", "std_KL_F")])


def trial_seeds(master_seed: int, n_trials: int) -> list:
    """Independent per-trial seeds derived from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    return [int(s) for s in ss.generate_state(n_trials, dtype=np.uint32)]


def run_trial(config: SimConfig, N_L: int, N_F: int, seed: int, kde: KdeConfig = KdeConfig(),
              update_every: int = 1, trial: int = 0) -> AgentTrialRecord:
    """One closed-loop agent run driven by density estimates.

    The controller (feed-forward or governor, as in ``config``) is updated
    every ``update_every`` steps from the current estimates; in between the
    last control field is held.
    """
    cfg = config
    g = cfg.grid
    if g.dim != 1:
        raise ValueError("agent simulation is one-dimensional")
    N = N_L + N_F
    if N_L < 2 or N_F < 2:
        raise TooFewAgents("need at least 2 leaders and 2 followers")
    target = cfg.target
    M_L, M_F = N_L / N, N_F / N
    if abs(target.M_F - M_F) > 1e-8:
        raise MassMismatch(f"target follower mass {target.M_F} differs from N_F/N = {M_F}")
    rho_L_bar = reference_leader_density_1d(target).values
    bar_F = target.rho_F_target.values
    rule = cfg.alpha_rule if cfg.scheme == "reference_governor" else "off"
    gov = Governor(target, rho_L_bar, rule, cfg.dt * update_every, cfg.epsilon)
    floor = cfg.floor if cfg.floor is not None else default_floor(M_L, g)
    plant = cfg.plant_kernel
    dist_v = cfg.disturbance.vector(1) if cfg.disturbance is not None else 0.0
    onset = cfg.disturbance.onset_time if cfg.disturbance is not None else math.inf
    dx, dt, cv = g.dx, cfg.dt, g.cell_volume
    noise_scale = math.sqrt(2.0 * cfg.D * dt)

    rng = np.random.default_rng(seed)
    xl = rng.uniform(-np.pi, np.pi, N_L)
    xf = rng.uniform(-np.pi, np.pi, N_F)
    rec = {k: [] for k in ("t", "eF", "klF", "alpha", "mL", "mF")}
    u = np.zeros(g.n)
    alpha = 0.0
    for step in range(cfg.n_steps + 1):
        control_step = step % update_every == 0
        record_step = step % cfg.record_every == 0 or step == cfg.n_steps
        if control_step or record_step:
            rL = _estimate(xl, M_L, kde, g)
            rF = _estimate(xf, M_F, kde, g)
        if record_step:
            eF = bar_F - rF
            rec["t"].append(step * dt)
            rec["eF"].append(float(eF @ eF * cv))
            rec["klF"].append(kl_array(bar_F, rF, cv, warn=False))
            rec["alpha"].append(alpha)
            rec["mL"].append(float(rL.sum() * cv))
            rec["mF"].append(float(rF.sum() * cv))
        if step == cfg.n_steps:
            break
        if control_step:
            _, _, alpha, _, ref, ref_dt = gov.step_arrays(rF)
            rhs = flux_rhs_array(rL.copy(), ref, ref_dt, cfg.K_L)
            u = cumulative_midpoint(rhs, dx) / np.maximum(rL, floor)
        drift = leader_drift(xf, xl, plant) / N
        if step * dt >= onset:
            drift = drift + dist_v
        xl = wrap(xl + dt * sample_periodic(u, xl, g))
        xf = wrap(xf + dt * drift + noise_scale * rng.standard_normal(N_F))
    return AgentTrialRecord(
        trial=trial, seed=seed, N_L=N_L, N_F=N_F, times=np.array(rec["t"]), sq_err_F=np.array(rec["eF"]),
        KL_F=np.array(rec["klF"]), alpha=np.array(rec["alpha"]), mass_L=np.array(rec["mL"]),
        mass_F=np.array(rec["mF"]), final_state=AgentState(xl, xf, seed),
    )


def _run_trial_args(args):
    return run_trial(*args)


def run_discrete(config: SimConfig, N_L: int, N_F: int, kde: KdeConfig = KdeConfig(), n_trials: int = 1,
                 seed: int = 0, seeds=None, update_every: int = 1, workers: int = 1) -> EnsembleRecord:
    """Ensemble of independent agent trials.

    Per-trial seeds come from ``seeds`` if given, otherwise from
    :func:`trial_seeds`.  Results do not depend on ``workers``.
    """
    seeds = list(seeds) if seeds is not None else trial_seeds(seed, n_trials)
    jobs = [(config, N_L, N_F, s, kde, update_every, i) for i, s in enumerate(seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_trial_args, jobs))
    else:
        trials = [run_trial(*j) for j in jobs]
    return EnsembleRecord(trials)
