import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densityherd.agents import (AgentState, KdeConfig, brownian_displacements, estimate_density, leader_drift,
                                run_discrete, run_trial, sample_periodic, step_agents, trial_seeds, wrap)
from densityherd.errors import MassMismatch, TooFewAgents
from densityherd.feasibility import von_mises_target
from densityherd.grid import PeriodicField, PeriodicGrid, integrate
from densityherd.kernel import KernelSpec
from densityherd.pde import SimConfig

G = PeriodicGrid(500)
K_PI = KernelSpec.repulsive(np.pi)


def agent_config(N_L, N, n_steps, scheme="reference_governor", n=200):
    target = von_mises_target(PeriodicGrid(n), 1.8, M_F=(N - N_L) / N)
    return SimConfig(target, n_steps=n_steps, record_every=100, scheme=scheme)


# -- positions --------------------------------------------------------------------

@given(st.floats(-1e3, 1e3))
def test_wrap_range(x):
    w = wrap(np.array([x]))[0]
    assert -np.pi <= w < np.pi
    assert np.isclose(np.cos(w), np.cos(x), atol=1e-9)


def test_state_wraps_positions():
    s = AgentState([4.0, -4.0], [10.0])
    assert np.all((s.leaders >= -np.pi) & (s.leaders < np.pi))
    assert s.n_total == 3


# -- density estimation -------------------------------------------------------------

def test_single_point_bump():
    h = 0.3
    rho = estimate_density(np.full(10, 0.5), 0.6, KdeConfig(bandwidth=h), G).values
    d = wrap(G.nodes - 0.5)
    expect = 0.6 * sum(np.exp(-0.5 * ((d + 2 * np.pi * m) / h) ** 2) for m in (-1, 0, 1)) / (h * np.sqrt(2 * np.pi))
    np.testing.assert_allclose(rho, expect, atol=1e-12)
    assert G.nodes[np.argmax(rho)] == pytest.approx(0.5, abs=G.dx)


def test_narrow_bandwidth_keeps_mass():
    # bandwidths so narrow that the Fourier route would need more than n/2 modes
    pos = np.array([0.1, 0.2, -2.0])
    g = PeriodicGrid(32)
    rho = estimate_density(pos, 1.0, KdeConfig(bandwidth=0.05), g)
    assert integrate(rho) == pytest.approx(1.0, abs=1e-12)
    assert rho.values.min() >= 0


def test_uniform_agents_give_flat_estimate():
    rng = np.random.default_rng(12)
    pos = rng.uniform(-np.pi, np.pi, 600)
    rho = estimate_density(pos, 0.6, KdeConfig(), G).values
    flat = 0.6 / (2 * np.pi)
    assert np.linalg.norm(rho - flat) / np.linalg.norm(np.full(500, flat)) < 0.1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 400), st.floats(0.01, 5.0))
def test_estimate_mass_and_linearity(seed, N, mass):
    pos = np.random.default_rng(seed).vonmises(0.3, 1.5, N)
    a = estimate_density(pos, mass, KdeConfig(), G)
    b = estimate_density(pos, 2 * mass, KdeConfig(), G)
    assert integrate(a) == pytest.approx(mass, rel=1e-6)
    assert a.values.min() >= 0
    np.testing.assert_allclose(b.values, 2 * a.values, rtol=1e-12, atol=1e-300)


def test_too_few_agents():
    with pytest.raises(TooFewAgents):
        estimate_density(np.array([0.0]), 1.0, KdeConfig(), G)
    with pytest.raises(ValueError):
        KdeConfig(bandwidth=0.0)


def test_bandwidth_rule_is_clamped():
    kde = KdeConfig()
    assert kde.select(np.zeros(10), G.dx) == pytest.approx(2 * G.dx)
    rng = np.random.default_rng(0)
    assert kde.select(rng.uniform(-np.pi, np.pi, 10), G.dx) == pytest.approx(np.pi / 4)


# -- interactions -------------------------------------------------------------------

def test_repulsion_pushes_follower_away():
    s = AgentState(np.array([0.0]), np.array([0.1]))
    rng = np.random.default_rng(0)
    new = step_agents(s, PeriodicField(G, np.zeros(500)), K_PI, 0.0, 0.01, rng)
    assert new.followers[0] > 0.1
    assert new.leaders[0] == 0.0


def test_followers_static_without_leaders_or_noise():
    s = AgentState(np.empty(0), np.linspace(-3, 3, 7))
    new = step_agents(s, PeriodicField(G, np.zeros(500)), K_PI, 0.0, 0.1, np.random.default_rng(0))
    np.testing.assert_array_equal(new.followers, s.followers)


@pytest.mark.parametrize("L", [np.pi / 6, 1.0, np.pi])
def test_fast_drift_matches_pairwise_sum(L):
    rng = np.random.default_rng(1)
    kernel = KernelSpec([(1.0, L), (-0.4, 2.0)])
    f, l = rng.uniform(-np.pi, np.pi, 300), rng.uniform(-np.pi, np.pi, 120)
    l[:3] = f[:3]  # coincident pairs sit on the kernel's zero
    direct = kernel(f[:, None] - l[None, :]).sum(axis=1)
    # prefix sums of exp(+-y/L) span e^(+-2 pi/L): round-off near 1e-10 at L = pi/6
    np.testing.assert_allclose(leader_drift(f, l, kernel), direct, rtol=1e-9, atol=1e-9)


def test_sample_periodic_interpolates_and_wraps():
    g = PeriodicGrid(64)
    vals = np.sin(g.nodes)
    x = np.array([g.nodes[0], g.nodes[5], -np.pi, np.pi - 1e-9, 0.3])
    np.testing.assert_allclose(sample_periodic(vals, x, g), np.sin(x), atol=2 * g.dx**2)


def test_leaders_follow_the_sampled_field():
    s = AgentState(np.array([-1.0, 2.0]), np.array([0.0, 0.5]))
    u = PeriodicField(G, np.full(500, 0.5), "velocity")
    new = step_agents(s, u, K_PI, 0.05, 0.1, np.random.default_rng(0))
    np.testing.assert_allclose(new.leaders, [-0.95, 2.05])


# -- Brownian motion ----------------------------------------------------------------

def test_follower_diffusion_variance():
    D, dt, n_steps = 0.05, 1e-3, 400
    rng = np.random.default_rng(3)
    s = AgentState(np.empty(0), rng.uniform(-np.pi, np.pi, 20000))
    disp = np.zeros(s.followers.size)
    u = PeriodicField(G, np.zeros(500))
    for _ in range(n_steps):
        new = step_agents(s, u, K_PI, D, dt, rng)
        disp += wrap(new.followers - s.followers)
        s = new
    assert disp.var() == pytest.approx(2 * D * n_steps * dt, rel=0.05)


@pytest.mark.parametrize("dim", [1, 2])
def test_brownian_variance_slope(dim):
    D, dt = 0.05, 1e-3
    disp = brownian_displacements(4000, 1000, D, dt, np.random.default_rng(5), dim=dim)
    t = np.arange(1001) * dt
    msd = (disp**2).sum(axis=2).mean(axis=1)
    slope = np.polyfit(t, msd, 1)[0]
    assert slope == pytest.approx(2 * D * dim, rel=0.05)


# -- closed loop --------------------------------------------------------------------

def test_trial_seeds_are_reproducible():
    assert trial_seeds(7, 4) == trial_seeds(7, 4)
    assert len(set(trial_seeds(7, 4))) == 4


def test_equal_seeds_give_identical_trials():
    cfg = agent_config(40, 100, 300)
    ens = run_discrete(cfg, 40, 60, seeds=[11, 11])
    a, b = ens.trials
    np.testing.assert_array_equal(a.sq_err_F, b.sq_err_F)
    np.testing.assert_array_equal(a.final_state.followers, b.final_state.followers)


def test_workers_do_not_change_results():
    cfg = agent_config(40, 100, 200)
    a = run_discrete(cfg, 40, 60, n_trials=2, seed=3)
    b = run_discrete(cfg, 40, 60, n_trials=2, seed=3, workers=2)
    for x, y in zip(a.trials, b.trials):
        np.testing.assert_array_equal(x.sq_err_F, y.sq_err_F)


def test_trial_invariants(tmp_path):
    cfg = agent_config(40, 100, 500)
    rec = run_trial(cfg, 40, 60, seed=2, update_every=2)
    np.testing.assert_allclose(rec.mass_L, 0.4, atol=1e-6)
    np.testing.assert_allclose(rec.mass_F, 0.6, atol=1e-6)
    assert rec.final_state.leaders.size == 40 and rec.final_state.followers.size == 60
    for x in (rec.final_state.leaders, rec.final_state.followers):
        assert np.all((x >= -np.pi) & (x < np.pi))
    assert np.all((rec.alpha >= 0) & (rec.alpha <= 1))
    ens = run_discrete(cfg, 40, 60, n_trials=2, seed=0)
    ens.write_csv(tmp_path / "ensemble.csv")
    header = (tmp_path / "ensemble.csv").read_text().splitlines()[0]
    assert header == "trial,seed,N_L,steady_E_F,steady_KL_F"
    assert set(ens.summary()) >= {"mean_E_F", "std_E_F", "mean_KL_F", "std_KL_F"}


def test_trial_rejects_mismatched_mass():
    with pytest.raises(MassMismatch):
        run_trial(agent_config(40, 100, 10), 50, 50, seed=0)
    with pytest.raises(TooFewAgents):
        run_trial(agent_config(1, 100, 10), 1, 99, seed=0)


@pytest.mark.slow
def test_error_does_not_grow_with_swarm_size():
    # continuum-limit trend at fixed N_L/N = 0.4; ensemble means with a
    # two-standard-error allowance
    means, errs = [], []
    for N in (250, 1000, 4000):
        cfg = agent_config(int(0.4 * N), N, 10_000)
        ens = run_discrete(cfg, int(0.4 * N), N - int(0.4 * N), n_trials=3, seed=N)
        e = ens.steady_E_F
        means.append(e.mean())
        errs.append(e.std(ddof=1) / np.sqrt(e.size))
    for i in range(2):
        assert means[i + 1] <= means[i] + 2 * np.hypot(errs[i], errs[i + 1])
