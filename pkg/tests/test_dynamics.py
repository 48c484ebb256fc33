import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesokin.dynamics import (
    CellIndexing, CollisionStats, HardSphereDSMC, NullKernel, Thermalize, collide,
    collide_hard_sphere, collide_thermalize, collision_rule, free_stream, step, stream_to,
    verify_mesoscopic,
)
from mesokin.errors import ConfigError, DomainError, MajorantViolation
from mesokin.phase import Ensemble, GaussianCloud, make_ensemble, moments
from mesokin.rng import RNGStream


def one_cell(N, seed, h=1.0, n=2, speed=1.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, h, (N, n))
    xi = speed * rng.standard_normal((N, n))
    return Ensemble.from_arrays(x, xi, np.full(N, 1.0 / N))


# --- streaming ------------------------------------------------------------------

def test_free_stream_example():
    ens = free_stream(Ensemble.from_arrays([[1.0, 0.0]], [[2.0, 0.0]], [1.0]), 0.5)
    assert ens.x.tolist() == [[2.0, 0.0]] and ens.t == 0.5


def test_free_stream_zero_and_negative():
    ens = one_cell(5, 0)
    assert np.array_equal(free_stream(ens, 0.0).x, ens.x)
    with pytest.raises(DomainError):
        free_stream(ens, -0.1)
    with pytest.raises(DomainError):
        stream_to(ens.at_time(1.0), 0.5)


def test_streaming_composes_bit_exactly():
    ens = make_ensemble(GaussianCloud(N=200), 1)
    a = free_stream(free_stream(ens, 0.25), 0.5)
    b = free_stream(ens, 0.75)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.xi, ens.xi)


def test_null_step_is_free_stream():
    ens = make_ensemble(GaussianCloud(N=100), 2)
    stream = RNGStream(0, "c")
    stepped, stats = step(ens, NullKernel(), 0.1, stream)
    assert np.array_equal(stepped.x, free_stream(ens, 0.1).x)
    assert stats == CollisionStats()
    h1, _ = step(ens, NullKernel(), 0.05, stream, 0, t_new=0.05)
    h2, _ = step(h1, NullKernel(), 0.05, stream, 1, t_new=0.1)
    assert np.array_equal(h2.x, stepped.x)


# --- cell indexing --------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.sampled_from([2, 3]), st.floats(0.05, 2.0), st.integers(0, 10**6))
def test_cell_indexing_matches_dictionary(N, n, h, seed):
    x = np.random.default_rng(seed).normal(scale=3.0, size=(N, n))
    cells = CellIndexing.build(x, h)
    expected = {}
    for i, c in enumerate(map(tuple, np.floor(x / h).astype(np.int64))):
        expected.setdefault(c, []).append(i)
    assert cells.as_dict() == expected
    assert sorted(np.concatenate([cells.cell_members(c) for c in range(cells.n_cells)])) == list(range(N))


def test_cell_indexing_rejects_overflow():
    with pytest.raises(DomainError):
        CellIndexing.build(np.array([[1e300, 0.0]]), 0.1)


# --- hard-sphere rule -----------------------------------------------------------

def test_head_on_collision_swaps():
    a, b = collision_rule([1.0, 0.0], [-1.0, 0.0], [1.0, 0.0])
    assert a.tolist() == [-1.0, 0.0] and b.tolist() == [1.0, 0.0]


def test_grazing_collision_is_identity():
    a, b = collision_rule([1.0, 0.0], [-1.0, 0.0], [0.0, 1.0])
    assert a.tolist() == [1.0, 0.0] and b.tolist() == [-1.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6), st.floats(0, 2 * math.pi),
       st.floats(0.5, 2.0))
def test_rule_conserves_momentum_and_energy(v, phi, ratio):
    xi, xs = np.array(v[:2]), np.array(v[2:4])
    n = np.array([math.cos(phi), math.sin(phi)])
    for w, ws in ((1.0, 1.0), (1.0, ratio)):
        a, b = collision_rule(xi, xs, n, w, ws)
        scale = w * xi @ xi + ws * xs @ xs + 1e-300
        assert np.all(np.abs(w * a + ws * b - w * xi - ws * xs) <= 1e-12 * math.sqrt(scale) + 1e-300)
        assert abs(w * a @ a + ws * b @ b - scale) <= 1e-12 * scale + 1e-290


# --- DSMC kernel ----------------------------------------------------------------

def test_dsmc_conserves_per_cell():
    ens = one_cell(50, 3)
    cfg = HardSphereDSMC(cell_size=1.0, rate_scale=50.0, majorant_rel_speed=20.0)
    after, stats = collide_hard_sphere(ens, cfg, 0.01, RNGStream(1, "c"))
    assert stats.accepted > 0 and stats.accepted <= stats.candidates
    assert stats.drift_V <= 1e-12 and stats.drift_E <= 1e-12
    before, now = moments(ens), moments(after)
    assert abs(now.E - before.E) <= 1e-12 * before.E
    assert np.all(np.abs(now.V - before.V) <= 1e-12 * math.sqrt(before.M * before.E))
    assert np.array_equal(after.x, ens.x) and np.array_equal(after.w, ens.w)


def test_dsmc_collision_rate_matches_expectation():
    # expected acceptances per substep: (w s0 dt / h^2) sum_{i<j} E_n |n.g|, E_n|n.g| = 2|g|/pi
    N, h, s0, g_max, dt = 12, 1.0, 4.0, 20.0, 0.05
    ens = one_cell(N, 8, h)
    xi = ens.xi
    pair = sum(2.0 / math.pi * np.linalg.norm(xi[i] - xi[j])
               for i in range(N) for j in range(i + 1, N))
    expected = ens.w[0] * s0 * dt / h**2 * pair
    cfg = HardSphereDSMC(cell_size=h, rate_scale=s0, majorant_rel_speed=g_max)
    stream = RNGStream(3, "rate")
    trials = 3000
    acc = [collide_hard_sphere(ens, cfg, dt, stream, k)[1].accepted for k in range(trials)]
    mean, se = np.mean(acc), np.std(acc) / math.sqrt(trials)
    assert abs(mean - expected) <= 4 * se, (mean, expected, se)


def test_dsmc_candidate_count_is_unbiased_fraction():
    # 0.5 N (N-1) w s0 g_max dt / vol = 0.3 candidates: stochastic rounding, not ceil
    ens = one_cell(4, 1)
    w = ens.w[0]
    s0 = 0.3 / (0.5 * 4 * 3 * w * 1000.0 * 0.1)
    cfg = HardSphereDSMC(cell_size=1.0, rate_scale=s0, majorant_rel_speed=1000.0)
    stream = RNGStream(9, "ntc")
    cand = [collide_hard_sphere(ens, cfg, 0.1, stream, k)[1].candidates for k in range(4000)]
    assert set(cand) <= {0, 1}
    assert abs(np.mean(cand) - 0.3) < 0.03


def test_majorant_violation_aborts_or_clamps():
    ens = one_cell(30, 4, speed=5.0)
    strict = HardSphereDSMC(cell_size=1.0, rate_scale=1e5, majorant_rel_speed=0.01)
    with pytest.raises(MajorantViolation) as err:
        collide_hard_sphere(ens, strict, 0.01, RNGStream(0, "m"))
    assert err.value.count > 0 and err.value.max_seen > 0.01
    clamp = HardSphereDSMC(cell_size=1.0, rate_scale=1e5, majorant_rel_speed=0.01,
                           on_majorant_violation="clamp")
    after, stats = collide_hard_sphere(ens, clamp, 0.01, RNGStream(0, "m"))
    assert stats.majorant_violations > 0
    assert abs(moments(after).E - moments(ens).E) <= 1e-12 * moments(ens).E


def test_unequal_weights_never_collide():
    ens = one_cell(20, 5)
    ens = Ensemble.from_arrays(ens.x, ens.xi, np.linspace(0.01, 0.02, 20))
    cfg = HardSphereDSMC(cell_size=1.0, rate_scale=500.0, majorant_rel_speed=30.0)
    after, stats = collide_hard_sphere(ens, cfg, 0.01, RNGStream(0, "u"))
    assert stats.accepted == 0 and stats.unequal_skipped > 0
    assert np.array_equal(after.xi, ens.xi)


def test_dsmc_three_dimensions():
    ens = one_cell(40, 6, n=3)
    cfg = HardSphereDSMC(cell_size=1.0, rate_scale=50.0, majorant_rel_speed=20.0)
    after, stats = collide_hard_sphere(ens, cfg, 0.01, RNGStream(2, "c3"))
    assert stats.accepted > 0 and stats.drift_E <= 1e-12 and stats.drift_V <= 1e-12


def test_dsmc_is_deterministic():
    ens = make_ensemble(GaussianCloud(N=3000), 4)
    cfg = HardSphereDSMC(cell_size=0.2, rate_scale=20.0, majorant_rel_speed=12.0)
    a, _ = collide_hard_sphere(ens, cfg, 0.01, RNGStream(5, "d"), 7)
    b, _ = collide_hard_sphere(ens, cfg, 0.01, RNGStream(5, "d"), 7)
    c, _ = collide_hard_sphere(ens, cfg, 0.01, RNGStream(5, "d"), 8)
    assert np.array_equal(a.xi, b.xi) and not np.array_equal(a.xi, c.xi)


@pytest.mark.parametrize("bad, key", [
    (dict(cell_size=0.0, rate_scale=1.0, majorant_rel_speed=1.0), "cell_size"),
    (dict(cell_size=1.0, rate_scale=-1.0, majorant_rel_speed=1.0), "rate_scale"),
    (dict(cell_size=1.0, rate_scale=1.0, majorant_rel_speed=0.0), "majorant_rel_speed"),
    (dict(cell_size=1.0, rate_scale=1.0, majorant_rel_speed=1.0, on_majorant_violation="x"),
     "on_majorant_violation"),
])
def test_dsmc_config_validation(bad, key):
    with pytest.raises(ConfigError) as err:
        HardSphereDSMC(**bad).validate()
    assert err.value.key == key


# --- thermalize kernel ----------------------------------------------------------

def test_thermalize_preserves_three_particle_cell():
    ens = Ensemble.from_arrays([[0.1, 0.1], [0.2, 0.5], [0.7, 0.3]],
                               [[1.0, 1.0], [-2.0, 0.0], [1.0, -1.0]], [1.0, 1.0, 1.0])
    before = moments(ens)
    assert list(before.V) == [0.0, 0.0] and before.E == 8.0
    after, stats = collide_thermalize(ens, Thermalize(cell_size=1.0, rate=100.0), 0.01,
                                      RNGStream(0, "t"))
    assert stats.accepted == 1
    now = moments(after)
    assert np.all(np.abs(now.V) <= 1e-12 * math.sqrt(before.M * before.E))
    assert abs(now.E - 8.0) <= 1e-12 * 8.0
    assert not np.array_equal(after.xi, ens.xi)


def test_thermalize_identity_cases():
    ens = one_cell(10, 1)
    same, stats = collide_thermalize(ens, Thermalize(cell_size=1.0, rate=0.0), 0.1, RNGStream(0, "t"))
    assert np.array_equal(same.xi, ens.xi) and stats.accepted == 0
    pair = one_cell(2, 1)
    same, _ = collide_thermalize(pair, Thermalize(cell_size=1.0, rate=10.0), 0.1, RNGStream(0, "t"))
    assert np.array_equal(same.xi, pair.xi)
    with pytest.raises(DomainError):
        collide_thermalize(ens, Thermalize(cell_size=1.0, rate=20.0), 0.1, RNGStream(0, "t"))


def test_thermalize_degenerate_cell_keeps_zero_spread():
    # identical velocities: zero thermal energy survives the affine correction
    ens = Ensemble.from_arrays(np.full((5, 2), 0.5), np.tile([1.0, 2.0], (5, 1)), np.full(5, 0.2))
    after, _ = collide_thermalize(ens, Thermalize(cell_size=1.0, rate=100.0), 0.01, RNGStream(0, "t"))
    np.testing.assert_allclose(after.xi, ens.xi, rtol=0, atol=1e-15)


def test_collide_rejects_unknown_kernel():
    with pytest.raises(ConfigError):
        collide(one_cell(3, 0), object(), 0.1, RNGStream(0, "x"))
    with pytest.raises(ConfigError):
        collide_hard_sphere(one_cell(3, 0), Thermalize(1.0, 1.0), 0.1, RNGStream(0, "x"))


# --- mesoscopic verifier --------------------------------------------------------

def test_verifier_null_kernel_exact():
    rep = verify_mesoscopic(make_ensemble(GaussianCloud(N=200), 0), NullKernel(), 0.01, 3, 0)
    assert rep.max_drift == 0.0 and rep.ok


@pytest.mark.parametrize("kernel", [
    HardSphereDSMC(cell_size=0.2, rate_scale=50.0, majorant_rel_speed=12.0),
    Thermalize(cell_size=0.3, rate=50.0),
])
def test_verifier_collisional_kernels(kernel):
    ens = make_ensemble(GaussianCloud(N=1000), 1)
    rep = verify_mesoscopic(ens, kernel, 0.01, 10, 2)
    assert rep.total_accepted > 0
    assert rep.ok, rep
