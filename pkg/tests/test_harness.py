import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import two_particle
from mesokin.dynamics import HardSphereDSMC, NullKernel, Thermalize
from mesokin.errors import ConfigError
from mesokin.functionals import ConeSpec
from mesokin.harness import (
    FAIL, INCONCLUSIVE, PASS, CheckContext, DiagnosticsRecord, ExperimentConfig, check_A_linear,
    check_AL, check_conservation, check_eq16, check_eq17, check_lemma31, check_thm22,
    check_thm35, check_thm43, run_checks, run_experiment,
)
from mesokin.phase import FromFile, GaussianCloud, TwoBeam, save_csv

CONE = ConeSpec(c=0.3, v=0.1, R=1.0)


@pytest.fixture(scope="module")
def pair_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("pair") / "pair.csv"
    save_csv(two_particle(), path)
    return str(path)


@pytest.fixture(scope="module")
def pair_series(pair_file):
    cfg = ExperimentConfig(init=FromFile(pair_file), kernel=NullKernel(), dt=0.01, T_end=100.0,
                           diag_every=10, pair_every=10, cones=(CONE,), interaction_R=2.0)
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def free_series():
    cfg = ExperimentConfig(init=GaussianCloud(N=300), kernel=NullKernel(), dt=0.01, T_end=20.0,
                           diag_every=10, pair_every=100, pair_refine_until=2.0,
                           cones=(ConeSpec(0.3, 0.2, 5.0),))
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def dsmc_run():
    cfg = ExperimentConfig(init=GaussianCloud(N=400),
                           kernel=HardSphereDSMC(cell_size=0.2, rate_scale=20.0,
                                                 majorant_rel_speed=12.0),
                           dt=0.01, T_end=10.0, diag_every=10, pair_every=50,
                           pair_refine_until=1.0, master_seed=3)
    return cfg, run_experiment(cfg)


# --- runner --------------------------------------------------------------------

def test_record_grid_is_exact():
    cfg = ExperimentConfig(init=GaussianCloud(N=10), kernel=NullKernel(), dt=0.1, T_end=1.0)
    s = run_experiment(cfg)
    assert len(s) == 11
    assert [r.t for r in s] == [k * 0.1 for k in range(11)]
    assert all(r.pair_eval for r in s)


def test_pair_fields_null_off_grid(free_series):
    on = [r for r in free_series if r.pair_eval]
    off = [r for r in free_series if not r.pair_eval]
    assert off and all(r.a_l is None and r.u_i is None for r in off)
    assert all(r.t <= 2.0 + 1e-12 or r.step % 100 == 0 for r in on)
    assert free_series[-1].pair_eval


def test_partial_integrals_nondecreasing(free_series):
    for key in ("morawetz_partial", "imorawetz_partial", "al_deriv_partial"):
        vals = [getattr(r, key) for r in free_series]
        assert all(b >= a for a, b in zip(vals, vals[1:])), key


def test_record_dict_roundtrip(free_series):
    r = free_series[5]
    assert DiagnosticsRecord.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        DiagnosticsRecord.from_dict({"t": 0.0})


def test_sink_sees_every_record():
    cfg = ExperimentConfig(init=GaussianCloud(N=10), kernel=NullKernel(), dt=0.1, T_end=0.5)
    seen = []
    s = run_experiment(cfg, sink=seen.append)
    assert seen == s


def test_run_is_deterministic(dsmc_run):
    cfg, s = dsmc_run
    again = run_experiment(cfg)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in s]


@pytest.mark.parametrize("kw, key", [
    (dict(dt=0.0), "dt"), (dict(T_end=0.001), "T_end"), (dict(T_end=1.005), "T_end"),
    (dict(diag_every=0), "diag_every"), (dict(diag_every=2, pair_every=3), "pair_every"),
    (dict(D_radius=-1.0), "D_radius"), (dict(master_seed=-1), "master_seed"),
    (dict(pair_refine_until=-1.0), "pair_refine_until"),
])
def test_config_validation(kw, key):
    base = dict(init=GaussianCloud(N=10), kernel=NullKernel(), dt=0.01, T_end=1.0)
    base.update(kw)
    with pytest.raises(ConfigError) as err:
        ExperimentConfig(**base)
    assert err.value.key == key


# --- two-particle closed forms -------------------------------------------------

def test_two_particle_series_matches_closed_forms(pair_series):
    for r in pair_series[::50]:
        s = math.sqrt(1 + r.t ** 2)
        assert r.a_l == pytest.approx(2 * r.t / s, rel=1e-13, abs=1e-300)
        assert r.d_pair == pytest.approx(2 * r.t, rel=1e-13, abs=1e-300)
        assert r.ig_gap == pytest.approx(2 * (s - r.t), rel=1e-10)
    assert pair_series[-1].ig_sup == 2.0


def test_two_particle_thm35(pair_series):
    rep = check_thm35(pair_series)
    assert rep.measured["sup_ig"] == 2.0 and rep.bound["sup_ig"] == 4.0
    assert rep.measured["margin"] == 2.0


def test_two_particle_cone_average_tends_to_one(pair_series):
    r0, last = pair_series[0], pair_series[-1]
    assert r0.gamma_time_avg == [0.5]
    # fraction is 1/2 until the angle drops below c at t = cot(c), then 1
    t_star = 1 / math.tan(0.3)
    expected = 1 - 0.5 * t_star / last.t
    assert last.gamma_time_avg[0] == pytest.approx(expected, abs=0.02)
    rep = check_thm43(pair_series, CONE)
    assert rep.status == PASS
    assert any("vacuous" in n for n in rep.notes)


def test_two_particle_all_checks_pass(pair_series):
    for rep in run_checks(pair_series, CheckContext(), cones=(CONE,), R=2.0):
        assert rep.status in (PASS, INCONCLUSIVE), rep


# --- free transport ------------------------------------------------------------

def test_free_transport_checks(free_series):
    reports = run_checks(free_series, CheckContext(), cones=(ConeSpec(0.3, 0.2, 5.0),))
    by = {r.claim: r for r in reports}
    for claim in ("conservation", "A-linear", "eq1.6", "AL-monotone", "lemma3.1"):
        assert by[claim].status == PASS, by[claim]
    assert by["conservation"].measured["max_drift"] == 0.0
    assert by["thm2.2"].measured["telescoping_error"] <= 0.01 * abs(by["thm2.2"].measured["delta_al"])


def test_thm35_short_run_is_inconclusive(free_series):
    short = [r for r in free_series if r.t <= 5.0]
    rep = check_thm35(short)
    assert rep.status == INCONCLUSIVE and rep.passed is None
    assert rep.to_dict()["pass"] is None


def test_identical_velocities_cone_trivial():
    cfg = ExperimentConfig(init=GaussianCloud(N=50, sigma_xi=1e-300), kernel=NullKernel(), dt=0.1,
                           T_end=1.0, cones=(CONE,))
    s = run_experiment(cfg)
    assert all(g == pytest.approx(1.0, rel=1e-12) for r in s for g in r.gamma_time_avg)
    assert check_thm43(s, CONE).status == PASS


# --- collisional runs -----------------------------------------------------------

def test_dsmc_checks_pass(dsmc_run):
    cfg, s = dsmc_run
    ctx = CheckContext.from_config(cfg)
    assert ctx.collisional and ctx.h == 0.2
    assert s[-1].collision_stats["accepted"] > 0
    for rep in (check_conservation(s, ctx=ctx), check_A_linear(s, ctx=ctx),
                check_eq16(s, ctx=ctx), check_AL(s, ctx=ctx), check_lemma31(s, ctx=ctx)):
        assert rep.status == PASS, rep
        assert rep.provenance["h"] == 0.2 and rep.provenance["N"] == 400


def test_thermalize_run_conserves():
    cfg = ExperimentConfig(init=TwoBeam(N=200), kernel=Thermalize(cell_size=0.3, rate=5.0),
                           dt=0.01, T_end=2.0, diag_every=10, pair_every=50)
    s = run_experiment(cfg)
    assert check_conservation(s, ctx=CheckContext.from_config(cfg)).status == PASS


# --- negative controls ----------------------------------------------------------

def _bump(series, k, **changes):
    out = list(series)
    out[k] = replace(out[k], **changes)
    return out


def test_perturbed_energy_fails_conservation(free_series):
    bad = _bump(free_series, 7, e=free_series[7].e * (1 + 1e-8))
    assert check_conservation(bad).status == FAIL


def test_perturbed_angular_momentum_fails(free_series):
    bad = _bump(free_series, 9, a=free_series[9].a + 1e-6)
    assert check_A_linear(bad).status == FAIL


def test_perturbed_pair_dot_fails(free_series):
    k = next(i for i, r in enumerate(free_series) if r.pair_eval and i > 0)
    bad = _bump(free_series, k, d_pair=free_series[k].d_pair + 1e-6)
    assert check_lemma31(bad).status == FAIL


def test_time_reversed_al_fails(free_series):
    pr = [i for i, r in enumerate(free_series) if r.pair_eval]
    vals = [free_series[i].a_l for i in pr][::-1]
    bad = list(free_series)
    for i, v in zip(pr, vals):
        bad[i] = replace(bad[i], a_l=v)
    rep = check_AL(bad)
    assert rep.status == FAIL and not rep.measured["monotone"]


def test_unbounded_gap_fails_eq16(free_series):
    bad = _bump(free_series, 4, u=free_series[4].u + 100.0)
    assert check_eq16(bad).status == FAIL


def test_ig_above_bound_fails_thm35(free_series):
    k = next(i for i, r in enumerate(free_series) if r.pair_eval and i > 0)
    bad = _bump(free_series, k, ig_gap=1e6)
    assert check_thm35(bad).status == FAIL


def test_growing_accumulator_fails_saturation(free_series):
    bad = list(free_series)
    for i, r in enumerate(bad):
        bad[i] = replace(r, morawetz_partial=r.t ** 2, imorawetz_partial=r.t ** 2)
    assert check_eq17(bad).status == FAIL
    assert check_thm22(bad).status == FAIL


def test_decreasing_accumulator_fails_monotonicity(free_series):
    bad = _bump(free_series, 20, morawetz_partial=-1.0)
    rep = check_eq17(bad)
    assert rep.status == FAIL and not rep.measured["monotone"]


def test_thm43_errors_and_failures(free_series):
    cone = ConeSpec(0.3, 0.2, 5.0)
    bad = [replace(r, gamma_time_avg=[0.0], ig_sup=0.0) for r in free_series]
    assert check_thm43(bad, cone).status == FAIL
    tiny = [replace(r, m=1e-200) for r in free_series]
    with pytest.raises(ConfigError):
        check_thm43(tiny, cone)


def test_checks_need_two_records(free_series):
    with pytest.raises(ValueError):
        check_conservation(free_series[:1])
    assert check_conservation([r.to_dict() for r in free_series]).status == PASS


def test_report_dict_shape(free_series):
    d = check_conservation(free_series).to_dict()
    assert set(d) >= {"claim", "measured", "bound", "tolerance", "pass", "notes", "provenance"}
    assert d["pass"] is True
