import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topodisc import chain
from topodisc.mobility import (PoissonUsers, Report, WalkConfig, WalkLattice, build_lattice,
                               empirical_report_measure, poisson_wallclock, random_walk_stream,
                               simulate_until, teleport_batch, teleport_stream, walk_batch)
from topodisc.scenario import Disc, Point2D, Raster, Scenario, generate_random_scenario
from topodisc.tessellation import OUTSIDE, TileMeasure, estimate_tessellation

from conftest import random_measure


def chi2_critical_1pct(df):
    # Wilson-Hilferty approximation of the 99% quantile
    z = 2.3263478740408408
    a = 2.0 / (9.0 * df)
    return df * (1 - a + z * math.sqrt(a)) ** 3


def take(stream, n):
    return list(itertools.islice(stream, n))


# -- teleport -----------------------------------------------------------------

def test_teleport_point_mass_stream():
    m = TileMeasure.from_tiles(3, {0b111: 1.0})
    assert {r.tile for r in take(teleport_stream(m, 0), 500)} == {0b111}


def test_teleport_times_strictly_increase_from_period():
    reports = take(teleport_stream(random_measure(3, np.random.default_rng(0)), 1, period=2.5), 100)
    times = [r.time for r in reports]
    assert times[0] == 2.5
    assert all(b > a for a, b in zip(times, times[1:]))


def test_teleport_frequencies_match_measure():
    m = random_measure(4, np.random.default_rng(2))
    n = 10**6
    est = empirical_report_measure(teleport_stream(m, 9, chunk=1 << 16), n, 4)
    se = np.sqrt(m.mass * (1 - m.mass) / n)
    assert np.all(np.abs(est.mass - m.mass) <= 4 * se + 1e-12)
    assert est.sample_count == n


def test_teleport_mean_on_two_neighbour_example(example2):
    batch = teleport_batch(example2, 100_000, 4)
    assert not batch.timed_out.any()
    assert abs(batch.mean_reports - 10 / 3) <= 4 * batch.se_reports


def test_stream_and_batch_agree_in_law(example2):
    used = [simulate_until(teleport_stream(example2, (5, i)), example2).reports_used for i in range(20_000)]
    used = np.array(used, dtype=float)
    assert abs(used.mean() - 10 / 3) <= 4 * used.std(ddof=1) / math.sqrt(used.size)


@pytest.mark.parametrize("i", range(6))
def test_teleport_mean_agrees_with_chain(i):
    rng = np.random.default_rng(50 + i)
    m = random_measure(i + 1, rng)
    batch = teleport_batch(m, 100_000, i)
    assert abs(batch.mean_reports - chain.solve_fk(m).mean) <= 4 * batch.se_reports


def test_teleport_is_deterministic():
    m = random_measure(3, np.random.default_rng(1))
    assert take(teleport_stream(m, 17), 300) == take(teleport_stream(m, 17), 300)
    assert take(teleport_stream(m, 17), 300) != take(teleport_stream(m, 18), 300)
    a, b = teleport_batch(m, 500, 3), teleport_batch(m, 500, 3)
    assert a.to_csv() == b.to_csv()


# -- simulate_until -----------------------------------------------------------

def test_first_report_full_set(example2):
    res = simulate_until(iter([Report(360.0, 0b11)]), example2)
    assert (res.reports_used, res.wall_time, res.timed_out) == (1, 360.0, False)


def test_qualifying_empty_set_absorbs_at_start(example2):
    res = simulate_until(iter([]), example2, delta=0.4)
    assert (res.reports_used, res.wall_time) == (0, 0.0)


def test_unreachable_fk_is_refused():
    m = TileMeasure.from_tiles(2, {0: 0.5, 0b01: 0.5})
    with pytest.raises(ValueError, match=r"\[2\]"):
        simulate_until(teleport_stream(m, 0), m)


def test_cap_gives_timeout_with_partial_state(example2):
    stream = (Report(float(t), 0b01) for t in itertools.count(1))
    res = simulate_until(stream, example2, max_reports=25)
    assert res.timed_out and res.reports_used == 25 and res.state == 0b01


def test_batch_cap_times_out():
    m = TileMeasure.from_tiles(2, {0: 0.999, 0b11: 0.001})
    batch = teleport_batch(m, 100, 0, max_reports=5)
    assert batch.timed_out.sum() > 90
    assert np.all(batch.reports_used[batch.timed_out] == 5)
    surv = batch.survival(10)
    assert surv[0] == 1.0 and surv[-1] == batch.timed_out.mean()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.floats(0.05, 1.0))
def test_knowledge_is_monotone_and_absorption_permanent(seed, n, delta):
    m = random_measure(n, np.random.default_rng(seed))
    absorbing = chain.delta_absorbing(m, delta)
    state, hit = 0, False
    for report in take(teleport_stream(m, seed), 200):
        new = state | report.tile
        assert new & state == state
        state = new
        if hit:
            assert absorbing[state]
        hit = hit or absorbing[state]


# -- random walk --------------------------------------------------------------

def test_walk_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(inter_report_time=1.0, step_period=5.0)
    with pytest.raises(ValueError):
        WalkConfig(grid_step=0.0)
    assert WalkConfig(inter_report_time=360).steps_per_report == 72


def test_walk_stays_in_region():
    sc = generate_random_scenario(5, 50.0, 3)
    lat = build_lattice(sc, 2.5)
    assert sc.serving.covers(lat.xs, lat.ys).all()
    assert lat.moves.min() >= 0 and lat.moves.max() < lat.n_sites
    reports = take(random_walk_stream(sc, WalkConfig(inter_report_time=5), 1, lattice=lat), 5000)
    assert all(r.tile != OUTSIDE for r in reports)
    # every lattice move is to an adjacent site or stays put
    for d in range(4):
        step = np.hypot(lat.xs[lat.moves[d]] - lat.xs, lat.ys[lat.moves[d]] - lat.ys)
        assert np.all(np.isclose(step, 0) | np.isclose(step, 2.5))


def test_walk_move_table_is_doubly_stochastic():
    lat = build_lattice(generate_random_scenario(3, 10.0, 0), 1.0)
    inflow = np.zeros(lat.n_sites)
    for d in range(4):
        np.add.at(inflow, lat.moves[d], 0.25)
    np.testing.assert_allclose(inflow, 1.0)


def _rect_scenario():
    power = np.full((5, 6), -50.0)
    return Scenario(Raster(Point2D(0, 0), 1.0, power, -70.0), ())


def test_walk_marginal_is_uniform_on_rectangle():
    sc = _rect_scenario()
    lat = build_lattice(sc, 1.0)
    assert lat.n_sites == 30
    labelled = WalkLattice(lat.xs, lat.ys, np.arange(lat.n_sites), lat.moves)
    cfg = WalkConfig(grid_step=1.0, step_period=1.0, inter_report_time=50.0)
    counts = np.zeros(lat.n_sites)
    walkers = 3000
    for i in range(walkers):
        counts[take(random_walk_stream(sc, cfg, (11, i), lattice=labelled), 4)[-1].tile] += 1
    expected = walkers / lat.n_sites
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < chi2_critical_1pct(lat.n_sites - 1)


def test_walk_from_corner_spreads_to_uniform():
    lat = build_lattice(_rect_scenario(), 1.0)
    dist = np.zeros(lat.n_sites)
    dist[0] = 1.0
    for _ in range(2000):
        nxt = np.zeros_like(dist)
        for d in range(4):
            np.add.at(nxt, lat.moves[d], dist / 4)
        dist = nxt
    np.testing.assert_allclose(dist, 1 / lat.n_sites, atol=1e-9)


def test_walk_reports_every_period():
    sc = generate_random_scenario(3, 50.0, 1)
    times = [r.time for r in take(random_walk_stream(sc, WalkConfig(inter_report_time=60), 0), 10)]
    assert times == [60.0 * (i + 1) for i in range(10)]


def test_walk_is_deterministic():
    sc = generate_random_scenario(4, 50.0, 2)
    cfg = WalkConfig(inter_report_time=60)
    assert take(random_walk_stream(sc, cfg, 5), 200) == take(random_walk_stream(sc, cfg, 5), 200)
    m = TileMeasure(4, np.full(16, 1 / 16))
    a = walk_batch(sc, cfg, m, 50, 8, delta=0.9)
    b = walk_batch(sc, cfg, m, 50, 8, delta=0.9)
    assert a.to_csv() == b.to_csv()


def test_walk_batch_agrees_with_stream_in_law():
    sc = generate_random_scenario(3, 10.0, 4)
    m = estimate_tessellation(sc, 50_000, 0)
    cfg = WalkConfig(grid_step=1.0, step_period=1.0, inter_report_time=3.0)
    lat = build_lattice(sc, 1.0)
    batch = walk_batch(sc, cfg, m, 4000, 1, delta=0.9, lattice=lat)
    single = np.array([simulate_until(random_walk_stream(sc, cfg, (2, i), lattice=lat), m, delta=0.9).reports_used
                       for i in range(4000)], dtype=float)
    se = math.hypot(batch.se_reports, single.std(ddof=1) / math.sqrt(single.size))
    assert abs(batch.mean_reports - single.mean()) <= 4 * se


def test_slow_reports_repeat_tiles():
    sc = generate_random_scenario(7, 50.0, 7)
    m = estimate_tessellation(sc, 100_000, 0)
    teleport = chain.solve_delta(m, 0.9).mean
    cfg = WalkConfig(inter_report_time=60)
    batch = walk_batch(sc, cfg, m, 200, 0, delta=0.9)
    assert batch.mean_reports >= teleport


# -- empirical measure and Poisson users ---------------------------------------

def test_empirical_measure_constant_stream():
    stream = (Report(float(t), 0b101) for t in itertools.count(1))
    m = empirical_report_measure(stream, 40, 3)
    assert m.mass[0b101] == 1.0 and m.sample_count == 40


def test_empirical_measure_rejects_empty_horizon():
    with pytest.raises(ValueError):
        empirical_report_measure(iter([]), 0, 2)


def test_poisson_wallclock_examples():
    users = PoissonUsers(100, 0.01)
    assert users.rate == pytest.approx(1.0)
    assert poisson_wallclock(0, users) == 0.0
    assert poisson_wallclock(10, users) == pytest.approx(10.0)
    assert poisson_wallclock(10, PoissonUsers(200, 0.01)) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        PoissonUsers(0, 0.1)
    with pytest.raises(ValueError):
        poisson_wallclock(-1, users)
