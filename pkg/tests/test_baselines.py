import dataclasses

import numpy as np
import pytest

from hetnet_alloc.baselines import solve_band_restricted, solve_equal_power, solve_no_pairing
from hetnet_alloc.dual import solve
from hetnet_alloc.model import Band

from helpers import drop, small_scenario


@pytest.fixture(scope="module")
def zero_rate(reference):
    return dataclasses.replace(reference, subcarriers_per_band=3, r_min=0.0)


class TestEqualPower:
    def test_uniform_power(self, zero_rate):
        alloc, report = solve_equal_power(zero_rate, drop(zero_rate))
        for cell, cfg in zip(alloc.cells, zero_rate.cells):
            assert np.all(cell.power == cfg.power_budget / len(cell.pairing))
        assert report.converged and np.isnan(report.dual_objective)

    def test_dominated_by_dual(self, reference):
        sc = small_scenario(reference, n=4, bands=(Band.V, Band.E), relays=2, users=3)
        for d in range(50):
            g = drop(sc, d)
            assert solve_equal_power(sc, g)[1].primal_objective <= solve(sc, g)[1].primal_objective + 1e-9

    def test_single_pair_matches_dual(self, reference):
        sc = small_scenario(reference, n=1, relays=2, users=2)
        g = drop(sc, 0)
        ep, _ = solve_equal_power(sc, g)
        du, _ = solve(sc, g)
        assert ep.cells[0].power[0] == pytest.approx(du.cells[0].power[0], rel=1e-12)
        assert ep.objective() == pytest.approx(du.objective(), rel=1e-12)

    def test_flags_unmet_rate(self, reference):
        sc = dataclasses.replace(reference, subcarriers_per_band=2)
        assert "infeasible_min_rate" in solve_equal_power(sc, drop(sc))[1].flags


class TestNoPairing:
    def test_identity(self, zero_rate):
        alloc, _ = solve_no_pairing(zero_rate, drop(zero_rate))
        for c in alloc.cells:
            assert list(c.pairing) == list(range(len(c.pairing)))

    def test_dominated_by_dual(self, reference):
        sc = small_scenario(reference, n=4, bands=(Band.V, Band.E), relays=2, users=3)
        for d in range(30):
            g = drop(sc, d)
            assert solve_no_pairing(sc, g)[1].primal_objective <= solve(sc, g)[1].primal_objective + 1e-9

    def test_mean_strictly_below(self, reference):
        sc = small_scenario(reference, n=10, bands=(Band.V, Band.E), relays=2, users=4)
        gap = []
        for d in range(50):
            g = drop(sc, d)
            gap.append(solve(sc, g)[1].primal_objective - solve_no_pairing(sc, g)[1].primal_objective)
        assert np.mean(gap) > 0


class TestBandRestricted:
    def test_all_bands_is_unrestricted(self, zero_rate):
        g = drop(zero_rate, 1)
        a, r = solve_band_restricted(zero_rate, g, {Band.V, Band.E, Band.LTE})
        b, s = solve(zero_rate, g)
        assert r.primal_objective == s.primal_objective
        assert all(np.array_equal(x.pairing, y.pairing) for x, y in zip(a.cells, b.cells))

    def test_e_only(self, zero_rate):
        alloc, _ = solve_band_restricted(zero_rate, drop(zero_rate), {Band.E})
        for c in alloc.cells:
            assert set(c.unit_band) == {Band.E}
        counts = alloc.band_counts()
        assert counts[Band.V] == counts[Band.LTE] == 0

    def test_lte_only_hands_users_to_macro(self, zero_rate):
        alloc, _ = solve_band_restricted(zero_rate, drop(zero_rate), {"LTE"})
        assert len(alloc.cells) == 1
        K = sum(c.num_users for c in zero_rate.cells)
        assert len(alloc.cells[0].user_origin) == K
        assert set(alloc.cells[0].unit_band) == {Band.LTE}

    def test_empty_rejected(self, zero_rate):
        with pytest.raises(ValueError):
            solve_band_restricted(zero_rate, drop(zero_rate), set())

    def test_pure_restrictions_dominated(self, zero_rate):
        # LTE-only is left out: the handover changes the user set, so it is not a restriction
        for d in range(10):
            g = drop(zero_rate, d)
            full = solve(zero_rate, g)[1].primal_objective
            for bands in ({Band.E}, {Band.V, Band.E}, {Band.E, Band.LTE}):
                assert solve_band_restricted(zero_rate, g, bands)[1].primal_objective <= full + 1e-9

    def test_multiband_mean_beats_single_band(self, reference):
        sc = dataclasses.replace(reference, subcarriers_per_band=4, r_min=0.0)
        full, e_only, lte_only = [], [], []
        for d in range(50):
            g = drop(sc, d)
            full.append(solve(sc, g)[1].primal_objective)
            e_only.append(solve_band_restricted(sc, g, {Band.E})[1].primal_objective)
            lte_only.append(solve_band_restricted(sc, g, {Band.LTE})[1].primal_objective)
        assert np.mean(full) > max(np.mean(e_only), np.mean(lte_only))
