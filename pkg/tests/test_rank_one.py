import math

import numpy as np
import pytest

from cfjoin import rank_one as rk


@pytest.fixture(scope="module")
def scheme():
    return rk.chacon_scheme(18)


class TestScheme:
    def test_height_prefix(self):
        # brute-force recursion h_{n+1} = 3 h_n + 1
        hs = [1]
        for _ in range(3):
            hs.append(3 * hs[-1] + 1)
        assert rk.chacon_scheme(4).heights == tuple(hs) == (1, 4, 13, 40)

    def test_single_stage(self):
        assert rk.chacon_scheme(1).heights == (1,)

    def test_stage_validation(self):
        with pytest.raises(ValueError):
            rk.chacon_scheme(0)

    def test_mass_bookkeeping(self, scheme):
        # level width consistency: h_n * w_n = 1 - 3^{-(n+1)}, total mass -> 1
        for n in range(10):
            total = scheme.height(n) * rk.level_width(n)
            assert abs(total - rk.tower_mass(n)) < 1e-12
        assert abs(rk.tower_mass(12) - 1.0) < 1e-5


class TestApply:
    def test_below_top_increments(self, scheme):
        p = rk.TowerPoint(3, 5, (0,))
        q = rk.tower_apply(scheme, p)
        assert (q.stage, q.rung) == (3, 6)

    def test_orbit_returns_to_base(self, scheme):
        # from the bottom of the first stage-(n+1) column, h_n steps lead
        # back to the stage-n base (the next column's copy)
        for n in (2, 3, 4):
            p = rk.TowerPoint(n + 1, 0, (0,) * 8)
            q = p
            for _ in range(scheme.height(n)):
                q = rk.tower_apply(scheme, q)
            assert rk.stage_level_of(q, scheme, n) == 0

    def test_inverse_roundtrip(self, scheme, rng):
        for _ in range(200):
            p = rk.sample_tower_point(scheme, rng, stage=8)
            q = rk.tower_apply_inverse(scheme, rk.tower_apply(scheme, p))
            m = min(q.stage, 8)
            assert rk.stage_level_of(q, scheme, m) == rk.stage_level_of(p, scheme, m)

    def test_tail_exhaustion(self, scheme):
        p = rk.TowerPoint(4, scheme.height(4) - 1, ())
        with pytest.raises(rk.TailExhaustedError):
            rk.tower_apply(scheme, p)


class TestWords:
    def test_substitution_words(self):
        assert rk.substitution_word(0) == "0"
        assert rk.substitution_word(1) == "00s0"
        assert rk.substitution_word(2) == "00s000s0s00s0"

    def test_exact_base_frequency(self):
        # the base level carries 2/3 of the mass
        assert abs(rk.exact_word_frequency("0") - 2 / 3) < 1e-5

    def test_word_frequencies_match_simulation(self, scheme):
        rng = np.random.default_rng(3)
        n = 40_000
        p = rk.sample_tower_point(scheme, rng, stage=12)
        text = rk.symbol_word(scheme, p, n + 8)
        for word in ("0", "00", "0s", "00s0", "0s00s0s0"):
            freq = rk.exact_word_frequency(word)
            count = sum(1 for i in range(n) if text[i : i + len(word)] == word)
            sim = count / n
            # effective sample size is reduced by orbit correlation; use a
            # generous envelope of 4 sigma with correlation factor ~ len
            sigma = math.sqrt(freq * (1 - freq) / n) * math.sqrt(8.0)
            assert abs(sim - freq) <= 4 * sigma + 1e-3

    def test_invalid_word_never_occurs(self):
        # two consecutive spacers never appear in the Chacon reading
        assert rk.exact_word_frequency("ss") == 0.0


class TestBirkhoff:
    def test_zero_shift_recovers_measure(self, scheme):
        base = rk.LevelSetUnion(2, frozenset({0, 4, 7}))
        est, se = rk.birkhoff_correlation(scheme, base, base, 0, 60_000, np.random.default_rng(4))
        assert abs(est - base.measure()) <= 4 * (se + 1e-4) + 2e-3

    def test_disjoint_sets_zero(self, scheme):
        a = rk.LevelSetUnion(2, frozenset({0}))
        b = rk.LevelSetUnion(2, frozenset({5}))
        est, _ = rk.birkhoff_correlation(scheme, a, b, 0, 20_000, np.random.default_rng(5))
        assert est == 0.0

    def test_partial_rigidity_at_heights(self, scheme):
        # the Chacon correlation at shift h_n stays near mu(A)/2 + mu(A)^2-ish,
        # visibly above the mixing value mu(A)^2
        a = rk.LevelSetUnion(2, frozenset({0}))
        mu = a.measure()
        est, se = rk.birkhoff_correlation(
            scheme, a, a, scheme.height(4), 120_000, np.random.default_rng(6)
        )
        assert est > mu**2 + 10 * se
        assert est > mu**2 + 0.01

    def test_level_frequency_invariance(self, scheme):
        # frequencies of a level set along an orbit match its measure (4 sigma)
        a = rk.LevelSetUnion(1, frozenset({2}))
        est, se = rk.birkhoff_correlation(scheme, a, a, 0, 80_000, np.random.default_rng(7))
        assert abs(est - a.measure()) <= 4 * (se + 1e-4) + 2e-3

    def test_orbit_length_validation(self, scheme):
        a = rk.LevelSetUnion(1, frozenset({0}))
        with pytest.raises(ValueError):
            rk.birkhoff_correlation(scheme, a, a, 1000, 1200, np.random.default_rng(8))
