import math

import numpy as np
import pytest

from dtwcert.core import Window
from dtwcert.dtw import dtw_distance, keogh_envelope, keogh_lower_bound, slack_stats
from dtwcert.errors import EnvelopeMismatch, InvalidWindow, ShapeMismatch, UnsupportedNorm

from _oracles import brute_dtw, brute_envelope, brute_lb

NORMS = (1, 2, "inf")


def rand_window(rng, seq_len, channels):
    return Window(rng.standard_normal((seq_len, channels)))


class TestDtwDistance:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(0)
        for seq_len, channels in ((1, 1), (5, 2), (12, 3)):
            x = rand_window(rng, seq_len, channels)
            for p in NORMS:
                assert dtw_distance(x, x, max(1, seq_len // 2), p) == 0.0

    def test_frozen_small_example(self):
        # value fixed by exhaustive path enumeration on the 3x3 band-1 grid
        a = Window(np.array([[0.0], [1.0], [0.0]]))
        b = Window(np.array([[0.0], [0.0], [1.0]]))
        assert dtw_distance(a, b, 1, 2) == 1.0

    def test_diagonal_path_upper_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rand_window(rng, 10, 2)
            b = rand_window(rng, 10, 2)
            l2 = math.sqrt(((a.values - b.values) ** 2).sum())
            for w in (1, 3, 10):
                assert dtw_distance(a, b, w, 2) <= l2 + 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a, b = rand_window(rng, 9, 2), rand_window(rng, 9, 2)
            for p in NORMS:
                assert dtw_distance(a, b, 3, p) == dtw_distance(b, a, 3, p)

    def test_band_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a, b = rand_window(rng, 11, 1), rand_window(rng, 11, 1)
            for p in NORMS:
                vals = [dtw_distance(a, b, w, p) for w in range(1, 12)]
                assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))

    def test_full_band_matches_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a, b = rand_window(rng, 5, 1), rand_window(rng, 5, 1)
            assert dtw_distance(a, b, 5, 2) == brute_dtw(a.values, b.values, 5, 2)

    def test_matches_enumeration_exactly(self):
        rng = np.random.default_rng(5)
        for seq_len in range(1, 7):
            for channels in (1, 2):
                for w in range(1, seq_len + 1):
                    for p in NORMS:
                        a = rand_window(rng, seq_len, channels)
                        b = rand_window(rng, seq_len, channels)
                        assert dtw_distance(a, b, w, p) == brute_dtw(
                            a.values, b.values, w, p
                        ), (seq_len, channels, w, p)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dtw_distance(Window(np.zeros((3, 1))), Window(np.zeros((4, 1))), 1, 2)

    def test_unsupported_norm(self):
        x = Window(np.zeros((3, 1)))
        with pytest.raises(UnsupportedNorm):
            dtw_distance(x, x, 1, 3)

    def test_bad_band(self):
        x = Window(np.zeros((3, 1)))
        with pytest.raises(InvalidWindow):
            dtw_distance(x, x, 0, 2)


class TestKeoghEnvelope:
    def test_constant_window(self):
        x = Window(np.full((6, 2), 1.5))
        env = keogh_envelope(x, 2)
        np.testing.assert_array_equal(env.upper, x.values)
        np.testing.assert_array_equal(env.lower, x.values)

    def test_monotone_series_clamped_ends(self):
        env = keogh_envelope(Window(np.array([[0.0], [1.0], [2.0], [3.0]])), 1)
        np.testing.assert_array_equal(env.upper.ravel(), [1, 2, 3, 3])
        np.testing.assert_array_equal(env.lower.ravel(), [0, 0, 1, 2])

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            seq_len = int(rng.integers(1, 24))
            channels = int(rng.integers(1, 4))
            w = int(rng.integers(1, seq_len + 1))
            x = rand_window(rng, seq_len, channels)
            env = keogh_envelope(x, w)
            upper, lower = brute_envelope(x.values, w)
            np.testing.assert_array_equal(env.upper, upper)
            np.testing.assert_array_equal(env.lower, lower)

    def test_band_contains_source(self):
        rng = np.random.default_rng(7)
        x = rand_window(rng, 20, 2)
        env = keogh_envelope(x, 4)
        assert (env.lower <= x.values).all() and (x.values <= env.upper).all()

    def test_widening_never_shrinks(self):
        rng = np.random.default_rng(8)
        x = rand_window(rng, 16, 1)
        prev = keogh_envelope(x, 1)
        for w in range(2, 17):
            cur = keogh_envelope(x, w)
            assert (cur.upper >= prev.upper).all() and (cur.lower <= prev.lower).all()
            prev = cur


class TestKeoghLowerBound:
    def test_inside_band_is_zero(self):
        rng = np.random.default_rng(9)
        x = rand_window(rng, 12, 2)
        env = keogh_envelope(x, 3)
        inside = (env.upper + env.lower) / 2.0
        for p in NORMS:
            assert keogh_lower_bound(env, inside, p) == 0.0

    def test_collapses_to_l2_for_degenerate_envelope(self):
        env = keogh_envelope(Window(np.zeros((2, 1))), 1)
        assert keogh_lower_bound(env, np.array([[3.0], [4.0]]), 2) == 5.0

    def test_sound_against_dtw(self):
        rng = np.random.default_rng(10)
        strict_seen = 0
        for _ in range(1000):
            seq_len = int(rng.integers(2, 16))
            channels = int(rng.integers(1, 3))
            w = int(rng.integers(1, min(seq_len, 5)))
            a = rand_window(rng, seq_len, channels)
            b = rand_window(rng, seq_len, channels)
            env = keogh_envelope(a, w)
            for p in NORMS:
                lb = keogh_lower_bound(env, b, p)
                d = dtw_distance(a, b, w, p)
                assert lb <= d + 1e-12
                if lb > 0 and d > lb:
                    strict_seen += 1
        assert strict_seen > 0

    def test_band_monotone(self):
        rng = np.random.default_rng(11)
        a, b = rand_window(rng, 14, 1), rand_window(rng, 14, 1)
        vals = [keogh_lower_bound(keogh_envelope(a, w), b, 2) for w in range(1, 15)]
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))

    def test_matches_scan_oracle(self):
        # summation order may differ from the oracle's by one ulp
        rng = np.random.default_rng(12)
        for _ in range(30):
            a, b = rand_window(rng, 10, 2), rand_window(rng, 10, 2)
            env = keogh_envelope(a, 2)
            for p in NORMS:
                assert keogh_lower_bound(env, b, p) == pytest.approx(
                    brute_lb(env.upper, env.lower, b.values, p), abs=1e-12
                )


class TestBackendParity:
    def test_compiled_and_numpy_kernels_agree(self):
        ckern = pytest.importorskip("dtwcert._ckern")
        from dtwcert import _pykern

        rng = np.random.default_rng(20)
        for _ in range(200):
            seq_len = int(rng.integers(1, 16))
            channels = int(rng.integers(1, 4))
            w = int(rng.integers(1, seq_len + 1))
            a = rng.standard_normal((seq_len, channels))
            b = rng.standard_normal((seq_len, channels))
            for pc in (0, 1, 2):
                va = _pykern.band_dtw(a, b, w, pc)
                vb = ckern.band_dtw(a, b, w, pc)
                if channels <= 3:
                    assert va == vb  # identical summation order: bit-equal
                else:
                    assert va == pytest.approx(vb, rel=1e-12)
            u1, l1 = _pykern.envelope(a, w)
            u2, l2 = ckern.envelope(a, w)
            np.testing.assert_array_equal(u1, u2)
            np.testing.assert_array_equal(l1, l2)
            for pc in (0, 1, 2):
                assert _pykern.lb_keogh(u1, l1, b, pc) == pytest.approx(
                    ckern.lb_keogh(u2, l2, b, pc), rel=1e-12, abs=1e-15
                )


class TestSlackStats:
    def test_constant_window_zero_slack(self):
        x = Window(np.full((5, 1), 2.0))
        stats = slack_stats(x, keogh_envelope(x, 2))
        assert stats.total == 0.0 and stats.row_max == 0.0

    def test_hand_example(self):
        x = Window(np.array([[0.0], [1.0], [2.0], [3.0]]))
        stats = slack_stats(x, keogh_envelope(x, 1))
        np.testing.assert_array_equal(stats.delta.ravel(), [1, 1, 1, 1])
        assert stats.total == 2.0 and stats.row_max == 1.0

    def test_row_max_at_most_total(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            x = rand_window(rng, 12, 2)
            stats = slack_stats(x, keogh_envelope(x, 3))
            assert stats.row_max <= stats.total + 1e-12

    def test_equality_only_with_one_nonzero_row(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            x = rand_window(rng, 10, 2)
            stats = slack_stats(x, keogh_envelope(x, 2))
            nonzero_rows = int((stats.delta != 0).any(axis=1).sum())
            if nonzero_rows > 1:
                assert stats.row_max < stats.total
            elif nonzero_rows == 1:
                assert math.isclose(stats.row_max, stats.total)
            else:
                assert stats.row_max == stats.total == 0.0

    def test_envelope_mismatch(self):
        rng = np.random.default_rng(14)
        x, y = rand_window(rng, 8, 1), rand_window(rng, 8, 1)
        with pytest.raises(EnvelopeMismatch):
            slack_stats(y, keogh_envelope(x, 2))
