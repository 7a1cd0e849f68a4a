import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmforecast.blocking import (
    FunctionalSpec,
    ScalarSeries,
    VectorSeries,
    block,
    block_weights,
    gm_increment,
    unblock,
)
from gmforecast.increment_algebra import Factor, IncrementSpec

from oracles import increment_by_definition


class TestBlock:
    def test_small_example(self):
        vs = block(ScalarSeries(np.arange(6), 0, 2))
        assert vs.values.tolist() == [[0, 1], [2, 3], [4, 5]]
        assert vs.start == 0

    def test_period_one_is_identity(self):
        x = np.array([3.0, -1.0, 2.5])
        vs = block(ScalarSeries(x, -3, 1))
        assert vs.values[:, 0].tolist() == x.tolist()
        assert vs.start == -3

    def test_negative_start_keeps_block_index(self):
        vs = block(ScalarSeries(np.arange(8), -4, 2))
        assert vs.start == -2
        assert vs.row(-1).tolist() == [2.0, 3.0]

    def test_incomplete_block_rejected(self):
        with pytest.raises(ValueError):
            block(ScalarSeries(np.arange(5), 0, 2))

    def test_truncate_flag_drops_partial(self):
        vs = block(ScalarSeries(np.arange(7), 1, 2), truncate=True)
        assert vs.start == 1
        assert vs.values.tolist() == [[1, 2], [3, 4], [5, 6]]

    def test_random_round_trip(self, rng):
        for _ in range(100):
            T = int(rng.integers(1, 8))
            nb = int(rng.integers(1, 12))
            start = int(rng.integers(-5, 5)) * T
            s = ScalarSeries(rng.standard_normal(nb * T), start, T)
            back = unblock(block(s))
            assert back.start == s.start
            assert np.array_equal(back.values, s.values)


class TestBlockWeights:
    def test_padding(self):
        rows = block_weights(FunctionalSpec.finite([1, 1, 1]), 2)
        assert rows.tolist() == [[1, 1], [1, 0]]

    def test_single_row(self):
        rows = block_weights(FunctionalSpec.finite([1, 2, 3]), 3)
        assert rows.tolist() == [[1, 2, 3]]

    def test_geometric_rows(self):
        rho, T = 0.5, 4
        rows = block_weights(FunctionalSpec.geometric([rho], rho), T, 4 * T - 1)
        for m in range(4):
            expected = rho ** (m * T) * rho ** np.arange(1, T + 1)
            assert rows[m] == pytest.approx(expected, rel=1e-15)

    def test_certified_horizon(self):
        spec = FunctionalSpec.geometric([1.0], 0.8, tol=1e-12)
        N, tail = spec.certified_blocks(3)
        assert tail < 1e-12
        # the actual tail of sum (m+1)||a(m)||^2 beyond N is below the bound
        rows = block_weights(spec, 3, 3 * (N + 200) - 1)
        norms = np.sum(rows ** 2, axis=1)
        actual = np.sum((np.arange(len(norms)) + 1)[N + 1:] * norms[N + 1:])
        assert actual <= tail

    def test_geometric_rejects_bad_rho(self):
        with pytest.raises(ValueError):
            FunctionalSpec.geometric([1.0], 1.0)

    def test_blocked_column_mismatch(self):
        with pytest.raises(ValueError):
            block_weights(FunctionalSpec.blocked(np.ones((2, 3))), 2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.lists(st.floats(-5, 5), min_size=1, max_size=30))
    def test_indexing_identity(self, T, weights):
        rows = block_weights(FunctionalSpec.finite(weights), T)
        M = len(weights) - 1
        assert rows.shape == (M // T + 1, T)
        for m in range(rows.shape[0]):
            for p in range(1, T + 1):
                k = m * T + p - 1
                assert rows[m, p - 1] == (weights[k] if k <= M else 0.0)


class TestIncrement:
    def test_constant_series(self):
        vs = VectorSeries(np.full((6, 2), 3.0))
        out = gm_increment(vs, IncrementSpec.of(Factor(1, 1, 1)))
        assert np.all(out.values == 0.0)

    def test_seasonal_difference_of_trend(self):
        m = np.arange(10, dtype=float)
        vs = VectorSeries(np.stack([m, m, m], axis=1))
        out = gm_increment(vs, IncrementSpec.of(Factor(1, 2, 1)))
        assert np.all(out.values == 2.0)
        assert out.start == 2

    def test_short_history_rejected(self):
        with pytest.raises(ValueError, match="needs at least"):
            gm_increment(VectorSeries(np.ones((3, 1))), IncrementSpec.of(Factor(1, 3, 1)))

    @pytest.mark.parametrize("factors", [[(1, 1, 1)], [(1, 1, 1), (1, 3, 1)], [(2, 2, 1), (1, 1, 2)]])
    def test_matches_literal_definition(self, rng, factors):
        spec = IncrementSpec.of(*[Factor(*f) for f in factors])
        vs = VectorSeries(rng.standard_normal((30, 3)), -10)
        out = gm_increment(vs, spec)
        for comp in range(3):
            path = {m: vs.row(m)[comp] for m in range(vs.start, vs.stop)}
            for m in (out.start, 0, out.stop - 1):
                ref = increment_by_definition(path, factors, m)
                assert out.row(m)[comp] == pytest.approx(ref, abs=1e-12)
