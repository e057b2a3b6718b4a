import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from helpers import IntervalStub, SplitStub
from spectrum_mdl.datasets import interval, read_points, single_point, two_circles
from spectrum_mdl.errors import InvalidInputError, NotCertifiedError, ResolutionError
from spectrum_mdl.essence import (
    UsageAccounting,
    essence_bounds,
    greedy_cover,
    greedy_packing,
    on_boundary_pairs,
    support_grid,
    theorem1_check,
    theorem2_score,
    used_codes,
    verify_cover,
)
from spectrum_mdl.mdl import description_length
from spectrum_mdl.robustness import CertBudget, certify, replay
from spectrum_mdl.spectrum import embed

U_RUN = 0.7


class GlobalPatternStub:
    """Every point spikes on dims {1, 2}."""

    def __init__(self, params):
        self.params = params

    def encode(self, X):
        return np.tile(embed([0.5, 0.5], (1, 2), self.params), (np.atleast_2d(X).shape[0], 1))


class CircleStub:
    """Left circle spikes on {1}, right circle on {2}."""

    def __init__(self, params):
        self.params = params

    def encode(self, X):
        X = np.atleast_2d(X)
        z = np.zeros((X.shape[0], self.params.K))
        right = X[:, 0] > 3.5
        z[~right, 0] = 0.5
        z[right, 1] = 0.5
        return z


@pytest.fixture(scope="module")
def circles_03():
    return essence_bounds(two_circles(), 0.3)


@pytest.fixture(scope="module")
def trained_dl(pipeline_run, trained_model):
    manifest, out = pipeline_run
    X = read_points(out / "train.csv")
    return X, description_length(trained_model, X, U_RUN, CertBudget(seed=manifest.config["seed"]))


class TestEssenceBounds:
    def test_unit_interval(self):
        eb = essence_bounds(interval(0.0, 1.0), 0.25)
        assert (eb.lower, eb.upper) == (2, 2)
        np.testing.assert_allclose(np.sort(eb.cover_points[:, 0]), [0.25, 0.75], atol=1e-12)
        # exhaustive check on a fine grid, independent of the construction grid
        fine = np.linspace(0, 1, 100001)[:, None]
        assert cdist(fine, eb.cover_points).min(axis=1).max() <= 0.25 + 1e-12

    def test_single_point(self):
        eb = essence_bounds(single_point([3.0, -1.0]), 0.1)
        assert (eb.lower, eb.upper) == (1, 1)

    def test_two_circles_cover(self, circles_03):
        eb = circles_03
        G = support_grid(two_circles(), 0.3 / 4)
        assert eb.cover_verified and eb.n_grid == G.shape[0]
        assert cdist(G, eb.cover_points).min(axis=1).max() <= 0.3 * (1 + 1e-12)
        assert eb.lower <= eb.upper

    def test_packing_is_separated(self, circles_03):
        P = circles_03.packing_points
        d = cdist(P, P)
        assert np.all(d[~np.eye(len(P), dtype=bool)] > 2 * 0.3)

    def test_grid_res_too_coarse(self):
        with pytest.raises(InvalidInputError):
            essence_bounds(interval(), 0.25, grid_res=0.1)

    def test_budget(self):
        with pytest.raises(ResolutionError):
            essence_bounds(two_circles(), 0.3, budget=100)

    def test_deterministic(self):
        a = essence_bounds(two_circles(), 0.5, seed=4)
        b = essence_bounds(two_circles(), 0.5, seed=4)
        assert a.to_dict() == b.to_dict()
        np.testing.assert_array_equal(a.cover_points, b.cover_points)

    @pytest.mark.parametrize("U", [0.15, 0.4, 0.7, 1.3])
    def test_cover_sweep(self, U):
        eb = essence_bounds(two_circles(), U)
        G = support_grid(two_circles(), U / 4)
        assert verify_cover(G, eb.cover_points, U)
        assert 1 <= eb.lower <= eb.upper

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), st.floats(0.05, 2.0))
    def test_greedy_cover_and_packing_random_sets(self, xs, U):
        G = np.asarray(xs)[:, None]
        cover = G[greedy_cover(G, U)]
        pack = G[greedy_packing(G, 2 * U)]
        assert verify_cover(G, cover, U)
        assert len(pack) <= len(cover)


class TestUsage:
    def test_injective(self, p):
        stub = IntervalStub(p)
        dl = description_length(stub, np.linspace(0, 1, 40)[:, None], 0.5)
        scales = dl.entry((1,)).grid.scales[0]
        X = ((scales - p.a) / (p.b - p.a))[:, None]
        ua = used_codes(stub, X, dl)
        assert ua.used_counts == [len(scales)] and ua.residual == 0

    def test_identical_samples(self, p):
        stub = IntervalStub(p)
        dl = description_length(stub, np.full((25, 1), 0.4), 0.2)
        ua = used_codes(stub, np.full((25, 1), 0.4), dl)
        assert ua.used_total == 1 and ua.residual == sum(ua.set_sizes) - 1

    def test_requires_regular(self, p):
        class Steep(IntervalStub):
            def decode(self, Z):
                return 1e9 * super().decode(Z)

        dl = description_length(Steep(p), np.linspace(0, 1, 10)[:, None], 1e-6)
        with pytest.raises(NotCertifiedError):
            used_codes(Steep(p), np.zeros((2, 1)), dl)

    @pytest.mark.slow
    def test_trained_used_codes_cover_samples(self, trained_model, trained_dl):
        X, dl = trained_dl
        ua = used_codes(trained_model, X, dl, essence_bounds(two_circles(), U_RUN))
        assert ua.unseen_samples == 0 and ua.residual >= 0
        assert all(u <= s for u, s in zip(ua.used_counts, ua.set_sizes))
        plain = np.linalg.norm(X - trained_model.reconstruct(X), axis=1)
        assert plain.max() <= U_RUN / 2
        assert ua.max_distance_to_used_code <= U_RUN


class TestTheorems:
    def test_constant_on_single_point(self, p):
        class Const(IntervalStub):
            def decode(self, Z):
                return np.full((np.atleast_2d(Z).shape[0], 1), 0.3)

        stub = Const(p)
        dl = description_length(stub, np.full((5, 1), 0.3), 0.2)
        r = theorem1_check(dl, essence_bounds(single_point([0.3]), 0.2))
        assert r.holds and r.bits == 0.0 and r.log2_lower == 0.0

    def test_u_mismatch(self, p):
        dl = description_length(IntervalStub(p), np.full((5, 1), 0.3), 0.2)
        with pytest.raises(InvalidInputError):
            theorem1_check(dl, essence_bounds(single_point([0.3]), 0.4))

    def test_requires_regular(self, p):
        class Steep(IntervalStub):
            def decode(self, Z):
                return 1e9 * super().decode(Z)

        dl = description_length(Steep(p), np.linspace(0, 1, 10)[:, None], 1e-6)
        with pytest.raises(NotCertifiedError):
            theorem1_check(dl, essence_bounds(single_point([0.3]), 1e-6))

    def test_score_arithmetic(self):
        perfect = UsageAccounting([(1,)], [4], [4], 4, 4, 0.0)
        assert theorem2_score(perfect) == 0
        ua = UsageAccounting([(1,), (2,)], [6, 4], [5, 2], 5, 5, 0.0)
        assert (ua.residual, ua.redundancy_vs_lower) == (3, 2)
        assert theorem2_score(ua) == 5

    def test_ranking_matches_total_minus_essence(self, rng):
        cands = []
        for _ in range(12):
            sizes = rng.integers(1, 50, size=3).tolist()
            used = [int(rng.integers(1, s + 1)) for s in sizes]
            cands.append(UsageAccounting([(1,), (2,), (3,)], sizes, used, 7, 11, 0.0))
        for against, E in (("lower", 7), ("upper", 11)):
            scores = [theorem2_score(c, against) for c in cands]
            assert scores == [sum(c.set_sizes) - E for c in cands]
            assert np.argsort(scores, kind="stable").tolist() == \
                np.argsort([sum(c.set_sizes) for c in cands], kind="stable").tolist()

    def test_bad_against(self):
        with pytest.raises(InvalidInputError):
            theorem2_score(UsageAccounting([], [], [], 1, 1, 0.0), "middle")

    @pytest.mark.slow
    def test_trained_theorem1(self, trained_dl):
        _, dl = trained_dl
        r = theorem1_check(dl, essence_bounds(two_circles(), U_RUN))
        assert r.holds and r.margin > 0

    @pytest.mark.slow
    def test_inflated_alpha_is_flagged(self, trained_model, trained_dl):
        """Negative control: widening a certified box without re-certifying is caught."""
        _, dl = trained_dl
        e = dl.entries[0]
        budget = CertBudget()
        widened = certify(trained_model, e.pattern, [8 * a for a in e.box.alphas], U_RUN / 2,
                          trained_model.params, budget)
        assert not widened.valid and widened.violations > 0
        assert replay(trained_model, e.box.certificate, trained_model.params, budget, 1.0).valid


class TestBoundary:
    def test_single_pattern(self, circles_03, p):
        assert on_boundary_pairs(GlobalPatternStub(p), circles_03, 0.3).pair_count == 0

    def test_separated_circles(self, circles_03, p):
        # the two disks are 0.6 apart, more than U/2
        assert on_boundary_pairs(CircleStub(p), circles_03, 0.3).pair_count == 0

    def test_split_right_circle(self, p):
        eb = essence_bounds(two_circles(), 0.15)
        rep = on_boundary_pairs(SplitStub(p), eb, 0.3)
        assert rep.pair_count > 0 and rep.threshold == 0.15
        for a, b, P, Q in rep.pairs:
            assert np.linalg.norm(a - b) <= 0.15 * (1 + 1e-12) and P != Q
            assert min(a[0], b[0]) < 5.0 <= max(a[0], b[0])

    def test_pairs_reserializable(self, p):
        eb = essence_bounds(two_circles(), 0.15)
        for row in on_boundary_pairs(SplitStub(p), eb, 0.3).rows():
            assert row[-1] <= 0.15 * (1 + 1e-12) and row[4] != row[5]

    @pytest.mark.slow
    def test_trained_model(self, trained_model):
        eb = essence_bounds(two_circles(), U_RUN)
        assert on_boundary_pairs(trained_model, eb, U_RUN).pair_count == 0
