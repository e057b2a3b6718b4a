import math

import numpy as np
import pytest

from spectrum_mdl.datasets import (
    TWO_CIRCLE_CENTERS,
    TWO_CIRCLE_RADIUS,
    empirical,
    gen_data,
    get_support,
    read_points,
    ring,
    two_circles,
    write_points,
)
from spectrum_mdl.errors import ConfigError, EmptyInputError, InputShapeError


def in_some_disk(X):
    d = np.stack([np.linalg.norm(X - c, axis=1) for c in TWO_CIRCLE_CENTERS], axis=1)
    return (d <= TWO_CIRCLE_RADIUS).any(axis=1)


class TestGenData:
    def test_single_point_reproducible(self):
        a = gen_data("two-circles", 1, seed=11)
        b = gen_data("two-circles", 1, seed=11)
        assert a.shape == (1, 2) and in_some_disk(a).all()
        assert a.tobytes() == b.tobytes()

    def test_left_fraction(self):
        n = 10_000
        X = gen_data("two-circles", n, seed=0)
        left = np.mean(np.linalg.norm(X - TWO_CIRCLE_CENTERS[0], axis=1) <= TWO_CIRCLE_RADIUS)
        assert abs(left - 0.5) <= 3 * math.sqrt(0.25 / n)

    def test_membership(self):
        X = gen_data("two-circles", 5000, seed=2)
        assert in_some_disk(X).all() and two_circles().membership(X).all()

    def test_uniform_radius(self):
        # uniform on a disk: P(r <= R/2) = 1/4
        X = gen_data("two-circles", 20_000, seed=5)
        r = np.min([np.linalg.norm(X - c, axis=1) for c in TWO_CIRCLE_CENTERS], axis=0)
        frac = np.mean(r <= TWO_CIRCLE_RADIUS / 2)
        assert abs(frac - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / 20_000)

    def test_ring(self):
        X = ring().sample(2000, 1)
        r = np.linalg.norm(X - 2.0, axis=1)
        assert np.all((r >= 0.6) & (r <= 1.2))

    def test_bounds(self):
        s = two_circles()
        np.testing.assert_allclose(s.lam, [0.8, 0.8])
        np.testing.assert_allclose(s.mu, [6.2, 3.2])

    @pytest.mark.parametrize("name", ["moons", "custom"])
    def test_unknown_or_missing_file(self, name):
        with pytest.raises(ConfigError):
            gen_data(name, 5, 0)

    def test_n_positive(self):
        with pytest.raises(ConfigError):
            gen_data("two-circles", 0, 0)


class TestPointFiles:
    def test_round_trip(self, tmp_path, rng):
        X = rng.normal(size=(17, 3))
        path = write_points(X, tmp_path / "p.csv")
        assert path.read_text().splitlines()[0] == "x1,x2,x3"
        np.testing.assert_array_equal(read_points(path), X)

    def test_custom_support(self, tmp_path, rng):
        X = rng.random((30, 2))
        s = get_support("custom", write_points(X, tmp_path / "p.csv"))
        assert s.membership(X).all() and s.points.shape == (30, 2)
        assert s.membership(s.sample(50, 0)).all()

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(InputShapeError):
            read_points(tmp_path / "bad.csv")

    def test_empty(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(EmptyInputError):
            read_points(tmp_path / "e.csv")
        with pytest.raises(EmptyInputError):
            empirical(np.zeros((0, 2)))
