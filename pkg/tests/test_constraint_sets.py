import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from viab_qt import (Ball, HalfSpace, boundary_sample, distance,
                     make_constraint, make_levelset, project)
from viab_qt.constraint_sets import MEMBERSHIP_TOL
from viab_qt.errors import ConfigError, ProjectionError


class TestBall:
    def test_radial_projection(self):
        res = project(Ball(1.0, np.zeros(2)), np.array([2.0, 0.0]))
        np.testing.assert_allclose(res.point, [1.0, 0.0], atol=1e-15)
        assert res.distance == pytest.approx(1.0)
        assert res.converged

    def test_interior_is_fixed(self):
        res = project(Ball(1.0, np.zeros(2)), np.array([0.5, 0.0]))
        np.testing.assert_array_equal(res.point, [0.5, 0.0])
        assert res.distance == 0.0

    def test_distance(self):
        assert distance(Ball(1.0, np.zeros(2)), np.array([0.0, 3.0])) \
            == pytest.approx(2.0)


class TestHalfSpace:
    def test_drops_normal_component(self):
        K = HalfSpace(normal=np.array([0.0, 1.0]), offset=0.0)
        res = project(K, np.array([3.0, 2.0]))
        np.testing.assert_allclose(res.point, [3.0, 0.0], atol=1e-15)
        assert res.distance == pytest.approx(2.0)

    def test_interior(self):
        K = HalfSpace(normal=np.array([1.0]), offset=0.0)
        assert distance(K, np.array([-0.3])) == 0.0


class TestLevelSet:
    def test_distance_matches_ball_oracle(self):
        K = make_levelset("sphere", 2, scale=1.0, radius=1.0)
        # phi(x) = |x|^2 - 1, so the set is the closed unit ball
        d = distance(K, np.array([2.0, 0.0]))
        assert d == pytest.approx(1.0, abs=1e-8)

    def test_interior_identity(self):
        K = make_levelset("sphere", 2)
        res = project(K, np.array([0.3, 0.1]))
        assert res.distance == 0.0
        assert res.iterations == 0

    def test_nonconvex_complement(self):
        # scale < 0 flips to {|x| >= r}: projection pushes outward
        K = make_levelset("sphere", 2, scale=-1.0, radius=1.0,
                          anchor=np.array([2.0, 0.0]))
        res = project(K, np.array([0.5, 0.0]))
        assert res.converged
        assert np.linalg.norm(res.point) == pytest.approx(1.0, abs=1e-8)
        assert res.distance == pytest.approx(0.5, abs=1e-7)
        assert not K.convex

    def test_membership_predicate(self):
        K = make_levelset("ellipsoid", 2, coeffs=np.array([1.0, 4.0]))
        assert distance(K, np.array([0.5, 0.2])) == 0.0
        assert distance(K, np.array([2.0, 2.0])) > 0.0


class TestBoundarySampling:
    def test_ball_sampler_on_sphere(self):
        pts = boundary_sample(Ball(1.0, np.zeros(3)), 64, seed=5)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0,
                                   atol=1e-12)

    def test_halfspace_sampler_on_hyperplane(self):
        a = np.array([0.0, 1.0])
        pts = boundary_sample(HalfSpace(a, 0.0), 32, seed=6)
        np.testing.assert_array_equal(pts @ a, np.zeros(32))

    def test_levelset_sampler_matches_ball_sampler(self):
        # same set, two samplers: norms pinned to 1, directions match in
        # distribution (compare first-coordinate marginals)
        K_ls = make_levelset("sphere", 2, scale=1.0, radius=1.0)
        pts_ls = boundary_sample(K_ls, 400, seed=7)
        pts_ball = boundary_sample(Ball(1.0, np.zeros(2)), 400, seed=8)
        np.testing.assert_allclose(np.linalg.norm(pts_ls, axis=1), 1.0,
                                   atol=1e-9)
        stat = ks_2samp(pts_ls[:, 0], pts_ball[:, 0]).statistic
        assert stat < 0.12

    def test_deterministic_per_seed(self):
        a = boundary_sample(Ball(2.0, np.zeros(2)), 16, seed=11)
        b = boundary_sample(Ball(2.0, np.zeros(2)), 16, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_count_validation(self):
        with pytest.raises(ValueError):
            boundary_sample(Ball(1.0, np.zeros(2)), 0, seed=1)

    def test_unbracketed_ray_reports_error(self):
        # complement-of-ball set: rays from the anchor pointing away from
        # the ball never cross the zero level
        K = make_levelset("sphere", 2, scale=-1.0, radius=1.0,
                          anchor=np.array([3.0, 0.0]))
        with pytest.raises(ProjectionError, match="ray"):
            boundary_sample(K, 8, seed=13)


@given(seed=st.integers(0, 5000))
@settings(max_examples=40, deadline=None)
def test_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(3) * 3.0
    for K in (Ball(1.5, np.zeros(3)),
              HalfSpace(np.array([1.0, -1.0, 0.5]), 0.3),
              make_levelset("sphere", 3, scale=1.0, radius=1.2)):
        once = project(K, x).point
        twice = project(K, once).point
        np.testing.assert_allclose(twice, once, atol=1e-10)


@given(seed=st.integers(0, 5000))
@settings(max_examples=40, deadline=None)
def test_projection_nonexpansive_on_convex(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(2) * 4.0
    y = rng.standard_normal(2) * 4.0
    for K in (Ball(1.0, np.zeros(2)),
              HalfSpace(np.array([0.3, 1.0]), -0.2)):
        px = project(K, x).point
        py = project(K, y).point
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_distance_zero_iff_member():
    K = make_levelset("sphere", 2, scale=1.0, radius=1.0)
    inside = np.array([0.9, 0.0])
    outside = np.array([1.1, 0.0])
    assert K.phi(inside) <= MEMBERSHIP_TOL and distance(K, inside) == 0.0
    assert K.phi(outside) > MEMBERSHIP_TOL and distance(K, outside) > 0.0


def test_rejects_nonfinite_input():
    with pytest.raises(ValueError):
        project(Ball(1.0, np.zeros(2)), np.array([np.nan, 0.0]))


def test_factory_and_validation():
    K = make_constraint("ball", 2, radius=2.0, center=np.zeros(2))
    assert isinstance(K, Ball)
    K = make_constraint("halfspace", 2, normal=np.array([1.0, 0.0]))
    assert isinstance(K, HalfSpace)
    with pytest.raises(ConfigError):
        make_constraint("torus", 2)
    with pytest.raises(ConfigError):
        make_levelset("sphere", 2, anchor=np.array([5.0, 0.0]))  # phi > 0
    with pytest.raises(ConfigError):
        make_levelset("ellipsoid", 2, coeffs=np.array([1.0, -1.0]))
