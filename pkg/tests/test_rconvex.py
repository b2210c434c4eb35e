import numpy as np
import pytest

from nfrefractor.errors import DomainError
from nfrefractor.rconvex import (ball_patch, cone_directions, count_runs, hit_mask, r_convexity_probe,
                                 tilted_normal, union_patch, whole_patch)
from nfrefractor.receiver import intersect_ray, plane, sphere_cap
from nfrefractor.refraction import MediaPair, snell

MEDIA = MediaPair.from_kappa(0.7)
VERTEX = np.array([0.0, 0.0, 0.1])


@pytest.mark.parametrize("mask,runs", [
    ([], 0), ([0, 0, 0], 0), ([1, 1, 1], 1), ([0, 1, 1, 0], 1), ([1, 0, 1], 2), ([1, 0, 1, 0, 1, 1], 3),
])
def test_count_runs(mask, runs):
    assert count_runs(np.array(mask, bool)) == runs


def test_tilted_normal_angle():
    X = np.array([0.0, 0.0, 1.0])
    nu = tilted_normal(X, 0.3, 1.1)
    assert np.linalg.norm(nu) == pytest.approx(1.0)
    assert np.arccos(nu @ X) == pytest.approx(0.3)


def test_cone_endpoints_are_refractions():
    X = np.array([0.0, 0.0, 1.0])
    nu1, nu2 = tilted_normal(X, 0.2, 0.0), tilted_normal(X, 0.2, np.pi / 2)
    Ys = cone_directions(X, nu1, nu2, MEDIA, steps=8)
    assert len(Ys) == 9
    np.testing.assert_allclose(Ys[0], snell(X, nu1, MEDIA), atol=0)
    np.testing.assert_allclose(Ys[-1], snell(X, nu2, MEDIA), atol=1e-15)
    # X and a normal tilted in the x_1 direction keep the ray in the x_1 x_3 plane
    assert abs(Ys[0][1]) < 1e-15


def test_degenerate_cone():
    X = np.array([0.0, 0.0, 1.0])
    nu = tilted_normal(X, 0.2, 0.0)
    with pytest.raises(DomainError):
        cone_directions(X, nu, -nu, MEDIA)


def sweep_hits(steps=64):
    X = VERTEX / np.linalg.norm(VERTEX)
    nu1, nu2 = tilted_normal(X, 0.3, 0.0), tilted_normal(X, 0.3, np.pi)
    Ys = cone_directions(X, nu1, nu2, MEDIA, steps)
    return Ys, np.array([intersect_ray(plane(3.0), VERTEX, Y, check_visibility=False)[1] for Y in Ys])


def test_whole_plane_is_one_run():
    Ys, _ = sweep_hits()
    assert count_runs(hit_mask(plane(3.0), VERTEX, Ys, whole_patch)) == 1


def test_two_disjoint_balls_give_two_runs():
    Ys, Zs = sweep_hits()
    a, b = Zs[12], Zs[52]
    gap = np.linalg.norm(a - b)
    patch = union_patch(ball_patch(a, 0.1 * gap), ball_patch(b, 0.1 * gap))
    assert count_runs(hit_mask(plane(3.0), VERTEX, Ys, patch)) == 2


def test_ball_on_sphere_is_connected():
    surf = sphere_cap(4.0)
    rep = r_convexity_probe(surf, ball_patch([0.0, 0.0, 4.0], 1.5),
                            [[0.0, 0.0, 0.1], [0.02, 0.01, 0.09747]], MEDIA, pairs=6, steps=256)
    assert rep.is_connected
    assert rep.connected > 0
    assert rep.connected + rep.disconnected + rep.empty == len(rep.samples)


def test_probe_detects_disconnected_patch():
    Ys, Zs = sweep_hits()
    a, b = Zs[12], Zs[52]
    gap = np.linalg.norm(a - b)
    patch = union_patch(ball_patch(a, 0.3 * gap), ball_patch(b, 0.3 * gap))
    rep = r_convexity_probe(plane(3.0), patch, [VERTEX], MEDIA, pairs=40, steps=256, seed=1)
    assert rep.disconnected > 0
    assert not rep.is_connected
    assert all(w.runs >= 2 for w in rep.witnesses)
