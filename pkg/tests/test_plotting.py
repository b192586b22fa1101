import numpy as np

from resurgence import dfs, plotting
from resurgence.pathgeo import PolyPath

OMEGA = dfs.make_dfs([(0, []), (2, [1, 2])], 6)
LOOP = PolyPath.through([1.5, 2 - 0.5j, 2.5, 2 + 0.5j, 1.5])


def test_deterministic_bytes():
    scene = plotting.Scene(OMEGA, [LOOP.array], title="loop")
    assert plotting.render_svg(scene) == plotting.render_svg(scene)


def test_empty_scene_renders():
    svg = plotting.render_svg(plotting.Scene())
    assert svg.startswith("<?xml") and "</svg>" in svg


def test_single_polyline_and_tracks():
    tracks = [np.array([[0, 0.5], [0.2j, 0.6 + 0.1j]])]
    a = plotting.render_svg(plotting.Scene(None, [PolyPath.through([1]).array]))
    b = plotting.render_svg(plotting.Scene(None, [PolyPath.through([1]).array], tracks))
    assert a != b


def test_profiles_and_terms():
    svg = plotting.render_profiles([0, 1, 2], [[1, 2, 4]], ["pole:1"])
    assert "</svg>" in svg
    svg = plotting.render_terms([0.1, 0.01j, 1e-3], [1, 1, 1])
    assert svg == plotting.render_terms([0.1, 0.01j, 1e-3], [1, 1, 1])
    assert "</svg>" in plotting.render_terms([0.1], [float("inf")])
