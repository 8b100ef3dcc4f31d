import numpy as np
import pytest

from informed_policies.model import Box
from informed_policies.plot import phase_plane_svg


def test_single_trajectory_one_polyline():
    svg = phase_plane_svg([np.array([[0, 0], [0.5, 0.1], [1, 0]])], ["only"])
    assert svg.count("<polyline") == 1 and svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_box_alpha_lines_and_legend():
    trajs = [np.array([[0, 0], [0.8, 0.1]]), np.array([[0, 0], [0.6, -0.1]])]
    svg = phase_plane_svg(trajs, ["informed", "uninformed"], Box([0, -0.5], [1, 0.5]), [0.81, 0.62], "exp1")
    assert svg.count("<polyline") == 2
    assert 'stroke-dasharray="6,3"' in svg  # state box
    assert svg.count('stroke-dasharray="2,3"') == 2  # alpha lines
    assert "informed" in svg and "uninformed" in svg and "exp1" in svg


def test_deterministic_output():
    t = [np.array([[0.1, 0.2], [0.3, 0.4]])]
    assert phase_plane_svg(t, ["a"]) == phase_plane_svg(t, ["a"])


def test_rejects_wrong_dimension_and_empty():
    with pytest.raises(ValueError):
        phase_plane_svg([np.zeros((3, 3))], ["x"])
    with pytest.raises(ValueError):
        phase_plane_svg([], [])
    with pytest.raises(ValueError):
        phase_plane_svg([np.zeros((0, 2))], ["x"])


def test_labels_are_escaped():
    svg = phase_plane_svg([np.array([[0, 0], [1, 1]])], ["a<b&c"])
    assert "a&lt;b&amp;c" in svg
