import math

import numpy as np
import pytest

from qglab.fd import FDBudgetError, eigenvalues_fd, fd_matrices
from qglab.graph import BORDERLINE, VertexCondition, interval, loop, star
from qglab.secular import eigenvalues_borderline, eigenvalues_secular

PI2 = math.pi ** 2


def test_interval_second_eigenvalue():
    s = eigenvalues_fd(interval(), None, 1024, 50.0)
    assert abs(s.values[1] - PI2) < 1e-4


def test_star_matches_secular():
    f = eigenvalues_fd(star(3), None, 1024, 50.0).expanded()
    s = eigenvalues_secular(star(3), 50.0).expanded()
    assert f.size == s.size
    np.testing.assert_allclose(f[1:], s[1:], rtol=1e-3)


def test_loop_spectrum():
    f = eigenvalues_fd(loop(), None, 2048, 200.0).expanded()
    np.testing.assert_allclose(f, [0, 4 * PI2, 4 * PI2, 16 * PI2, 16 * PI2], rtol=1e-2, atol=1e-8)


def _order(graph, k=10, ns=(256, 512, 1024, 2048), secular=eigenvalues_secular):
    ref = secular(graph, 400.0, 1e-12).expanded()[1:k + 1]
    errs = []
    for n in ns:
        f = eigenvalues_fd(graph, None, n, 400.0).expanded()[1:k + 1]
        errs.append(np.abs(f - ref))
    errs = np.array(errs)
    slopes = [-np.polyfit(np.log(ns), np.log(errs[:, i]), 1)[0] for i in range(errs.shape[1])]
    return min(slopes)


@pytest.mark.parametrize("graph", [interval(), star(3), loop(), star(4, 0.8)],
                         ids=["interval", "star3", "loop", "star4"])
def test_observed_order(graph):
    assert _order(graph) >= 1.9


def test_borderline_order():
    g = interval(cond=BORDERLINE, vol=1.0)
    assert _order(g, k=6, secular=eigenvalues_borderline) >= 1.9


def test_delta_matches_secular():
    g = star(3, cond=VertexCondition("delta", 1.5))
    f = eigenvalues_fd(g, None, 2048, 60.0).expanded()
    s = eigenvalues_secular(g, 60.0).expanded()
    np.testing.assert_allclose(f, s, rtol=1e-4)


def test_matrices_shape_and_symmetry():
    A, m = fd_matrices(star(3), 64)
    assert A.shape[0] == m.size == 3 * 64 + 1
    assert abs(A - A.T).max() == 0 and np.all(m > 0)
    assert np.abs(A @ np.ones(m.size)).max() < 1e-10


def test_budget_and_minimum_n():
    with pytest.raises(FDBudgetError):
        eigenvalues_fd(star(3), None, 10_000, 10.0, max_nodes=1000)
    with pytest.raises(ValueError):
        eigenvalues_fd(star(3), None, 8, 10.0)
