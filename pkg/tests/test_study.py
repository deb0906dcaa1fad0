import math
from concurrent.futures import ThreadPoolExecutor

import pytest

from qglab.graph import interval, star
from qglab.manifold.study import HPolicy, convergence_study, effective_graph
from qglab.regimes import ScalingRegime

PI2 = math.pi ** 2
COARSE = HPolicy(h=0.04)


@pytest.fixture(scope="module")
def fast_report():
    return convergence_study(star(3), ScalingRegime("fast", 1.0), [0.2, 0.1], 4, COARSE)


def test_report_shape(fast_report):
    r = fast_report
    assert r.regime == "fast" and r.eps == (0.2, 0.1) and r.k == 4
    assert len(r.runs) == 2 and all(len(x.fine) == 4 for x in r.runs)
    assert r.runs[0].h == pytest.approx(0.02)
    assert r.limit.expanded()[:4] == pytest.approx([0, PI2 / 4, PI2 / 4, PI2])
    assert len(r.deviation) == 2 and len(r.certified) == 2 and len(r.trend) == 4
    assert r.trend[0] == "exact"
    assert all(isinstance(c, bool) for row in r.certified for c in row)


def test_deviation_definition(fast_report):
    r = fast_report
    lim = r.limit.expanded()
    for run, dev in zip(r.runs, r.deviation):
        for i in range(4):
            assert dev[i] == pytest.approx(abs(run.fine[i] - lim[i]))


def test_executor_does_not_change_result(fast_report):
    with ThreadPoolExecutor(2) as ex:
        par = convergence_study(star(3), ScalingRegime("fast", 1.0), [0.2, 0.1], 4, COARSE,
                                executor=ex)
    assert par == fast_report


def test_effective_graph_volumes():
    g = effective_graph(interval(vol=0.0), "borderline")
    assert all(v.vol == 0.75 for v in g.vertices)
    g = effective_graph(interval(vol=2.0), "slow")
    assert all(v.vol == 2.0 for v in g.vertices)


def test_argument_errors():
    with pytest.raises(ValueError):
        convergence_study(star(3), ScalingRegime("fast", 1.0), [0.1, 0.2], 3, COARSE)
    with pytest.raises(ValueError):
        convergence_study(star(3), ScalingRegime("fast", 1.0), [], 3, COARSE)
    with pytest.raises(ValueError):
        convergence_study(star(3), ScalingRegime("fast", 1.0), [0.2], 0, COARSE)
    with pytest.raises(ValueError):
        HPolicy(h=0.01, ratio=2.0)
