import math

import pytest
from hypothesis import given, strategies as st

from qglab.graph import (BORDERLINE, DIRICHLET, KIRCHHOFF, DanglingEndpoint, DensityProfile,
                         DisconnectedGraph, GraphParseError, InvalidCondition, NonPositiveDensity,
                         NonPositiveLength, VertexCondition, build_metric_graph, graph_to_spec,
                         interval, load_graph, loop, star)


def _spec(**over):
    spec = {"vertices": [{"id": "a"}, {"id": "b"}],
            "edges": [{"id": "e", "init": "a", "fin": "b", "length": 1.0}]}
    spec.update(over)
    return spec


def test_single_edge():
    g = build_metric_graph(_spec())
    assert len(g.edges) == 1 and len(g.vertices) == 2
    assert [g.degree(k) for k in range(2)] == [1, 1]


def test_loop_has_two_half_edges():
    g = loop()
    assert len(g.edges) == 1 and len(g.vertices) == 1
    labels = {h.label for h in g.half_edges[0]}
    assert len(labels) == 2


def test_star_center_incidence():
    g = star(3)
    c = g.vertex_index["c"]
    assert len(g.edges) == 3 and len(g.vertices) == 4
    assert sorted(h.edge for h in g.half_edges[c]) == [0, 1, 2]
    assert g.total_length == 3.0


@pytest.mark.parametrize("over, err", [
    ({"edges": [{"init": "a", "fin": "b", "length": 0.0}]}, NonPositiveLength),
    ({"edges": [{"init": "a", "fin": "b", "length": -1.0}]}, NonPositiveLength),
    ({"edges": [{"init": "a", "fin": "zz", "length": 1.0}]}, DanglingEndpoint),
    ({"vertices": [{"id": "a"}, {"id": "b"}, {"id": "c"}]}, DisconnectedGraph),
    ({"edges": [{"init": "a", "fin": "b", "length": 1.0,
                 "density": {"kind": "polynomial", "coeffs": [1.0, -2.0]}}]}, NonPositiveDensity),
    ({"colour": "red"}, GraphParseError),
    ({"edges": [{"init": "a", "fin": "b", "length": 1.0, "weight": 2}]}, GraphParseError),
    ({"condition": "robin"}, InvalidCondition),
    ({"loose_end": "robin"}, GraphParseError),
    ({"vertices": [{"id": "a", "vol": -1}, {"id": "b"}]}, GraphParseError),
    ({"edges": [{"init": "a", "fin": "b", "length": 1.0,
                 "density": {"kind": "polynomial", "coeffs": [1.0] * 10}}]}, GraphParseError),
])
def test_rejections_are_typed(over, err):
    with pytest.raises(err):
        build_metric_graph(_spec(**over))


def test_condition_parsing():
    assert VertexCondition.parse("Kirchhoff") == KIRCHHOFF
    assert VertexCondition.parse("delta:1.5") == VertexCondition("delta", 1.5)
    assert VertexCondition.parse("dirichlet-decoupled") == DIRICHLET
    assert VertexCondition.parse("borderline") == BORDERLINE
    with pytest.raises(InvalidCondition):
        VertexCondition.parse("delta")
    with pytest.raises(InvalidCondition):
        VertexCondition("kirchhoff", 2.0)


def test_polynomial_density():
    p = DensityProfile((1.0, 2.0, 1.0))
    assert p(1.0) == pytest.approx(4.0)
    assert p.derivative(1.0) == pytest.approx(4.0)
    assert not p.is_constant and p.degree == 2


def test_yaml_roundtrip(tmp_path):
    g = build_metric_graph(_spec(
        vertices=[{"id": "a", "vol": 0.5, "condition": "delta:2"}, {"id": "b"}],
        edges=[{"id": "e", "init": "a", "fin": "b", "length": 2.0,
                "density": {"kind": "polynomial", "coeffs": [1.0, 1.0]}}],
        loose_end="dirichlet"))
    import yaml
    path = tmp_path / "g.yaml"
    path.write_text(yaml.safe_dump(graph_to_spec(g)))
    assert load_graph(path) == g


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("vertices: [\n")
    with pytest.raises(GraphParseError):
        load_graph(path)


def test_with_condition_and_volumes():
    g = star(3).with_condition(BORDERLINE).with_volumes(0.25)
    assert all(v.vol == 0.25 for v in g.vertices)
    assert all(g.condition_at(k) == BORDERLINE for k in range(4))


@given(st.integers(1, 6), st.floats(0.1, 5.0))
def test_star_invariants(n, length):
    g = star(n, length)
    assert math.isclose(g.total_length, n * length)
    assert sum(g.degree(k) for k in range(len(g.vertices))) == 2 * n
