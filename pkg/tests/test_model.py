import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapefit import (
    DirectionGraph,
    PointCloud,
    ProblemInstance,
    apply_gauge,
    validate_instance,
)


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def triangle_instance():
    """Complete 3-vertex graph with exact unit directions."""
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    edges = [(0, 1), (0, 2), (1, 2)]
    dirs = [_unit(pts[i] - pts[j]) for i, j in edges]
    graph = DirectionGraph(n=3, edges=np.array(edges), directions=np.array(dirs))
    return ProblemInstance(graph=graph, truth=PointCloud(pts))


class TestPointCloud:
    def test_basic(self):
        c = PointCloud([[0.0, 0.0], [1.0, 2.0]])
        assert c.n == 2 and c.dimension == 2

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            PointCloud([[0.0, 0.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PointCloud([[0.0, np.nan], [1.0, 2.0]])

    def test_immutable(self):
        c = PointCloud([[0.0, 0.0], [1.0, 2.0]])
        with pytest.raises(ValueError):
            c.points[0, 0] = 5.0


class TestApplyGauge:
    def test_identity(self):
        c = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        out = apply_gauge(c, 1.0, np.zeros(3))
        np.testing.assert_array_equal(out.points, c.points)

    def test_direct_substitution(self):
        c = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        out = apply_gauge(c, 2.0, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(
            out.points, [[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]]
        )

    def test_rejects_nonpositive_alpha(self):
        c = PointCloud([[0.0, 0.0], [1.0, 0.0]])
        for alpha in (0.0, -1.0):
            with pytest.raises(ValueError):
                apply_gauge(c, alpha, np.zeros(2))

    @given(
        alpha=st.floats(0.01, 100.0),
        beta=st.floats(0.01, 100.0),
        w=st.lists(st.floats(-50, 50), min_size=3, max_size=3),
        u=st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    )
    @settings(max_examples=50, deadline=None)
    def test_composition(self, alpha, beta, w, u):
        c = PointCloud([[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [-2.0, 0.0, 1.0]])
        w, u = np.array(w), np.array(u)
        two_step = apply_gauge(apply_gauge(c, alpha, w), beta, u)
        one_step = apply_gauge(c, alpha * beta, w + u / alpha)
        np.testing.assert_allclose(two_step.points, one_step.points,
                                   rtol=1e-12, atol=1e-12)

    @given(
        alpha=st.floats(0.01, 100.0),
        w=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    )
    @settings(max_examples=50, deadline=None)
    def test_directions_invariant(self, alpha, w):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(5, 3))
        out = apply_gauge(PointCloud(pts), alpha, np.array(w)).points
        for i in range(5):
            for j in range(i + 1, 5):
                np.testing.assert_allclose(
                    _unit(out[i] - out[j]), _unit(pts[i] - pts[j]), atol=1e-14
                )


class TestDirectionGraph:
    def test_canonicalizes_flipped_edges(self):
        v = _unit([1.0, 2.0, 3.0])
        g = DirectionGraph(n=3, edges=[[2, 0]], directions=[v])
        assert tuple(g.edges[0]) == (0, 2)
        np.testing.assert_allclose(g.directions[0], -v)

    def test_rejects_out_of_range_vertex(self):
        with pytest.raises(ValueError):
            DirectionGraph(n=2, edges=[[0, 5]], directions=[[1.0, 0.0, 0.0]])

    def test_connectivity(self):
        v = [[1.0, 0.0, 0.0]]
        assert not DirectionGraph(n=3, edges=[[0, 1]], directions=v).is_connected()
        g = DirectionGraph(
            n=3, edges=[[0, 1], [1, 2]], directions=[v[0], v[0]]
        )
        assert g.is_connected()


class TestValidateInstance:
    def test_valid_triangle(self):
        assert validate_instance(triangle_instance()) == []

    def test_short_direction_named(self):
        inst = triangle_instance()
        dirs = inst.graph.directions.copy()
        dirs[0] = dirs[0] * 0.5
        bad = ProblemInstance(
            graph=DirectionGraph(n=3, edges=inst.graph.edges.copy(),
                                 directions=dirs),
            truth=inst.truth,
        )
        violations = validate_instance(bad)
        assert len(violations) == 1
        assert "edge 0" in violations[0]

    def test_disconnected(self):
        v = _unit([1.0, 1.0, 0.0])
        g = DirectionGraph(
            n=4, edges=[[0, 1], [2, 3]], directions=[v, v]
        )
        violations = validate_instance(ProblemInstance(graph=g))
        assert violations == ["graph: not connected"]

    def test_duplicate_and_self_loop(self):
        v = _unit([1.0, 0.0, 0.0])
        g = DirectionGraph(
            n=3, edges=[[0, 1], [1, 0], [2, 2]], directions=[v, v, v]
        )
        msgs = "\n".join(validate_instance(ProblemInstance(graph=g)))
        assert "duplicate" in msgs and "self-loop" in msgs

    def test_partition_crossing(self):
        v = _unit([1.0, 0.0, 0.0])
        g = DirectionGraph(
            n=3, edges=[[0, 1], [0, 2], [1, 2]], directions=[v, v, v],
            partition=[True, False, False],
        )
        msgs = validate_instance(ProblemInstance(graph=g))
        assert any("edge 2" in m and "partition" in m for m in msgs)

    def test_truth_mismatch(self):
        inst = triangle_instance()
        wrong = ProblemInstance(
            graph=inst.graph,
            truth=PointCloud(np.zeros((4, 3)) + np.arange(4)[:, None]),
        )
        assert any("truth" in m for m in validate_instance(wrong))

    def test_corrupted_out_of_range(self):
        inst = triangle_instance()
        bad = ProblemInstance(graph=inst.graph, corrupted_edges=[7])
        assert any("corrupted_edges" in m for m in validate_instance(bad))
