import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import seg
from layoutslam.geometry import Axis, CorrespondenceEdge, FramePose
from layoutslam.graph import (
    GraphInputError,
    Hypothesis,
    ParameterIndex,
    assemble_measurement_system,
    build_equivalence_matrix,
    build_graph,
    build_topology_constraints,
    generate_hypotheses,
    system_to_json,
)
from layoutslam.sim import (
    GroundTruthTrajectory,
    NoiseSpec,
    generate_world,
    simulate_odometry,
    simulate_range_measurements,
)
from layoutslam.solver import solve_least_squares


def edge(a, b, axis=Axis.X):
    return CorrespondenceEdge(a, b, axis)


def five_frame_graph():
    """Five frames walking along +x past two walls; wall 0 is tracked, wall 1 is not."""
    odo = [[0.5, 0.0, 0.0]] * 4
    segs = []
    for i in range(5):
        segs.append(seg(len(segs), i, Axis.X, 3.0 - 0.5 * i))
    segs.append(seg(len(segs), 0, Axis.Y, -1.0))
    segs.append(seg(len(segs), 3, Axis.Y, -1.02))
    segs.append(seg(len(segs), 4, Axis.Z, -1.2))
    edges = [edge(i, i + 1) for i in range(4)]
    return build_graph(segs, edges, odo)


def truth_graph():
    """Range observations of a corridor from a short walk; returns (graph, xi_true, world planes)."""
    world = generate_world({"primitives": [{"type": "corridor", "origin": [0, 0], "width": 4, "length": 6}]})
    poses = [FramePose((2.0, 1.0 + 0.5 * i, 1.2), np.pi / 2) for i in range(6)]
    traj = GroundTruthTrajectory(poses)
    obs = simulate_range_measurements(world, traj, NoiseSpec())
    graph = build_graph(obs, [], simulate_odometry(traj, NoiseSpec()))
    index = ParameterIndex.for_graph(graph)
    xi = np.zeros(index.dim)
    xi[: 3 * graph.n_frames] = traj.positions().ravel()
    for s in graph.slots:
        src = next(o.source_plane for o in obs if o.segment_id == s.members[0])
        xi[index.slot(s.slot_id)] = world.planes[src].offset
    return graph, xi, obs


class TestBuildGraph:
    def test_one_wall_seen_twice(self):
        g = build_graph([seg(0, 0, Axis.X, 2.0), seg(1, 1, Axis.X, 1.8)], [edge(0, 1)], [[0.2, 0, 0]])
        assert len(g.slots) == 1 and len(g.range_factors) == 2
        assert g.slots[0].members == [0, 1]

    def test_no_edges(self):
        segs = [seg(0, 0, Axis.X, 2.0), seg(1, 1, Axis.X, 1.8), seg(2, 1, Axis.Y, 1.0)]
        assert len(build_graph(segs, [], [[0.2, 0, 0]]).slots) == 3

    def test_chain(self):
        segs = [seg(i, i, Axis.X, 2.0) for i in range(3)]
        g = build_graph(segs, [edge(0, 1), edge(1, 2)], [[0, 0, 0]] * 2)
        assert [s.members for s in g.slots] == [[0, 1, 2]]

    def test_cross_axis_edge_rejected(self):
        segs = [seg(0, 0, Axis.X, 2.0), seg(1, 1, Axis.Y, 2.0)]
        with pytest.raises(GraphInputError, match="joins"):
            build_graph(segs, [edge(0, 1)], [[0, 0, 0]])

    def test_frame_out_of_range(self):
        with pytest.raises(GraphInputError):
            build_graph([seg(0, 2, Axis.X, 1.0)], [], [[0, 0, 0]])

    def test_slots_ordered_by_axis(self):
        segs = [seg(0, 0, Axis.Z, -1.0), seg(1, 0, Axis.X, 2.0), seg(2, 0, Axis.Y, 1.0), seg(3, 0, Axis.X, -2.0)]
        g = build_graph(segs, [], np.zeros((0, 3)))
        assert [s.axis for s in g.slots] == [Axis.X, Axis.X, Axis.Y, Axis.Z]
        assert [s.members for s in g.slots] == [[1], [3], [2], [0]]


class TestAssembly:
    def test_single_frame_single_plane(self):
        g = build_graph([seg(0, 0, Axis.X, 2.0)], [], np.zeros((0, 3)))
        system = assemble_measurement_system(g)
        xi = solve_least_squares(*system.weighted())
        assert np.allclose(xi, [0, 0, 0, 2.0], atol=1e-12)

    def test_row_count_and_nonzeros(self):
        g = five_frame_graph()
        system = assemble_measurement_system(g)
        assert system.n_rows == len(g.range_factors) + 3 * (g.n_frames - 1) + 3
        nnz = np.bincount(system.A.rows, minlength=system.n_rows)
        expected = [2 if k in ("range", "odometry") else 1 for k in system.row_kind]
        assert nnz.tolist() == expected

    def test_matches_dense_reference(self):
        g = five_frame_graph()
        system = assemble_measurement_system(g, anchor_weight=1e3)
        n, ns = g.n_frames, len(g.slots)
        dim = 3 * n + ns
        rows, rhs, w = [], [], []
        for f in g.range_factors:
            r = np.zeros(dim)
            r[3 * n + f.slot] = 1.0
            r[3 * f.frame + int(f.axis)] = -1.0
            rows.append(r), rhs.append(f.d), w.append(1.0)
        for i, t in enumerate(g.odometry):
            for c in range(3):
                r = np.zeros(dim)
                r[3 * (i + 1) + c], r[3 * i + c] = 1.0, -1.0
                rows.append(r), rhs.append(t[c]), w.append(1.0)
        for c in range(3):
            r = np.zeros(dim)
            r[c] = 1.0
            rows.append(r), rhs.append(0.0), w.append(1e3)
        assert np.array_equal(system.A.toarray(), np.array(rows))
        assert np.array_equal(system.b, rhs)
        assert np.array_equal(system.weights, w)

    def test_sigma_weights(self):
        system = assemble_measurement_system(five_frame_graph(), range_sigma=0.02, odom_sigma=0.005)
        kinds = np.array(system.row_kind)
        assert np.allclose(system.weights[kinds == "range"], 50.0)
        assert np.allclose(system.weights[kinds == "odometry"], 200.0)

    def test_gauge_without_anchor(self):
        g = five_frame_graph()
        system = assemble_measurement_system(g)
        A = system.A.toarray()[np.array(system.row_kind) != "anchor"]
        s = np.linalg.svd(A, compute_uv=False)
        assert np.sum(s < 1e-10 * s[0]) == 3
        index = system.index
        for axis in Axis:
            shift = np.zeros(index.dim)
            shift[[index.pose(i, axis) for i in range(g.n_frames)]] = 1.0
            shift[[index.slot(sl.slot_id) for sl in g.slots if sl.axis == axis]] = 1.0
            assert np.allclose(A @ shift, 0.0)
        assert np.linalg.matrix_rank(system.A.toarray()) == index.dim

    def test_system_json(self):
        g = five_frame_graph()
        system = assemble_measurement_system(g)
        text = system_to_json(system)
        assert '"columns"' in text and '"mx[0]"' in text


class TestParameterIndex:
    @given(st.integers(1, 6), st.lists(st.sampled_from(list(Axis)), max_size=8))
    def test_round_trip(self, n_frames, axes):
        index = ParameterIndex(n_frames, tuple(sorted(axes)))
        for col in range(index.dim):
            kind, i, c = index.entity(col)
            assert (index.pose(i, c) if kind == "p" else index.slot(i)) == col

    def test_bounds(self):
        index = ParameterIndex(2, (Axis.X,))
        with pytest.raises(IndexError):
            index.pose(2, 0)
        with pytest.raises(IndexError):
            index.slot(1)
        assert index.name(6) == "mx[0]" and index.name(4) == "p1.y"


class TestHypotheses:
    def slots_at(self, offsets, facings=None, axis=Axis.X):
        facings = facings or [-1] * len(offsets)
        segs = [seg(i, 0, axis, d, f) for i, (d, f) in enumerate(zip(offsets, facings))]
        g = build_graph(segs, [], np.zeros((0, 3)))
        xi = np.concatenate([np.zeros(3), offsets])
        return g, xi

    def test_close_pair(self):
        g, xi = self.slots_at([3.00, 3.10])
        assert generate_hypotheses(g, xi, 0.5) == [Hypothesis(Axis.X, 0, 1)]

    def test_opposite_facing(self):
        g, xi = self.slots_at([3.00, 3.10], [-1, +1])
        assert generate_hypotheses(g, xi, 0.5) == []

    def test_gap_bound_inclusive(self):
        g, xi = self.slots_at([1.0, 1.5, 2.5])
        assert generate_hypotheses(g, xi, 0.5) == [Hypothesis(Axis.X, 0, 1)]

    def test_brute_force_pairs(self):
        rng = np.random.default_rng(11)
        segs = []
        for i in range(50):
            axis = Axis(int(rng.integers(3)))
            segs.append(seg(i, 0, axis, float(rng.uniform(-6, 6)), int(rng.choice([-1, 1]))))
        g = build_graph(segs, [], np.zeros((0, 3)))
        offsets = rng.uniform(-6, 6, len(g.slots))
        xi = np.concatenate([np.zeros(3), offsets])
        got = generate_hypotheses(g, xi, 1.0)
        ref = [
            (a.slot_id, b.slot_id)
            for a in g.slots
            for b in g.slots
            if a.slot_id < b.slot_id and a.axis == b.axis and a.facing == b.facing and abs(offsets[a.slot_id] - offsets[b.slot_id]) <= 1.0
        ]
        assert len(g.slots) == 50
        assert [(h.slot_a, h.slot_b) for h in got] == sorted(ref)


class TestEquivalenceAndTopology:
    def test_single_row(self):
        g = build_graph([seg(0, 0, Axis.X, 2.0), seg(1, 0, Axis.X, 2.1)], [], np.zeros((0, 3)))
        index = ParameterIndex.for_graph(g)
        E = build_equivalence_matrix([Hypothesis(Axis.X, 0, 1)], index)
        assert E.toarray().tolist() == [[0, 0, 0, 1, -1]]

    def test_empty(self):
        index = ParameterIndex(1, (Axis.X,))
        assert build_equivalence_matrix([], index).shape == (0, 4)

    def test_mixed_axes_rejected(self):
        index = ParameterIndex(1, (Axis.X, Axis.Y))
        with pytest.raises(ValueError):
            build_equivalence_matrix([Hypothesis(Axis.X, 0, 1)], index)

    def test_rows_annihilate_constants(self):
        g, xi, _ = truth_graph()
        index = ParameterIndex.for_graph(g)
        hyps = generate_hypotheses(g, xi, 3.0)
        E = build_equivalence_matrix(hyps, index).toarray()
        assert len(hyps) > 0
        assert np.allclose(E.sum(axis=1), 0.0)
        assert np.allclose(E @ np.ones(index.dim), 0.0)

    def test_coincident_planes_zero_gap(self):
        g, xi, obs = truth_graph()
        index = ParameterIndex.for_graph(g)
        src = {o.segment_id: o.source_plane for o in obs}
        same = [h for h in generate_hypotheses(g, xi, 1.0) if src[g.slots[h.slot_a].members[0]] == src[g.slots[h.slot_b].members[0]]]
        assert same
        E = build_equivalence_matrix(same, index)
        assert np.allclose(E.tocsr() @ xi, 0.0)

    def test_topology_signs(self):
        g = build_graph([seg(0, 0, Axis.X, 3.0), seg(1, 0, Axis.X, -3.0), seg(2, 0, Axis.Y, 0.0, facing=1)], [], np.zeros((0, 3)))
        D = build_topology_constraints(g, ParameterIndex.for_graph(g)).toarray()
        assert D.shape[0] == 2  # the zero range is skipped
        # d = +3: -(m - p) <= 0, i.e. m >= p
        assert D[0].tolist() == [1, 0, 0, -1, 0, 0]
        assert D[1].tolist() == [-1, 0, 0, 0, 1, 0]

    def test_zero_noise_optimum_is_consistent(self):
        g, xi_true, _ = truth_graph()
        system = assemble_measurement_system(g, origin=xi_true[:3])
        xi = solve_least_squares(*system.weighted())
        assert np.allclose(xi, xi_true, atol=1e-9)
        D = build_topology_constraints(g, system.index).tocsr()
        assert (D @ xi).max() <= 1e-12
