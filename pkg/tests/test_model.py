import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrfseg.model import (
    Labeling,
    ModelError,
    MrfInstance,
    build_instance,
    energy,
    extract_labeling,
    instance_summary,
    lower_model,
)
from mrfseg.scribbles import UnaryField, scribbles_from_nodes
from mrfseg.synth import make_rag, random_bundle, two_node_instance


def path_graph(n, features=None):
    return make_rag([(i, i + 1) for i in range(n - 1)], [1] * n, features=features)


class TestBuildInstance:
    def test_ilp_p_has_no_connectivity(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0], 2: [2]})
        inst = build_instance(g, UnaryField(np.zeros((3, 2))), s, 0.2, "ilp-p")
        assert inst.connectivity_required == (False, False)

    def test_ilp_pcb_exempts_background(self):
        g = path_graph(4)
        s = scribbles_from_nodes(g, {1: [0], 2: [1], 3: [3]}, background_label=3)
        inst = build_instance(g, UnaryField(np.zeros((4, 3))), s, 0.2, "ilp-pcb")
        assert inst.connectivity_required == (True, True, False)
        assert inst.background_label == 3

    def test_ilp_pcb_requires_background(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0], 2: [2]})
        with pytest.raises(ModelError, match="background"):
            build_instance(g, UnaryField(np.zeros((3, 2))), s, 0.2, "ilp-pcb")

    def test_ilp_pc_warns_and_ignores_background(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0], 2: [2]}, background_label=2)
        with pytest.warns(UserWarning, match="ignored"):
            inst = build_instance(g, UnaryField(np.zeros((3, 2))), s, 0.2, "ilp-pc")
        assert inst.connectivity_required == (True, True)

    def test_scribble_nodes_become_fixed(self):
        g = make_rag([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], [1] * 6)
        s = scribbles_from_nodes(g, {1: [2, 5], 2: [0]})
        inst = build_instance(g, UnaryField(np.zeros((6, 2))), s, 0.2, "ilp-pc")
        assert set(inst.fixed) == {(2, 1), (5, 1), (0, 2)}
        assert inst.roots == (2, 0)

    def test_lam_validation(self):
        g = path_graph(2)
        s = scribbles_from_nodes(g, {1: [0], 2: [1]})
        with pytest.raises(ModelError):
            build_instance(g, UnaryField(np.zeros((2, 2))), s, 1.5, "ilp-pc")

    def test_summary_is_jsonable(self):
        import json

        inst = two_node_instance()
        json.dumps(instance_summary(inst))


class TestLowerModel:
    def test_two_node_counts(self):
        inst = two_node_instance()
        vs = lower_model(inst)
        assert vs.num_x == 4
        assert vs.problem.num_cols == 4 + 4  # 4 binaries + 4 slack pairs on 1 edge
        assert vs.problem.num_rows == 2 + 2

    def test_3x3_grid_counts(self):
        from mrfseg.synth import random_grid_rag

        rng = np.random.default_rng(0)
        g = random_grid_rag(rng, 3, 3)
        s = scribbles_from_nodes(g, {1: [0], 2: [8]})
        inst = build_instance(g, UnaryField(rng.random((9, 2))), s, 0.2, "ilp-pc")
        vs = lower_model(inst)
        assert vs.num_x == 18
        assert vs.problem.num_cols == 18 + 48  # 2 * 12 edges * 2 labels
        assert vs.problem.num_rows == 9 + 24

    def test_objective_coefficients(self):
        inst = two_node_instance(lam=0.2)
        vs = lower_model(inst)
        g = inst.graph
        for i in range(2):
            for label in (1, 2):
                expect = 0.8 * g.sigma[i] * inst.unary.c[i, label - 1]
                assert vs.problem.c[vs.x_index(i, label)] == pytest.approx(expect)
        for label in (1, 2):
            for pos in (True, False):
                assert vs.problem.c[vs.eps_index(0, label, pos)] == pytest.approx(0.2 * g.gamma[0])

    def test_lam_zero_kills_slack_costs(self):
        inst = two_node_instance(lam=0.0)
        vs = lower_model(inst)
        assert (vs.problem.c[vs.num_x :] == 0).all()

    def test_fixed_bounds(self):
        inst = two_node_instance()
        vs = lower_model(inst)
        p = vs.problem
        assert p.lb[vs.x_index(0, 1)] == 1.0
        assert p.ub[vs.x_index(0, 2)] == 0.0
        assert p.lb[vs.x_index(1, 2)] == 1.0
        assert p.ub[vs.x_index(1, 1)] == 0.0


class TestEnergy:
    def test_two_node_examples(self):
        inst = two_node_instance(lam=0.2)
        assert energy(inst, Labeling((1, 2))) == pytest.approx(0.8 * 0 + 0.2 * 2)
        assert energy(inst, Labeling((1, 1))) == pytest.approx(0.8 * 1)

    def test_lam_zero_is_pure_unary(self):
        inst = two_node_instance(lam=0.0)
        assert energy(inst, Labeling((2, 1))) == pytest.approx(2.0)
        assert energy(inst, Labeling((1, 2))) == pytest.approx(0.0)

    def test_unlabeled_rejected(self):
        inst = two_node_instance()
        with pytest.raises(ModelError, match="unlabeled"):
            energy(inst, Labeling((1, 0)))

    @given(st.integers(0, 2**32 - 1))
    def test_lower_model_objective_matches_energy(self, seed):
        rng = np.random.default_rng(seed)
        b = random_bundle(rng)
        inst = b.instance("ilp-pc")
        vs = lower_model(inst)
        fixed = dict(inst.fixed)
        labels = [
            fixed.get(i, int(rng.integers(1, inst.k + 1))) for i in range(b.graph.n)
        ]
        lab = Labeling(tuple(labels))
        x = np.zeros(vs.problem.num_cols)
        for i, label in enumerate(labels):
            x[vs.x_index(i, label)] = 1.0
        for e, (i, j) in enumerate(vs.edges):
            for label in range(1, inst.k + 1):
                d = x[vs.x_index(i, label)] - x[vs.x_index(j, label)]
                x[vs.eps_index(e, label, True)] = max(d, 0.0)
                x[vs.eps_index(e, label, False)] = max(-d, 0.0)
        assert vs.problem.c @ x == pytest.approx(energy(inst, lab), abs=1e-9)


class TestExtractLabeling:
    def test_exact_binary(self):
        inst = two_node_instance()
        lab = extract_labeling(inst, [1, 0, 0, 1])
        assert lab.labels == (1, 2)
        assert lab.is_total

    def test_fractional_unlabeled(self):
        inst = two_node_instance()
        lab = extract_labeling(inst, [0.5, 0.5, 1, 0], tol=1e-6)
        assert lab.labels == (0, 1)
        assert not lab.is_total

    def test_within_tolerance(self):
        inst = two_node_instance()
        lab = extract_labeling(inst, [1 - 1e-9, 1e-9, 0, 1])
        assert lab.labels == (1, 2)

    def test_two_active_labels_rejected(self):
        inst = two_node_instance()
        with pytest.raises(ModelError, match="two labels"):
            extract_labeling(inst, [1, 1, 0, 1])
