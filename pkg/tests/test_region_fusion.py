import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrfseg.model import energy
from mrfseg.oracle import brute_force, connectivity_check
from mrfseg.region_fusion import (
    FusionError,
    beta_schedule,
    init_state,
    merge_predicate,
    run_fusion,
)
from mrfseg.scribbles import scribbles_from_nodes
from mrfseg.synth import make_rag, random_bundle


def path_graph(n, features=None, sigma=None):
    return make_rag(
        [(i, i + 1) for i in range(n - 1)],
        sigma if sigma is not None else [1] * n,
        features=features,
    )


class TestInit:
    def test_k_groups_when_fully_covered(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0, 1], 2: [2]})
        st_ = init_state(g, s, 0.1)
        assert st_.num_groups == 2

    def test_singletons_for_uncovered(self):
        g = path_graph(5)
        s = scribbles_from_nodes(g, {1: [0], 2: [4]})
        st_ = init_state(g, s, 0.1)
        assert st_.num_groups == 5
        assert sorted(v for v in st_.tag.values() if v) == [1, 2]

    def test_multi_node_scribble_merges(self):
        g = path_graph(5, sigma=[2, 3, 1, 1, 1])
        s = scribbles_from_nodes(g, {1: [1, 2], 2: [4]})
        st_ = init_state(g, s, 0.1)
        assert st_.size[0] == 4  # sigma 3 + 1

    def test_disconnected_scribble_rejected(self):
        g = path_graph(5)
        s = scribbles_from_nodes(g, {1: [0, 4], 2: [2]})
        with pytest.raises(FusionError, match="disconnected"):
            init_state(g, s, 0.1)


class TestPredicate:
    def test_equal_means_merge(self):
        g = path_graph(3, features=[[0.5], [0.5], [0.9]])
        s = scribbles_from_nodes(g, {1: [0], 2: [2]})
        st_ = init_state(g, s, 0.1)
        st_.beta = 0.0
        assert merge_predicate(st_, 0, 2)  # groups 0 (node 0) and 2 (node 1)

    def test_arithmetic(self):
        # sizes 2, 3, |dY| = 0.2, gamma = 1, beta = 0.1: 1.2 > 0.5 -> no merge
        g = make_rag([(0, 1), (1, 2)], [2, 3, 1], features=[[0.2], [0.4], [0.9]])
        s = scribbles_from_nodes(g, {1: [0], 2: [2]})
        st_ = init_state(g, s, 0.1)
        st_.beta = 0.1
        assert not merge_predicate(st_, 0, 2)
        st_.beta = 1.2 / 5.0 + 1e-12
        assert merge_predicate(st_, 0, 2)

    def test_tag_conflict_blocks(self):
        g = path_graph(2, features=[[0.5], [0.5]])
        s = scribbles_from_nodes(g, {1: [0], 2: [1]})
        st_ = init_state(g, s, 0.1)
        st_.beta = 100.0
        assert not merge_predicate(st_, 0, 1)

    def test_non_adjacent_rejected(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0], 2: [2]})
        st_ = init_state(g, s, 0.1)
        with pytest.raises(FusionError, match="not adjacent"):
            merge_predicate(st_, 0, 1)


class TestSchedule:
    def test_reference_points(self):
        assert beta_schedule(100, 0.1) == pytest.approx(0.1, rel=1e-12)
        assert beta_schedule(200, 0.1) == pytest.approx(0.1 * 2**2.2, rel=1e-12)
        assert beta_schedule(300, 0.1) == pytest.approx(0.1 * 3**2.2, rel=1e-12)
        assert beta_schedule(200, 0.1) == pytest.approx(0.4595, abs=5e-5)


class TestRun:
    def test_immediate_return_at_k_groups(self):
        g = path_graph(3)
        s = scribbles_from_nodes(g, {1: [0, 1], 2: [2]})
        st_ = init_state(g, s, 0.1)
        lab = run_fusion(st_)
        assert lab.labels == (1, 1, 2)
        assert st_.iter_count == 0

    def test_uniform_two_segments(self):
        g = path_graph(6, features=[[0.5]] * 6)
        s = scribbles_from_nodes(g, {1: [0], 2: [5]})
        lab = run_fusion(init_state(g, s, 0.1))
        arr = lab.as_array()
        assert arr[0] == 1 and arr[5] == 2
        assert sorted(set(arr.tolist())) == [1, 2]

    def test_uniform_matches_oracle_when_unaries_flat(self):
        from mrfseg.model import MrfInstance
        from mrfseg.scribbles import UnaryField

        g = path_graph(5, features=[[0.5]] * 5)
        s = scribbles_from_nodes(g, {1: [0], 2: [4]})
        from mrfseg.model import build_instance

        inst = build_instance(g, UnaryField(np.full((5, 2), 0.3)), s, 0.05, "ilp-pc")
        lab = run_fusion(init_state(g, s, 0.1))
        assert energy(inst, lab) == pytest.approx(brute_force(inst).energy)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_feasibility_invariants(self, seed):
        rng = np.random.default_rng(seed)
        b = random_bundle(rng)
        state = init_state(b.graph, b.scribbles, 0.1)
        total_sigma = sum(state.size.values())
        lab = run_fusion(state)
        assert state.num_groups == b.scribbles.k
        assert sum(state.size.values()) == total_sigma == int(b.graph.sigma.sum())
        inst = b.instance("ilp-pc")
        assert connectivity_check(b.graph, lab, inst)
        arr = lab.as_array()
        for node, label in inst.fixed:
            assert arr[node] == label
        # group means stay exact size-weighted means of member features
        for gid, fsum in state.feat_sum.items():
            members = [
                node
                for node in range(b.graph.n)
                if state.find(int(state.node_group[node])) == gid
            ]
            w = b.graph.sigma[members].astype(float)
            expect = (b.graph.features[members] * w[:, None]).sum(axis=0)
            assert np.allclose(fsum, expect, atol=1e-12)

    def test_determinism(self):
        rng = np.random.default_rng(123)
        b = random_bundle(rng)
        lab1 = run_fusion(init_state(b.graph, b.scribbles, 0.1))
        lab2 = run_fusion(init_state(b.graph, b.scribbles, 0.1))
        assert lab1.labels == lab2.labels
