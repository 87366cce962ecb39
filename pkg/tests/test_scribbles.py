import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrfseg.imagegraph import RasterImage, build_grid_graph
from mrfseg.scribbles import (
    ScribbleError,
    UnaryField,
    parse_scribbles,
    scribbles_from_nodes,
    seed_means,
    unary_from_means,
    unary_from_prob_arrays,
    unary_from_probmap,
)
from mrfseg.synth import make_rag


def grid(w, h, values=None):
    if values is None:
        values = np.zeros(w * h)
    return build_grid_graph(RasterImage(w, h, 1, np.asarray(values, float).reshape(h, w, 1)))


def write_scribbles(path, labels):
    path.write_text(json.dumps({"labels": labels}))


class TestParse:
    def test_two_single_pixel_labels(self, tmp_path):
        g = grid(3, 3)
        p = tmp_path / "s.json"
        write_scribbles(
            p,
            [
                {"id": 1, "background": False, "pixels": [[0, 0]]},
                {"id": 2, "background": False, "pixels": [[2, 2]]},
            ],
        )
        s = parse_scribbles(p, g)
        assert s.k == 2
        assert s.labels[0].root == 0
        assert s.labels[1].root == 8
        assert s.background_label is None

    def test_root_is_node_of_first_pixel(self, tmp_path):
        g = grid(3, 3)
        p = tmp_path / "s.json"
        write_scribbles(
            p,
            [
                {"id": 1, "pixels": [[2, 1], [0, 0]]},  # pixel (2,1) -> node 7
                {"id": 2, "pixels": [[0, 2]]},
            ],
        )
        s = parse_scribbles(p, g)
        assert s.labels[0].root == 7
        assert s.labels[0].nodes == (0, 7)

    def test_conflicting_scribbles(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(
            p,
            [
                {"id": 1, "pixels": [[1, 1]]},
                {"id": 2, "pixels": [[1, 1]]},
            ],
        )
        with pytest.raises(ScribbleError, match="conflicting scribbles at node 3"):
            parse_scribbles(p, g)

    def test_empty_label(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(p, [{"id": 1, "pixels": []}, {"id": 2, "pixels": [[0, 0]]}])
        with pytest.raises(ScribbleError, match="empty scribble"):
            parse_scribbles(p, g)

    def test_out_of_bounds_pixel(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(p, [{"id": 1, "pixels": [[0, 0]]}, {"id": 2, "pixels": [[5, 0]]}])
        with pytest.raises(ScribbleError, match="out of bounds"):
            parse_scribbles(p, g)

    def test_nonconsecutive_ids(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(p, [{"id": 1, "pixels": [[0, 0]]}, {"id": 3, "pixels": [[1, 1]]}])
        with pytest.raises(ScribbleError, match="consecutive"):
            parse_scribbles(p, g)

    def test_two_backgrounds_rejected(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(
            p,
            [
                {"id": 1, "background": True, "pixels": [[0, 0]]},
                {"id": 2, "background": True, "pixels": [[1, 1]]},
            ],
        )
        with pytest.raises(ScribbleError, match="background"):
            parse_scribbles(p, g)

    def test_single_label_rejected(self, tmp_path):
        g = grid(2, 2)
        p = tmp_path / "s.json"
        write_scribbles(p, [{"id": 1, "pixels": [[0, 0]]}])
        with pytest.raises(ScribbleError, match="at least 2"):
            parse_scribbles(p, g)


class TestSeedMeans:
    def test_singleton(self):
        g = make_rag([(0, 1)], [1, 1], features=[[0.4], [0.9]])
        s = scribbles_from_nodes(g, {1: [0], 2: [1]})
        assert seed_means(g, s)[0, 0] == pytest.approx(0.4)

    def test_symmetric_mean(self):
        g = make_rag([(0, 1), (1, 2)], [1, 1, 1], features=[[0.2], [0.8], [0.5]])
        s = scribbles_from_nodes(g, {1: [0, 1], 2: [2]})
        assert seed_means(g, s)[0, 0] == pytest.approx(0.5)

    def test_size_weighted_mean(self):
        # sigma {1, 3}, f {0.0, 0.8} -> (0*1 + 0.8*3) / 4 = 0.6
        g = make_rag([(0, 1), (1, 2)], [1, 3, 1], features=[[0.0], [0.8], [0.3]])
        s = scribbles_from_nodes(g, {1: [0, 1], 2: [2]})
        assert seed_means(g, s)[0, 0] == pytest.approx(0.6)

    @given(st.integers(0, 2**32 - 1))
    def test_pixel_order_only_moves_root(self, seed):
        rng = np.random.default_rng(seed)
        g = grid(3, 3, rng.random(9))
        nodes = [0, 1, 4]
        s1 = scribbles_from_nodes(g, {1: nodes, 2: [8]})
        s2 = scribbles_from_nodes(g, {1: nodes[::-1], 2: [8]})
        assert np.allclose(seed_means(g, s1), seed_means(g, s2))
        assert s1.labels[0].root == 0
        assert s2.labels[0].root == 4


class TestUnary:
    def test_exact_match_is_zero(self):
        g = make_rag([(0, 1)], [1, 1], features=[[0.7], [0.1]])
        u = unary_from_means(g, np.array([[0.7]]))
        assert u.c[0, 0] == pytest.approx(0.0)

    def test_gray_absolute_difference(self):
        g = make_rag([(0, 1)], [1, 1], features=[[0.7], [0.1]])
        u = unary_from_means(g, np.array([[0.4]]))
        assert u.c[0, 0] == pytest.approx(0.3)

    def test_rgb_mean_absolute(self):
        g = make_rag([(0, 1)], [1, 1], features=[[1.0, 0.0, 0.0], [0, 0, 0]], channels=3)
        u = unary_from_means(g, np.array([[0.0, 1.0, 0.0]]))
        assert u.c[0, 0] == pytest.approx(2 / 3)

    def test_range(self):
        rng = np.random.default_rng(1)
        g = grid(3, 3, rng.random(9))
        s = scribbles_from_nodes(g, {1: [0], 2: [8]})
        u = unary_from_means(g, seed_means(g, s))
        assert (u.c >= 0).all() and (u.c <= 1).all()

    def test_unary_field_validation(self):
        with pytest.raises(ValueError):
            UnaryField(np.array([[-0.1]]))
        with pytest.raises(ValueError):
            UnaryField(np.array([[np.inf]]))


class TestProbmap:
    def test_extremes_and_mean(self):
        g = make_rag([(0, 1)], [2, 1], features=[[0.0], [0.0]])
        # node 0 holds pixels {0, 1} of the 3x1 fabricated image
        planes = np.zeros((2, 1, 3))
        planes[0, 0] = [1.0, 1.0, 0.0]
        planes[1, 0] = [0.2, 0.6, 1.0]
        u = unary_from_prob_arrays(g, planes)
        assert u.c[0, 0] == pytest.approx(0.0)  # p = 1 -> c = 0
        assert u.c[1, 1] == pytest.approx(0.0)
        assert u.c[1, 0] == pytest.approx(1.0)  # p = 0 -> c = 1
        assert u.c[0, 1] == pytest.approx(0.6)  # mean(0.2, 0.6) = 0.4 -> 0.6

    def test_dimension_mismatch(self):
        g = make_rag([(0, 1)], [1, 1])
        with pytest.raises(ScribbleError, match="does not match"):
            unary_from_prob_arrays(g, np.zeros((2, 3, 3)))

    def test_range_violation(self):
        g = make_rag([(0, 1)], [1, 1])
        planes = np.zeros((2, 1, 2))
        planes[0, 0, 0] = 1.5
        with pytest.raises(ScribbleError, match="outside"):
            unary_from_prob_arrays(g, planes)

    def test_pgm_loading(self, tmp_path):
        from mrfseg.imagegraph import write_pnm

        g = grid(2, 2)
        write_pnm(tmp_path / "p_label1.pgm", np.full((2, 2, 1), 255, dtype=np.uint8))
        write_pnm(tmp_path / "p_label2.pgm", np.zeros((2, 2, 1), dtype=np.uint8))
        u = unary_from_probmap(str(tmp_path / "p"), g, 2)
        assert np.allclose(u.c[:, 0], 0.0)
        assert np.allclose(u.c[:, 1], 1.0)
