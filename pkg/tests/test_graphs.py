import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grou import (
    BadDimension,
    InvalidPsi,
    InvalidTheta,
    ParseError,
    make_topology,
    q_from_psi,
    q_from_theta,
    rho,
    row_normalize,
    unvec,
    vec,
)
from grou.graphs import load_edge_list, psi_is_valid, save_edge_list, theta_is_valid


class TestRowNormalize:
    def test_two_node_complete(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        an = row_normalize(a)
        assert np.array_equal(an.entries, a)
        assert np.array_equal(an.degrees, [1, 1])

    def test_three_node_path(self):
        a = make_topology("polymer", 3)
        an = row_normalize(a)
        assert np.allclose(an.entries[1], [0.5, 0.0, 0.5])
        assert np.array_equal(an.degrees, [1, 2, 1])

    def test_all_zero_isolated_convention(self):
        an = row_normalize(np.zeros((3, 3)))
        assert np.array_equal(an.entries, np.zeros((3, 3)))
        assert np.array_equal(an.degrees, [1, 1, 1])

    def test_rejects_asymmetric(self):
        a = np.zeros((3, 3))
        a[0, 1] = 1.0
        with pytest.raises(ParseError):
            row_normalize(a)

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ParseError):
            row_normalize(np.eye(3))


class TestRho:
    def test_all_connected_gives_one(self):
        for kind, d in (("polymer", 5), ("complete", 4), ("lattice", 5)):
            an = row_normalize(make_topology(kind, d))
            assert rho(an) == pytest.approx(1.0)

    def test_empty_graph_gives_zero(self):
        assert rho(row_normalize(np.zeros((4, 4)))) == 0.0

    def test_one_isolated_node(self):
        # d=3, single edge 0-1: sum a_ij/n_i = 2, so rho = 3/2
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = 1.0
        assert rho(row_normalize(a)) == pytest.approx(1.5)

    @given(st.integers(min_value=0, max_value=2**15 - 1), st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=30, deadline=None)
    def test_relabeling_invariance(self, edge_bits, perm_seed):
        d = 6
        a = np.zeros((d, d))
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        for bit, (i, j) in enumerate(pairs):
            if edge_bits >> bit & 1:
                a[i, j] = a[j, i] = 1.0
        perm = np.random.default_rng(perm_seed).permutation(d)
        relabeled = a[np.ix_(perm, perm)]
        assert rho(row_normalize(a)) == pytest.approx(rho(row_normalize(relabeled)))


class TestQFromTheta:
    def test_reference_two_node_values(self):
        an = row_normalize(make_topology("complete", 2))
        q = q_from_theta(-1.549, 5.525, an)
        assert np.allclose(q, [[5.525, -1.549], [-1.549, 5.525]])

    def test_identity(self):
        an = row_normalize(make_topology("polymer", 4))
        assert np.allclose(q_from_theta(0.0, 1.0, an), np.eye(4))

    def test_invalid_theta(self):
        an = row_normalize(make_topology("complete", 3))
        with pytest.raises(InvalidTheta):
            q_from_theta(2.0, 1.0, an)
        assert not theta_is_valid(2.0, 1.0)
        assert not theta_is_valid(0.0, 0.0)

    def test_symmetric_on_regular_graph(self):
        an = row_normalize(make_topology("complete", 5))
        q = q_from_theta(-0.7, 2.0, an)
        assert np.allclose(q, q.T)

    @given(
        st.floats(min_value=0.01, max_value=50.0),
        st.floats(min_value=-0.999, max_value=0.999),
        st.sampled_from(["polymer", "complete", "lattice"]),
    )
    @settings(max_examples=50, deadline=None)
    def test_gershgorin_discs_in_right_half_plane(self, theta2, frac, kind):
        theta1 = frac * theta2
        an = row_normalize(make_topology(kind, 10))
        q = q_from_theta(theta1, theta2, an)
        radii = np.sum(np.abs(q), axis=1) - np.abs(np.diag(q))
        assert np.all(np.diag(q) - radii > 0.0)


class TestQFromPsi:
    def test_diagonal_psi(self):
        an = row_normalize(make_topology("polymer", 3))
        psi = vec(2.5 * np.eye(3))
        assert np.allclose(q_from_psi(psi, an), 2.5 * np.eye(3))

    def test_two_node_hadamard(self):
        an = row_normalize(make_topology("complete", 2))
        psi = vec(np.array([[3.0, 1.0], [1.0, 3.0]]))
        assert np.allclose(q_from_psi(psi, an), [[3.0, 1.0], [1.0, 3.0]])

    def test_zero_diagonal_invalid(self):
        an = row_normalize(make_topology("complete", 2))
        psi = vec(np.array([[0.0, 1.0], [1.0, 3.0]]))
        with pytest.raises(InvalidPsi):
            q_from_psi(psi, an)
        assert not psi_is_valid(psi, an)

    def test_cross_parametrization_consistency(self):
        # on a 2-node complete graph degrees are 1 so vec(Q(theta)) is admissible as-is
        an = row_normalize(make_topology("complete", 2))
        q_theta = q_from_theta(-1.2, 3.4, an)
        assert np.allclose(q_from_psi(vec(q_theta), an), q_theta)

    def test_vec_unvec_roundtrip(self):
        m = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(unvec(vec(m)), m)
        # column-stacked layout: entry (i, j) sits at d*(j-1)+i (0-based: j*d + i)
        assert vec(m)[2 * 3 + 1] == m[1, 2]


class TestMakeTopology:
    def test_complete(self):
        a = make_topology("complete", 3)
        assert np.array_equal(a, np.ones((3, 3)) - np.eye(3))

    def test_polymer_degree_stats(self):
        a = make_topology("polymer", 50)
        degrees = a.sum(axis=1)
        assert degrees.min() == 1 and degrees.max() == 2

    def test_lattice_degree_stats(self):
        a = make_topology("lattice", 82)
        degrees = a.sum(axis=1)
        assert np.median(degrees) == 4 and degrees.max() == 4

    def test_lattice_bad_dimension(self):
        with pytest.raises(BadDimension):
            make_topology("lattice", 12)

    def test_unknown_kind(self):
        with pytest.raises(ParseError):
            make_topology("ring", 5)

    def test_edge_list_roundtrip(self, tmp_path):
        a = make_topology("lattice", 10)
        target = tmp_path / "graph.txt"
        save_edge_list(a, target)
        assert np.array_equal(load_edge_list(target), a)
        assert np.array_equal(make_topology("file", path=target), a)

    def test_edge_list_parse_errors(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("0 1 2\n")
        with pytest.raises(ParseError):
            load_edge_list(bad)
        bad.write_text("0 zero\n")
        with pytest.raises(ParseError):
            load_edge_list(bad)
        bad.write_text("1 1\n")
        with pytest.raises(ParseError):
            load_edge_list(bad)
