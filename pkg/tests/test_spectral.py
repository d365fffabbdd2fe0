import numpy as np
import pytest

from consensus_flow.errors import BadParam, Disconnected, MismatchedTopology, RankDeficient
from consensus_flow.flow import LinearSystem
from consensus_flow.graph import NetworkGraph, generate, laplacian
from consensus_flow.harness import random_block_sizes, random_instance
from consensus_flow.linalg import spectrum_distance
from consensus_flow.spectral import (
    equilibrium_space_dim,
    image_basis,
    manifold_equilibrium_dim,
    projected_laplacian,
    rho,
    rho_restricted,
    spectral_report,
    stacked_operators,
    verify_lemma1,
    verify_theorem2,
)


def numpy_rho(system, g):
    """Oracle: smallest nonzero eigenvalue of P Lbar P through LAPACK."""
    p, lbar = stacked_operators(system, g)
    vals = np.linalg.eigvalsh(p @ lbar @ p)
    return vals[vals > 1e-9 * vals.max()].min()


class TestStacked:
    def test_axis_pair(self, axis_pair):
        p, lbar = stacked_operators(*axis_pair)
        assert np.array_equal(p, np.diag([0.0, 1.0, 1.0, 0.0]))
        assert np.array_equal(p @ p, p)
        q = np.array([0.7, -1.3])
        assert np.array_equal(lbar @ np.kron(np.ones(2), q), np.zeros(4))

    def test_kron_spectrum(self):
        g = generate("path", 3)
        _, lbar = stacked_operators(LinearSystem.from_rows(np.eye(3), np.ones(3)), g)
        expected = np.repeat(np.linalg.eigvalsh(laplacian(g)), 3)
        assert np.allclose(np.sort(np.linalg.eigvalsh(lbar)), np.sort(expected), atol=1e-12)

    def test_mismatch(self, axis_pair):
        with pytest.raises(MismatchedTopology):
            stacked_operators(axis_pair[0], generate("path", 3))


class TestRho:
    def test_axis_pair(self, axis_pair):
        # P Lbar P = diag(0, 1, 1, 0) here
        assert np.allclose(np.linalg.eigvalsh(projected_laplacian(*axis_pair)), [0, 0, 1, 1])
        assert rho(*axis_pair) == pytest.approx(1.0, abs=1e-12)
        assert rho_restricted(*axis_pair) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(15))
    def test_against_lapack(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        sizes = random_block_sizes(n, seed) if seed % 2 else None
        system, g = random_instance(n, seed, block_sizes=sizes, topology="path" if sizes else "random_connected")
        if system.agent_count < 2:
            pytest.skip("one agent has no nonzero mode")
        r = rho(system, g)
        assert r == pytest.approx(numpy_rho(system, g), abs=1e-9)
        chk = verify_theorem2(system, g)
        assert chk.holds and chk.paths_agree

    def test_image_basis_orthonormal(self):
        system, _ = random_instance(5, 3, block_sizes=[2, 3])
        q = image_basis(system)
        p, _ = stacked_operators(system, generate("path", 2))
        assert q.shape == (10, 5)
        assert np.allclose(q.T @ q, np.eye(5), atol=1e-12)
        assert np.allclose(p @ q, q, atol=1e-12)

    def test_rank_deficient(self):
        system = LinearSystem.from_rows([[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0])
        with pytest.raises(RankDeficient, match="rank deficient"):
            rho(system, generate("path", 2))

    def test_disconnected(self):
        system = LinearSystem.from_rows(np.eye(3), np.ones(3))
        with pytest.raises(Disconnected):
            rho(system, NetworkGraph.from_edges(3, [(0, 1)]))

    def test_single_agent(self):
        system = LinearSystem.from_rows([[1.0, 0.0]], [1.0])
        with pytest.raises(BadParam):
            rho(system, NetworkGraph(1))


class TestLemma1:
    def test_identity(self, axis_pair):
        chk = verify_lemma1(*axis_pair)
        assert chk.general_checked
        assert chk.min_real == pytest.approx(1.0, abs=1e-12)
        assert chk.max_imag <= 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_random(self, seed):
        system, g = random_instance(2 + seed % 3, seed)
        chk = verify_lemma1(system, g, general_max_dim=25)
        assert chk.general_checked and chk.min_real > 0 and chk.max_imag <= 1e-7
        assert chk.spectrum_gap <= 1e-6
        p, lbar = stacked_operators(system, g)
        ref = np.linalg.eigvals(p @ lbar + np.eye(len(p)) - p)
        assert chk.min_real == pytest.approx(ref.real.min(), abs=1e-8)

    def test_large_uses_symmetric_path(self):
        system, g = random_instance(5, 1)
        chk = verify_lemma1(system, g, general_max_dim=12)
        assert not chk.general_checked and chk.min_real > 0

    def test_nontrivial_kernel(self):
        system, g = random_instance(4, 0, rows=3)
        with pytest.raises(RankDeficient):
            verify_lemma1(system, g)


class TestEquilibrium:
    def test_axis_pair(self, axis_pair):
        assert equilibrium_space_dim(*axis_pair) == 2
        assert manifold_equilibrium_dim(*axis_pair) == 0

    def test_single_agent_line(self):
        system = LinearSystem.from_rows([[1.0, 1.0]], [2.0])
        assert manifold_equilibrium_dim(system, NetworkGraph(1)) == 1

    @pytest.mark.parametrize("seed", range(6))
    def test_wide(self, seed):
        system, g = random_instance(5, seed, rows=3)
        assert equilibrium_space_dim(system, g) == 5
        assert manifold_equilibrium_dim(system, g) == 2


def test_report(axis_pair):
    rep = spectral_report(*axis_pair)
    assert rep.rho == pytest.approx(1.0) and rep.lambda2 == pytest.approx(2.0)
    assert rep.theorem2_holds and rep.rho_paths_agree and rep.equilibrium_dim == 2
    assert rep.lemma1_general_checked
    assert set(rep.to_dict()) >= {"rho", "rho_restricted", "lambda2", "equilibrium_dim"}


def test_similar_products_share_spectrum():
    system, g = random_instance(3, 4)
    p, lbar = stacked_operators(system, g)
    assert spectrum_distance(np.linalg.eigvals(p @ lbar), np.linalg.eigvals(lbar @ p)) <= 1e-9
