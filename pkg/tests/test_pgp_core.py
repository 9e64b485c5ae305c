import math

import numpy as np
import pytest

from mimo_lab.channel_model import SvdFactors, svd_natural
from mimo_lab.mutual_info import blocks_mi, make_constellation, mi_gauss_hermite
from mimo_lab.pgp_core import (
    OptimizerBudget, SubgroupPlan, effective_weights, format_solution, optimize_2x2,
    pair_subgroups, pgp_precoder, pgp_wg, subgroup_blocks, subgroup_map, unitary_from_angles,
    zf_pgp,
)
from mimo_lab.precoder_bank import SingularityError

QPSK = make_constellation(4)
QAM16 = make_constellation(16)
QUICK = OptimizerBudget(grid=3, rounds=2, n_nodes=6)


def random_virtual(seed, beams=6, streams=4):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((beams, streams)) + 1j * rng.standard_normal((beams, streams))) / 2


def zf_column_powers(H):
    """Unnormalized ZF column powers from a brute-force right inverse of H^H."""
    P0 = np.linalg.pinv(H.conj().T)
    return np.sum(np.abs(P0) ** 2, axis=0)


class TestEffectiveWeights:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_inverse_column_powers(self, seed):
        H = random_virtual(seed)
        eff = effective_weights(svd_natural(H), 4)
        np.testing.assert_allclose(eff.weights**2, zf_column_powers(H), rtol=1e-12)
        np.testing.assert_allclose(eff.eff_singular_values * eff.weights, 1.0)

    def test_identity_right_factor(self):
        f = SvdFactors(np.eye(3, 2, dtype=complex), np.array([2.0, 1.0]), np.eye(2, dtype=complex))
        np.testing.assert_allclose(effective_weights(f, 2).eff_singular_values, [2.0, 1.0])

    def test_rank_deficient(self):
        f = SvdFactors(np.eye(2, dtype=complex), np.array([1.0, 0.0]), np.eye(2, dtype=complex))
        with pytest.raises(SingularityError):
            effective_weights(f, 2)


class TestPairing:
    def test_user_aligned(self):
        assert pair_subgroups([1, 4, 2, 3]).pairs == ((0, 1), (2, 3))

    def test_max_distance(self):
        assert pair_subgroups([4, 3, 2, 1], "max-distance").pairs == ((0, 3), (1, 2))
        assert pair_subgroups([1, 3, 2, 4], "max-distance").pairs == ((3, 0), (1, 2))

    def test_vaac(self):
        plan = pair_subgroups([2.0, 3.0, 0.0, 0.0], "vaac")
        assert plan.pairs == ((1, 2), (0, 3)) and plan.n_real == 2

    def test_vaac_partial(self):
        plan = pair_subgroups([5.0, 1.0, 3.0, 2.0, 0.0, 0.0], "vaac")
        assert plan.pairs == ((0, 4), (2, 5), (3, 1))

    @pytest.mark.parametrize("values, mode", [([1, 2, 3], "user-aligned"),
                                              ([1, 0, 0, 0], "vaac"),
                                              ([1, 2], "random")])
    def test_errors(self, values, mode):
        with pytest.raises(ValueError):
            pair_subgroups(values, mode)


@pytest.mark.parametrize("angles", [(0.0, 0.0, 0.0), (0.3, 1.1, -0.4), (math.pi / 4, 2.0, 0.5)])
def test_unitary_from_angles(angles):
    V = unitary_from_angles(*angles)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(2), atol=1e-14)


class TestOptimizer:
    def test_dominates_fixed_precoders(self):
        s = (1.2, 0.5)
        nv = 10 ** (-1.0)
        sol = optimize_2x2(s, QAM16, nv)
        identity = mi_gauss_hermite(np.diag(s), QAM16, nv).bits
        single = mi_gauss_hermite(np.diag([s[0] * math.sqrt(2), 0.0]), QAM16, nv).bits
        assert sol.mi_bits >= identity - 1e-12
        assert sol.mi_bits >= single - 1e-12

    def test_reported_value_matches_map(self):
        sol = optimize_2x2((1.0, 0.7), QPSK, 0.3, QUICK)
        A = subgroup_map(sol.s_pair, sol.sigma_pair, sol.v_unitary)
        assert mi_gauss_hermite(A, QPSK, 0.3, QUICK.n_nodes).bits == pytest.approx(sol.mi_bits)
        assert sum(x**2 for x in sol.sigma_pair) == pytest.approx(2.0)

    def test_deterministic(self):
        a = optimize_2x2((1.0, 0.4), QPSK, 0.2, QUICK)
        b = optimize_2x2((1.0, 0.4), QPSK, 0.2, QUICK)
        assert a.angles == b.angles and a.mi_bits == b.mi_bits

    def test_dead_stream_gets_all_power(self):
        sol = optimize_2x2((1.0, 0.0), QPSK, 0.01, QUICK)
        assert sol.sigma_pair == pytest.approx((math.sqrt(2), 0.0))
        # two QPSK symbols share one real antenna almost losslessly
        assert sol.mi_bits > 3.9

    def test_all_dead(self):
        sol = optimize_2x2((0.0, 0.0), QPSK, 1.0)
        assert sol.mi_bits == 0.0 and sol.evaluations == 0

    def test_ascending_pair_rejected(self):
        with pytest.raises(ValueError):
            optimize_2x2((0.5, 1.0), QPSK, 1.0)


class TestPgpWg:
    def test_equal_values_share_solution(self):
        plan = pair_subgroups(np.ones(4))
        sol = pgp_wg(np.ones(4), None, plan, QPSK, 0.5, QUICK)
        a, b = sol.per_subgroup
        assert a.mi_bits == b.mi_bits and a.angles == b.angles
        assert sol.total_mi_bits == pytest.approx(2 * a.mi_bits)

    def test_swapped_pair(self):
        values = np.array([0.6, 1.1])
        sol = pgp_wg(values, None, SubgroupPlan(((0, 1),), "user-aligned", 2), QPSK, 0.4, QUICK)
        gains, P = subgroup_blocks(sol)[0]
        np.testing.assert_array_equal(gains, values)
        bits = mi_gauss_hermite(gains[:, None] * P, QPSK, 0.4, QUICK.n_nodes).bits
        assert bits == pytest.approx(sol.total_mi_bits, abs=1e-12)
        direct = optimize_2x2((1.1, 0.6), QPSK, 0.4, QUICK)
        assert sol.total_mi_bits == direct.mi_bits

    def test_block_diagonal_unitary(self):
        values = np.array([1.0, 0.8, 0.5, 0.3])
        sol = pgp_wg(values, None, pair_subgroups(values, "max-distance"), QPSK, 0.5, QUICK)
        np.testing.assert_allclose(sol.v_pgp.conj().T @ sol.v_pgp, np.eye(4), atol=1e-13)
        assert np.sum(sol.sigma_eff**2) == pytest.approx(4.0)
        assert sol.v_pgp[0, 1] == 0 and sol.v_pgp[0, 2] == 0

    def test_bad_plan(self):
        with pytest.raises(ValueError):
            pgp_wg(np.ones(4), None, SubgroupPlan(((0, 1), (1, 2)), "user-aligned", 4), QPSK, 1.0)


class TestZfPgp:
    def test_identity_right_factor_collapses(self):
        f = SvdFactors(np.eye(3, 2, dtype=complex), np.array([2.0, 1.0]), np.eye(2, dtype=complex))
        _, sol, eff = zf_pgp(f, 2, QPSK, 0.5, budget=QUICK)
        ref = pgp_wg(np.array([2.0, 1.0]), None, pair_subgroups([2.0, 1.0]), QPSK, 0.5, QUICK)
        assert sol.total_mi_bits == pytest.approx(ref.total_mi_bits, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_received_model(self, seed):
        H = random_virtual(seed)
        f = svd_natural(H)
        P, sol, eff = zf_pgp(f, 4, QPSK, 0.5, budget=QUICK)
        expected = (eff.eff_singular_values * sol.sigma_eff)[:, None] * sol.v_pgp.conj().T
        np.testing.assert_allclose(H.conj().T @ P.matrix, expected, atol=1e-10)
        assert P.power_trace == pytest.approx(4.0)

    def test_vaac_doubles_stream_count(self):
        H = random_virtual(7, 6, 2)
        P, sol, _ = zf_pgp(svd_natural(H), 2, QPSK, 0.01, vaac_n=2, budget=QUICK)
        # four symbols on six beams
        assert P.matrix.shape == (6, 4)
        assert sol.plan.mode == "vaac" and sol.plan.n_streams == 4
        assert all(sub.sigma_pair == pytest.approx((math.sqrt(2), 0.0)) for sub in sol.per_subgroup)
        # same transmit power as plain ZF on the two real antennas
        assert P.power_trace == pytest.approx(2.0)

    def test_vaac_received_model(self):
        H = random_virtual(8, 6, 2)
        P, sol, eff = zf_pgp(svd_natural(H), 2, QPSK, 0.1, vaac_n=2, budget=QUICK)
        A = H.conj().T @ P.matrix
        for gains, P_o in subgroup_blocks(sol):
            assert gains[1] == 0.0
        np.testing.assert_allclose(np.sort(sol.stream_values[:2]),
                                   np.sort(eff.eff_singular_values) / math.sqrt(2))
        expected = sol.stream_values[:2, None] * sol.sigma_eff[:2, None] * sol.v_pgp.conj().T[:2]
        np.testing.assert_allclose(A, expected, atol=1e-10)

    def test_blocks_reproduce_total(self):
        H = random_virtual(3)
        _, sol, _ = zf_pgp(svd_natural(H), 4, QPSK, 0.5, budget=QUICK)
        raw, clamped = blocks_mi(subgroup_blocks(sol), QPSK, 0.5, n_nodes=QUICK.n_nodes)
        assert raw == pytest.approx(sol.total_mi_bits, abs=1e-12) and clamped == raw


def test_pgp_precoder_shape_and_power():
    H = random_virtual(11)
    P, sol = pgp_precoder(svd_natural(H), 4, QPSK, 0.5, budget=QUICK)
    assert P.matrix.shape == (6, 4) and P.scheme == "PGP"
    assert P.power_trace == pytest.approx(4.0)
    assert sol.plan.mode == "max-distance"


def test_format_solution_lists_every_subgroup():
    values = np.array([1.0, 0.8, 0.5, 0.3])
    sol = pgp_wg(values, None, pair_subgroups(values), QPSK, 0.5, QUICK)
    text = format_solution(sol)
    assert text.count("subgroup ") == 2
    assert text.splitlines()[0].startswith("plan mode=user-aligned")
    assert f"total mi={sol.total_mi_bits:.6f}" in text
