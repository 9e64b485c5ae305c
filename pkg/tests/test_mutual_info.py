import math

import numpy as np
import pytest

from mimo_lab.mutual_info import (
    CapabilityError, MismatchSpec, apply_estimation_error, blocks_mi, gcmi, hermite_rule,
    make_constellation, mi_gauss_hermite, mi_mismatched, mi_monte_carlo, qam_stream_mi,
)

QPSK = make_constellation(4)
QAM16 = make_constellation(16)


def bpsk_mi_oracle(snr):
    """One QPSK dimension (amplitude sqrt(snr/2), noise variance 1/2), by brute-force integration."""
    s = math.sqrt(snr / 2)
    sigma = 1.0 / math.sqrt(2.0)  # real part of unit complex noise at noise_var=1
    y = np.linspace(-s - 12 * sigma, s + 12 * sigma, 400_001)
    pdf = lambda m: np.exp(-(y - m) ** 2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)
    p_plus, p_minus = pdf(s), pdf(-s)
    mix = 0.5 * (p_plus + p_minus)
    integrand = p_plus * np.log2(np.where(p_plus > 0, p_plus / mix, 1.0))
    return float(np.trapezoid(integrand, y))


class TestConstellation:
    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_energy_and_distinct(self, order):
        c = make_constellation(order)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
        assert len(set(np.round(c.points, 12))) == order

    def test_gray_neighbours_differ_in_one_bit(self):
        pts = QAM16.points
        d_min = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
        for i in range(16):
            for j in range(16):
                if i != j and abs(abs(pts[i] - pts[j]) - d_min) < 1e-9:
                    assert bin(i ^ j).count("1") == 1

    def test_quarter_symmetry(self):
        rot = np.sort_complex(np.round(1j * QAM16.points, 12))
        assert np.allclose(rot, np.sort_complex(np.round(QAM16.points, 12)))

    def test_bad_order(self):
        with pytest.raises(ValueError):
            make_constellation(8)


def test_hermite_rule_integrates_moments():
    v, w = hermite_rule(8)
    assert np.sum(w) == pytest.approx(math.sqrt(math.pi))
    assert np.sum(w * v**2) == pytest.approx(math.sqrt(math.pi) / 2)
    assert np.sum(w * v**14) == pytest.approx(math.gamma(7.5), rel=1e-10)


class TestQuadrature:
    @pytest.mark.parametrize("snr_db", [-5.0, 0.0, 5.0, 10.0])
    def test_qpsk_matches_integral_oracle(self, snr_db):
        snr = 10 ** (snr_db / 10)
        # QPSK at unit energy is two BPSK links at half the symbol energy each
        expected = 2 * bpsk_mi_oracle(snr)
        got = mi_gauss_hermite(np.array([[math.sqrt(snr)]]), QPSK, 1.0, n_nodes=80).bits
        assert got == pytest.approx(expected, abs=2e-5)

    def test_limits(self):
        assert mi_gauss_hermite(np.zeros((2, 2)), QAM16, 1.0).bits == 0.0
        hi = mi_gauss_hermite(np.array([[30.0]]), QAM16, 1.0).bits
        assert hi == pytest.approx(4.0, abs=1e-9)
        lo = mi_gauss_hermite(np.array([[1e-3]]), QAM16, 1.0).bits
        assert 0 <= lo < 1e-5

    def test_diagonal_map_separates(self):
        A = np.diag([1.3, 0.6])
        joint = mi_gauss_hermite(A, QPSK, 0.5).bits
        singles = sum(qam_stream_mi(g**2 / 0.5, QPSK) for g in (1.3, 0.6))
        assert joint == pytest.approx(singles, abs=1e-10)

    def test_invariant_to_output_rotation(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        Q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        a = mi_gauss_hermite(A, QAM16, 1.0).bits
        b = mi_gauss_hermite(Q @ A, QAM16, 1.0).bits
        # the product rule is not rotation invariant, only accurate
        assert a == pytest.approx(b, abs=1e-6)

    def test_tall_and_zero_rows(self):
        A = np.array([[1.0, 0.2], [0.0, 0.0], [0.3, 0.9]])
        assert mi_gauss_hermite(A, QPSK, 1.0).bits == pytest.approx(
            mi_gauss_hermite(A[[0, 2]], QPSK, 1.0).bits, abs=1e-12)

    def test_three_live_rows_rejected(self):
        with pytest.raises(CapabilityError):
            mi_gauss_hermite(np.ones((3, 4)) + np.eye(3, 4), QPSK, 1.0)

    def test_node_convergence(self):
        A = np.array([[1.0, 0.5j], [0.2, 0.8]])
        a = mi_gauss_hermite(A, QAM16, 0.3, n_nodes=10).bits
        b = mi_gauss_hermite(A, QAM16, 0.3, n_nodes=14).bits
        assert a == pytest.approx(b, abs=5e-3)


class TestMonteCarlo:
    def test_agrees_with_quadrature(self):
        A = np.array([[1.0, 0.4], [0.1j, 0.7]])
        gh = mi_gauss_hermite(A, QAM16, 0.4, n_nodes=12).bits
        mc = mi_monte_carlo(A, QAM16, 0.4, 50_000, np.random.default_rng(7))
        assert abs(mc.bits - gh) < 4 * mc.std_error + 2e-3
        assert mc.std_error > 0

    def test_seeded(self):
        A = np.eye(2)
        a = mi_monte_carlo(A, QPSK, 1.0, 2000, np.random.default_rng(3)).bits
        b = mi_monte_carlo(A, QPSK, 1.0, 2000, np.random.default_rng(3)).bits
        assert a == b

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            mi_monte_carlo(np.eye(2), QPSK, 1.0, 10, np.random.default_rng(0))


class TestMismatch:
    def test_perfect_estimate_equals_matched(self):
        A = np.array([[1.0, 0.3], [0.2, 0.9]])
        m = mi_mismatched(A, A, QAM16, 0.5)
        assert m.bits == pytest.approx(mi_gauss_hermite(A, QAM16, 0.5).bits, abs=1e-12)

    def test_penalty_is_exact_offset(self):
        A = np.array([[1.0, 0.3], [0.2, 0.9]])
        B = A + 0.05
        with_p = mi_mismatched(A, B, QPSK, 0.5).bits
        without = mi_mismatched(A, B, QPSK, 0.5, include_penalty=False).bits
        assert without - with_p == pytest.approx(np.sum(np.abs(A - B) ** 2) / 0.5 * math.log2(math.e))

    def test_penalty_matches_monte_carlo(self):
        # the Monte Carlo score includes the sent-symbol metric directly
        A = np.array([[1.0, 0.3], [0.2, 0.9]])
        B = np.array([[0.9, 0.35], [0.25, 0.8]])
        gh = mi_mismatched(A, B, QPSK, 0.3, n_nodes=12).bits
        mc = mi_monte_carlo(A, QPSK, 0.3, 100_000, np.random.default_rng(11), decoder_map=B)
        assert abs(mc.bits - gh) < 4 * mc.std_error + 2e-3

    def test_mismatch_never_beats_matched(self):
        rng = np.random.default_rng(5)
        A = np.array([[1.2, 0.1], [0.0, 0.7]])
        matched = mi_gauss_hermite(A, QAM16, 0.2).bits
        for _ in range(5):
            B = A + 0.1 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
            assert mi_mismatched(A, B, QAM16, 0.2).bits <= matched + 1e-9

    def test_clamped_range(self):
        A = np.eye(2) * 0.3
        m = mi_mismatched(A, -A, QPSK, 0.1)
        assert m.bits < 0 and m.clamped == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mi_mismatched(np.eye(2), np.eye(3), QPSK, 1.0)


class TestEstimationError:
    def test_moments(self):
        P = np.full((2, 2), 1.0 + 0j)
        rng = np.random.default_rng(0)
        draws = np.array([apply_estimation_error(P, MismatchSpec(0.3), rng) for _ in range(20000)])
        err = draws - math.sqrt(1 - 0.09) * P
        assert np.mean(err) == pytest.approx(0, abs=0.01)
        assert np.mean(np.abs(err) ** 2) == pytest.approx(0.09, rel=0.03)
        assert np.var(err.real) == pytest.approx(0.045, rel=0.05)

    def test_zero_tau_is_identity(self):
        P = np.array([[1 + 2j]])
        np.testing.assert_array_equal(apply_estimation_error(P, MismatchSpec(0.0)), P)

    def test_seeded_default(self):
        a = apply_estimation_error(np.eye(2), MismatchSpec(0.2, seed=4))
        b = apply_estimation_error(np.eye(2), MismatchSpec(0.2, seed=4))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("tau", [-0.1, 1.5])
    def test_range(self, tau):
        with pytest.raises(ValueError):
            MismatchSpec(tau)


class TestGcmi:
    def test_identity_channel_separates(self):
        got = gcmi(np.eye(4) * 0.8, QPSK, 0.5, method="monte-carlo", n_samples=20_000,
                   rng=np.random.default_rng(2))
        expected = 4 * qam_stream_mi(0.64 / 0.5, QPSK, n_nodes=20)
        assert abs(got.bits - expected) < 4 * got.std_error + 1e-3

    def test_methods_agree(self):
        H = np.array([[1.0, 0.5], [0.3j, 0.8], [0.2, 0.1]])
        gh = gcmi(H, QAM16, 0.5, method="gauss-hermite", n_nodes=12).bits
        mc = gcmi(H, QAM16, 0.5, method="monte-carlo", n_samples=50_000,
                  rng=np.random.default_rng(9))
        assert abs(mc.bits - gh) < 4 * mc.std_error + 2e-3

    def test_zero_channel(self):
        assert gcmi(np.zeros((3, 2)), QPSK, 1.0).bits == 0.0

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            gcmi(np.eye(2), QPSK, 1.0, method="exact")


class TestBlocks:
    def test_scalar_blocks_sum(self):
        blocks = [(np.array([1.0]), np.eye(1)), (np.array([0.5]), np.eye(1))]
        raw, clamped = blocks_mi(blocks, QPSK, 0.25)
        expected = qam_stream_mi(4.0, QPSK) + qam_stream_mi(1.0, QPSK)
        assert raw == pytest.approx(expected) and clamped == pytest.approx(expected)

    def test_dead_gain_row_contributes_nothing(self):
        P = np.array([[1.0, 0.0], [0.0, 1.0]])
        raw, _ = blocks_mi([(np.array([1.0, 0.0]), P)], QPSK, 0.5)
        assert raw == pytest.approx(qam_stream_mi(2.0, QPSK), abs=1e-10)

    def test_error_lowers_information(self):
        P = np.array([[1.0, 0.3], [0.3, -1.0]]) / math.sqrt(1.09)
        blocks = [(np.array([1.5, 1.0]), P)]
        clean, _ = blocks_mi(blocks, QAM16, 0.1)
        _, noisy = blocks_mi(blocks, QAM16, 0.1, tau=0.2, rng=np.random.default_rng(1))
        assert noisy < clean
