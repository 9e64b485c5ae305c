import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_lab.channel_model import DimensionError, svd_natural
from mimo_lab.mutual_info import make_constellation, qam_stream_mi
from mimo_lab.precoder_bank import (
    PrecoderMatrix, SingularityError, linear_stream_mi, pscp_precoder, rzf_precoder,
    sscp_precoder, stream_sinr, vaac_augment, zf_precoder,
)


def random_channel(seed, r=6, n=4):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((r, n)) + 1j * rng.standard_normal((r, n))) / math.sqrt(2)


class TestZeroForcing:
    def test_diagonalizes_downlink(self):
        H = random_channel(0)
        P, gamma = zf_precoder(H)
        np.testing.assert_allclose(H.conj().T @ P.matrix, gamma * np.eye(4), atol=1e-10)
        assert P.power_trace == pytest.approx(4.0)

    def test_gamma_closed_form(self):
        H = random_channel(1)
        s = np.linalg.svd(H, compute_uv=False)
        _, gamma = zf_precoder(H)
        assert gamma == pytest.approx(math.sqrt(4 / np.sum(s**-2)), rel=1e-12)

    def test_orthogonal_channel(self):
        H = np.vstack([np.diag([2.0, 1.0]), np.zeros((1, 2))])
        P, gamma = zf_precoder(H)
        assert gamma == pytest.approx(math.sqrt(2 / (1 / 4 + 1)))

    def test_rank_deficient(self):
        H = np.ones((4, 2), dtype=complex)
        with pytest.raises(SingularityError):
            zf_precoder(H)

    def test_wide_channel_points_to_subcarrier_split(self):
        with pytest.raises(DimensionError, match="CFSDM"):
            zf_precoder(random_channel(2, r=3, n=4))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_power_normalized(self, seed):
        P, _ = zf_precoder(random_channel(seed, 8, 6))
        assert abs(P.power_trace - 6) < 1e-9


class TestRegularized:
    def test_power(self):
        P = rzf_precoder(random_channel(3), 0.1)
        assert P.power_trace == pytest.approx(4.0)

    def test_approaches_zf_at_vanishing_noise(self):
        H = random_channel(4)
        Pz, _ = zf_precoder(H)
        Pr = rzf_precoder(H, 1e-12)
        np.testing.assert_allclose(Pr.matrix, Pz.matrix, atol=1e-8)

    def test_sinr_improves_on_zf_at_low_snr(self):
        H = random_channel(5)
        const = make_constellation(16)
        nv = 10 ** 0.5
        zf, _ = zf_precoder(H)
        rzf = rzf_precoder(H, nv)
        assert linear_stream_mi(H, rzf, const, nv) >= linear_stream_mi(H, zf, const, nv) - 1e-9

    def test_negative_noise(self):
        with pytest.raises(ValueError):
            rzf_precoder(random_channel(6), -1.0)


class TestPairedNormalization:
    def test_pair_powers(self):
        H = random_channel(7)
        for build in (sscp_precoder, pscp_precoder):
            P = build(H)
            assert P.power_trace == pytest.approx(4.0)
            A = H.conj().T @ P.matrix
            np.testing.assert_allclose(A, np.diag(P.stream_gains), atol=1e-10)

    def test_diagonal_channel_pairings(self):
        # with H = diag(s) the unnormalized ZF column powers are 1/s^2
        s = np.array([4.0, 3.0, 2.0, 1.0])
        H = np.diag(s).astype(complex)
        sscp = sscp_precoder(H).stream_gains
        pscp = pscp_precoder(H).stream_gains
        g12 = math.sqrt(2 / (1 / 16 + 1 / 9))
        g34 = math.sqrt(2 / (1 / 4 + 1))
        np.testing.assert_allclose(sscp, [g12, g12, g34, g34])
        g14 = math.sqrt(2 / (1 / 16 + 1))
        g23 = math.sqrt(2 / (1 / 9 + 1 / 4))
        np.testing.assert_allclose(pscp, [g14, g23, g23, g14])

    def test_odd_stream_count(self):
        with pytest.raises(ValueError):
            sscp_precoder(random_channel(8, 5, 3))


class TestVirtualStreams:
    def test_padding(self):
        v = vaac_augment(np.array([3.0, 1.0]), 2)
        np.testing.assert_array_equal(v.augmented_singular_values, [3, 1, 0, 0])
        assert v.n_real == 2 and v.n_virtual == 2

    def test_accepts_svd(self):
        f = svd_natural(np.diag([2.0, 5.0]))
        v = vaac_augment(f, 1)
        np.testing.assert_array_equal(v.augmented_singular_values, [5, 2, 0])

    def test_rejects_zero_base(self):
        with pytest.raises(SingularityError):
            vaac_augment(np.array([1.0, 0.0]), 2)
        with pytest.raises(ValueError):
            vaac_augment(np.array([1.0]), -1)


def test_stream_sinr_interference_free():
    H = random_channel(9)
    P, gamma = zf_precoder(H)
    np.testing.assert_allclose(stream_sinr(H, P.matrix, 0.5), gamma**2 / 0.5, rtol=1e-9)


def test_linear_mi_is_sum_of_scalar_links():
    H = random_channel(10)
    const = make_constellation(4)
    P, gamma = zf_precoder(H)
    expected = 4 * qam_stream_mi(gamma**2 / 0.2, const)
    assert linear_stream_mi(H, P, const, 0.2) == pytest.approx(expected, abs=1e-12)


def test_unknown_scheme_tag():
    with pytest.raises(ValueError):
        PrecoderMatrix(np.eye(2), "DPC")
