"""Zero-forcing precoders and their benchmark variants for one group.

Conventions: ``H`` is the ``r x N`` virtual uplink channel of a group, the
downlink sees ``H^H``, and a precoder maps ``N`` symbols to the ``r`` beam
ports. Power-normalized schemes satisfy ``tr(P P^H) = N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel_model import DimensionError, SvdFactors
from .mutual_info import Constellation, qam_stream_mi

__all__ = [
    "SingularityError",
    "PrecoderMatrix",
    "VaacChannel",
    "RANK_TOL",
    "zf_precoder",
    "rzf_precoder",
    "sscp_precoder",
    "pscp_precoder",
    "vaac_augment",
    "stream_sinr",
    "linear_stream_mi",
]

# s_min / s_max below this is treated as rank deficient
RANK_TOL = 1e-12

SCHEMES = ("ZF", "RZF", "SSCP", "PSCP", "PGP", "ZF-PGP")


class SingularityError(ValueError):
    """Channel is rank deficient for the requested precoder."""


@dataclass(frozen=True)
class PrecoderMatrix:
    """Precoding matrix with its scheme tag.

    ``stream_gains`` is set for interference-free schemes: stream ``j``
    reaches its antenna as ``stream_gains[j] * x_j + n_j``.
    """

    matrix: np.ndarray
    scheme: str
    stream_gains: Optional[np.ndarray] = None
    power_trace: float = field(init=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "power_trace", float(np.sum(np.abs(self.matrix) ** 2)))

    @property
    def n_symbols(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class VaacChannel:
    """Stream gains padded with ``n_virtual`` zero-gain (virtual) streams."""

    base_singular_values: np.ndarray
    n_virtual: int
    augmented_singular_values: np.ndarray

    @property
    def n_real(self) -> int:
        return len(self.base_singular_values)


def _check_tall(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise DimensionError("channel must be a matrix")
    r, n = H.shape
    if r < n:
        raise DimensionError(
            f"{n} streams need at least {n} beams but only {r} are available; "
            "split the group across subcarriers (CFSDM)"
        )
    return H


def _check_rank(s: np.ndarray) -> None:
    if s[-1] <= RANK_TOL * s[0]:
        raise SingularityError(
            f"channel is rank deficient: smallest singular value {s[-1]:.3e} "
            f"vs largest {s[0]:.3e}"
        )


def zf_precoder(H: np.ndarray):
    """Power-normalized zero-forcing precoder ``gamma H (H^H H)^-1``.

    Returns
    -------
    (PrecoderMatrix, float)
        The precoder and ``gamma = sqrt(N / sum_i s_i^-2)``; after the
        downlink channel every stream arrives as ``gamma x_j + n_j``.
    """
    H = _check_tall(H)
    n = H.shape[1]
    s = np.linalg.svd(H, compute_uv=False)
    _check_rank(s)
    gamma = math.sqrt(n / float(np.sum(1.0 / s**2)))
    P = gamma * H @ np.linalg.inv(H.conj().T @ H)
    return PrecoderMatrix(P, "ZF", np.full(n, gamma)), gamma


def rzf_precoder(H: np.ndarray, noise_var: float) -> PrecoderMatrix:
    """Regularized ZF ``beta H (H^H H + N noise_var I)^-1`` scaled to ``tr(P P^H) = N``."""
    H = _check_tall(H)
    if not noise_var >= 0:
        raise ValueError("noise_var must be nonnegative")
    n = H.shape[1]
    alpha = n * noise_var
    P = H @ np.linalg.inv(H.conj().T @ H + alpha * np.eye(n))
    P *= math.sqrt(n / float(np.sum(np.abs(P) ** 2)))
    return PrecoderMatrix(P, "RZF")


def _paired_zf(H: np.ndarray, scheme: str) -> PrecoderMatrix:
    H = _check_tall(H)
    n = H.shape[1]
    if n % 2:
        raise ValueError(f"{scheme} pairs streams and needs an even count, got {n}")
    s = np.linalg.svd(H, compute_uv=False)
    _check_rank(s)
    P0 = H @ np.linalg.inv(H.conj().T @ H)
    # power of each unnormalized ZF column; its inverse root is the stream's
    # gain relative to unit power (the singular value itself when H = U S)
    col_power = np.sum(np.abs(P0) ** 2, axis=0)
    order = np.argsort(col_power, kind="stable")  # strongest stream first
    if scheme == "SSCP":
        pairs = [(order[2 * i], order[2 * i + 1]) for i in range(n // 2)]
    else:
        pairs = [(order[i], order[n - 1 - i]) for i in range(n // 2)]
    gains = np.empty(n)
    for a, b in pairs:
        gains[[a, b]] = math.sqrt(2.0 / (col_power[a] + col_power[b]))
    return PrecoderMatrix(P0 * gains, scheme, gains)


def sscp_precoder(H: np.ndarray) -> PrecoderMatrix:
    """ZF with power renormalized over consecutive pairs of stream gains (1,2), (3,4), ..."""
    return _paired_zf(H, "SSCP")


def pscp_precoder(H: np.ndarray) -> PrecoderMatrix:
    """ZF with power renormalized over extreme pairs of stream gains (1,N), (2,N-1), ..."""
    return _paired_zf(H, "PSCP")


def vaac_augment(base, n_virtual: int) -> VaacChannel:
    """Append ``n_virtual`` zero singular values to the nonzero spectrum of ``base``.

    ``base`` is an :class:`SvdFactors` (or a plain vector of singular values).
    """
    if n_virtual < 0:
        raise ValueError("n_virtual must be nonnegative")
    s = np.asarray(base.singular_values if isinstance(base, SvdFactors) else base, dtype=float)
    if np.any(s <= 0):
        raise SingularityError("virtual streams can only extend a spectrum of nonzero values")
    return VaacChannel(s.copy(), int(n_virtual), np.concatenate([s, np.zeros(n_virtual)]))


def stream_sinr(H: np.ndarray, P: np.ndarray, noise_var: float) -> np.ndarray:
    """Per-stream SINR at the intended antenna, other streams counted as noise."""
    A = np.asarray(H).conj().T @ np.asarray(P)
    power = np.abs(A) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + noise_var)


def linear_stream_mi(H: np.ndarray, precoder: PrecoderMatrix, constellation: Constellation,
                     noise_var: float, n_nodes: int = 8) -> float:
    """Sum over streams of the single-stream QAM information at each stream's SINR.

    Each antenna decodes its own symbol; for ZF-type schemes the SINR is the
    exact interference-free SNR, for RZF the residual interference is
    treated as additional Gaussian noise.
    """
    if precoder.stream_gains is not None:
        sinr = precoder.stream_gains**2 / noise_var
    else:
        sinr = stream_sinr(H, precoder.matrix, noise_var)
    return float(sum(qam_stream_mi(x, constellation, n_nodes) for x in sinr))
