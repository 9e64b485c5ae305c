"""Finite-alphabet mutual information for linear Gaussian channels.

The channel model throughout is ``y = A x + n`` with ``x`` drawn uniformly
from a QAM alphabet per stream and ``n`` circularly-symmetric complex
Gaussian with variance ``noise_var`` per component. All values are in bits
per channel use, summed over the streams of ``x``.

Two estimators evaluate the same expectation by independent routes:

* :func:`mi_gauss_hermite` integrates over the noise with a tensor-product
  Gauss-Hermite rule (cost grows like ``L**(2*Nr)``, so ``Nr <= 2``).
* :func:`mi_monte_carlo` samples symbols and noise.

:func:`mi_mismatched` evaluates the achievable rate of a receiver that
decodes with an erroneous map ``P_hat`` while the channel applies ``P``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels

__all__ = [
    "Constellation",
    "MiEstimate",
    "MismatchSpec",
    "CapabilityError",
    "make_constellation",
    "hermite_rule",
    "mi_gauss_hermite",
    "mi_monte_carlo",
    "apply_estimation_error",
    "mi_mismatched",
    "gcmi",
    "qam_stream_mi",
    "blocks_mi",
]

LOG2E = 1.0 / math.log(2.0)

# largest hypothesis set handled by full enumeration in one table
MAX_ENUMERATED = 16**4


class CapabilityError(ValueError):
    """Requested estimator cannot handle the problem size."""


@dataclass(frozen=True)
class Constellation:
    """Unit-energy alphabet. ``quarter_symmetric`` marks invariance under ``x -> j x``."""

    order: int
    points: np.ndarray
    quarter_symmetric: bool = False

    @property
    def bits(self) -> float:
        return math.log2(self.order)

    def __repr__(self) -> str:
        return f"Constellation(order={self.order})"


@dataclass(frozen=True)
class MiEstimate:
    """Mutual information estimate.

    ``bits`` is the raw value. ``clamped`` is ``bits`` clipped to the
    alphabet range ``[0, Nt log2 M]``; it differs from ``bits`` only for
    mismatched decoding, where a raw value outside the range means the
    link carries no information.
    """

    bits: float
    method: str
    std_error: float = 0.0
    clamped: Optional[float] = None

    def __post_init__(self):
        if self.clamped is None:
            object.__setattr__(self, "clamped", self.bits)


@dataclass(frozen=True)
class MismatchSpec:
    tau: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def _gray(n: int) -> int:
    return n ^ (n >> 1)


@functools.lru_cache(maxsize=None)
def make_constellation(order: int) -> Constellation:
    """Square Gray-mapped QAM with unit average energy.

    Point ``i`` carries label ``i``: the high half of the bits selects the
    in-phase level and the low half the quadrature level, each Gray coded.

    >>> make_constellation(4).points * np.sqrt(2)
    array([-1.-1.j, -1.+1.j,  1.-1.j,  1.+1.j])
    """
    if order not in (4, 16, 64):
        raise ValueError(f"QAM order must be 4, 16 or 64, got {order}")
    side = int(round(math.sqrt(order)))
    half_bits = int(round(math.log2(side)))
    levels = 2.0 * np.arange(side) - (side - 1)
    # level index reached by Gray label g
    level_of = np.empty(side, dtype=int)
    for pos in range(side):
        level_of[_gray(pos)] = pos
    pts = np.empty(order, dtype=complex)
    for label in range(order):
        i_lab, q_lab = label >> half_bits, label & (side - 1)
        pts[label] = levels[level_of[i_lab]] + 1j * levels[level_of[q_lab]]
    pts /= math.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return Constellation(order=order, points=pts, quarter_symmetric=True)


@functools.lru_cache(maxsize=None)
def hermite_rule(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int exp(-v^2) f(v) dv`` (read-only arrays)."""
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _symbol_table(const: Constellation, n_t: int) -> np.ndarray:
    """All ``M**n_t`` symbol vectors, first stream varying slowest."""
    grids = np.meshgrid(*([const.points] * n_t), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _noise_nodes(n_r: int, n_nodes: int, sigma: float):
    """Tensor-product complex noise nodes and normalized weights for ``n_r`` outputs."""
    v, c = hermite_rule(n_nodes)
    per_out = (v[:, None] + 1j * v[None, :]).ravel() * sigma
    w_out = (c[:, None] * c[None, :]).ravel() / math.pi
    nodes = np.zeros((len(per_out) ** n_r, n_r), dtype=complex)
    weights = np.ones(len(per_out) ** n_r)
    for r in range(n_r):
        rep_inner = len(per_out) ** (n_r - 1 - r)
        rep_outer = len(per_out) ** r
        nodes[:, r] = np.tile(np.repeat(per_out, rep_inner), rep_outer)
        weights *= np.tile(np.repeat(w_out, rep_inner), rep_outer)
    return nodes, weights


def _live_rows(P: np.ndarray, P_hat: np.ndarray):
    """Drop output rows that are identically zero in both maps.

    A dead row adds the same ``|n_r|^2`` to every hypothesis metric, which
    cancels against its share of the ``Nr`` term, so removing it is exact.
    """
    keep = np.any(P != 0, axis=1) | np.any(P_hat != 0, axis=1)
    return P[keep], P_hat[keep]


def _outer_representatives(const: Constellation, table: np.ndarray):
    """Outer symbols to visit and their multiplicity.

    For alphabets invariant under ``x -> j x`` the inner expectation is equal
    on the four rotations of a symbol vector (the noise nodes share the same
    symmetry), so one representative per orbit is enough.
    """
    if const.quarter_symmetric:
        first = table[:, 0]
        rep = (first.real > 0) & (first.imag > 0)
        return np.flatnonzero(rep), 4.0
    return np.arange(table.shape[0]), 1.0


def _split(a: np.ndarray):
    return np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)


def _check_map(A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.ndim != 2:
        raise ValueError("effective map must be a 2-D matrix")
    return A


def _quadrature_expectation(P, P_hat, const, noise_var, n_nodes):
    """``(1/M^Nt) sum_m E_n log sum_k exp(-|n + P x_m - P_hat x_k|^2/s2)`` in nats."""
    n_r, n_t = P.shape
    if n_r > 2:
        raise CapabilityError(
            f"Gauss-Hermite needs L**(2*Nr) nodes; Nr={n_r} > 2 is not supported, "
            "use mi_monte_carlo instead"
        )
    if n_t > 4:
        raise CapabilityError(f"at most 4 input streams are enumerated, got {n_t}")
    table = _symbol_table(const, n_t)
    reps, mult = _outer_representatives(const, table)
    tx = table[reps] @ P.T
    rx = P_hat @ table.T
    nodes, weights = _noise_nodes(n_r, n_nodes, math.sqrt(noise_var))
    total = _kernels.quadrature_logsum(
        *_split(tx), *_split(rx), *_split(nodes), weights, 1.0 / noise_var
    )
    return mult * total / table.shape[0]


def mi_gauss_hermite(effective_map, constellation: Constellation, noise_var: float,
                     n_nodes: int = 8) -> MiEstimate:
    """Matched mutual information of ``y = A x + n`` by Gauss-Hermite quadrature.

    Parameters
    ----------
    effective_map : (Nr, Nt) complex array
        Channel seen by the symbols. Rows that are identically zero are
        ignored; at most two live rows and four columns are supported.
    constellation : Constellation
        Per-stream alphabet.
    noise_var : float
        Noise variance per complex output component.
    n_nodes : int
        Hermite rule order ``L`` per real noise dimension.

    Returns
    -------
    MiEstimate

    Raises
    ------
    CapabilityError
        If the map has more than two live rows.
    """
    A = _check_map(effective_map)
    n_t = A.shape[1]
    A, _ = _live_rows(A, A)
    method = f"gauss-hermite({n_nodes})"
    if A.shape[0] == 0:
        return MiEstimate(0.0, method)
    if A.shape[0] > A.shape[1]:
        # y = QR x + n carries the same information as R x + Q^H n
        A = np.linalg.qr(A, mode="r")
    n_r = A.shape[0]
    expect = _quadrature_expectation(A, A, constellation, noise_var, n_nodes)
    bits = n_t * constellation.bits - (n_r + expect) * LOG2E
    return MiEstimate(float(bits), method)


def mi_mismatched(P, P_hat, constellation: Constellation, noise_var: float,
                  n_nodes: int = 8, include_penalty: bool = True) -> MiEstimate:
    """Mismatched-decoding mutual information (nearest-metric decoder using ``P_hat``).

    The estimate is

        Nt log2 M - Nr log2 e
          - (1/M^Nt) sum_m E_n log2 sum_k exp(-|n + P x_m - P_hat x_k|^2 / s2)
          - log2 e * |P - P_hat|_F^2 / s2

    with the expectation over the noise taken by Gauss-Hermite quadrature.
    The last term is the closed-form average of the decoder metric at the
    transmitted symbol; ``include_penalty=False`` omits it (diagnostics only).

    ``MiEstimate.clamped`` holds the value clipped to ``[0, Nt log2 M]``.
    """
    P = _check_map(P)
    P_hat = _check_map(P_hat)
    if P.shape != P_hat.shape:
        raise ValueError(f"P and P_hat differ in shape: {P.shape} vs {P_hat.shape}")
    n_t = P.shape[1]
    ceiling = n_t * constellation.bits
    method = f"gauss-hermite({n_nodes})"
    penalty = float(np.sum(np.abs(P - P_hat) ** 2)) / noise_var * LOG2E
    Pl, Pl_hat = _live_rows(P, P_hat)
    if Pl.shape[0] == 0:
        return MiEstimate(0.0, method, clamped=0.0)
    n_r = Pl.shape[0]
    expect = _quadrature_expectation(Pl, Pl_hat, constellation, noise_var, n_nodes)
    bits = ceiling - (n_r + expect) * LOG2E
    if include_penalty:
        bits -= penalty
    return MiEstimate(float(bits), method, clamped=float(min(max(bits, 0.0), ceiling)))


def mi_monte_carlo(effective_map, constellation: Constellation, noise_var: float,
                   n_samples: int, rng: np.random.Generator,
                   decoder_map=None) -> MiEstimate:
    """Monte Carlo estimate of the (optionally mismatched) mutual information.

    Each sample draws a symbol vector and a noise vector and scores
    ``Nt log2 M - log2 sum_k q(y|x_k) / q(y|x_m)`` with the Gaussian metric
    ``q`` built from ``decoder_map`` (``effective_map`` when omitted). The
    hypothesis sum enumerates all ``M**Nt`` vectors; for upper-triangular
    reductions of larger problems see :func:`gcmi`.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    A = _check_map(effective_map)
    A_hat = A if decoder_map is None else _check_map(decoder_map)
    n_r, n_t = A.shape
    M = constellation.order
    if M**n_t > MAX_ENUMERATED:
        raise CapabilityError(f"{M}**{n_t} hypotheses exceed the enumeration limit")
    table = _symbol_table(constellation, n_t)
    sent = rng.integers(0, M, size=(n_samples, n_t))
    x = constellation.points[sent]
    noise = math.sqrt(noise_var / 2) * (rng.standard_normal((n_samples, n_r))
                                        + 1j * rng.standard_normal((n_samples, n_r)))
    y = x @ A.T + noise
    # decoder metric at the sent symbol (equals |n|^2 when matched)
    ref = np.sum(np.abs(y - x @ A_hat.T) ** 2, axis=1)
    out = np.empty(n_samples)
    _kernels.sample_logsum(*_split(y), *_split(A_hat @ table.T), ref, 1.0 / noise_var, out)
    samples = n_t * constellation.bits - out * LOG2E
    return _mc_estimate(samples, n_samples, n_t * constellation.bits)


def _mc_estimate(samples: np.ndarray, n_samples: int, ceiling: float) -> MiEstimate:
    bits = float(np.mean(samples))
    err = float(np.std(samples, ddof=1) / math.sqrt(n_samples))
    return MiEstimate(bits, f"monte-carlo({n_samples})", err,
                      clamped=float(min(max(bits, 0.0), ceiling)))


def apply_estimation_error(P, mismatch: MismatchSpec, rng: Optional[np.random.Generator] = None):
    """Receiver-side estimate ``sqrt(1 - tau^2) P + tau E`` with unit-variance complex Gaussian ``E``.

    ``rng`` defaults to a generator seeded from ``mismatch.seed``.
    """
    P = np.asarray(P, dtype=complex)
    if mismatch.tau == 0.0:
        return P.copy()
    if rng is None:
        rng = np.random.default_rng(mismatch.seed)
    err = (rng.standard_normal(P.shape) + 1j * rng.standard_normal(P.shape)) / math.sqrt(2)
    return math.sqrt(1.0 - mismatch.tau**2) * P + mismatch.tau * err


def gcmi(H, constellation: Constellation, noise_var: float, method: str = "auto",
         n_samples: int = 100_000, rng: Optional[np.random.Generator] = None,
         n_nodes: int = 8) -> MiEstimate:
    """Mutual information of the unprecoded channel ``y = H x + n``.

    ``method`` is ``"gauss-hermite"``, ``"monte-carlo"`` or ``"auto"``
    (quadrature when at most two outputs remain after triangularization).
    The Monte Carlo path reduces ``H`` to its triangular factor and walks the
    full hypothesis tree with a pruning bound whose neglected mass is below
    1e-17 of the sum, so it matches exhaustive enumeration.
    """
    H = _check_map(H)
    n_t = H.shape[1]
    if not np.any(H):
        return MiEstimate(0.0, method)
    # y = Q R x + n  ->  R x + Q^H n; for tall H this also drops dead dimensions
    R = np.linalg.qr(H, mode="r") if H.shape[0] >= n_t else H
    if method == "auto":
        method = "gauss-hermite" if R.shape[0] <= 2 and n_t <= 4 else "monte-carlo"
    if method == "gauss-hermite":
        return mi_gauss_hermite(R, constellation, noise_var, n_nodes)
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    if R.shape[0] != n_t:
        # wide channel: no triangular shortcut, enumerate directly
        return mi_monte_carlo(R, constellation, noise_var, n_samples, rng)
    M = constellation.order
    sent = rng.integers(0, M, size=(n_samples, n_t))
    x = constellation.points[sent]
    noise = math.sqrt(noise_var / 2) * (rng.standard_normal((n_samples, n_t))
                                        + 1j * rng.standard_normal((n_samples, n_t)))
    y = x @ R.T + noise
    ref = np.sum(np.abs(noise) ** 2, axis=1)
    out = np.empty(n_samples)
    slack = 40.0 + n_t * math.log(M)
    _kernels.triangular_logsum(*_split(y), *_split(R), *_split(constellation.points),
                               ref, 1.0 / noise_var, slack, out)
    samples = n_t * constellation.bits - out * LOG2E
    return _mc_estimate(samples, n_samples, n_t * constellation.bits)


@functools.lru_cache(maxsize=4096)
def _qam_stream_mi_cached(order: int, snr: float, n_nodes: int) -> float:
    const = make_constellation(order)
    return mi_gauss_hermite(np.array([[math.sqrt(snr)]]), const, 1.0, n_nodes).bits


def qam_stream_mi(snr: float, constellation: Constellation, n_nodes: int = 8) -> float:
    """Bits carried by one interference-free QAM stream at linear SNR ``snr``."""
    if snr <= 0:
        return 0.0
    return _qam_stream_mi_cached(constellation.order, float(snr), n_nodes)


def blocks_mi(blocks, constellation: Constellation, noise_var: float, tau: float = 0.0,
              rng: Optional[np.random.Generator] = None, n_nodes: int = 8):
    """Total information of independently decoded blocks ``y_i = diag(g_i) P_i x_i + n_i``.

    ``blocks`` holds ``(g_i, P_i)`` pairs. With ``tau > 0`` each receiver
    decodes with ``diag(g_i) P_hat_i`` where ``P_hat_i`` follows
    :func:`apply_estimation_error`; the gains are known exactly. The
    per-block clamped values are summed. Returns ``(raw_bits, clamped_bits)``.
    """
    raw = clamped = 0.0
    mismatch = MismatchSpec(tau)
    for gains, P in blocks:
        g = np.asarray(gains, dtype=float)[:, None]
        A = g * np.asarray(P, dtype=complex)
        if tau == 0.0:
            est = mi_gauss_hermite(A, constellation, noise_var, n_nodes)
        else:
            A_hat = g * apply_estimation_error(P, mismatch, rng)
            est = mi_mismatched(A, A_hat, constellation, noise_var, n_nodes)
        raw += est.bits
        clamped += est.clamped
    return raw, clamped
