"""ULA group channels and their DFT-beamspace (virtual channel) representation.

Each user antenna sees ``L`` paths arriving from elevation angles drawn
uniformly in ``[mean - spread, mean + spread]``::

    h = (1/sqrt(L)) * sum_l beta_l * a(theta_l),  a(theta)_n = exp(-j 2 pi D n cos(theta))

with unit-variance complex Gaussian gains ``beta_l``. The group channel
``H_g`` (``N_u x N_d``) is projected onto the unitary DFT basis and only the
significant beams are kept, giving the reduced virtual channel
``H_gv = S^T F^H H_g`` used by every precoder.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "DimensionError",
    "ArrayGeometry",
    "GroupParams",
    "FixedBeams",
    "EnergyBeams",
    "GroupChannel",
    "SvdFactors",
    "ula_response",
    "dft_matrix",
    "channel_rng",
    "generate_user_antenna_channel",
    "assemble_group_channel",
    "generate_group_channel",
    "vcm_project_and_select",
    "svd_natural",
    "group_orthogonality_defect",
    "is_cyclically_contiguous",
    "write_matrix",
    "read_matrix",
]


class DimensionError(ValueError):
    """Matrix or vector sizes are inconsistent."""


@dataclass(frozen=True)
class ArrayGeometry:
    n_antennas: int
    spacing: float = 0.5  # element distance over wavelength

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ValueError(f"n_antennas must be a positive integer, got {self.n_antennas}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class GroupParams:
    """Angular cluster of one user group. Angles are in radians."""

    mean_elevation: float
    angular_spread: float
    n_paths: int
    n_users: int
    antennas_per_user: int = 2

    def __post_init__(self):
        lo = self.mean_elevation - self.angular_spread
        hi = self.mean_elevation + self.angular_spread
        if self.angular_spread < 0:
            raise ValueError("angular_spread must be nonnegative")
        if not (0 < lo and hi < math.pi):
            raise ValueError(
                f"angular support [{lo:.4f}, {hi:.4f}] rad must stay inside (0, pi)"
            )
        for name in ("n_paths", "n_users", "antennas_per_user"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    @classmethod
    def from_degrees(cls, mean_deg, spread_deg, n_paths, n_users, antennas_per_user=2):
        return cls(math.radians(mean_deg), math.radians(spread_deg), n_paths, n_users,
                   antennas_per_user)

    @property
    def n_streams(self) -> int:
        return self.n_users * self.antennas_per_user


@dataclass(frozen=True)
class FixedBeams:
    """Keep the ``r`` strongest beams."""

    r: int


@dataclass(frozen=True)
class EnergyBeams:
    """Keep the fewest strongest beams holding at least ``1 - eps`` of the energy."""

    eps: float = 0.01


BeamPolicy = Union[FixedBeams, EnergyBeams]


@dataclass(frozen=True)
class GroupChannel:
    uplink: np.ndarray
    beam_set: np.ndarray
    virtual: np.ndarray
    projected: np.ndarray = field(repr=False)

    @property
    def n_beams(self) -> int:
        return len(self.beam_set)

    @property
    def n_streams(self) -> int:
        return self.uplink.shape[1]

    def energy_fraction(self) -> float:
        total = float(np.sum(np.abs(self.projected) ** 2))
        return float(np.sum(np.abs(self.virtual) ** 2)) / total if total > 0 else 1.0

    def reconstruct(self) -> np.ndarray:
        """Beam-confined uplink channel ``F[:, S] @ H_gv``."""
        F = dft_matrix(self.uplink.shape[0])
        return F[:, self.beam_set] @ self.virtual

    def with_columns(self, columns: Sequence[int]) -> "GroupChannel":
        """Same beams, restricted to a subset of the user antennas."""
        cols = np.asarray(columns, dtype=int)
        return GroupChannel(self.uplink[:, cols], self.beam_set, self.virtual[:, cols],
                            self.projected[:, cols])


@dataclass(frozen=True)
class SvdFactors:
    """``A = left @ diag(singular_values) @ right^H`` with descending values."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.conj().T


def ula_response(theta: float, geometry: ArrayGeometry) -> np.ndarray:
    n = np.arange(geometry.n_antennas)
    phase = -2.0 * math.pi * geometry.spacing * math.cos(theta) * n
    return np.exp(1j * phase)


_DFT_CACHE: dict = {}


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``F[p, k] = exp(-j 2 pi p k / n) / sqrt(n)`` (read-only, cached)."""
    F = _DFT_CACHE.get(n)
    if F is None:
        idx = np.arange(n)
        F = np.exp(-2j * math.pi * np.outer(idx, idx) / n) / math.sqrt(n)
        F.setflags(write=False)
        _DFT_CACHE[n] = F
    return F


def channel_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, group, user, antenna, ...)``.

    Streams are keyed rather than drawn in sequence, so any sub-object can
    be regenerated without replaying the others.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def generate_user_antenna_channel(params: GroupParams, geometry: ArrayGeometry,
                                  rng: np.random.Generator, unit_gains: bool = False) -> np.ndarray:
    """One antenna's uplink channel. ``unit_gains`` fixes every path gain to 1 (testing)."""
    L = params.n_paths
    theta = rng.uniform(params.mean_elevation - params.angular_spread,
                        params.mean_elevation + params.angular_spread, size=L)
    if unit_gains:
        beta = np.ones(L, dtype=complex)
    else:
        beta = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2)
    n = np.arange(geometry.n_antennas)
    steering = np.exp(-2j * math.pi * geometry.spacing * np.outer(n, np.cos(theta)))
    return steering @ beta / math.sqrt(L)


def assemble_group_channel(user_channels: Sequence[np.ndarray]) -> np.ndarray:
    """Stack antenna channels as columns, in the order given (user-major)."""
    vecs = [np.asarray(v, dtype=complex).ravel() for v in user_channels]
    if not vecs:
        raise DimensionError("at least one antenna channel is required")
    lengths = {len(v) for v in vecs}
    if len(lengths) != 1:
        raise DimensionError(f"antenna channels have mismatched lengths {sorted(lengths)}")
    return np.column_stack(vecs)


def generate_group_channel(params: GroupParams, geometry: ArrayGeometry, seed: int,
                           group_id: int = 0) -> np.ndarray:
    """``N_u x (K_g N_d,k)`` uplink channel, columns ordered user by user."""
    cols = []
    for user in range(params.n_users):
        for ant in range(params.antennas_per_user):
            rng = channel_rng(seed, group_id, user, ant)
            cols.append(generate_user_antenna_channel(params, geometry, rng))
    return assemble_group_channel(cols)


def _select_beams(row_energy: np.ndarray, policy: BeamPolicy) -> np.ndarray:
    # strongest first; ties broken by lower index
    order = np.lexsort((np.arange(len(row_energy)), -row_energy))
    if isinstance(policy, FixedBeams):
        if not 1 <= policy.r <= len(row_energy):
            raise ValueError(f"fixed({policy.r}) needs 1 <= r <= {len(row_energy)}")
        chosen = order[: policy.r]
    elif isinstance(policy, EnergyBeams):
        if not 0 <= policy.eps < 1:
            raise ValueError(f"energy eps must lie in [0, 1), got {policy.eps}")
        total = row_energy.sum()
        cum = np.cumsum(row_energy[order])
        count = int(np.searchsorted(cum, (1.0 - policy.eps) * total * (1 - 1e-15)) + 1)
        chosen = order[: min(count, len(order))]
    else:
        raise TypeError(f"unknown beam policy {policy!r}")
    return np.sort(chosen)


def vcm_project_and_select(H_g: np.ndarray, geometry: ArrayGeometry,
                           policy: BeamPolicy = EnergyBeams()) -> GroupChannel:
    """Project ``H_g`` on the DFT beams and keep the significant ones."""
    H_g = np.asarray(H_g, dtype=complex)
    if H_g.ndim != 2 or H_g.shape[0] != geometry.n_antennas:
        raise DimensionError(f"H_g must have {geometry.n_antennas} rows, got shape {H_g.shape}")
    projected = dft_matrix(geometry.n_antennas).conj().T @ H_g
    beams = _select_beams(np.sum(np.abs(projected) ** 2, axis=1), policy)
    return GroupChannel(H_g, beams, projected[beams], projected)


def is_cyclically_contiguous(beam_set: Sequence[int], n: int) -> bool:
    """True if the indices form one run on the DFT ring (bin ``n-1`` neighbours bin 0)."""
    s = sorted(set(int(b) for b in beam_set))
    if len(s) in (0, n):
        return True
    gaps = sum(1 for a, b in zip(s, s[1:] + [s[0] + n]) if b - a > 1)
    return gaps == 1


def svd_natural(A: np.ndarray) -> SvdFactors:
    """Thin SVD with descending singular values and a fixed phase convention.

    The first non-negligible entry of every right singular vector is made
    real positive; the compensating phase goes into the left vector, so the
    product is unchanged and equal inputs always give equal factors.
    """
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        raise DimensionError("cannot decompose an empty matrix")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    order = np.argsort(-s, kind="stable")
    U, s, V = U[:, order], s[order], Vh[order].conj().T
    for i in range(V.shape[1]):
        col = V[:, i]
        mags = np.abs(col)
        j = int(np.argmax(mags > 1e-12 * mags.max())) if mags.max() > 0 else 0
        if mags[j] > 0:
            ph = col[j] / mags[j]
            V[:, i] = col / ph
            U[:, i] = U[:, i] / ph
            V[j, i] = mags[j]
    return SvdFactors(U, s, V)


def group_orthogonality_defect(groups: Sequence[GroupChannel], geometry: ArrayGeometry) -> float:
    """Worst normalized cross-correlation between the downlinks of two groups.

    For every pair the value is ``|H_g^H H_m|_F / sqrt(|H_g^H H_g|_F |H_m^H H_m|_F)``.
    By Cauchy-Schwarz it lies in ``[0, 1]``; it is 0 for disjoint beam support
    and 1 when both groups span the same channel.
    """
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    for g in groups:
        if g.uplink.shape[0] != geometry.n_antennas:
            raise DimensionError("group channel does not match the array size")
    worst = 0.0
    for i, gi in enumerate(groups):
        for gj in groups[i + 1:]:
            num = np.linalg.norm(gi.uplink.conj().T @ gj.uplink)
            den = math.sqrt(np.linalg.norm(gi.uplink.conj().T @ gi.uplink)
                            * np.linalg.norm(gj.uplink.conj().T @ gj.uplink))
            worst = max(worst, float(num / den))
    return worst


_MAGIC = b"CMAT"
_HEADER = struct.Struct("<4sIII")


def write_matrix(path, A: np.ndarray) -> None:
    """Dump a complex matrix: 16-byte header (magic, version, rows, cols), then row-major <f8 pairs."""
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, A.shape[0], A.shape[1]))
        fh.write(np.ascontiguousarray(A).astype("<c16").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(head)
        if magic != _MAGIC or version != 1:
            raise ValueError(f"{path}: not a complex matrix dump")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {data.size}")
    return data.reshape(rows, cols).astype(np.complex128)
