"""Per-group precoding with 2x2 blocks (PGP-WG) and its zero-forcing combination.

PGP-WG writes a group precoder as ``U_N Sigma_PGP V_PGP^H`` where ``U_N``
holds the leading left singular vectors of the virtual channel, and
``Sigma_PGP`` / ``V_PGP`` are block diagonal over pairs of streams. Each
pair is optimized independently for finite-alphabet mutual information
under ``tr(Sigma_i^2) = 2``.

ZF-PGP puts the PGP stage behind a zero-forcing stage. After ZF the group
sees the PGP precoder directly, but its power is reweighted by
``M = V S^-2 V^H``. With ``w_m = sqrt(M_mm)`` the PGP powers can be
rescaled so the constraint becomes an ordinary one, and the problem reduces
to PGP-WG on a diagonal channel with gains ``1 / w_m``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel_model import SvdFactors
from .mutual_info import Constellation, mi_gauss_hermite
from .precoder_bank import PrecoderMatrix, SingularityError, RANK_TOL, vaac_augment

__all__ = [
    "InternalConsistencyError",
    "EffectiveChannel",
    "SubgroupPlan",
    "SubgroupSolution",
    "PgpSolution",
    "OptimizerBudget",
    "effective_weights",
    "pair_subgroups",
    "unitary_from_angles",
    "subgroup_map",
    "optimize_2x2",
    "pgp_wg",
    "pgp_precoder",
    "zf_pgp",
    "subgroup_blocks",
    "format_solution",
]

PLAN_MODES = ("user-aligned", "max-distance", "vaac")
SQRT2 = math.sqrt(2.0)


class InternalConsistencyError(RuntimeError):
    """A composed precoder violated an identity that holds by construction."""


@dataclass(frozen=True)
class EffectiveChannel:
    weights: np.ndarray
    eff_singular_values: np.ndarray


@dataclass(frozen=True)
class SubgroupPlan:
    """Partition of stream indices into pairs. Virtual streams are those with index >= ``n_real``."""

    pairs: tuple
    mode: str
    n_real: int

    @property
    def n_streams(self) -> int:
        return 2 * len(self.pairs)


@dataclass(frozen=True)
class OptimizerBudget:
    """Coarse grid then compass search for the 2x2 subproblem.

    ``grid`` points per search coordinate, ``rounds`` step halvings of the
    local search, at most ``max_moves`` accepted moves per round.
    """

    grid: int = 9
    rounds: int = 6
    shrink: float = 0.5
    max_moves: int = 4
    n_nodes: int = 8


@dataclass(frozen=True)
class SubgroupSolution:
    s_pair: tuple
    sigma_pair: tuple
    v_unitary: np.ndarray
    mi_bits: float
    angles: tuple = ()  # (phi, theta, psi)
    evaluations: int = 0


@dataclass(frozen=True)
class PgpSolution:
    plan: SubgroupPlan
    per_subgroup: tuple
    left_factor: np.ndarray
    stream_values: np.ndarray
    sigma_eff: np.ndarray = field(repr=False)
    v_pgp: np.ndarray = field(repr=False)

    @property
    def total_mi_bits(self) -> float:
        return float(sum(sub.mi_bits for sub in self.per_subgroup))

    def subgroup_precoder(self, i: int) -> np.ndarray:
        """The 2x2 block ``diag(sigma) V_i^H`` of subgroup ``i``."""
        sub = self.per_subgroup[i]
        return np.diag(sub.sigma_pair) @ sub.v_unitary.conj().T

    def subgroup_gains(self, i: int) -> np.ndarray:
        a, b = self.plan.pairs[i]
        return self.stream_values[[a, b]]


def effective_weights(svd: SvdFactors, n_streams: int) -> EffectiveChannel:
    """Closed-form ``w_m = sqrt(sum_m' |V_mm'|^2 / s_m'^2)`` over the leading ``n_streams`` modes."""
    s = svd.singular_values[:n_streams]
    if len(s) < n_streams or np.any(s <= RANK_TOL * svd.singular_values[0]):
        raise SingularityError(
            f"need {n_streams} nonzero singular values, got {np.array2string(s, precision=3)}"
        )
    V = svd.right[:, :n_streams]
    w = np.sqrt(np.sum(np.abs(V) ** 2 / s**2, axis=1))
    return EffectiveChannel(w, 1.0 / w)


def _max_distance_pairs(indices: Sequence[int], values: np.ndarray) -> list:
    idx = sorted(indices, key=lambda i: (-values[i], i))
    n = len(idx)
    return [(idx[i], idx[n - 1 - i]) for i in range(n // 2)]


def pair_subgroups(eff_values, mode: str = "user-aligned") -> SubgroupPlan:
    """Pair up streams.

    ``user-aligned`` pairs ``(0, 1), (2, 3), ...`` (one user's two antennas).
    ``max-distance`` pairs the i-th largest value with the i-th smallest.
    ``vaac`` treats zero values as virtual streams and gives each one the
    largest still unpaired real stream; leftover real streams are paired by
    max distance.
    """
    values = np.asarray(eff_values, dtype=float)
    n = len(values)
    if n % 2:
        raise ValueError(f"pairing needs an even number of streams, got {n}")
    if mode not in PLAN_MODES:
        raise ValueError(f"unknown pairing mode {mode!r}")
    virtual = [i for i in range(n) if values[i] == 0.0]
    real = [i for i in range(n) if values[i] != 0.0]
    if mode == "user-aligned":
        pairs = [(2 * i, 2 * i + 1) for i in range(n // 2)]
    elif mode == "max-distance":
        pairs = _max_distance_pairs(range(n), values)
    else:
        if len(virtual) > len(real):
            raise ValueError(f"{len(virtual)} virtual streams but only {len(real)} real ones")
        ranked = sorted(real, key=lambda i: (-values[i], i))
        pairs = list(zip(ranked[: len(virtual)], virtual))
        pairs += _max_distance_pairs(ranked[len(virtual):], values)
    return SubgroupPlan(tuple((int(a), int(b)) for a, b in pairs), mode, len(real))


def unitary_from_angles(theta: float, psi: float, chi: float = 0.0) -> np.ndarray:
    """2x2 unitary ``V`` with ``V^H = diag(1, e^{j chi}) R(theta) diag(1, e^{j psi})``.

    The output phase ``chi`` does not change the information carried by
    ``diag(g) V^H``, so the optimizer keeps it at zero.
    """
    c, s = math.cos(theta), math.sin(theta)
    vh = np.array([[c, s * np.exp(1j * psi)],
                   [-s * np.exp(1j * chi), c * np.exp(1j * (psi + chi))]])
    return vh.conj().T


def subgroup_map(s_pair, sigma_pair, v_unitary) -> np.ndarray:
    """Noiseless 2x2 map ``diag(s) diag(sigma) V^H`` of one subgroup."""
    return np.diag(np.asarray(s_pair) * np.asarray(sigma_pair)) @ np.asarray(v_unitary).conj().T


def _grid(lo, hi, n):
    return np.linspace(lo, hi, n) if n > 1 else np.array([lo])


def optimize_2x2(s_pair, constellation: Constellation, noise_var: float,
                 budget: OptimizerBudget = OptimizerBudget()) -> SubgroupSolution:
    """Search ``sigma = sqrt(2)(cos phi, sin phi)`` and ``V`` maximizing the subgroup information.

    The information of ``diag(s) diag(sigma) V^H`` is invariant to row
    phases, input permutations, per-input quarter turns and conjugation,
    which reduces ``V`` to a rotation ``theta`` and a relative input phase
    ``psi``, both on ``[0, pi/4]``. ``phi`` covers ``[0, pi/2]``. With a dead
    second stream (``s_2 = 0``) the information only grows with ``cos phi``,
    so ``phi`` is pinned to 0.

    The search is a full grid followed by a compass search with step
    halving. Candidates are compared by information, then by the
    lexicographically smaller ``(phi, theta, psi)``, so the result does not
    depend on evaluation order.
    """
    s1, s2 = (float(x) for x in s_pair)
    if s1 < s2:
        raise ValueError(f"s_pair must be descending, got {s_pair}")
    if s1 == 0.0:
        return SubgroupSolution((s1, s2), (SQRT2, 0.0), np.eye(2, dtype=complex), 0.0,
                                (0.0, 0.0, 0.0), 0)
    dead = s2 == 0.0
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([0.0 if dead else math.pi / 2, math.pi / 4, math.pi / 4])
    cache: dict = {}

    def value(x) -> float:
        key = tuple(float(v) for v in x)
        if key not in cache:
            phi, theta, psi = key
            sigma = (SQRT2 * math.cos(phi), SQRT2 * math.sin(phi))
            A = subgroup_map((s1, s2), sigma, unitary_from_angles(theta, psi))
            cache[key] = mi_gauss_hermite(A, constellation, noise_var, budget.n_nodes).bits
        return cache[key]

    def better(xa, va, xb, vb) -> bool:
        return va > vb or (va == vb and tuple(xa) < tuple(xb))

    axes = [_grid(lo[d], hi[d], budget.grid if hi[d] > lo[d] else 1) for d in range(3)]
    best_x, best_v = None, -np.inf
    for x in itertools.product(*axes):
        v = value(x)
        if best_x is None or better(x, v, best_x, best_v):
            best_x, best_v = np.array(x), v
    step = np.array([(hi[d] - lo[d]) / max(budget.grid - 1, 1) * budget.shrink for d in range(3)])
    live = [d for d in range(3) if hi[d] > lo[d]]
    for _ in range(budget.rounds):
        for _ in range(budget.max_moves):
            cand_x, cand_v = best_x, best_v
            for d in live:
                for sign in (-1.0, 1.0):
                    x = best_x.copy()
                    x[d] = min(max(x[d] + sign * step[d], lo[d]), hi[d])
                    v = value(x)
                    if better(x, v, cand_x, cand_v):
                        cand_x, cand_v = x, v
            if cand_x is best_x:
                break
            best_x, best_v = cand_x, cand_v
        step = step * budget.shrink
    phi, theta, psi = (float(v) for v in best_x)
    sigma = (SQRT2 * math.cos(phi), SQRT2 * math.sin(phi))
    if dead:
        sigma = (SQRT2, 0.0)
    return SubgroupSolution((s1, s2), sigma, unitary_from_angles(theta, psi), float(best_v),
                            (phi, theta, psi), len(cache))


def pgp_wg(eff_values, left_factor: Optional[np.ndarray], plan: SubgroupPlan,
           constellation: Constellation, noise_var: float,
           budget: OptimizerBudget = OptimizerBudget()) -> PgpSolution:
    """Solve every subgroup of ``plan`` and assemble block-diagonal ``Sigma`` and ``V``.

    Subgroups with equal gains share one optimization.
    """
    values = np.asarray(eff_values, dtype=float)
    n = len(values)
    covered = sorted(i for pair in plan.pairs for i in pair)
    if covered != list(range(n)):
        raise ValueError("plan does not partition the streams")
    solved: dict = {}
    subs = []
    sigma_eff = np.zeros(n)
    V = np.zeros((n, n), dtype=complex)
    for a, b in plan.pairs:
        # the optimizer expects the stronger stream first
        swap = values[a] < values[b]
        key = (values[b], values[a]) if swap else (values[a], values[b])
        if key not in solved:
            solved[key] = optimize_2x2(key, constellation, noise_var, budget)
        sub = solved[key]
        if swap:
            perm = np.array([[0, 1], [1, 0]])
            sub = SubgroupSolution((values[a], values[b]), sub.sigma_pair[::-1],
                                   perm @ sub.v_unitary @ perm, sub.mi_bits, sub.angles,
                                   sub.evaluations)
        subs.append(sub)
        sigma_eff[[a, b]] = sub.sigma_pair
        V[np.ix_([a, b], [a, b])] = sub.v_unitary
    sol = PgpSolution(plan, tuple(subs), left_factor, values, sigma_eff, V)
    if abs(float(np.sum(sigma_eff**2)) - n) > 1e-9 * n:
        raise InternalConsistencyError("PGP powers do not sum to the stream count")
    return sol


@dataclass(frozen=True)
class _Streams:
    values: np.ndarray
    plan: SubgroupPlan
    scale: float


def _streams(values: np.ndarray, vaac_n: int, plan_mode: str) -> _Streams:
    # Every subgroup ends with power 2 on its real streams, so the real
    # transmit power is the padded stream count. Scaling the gains by
    # sqrt(n / (n + vaac_n)) brings it back to n, the power of plain ZF.
    n = len(values)
    scale = 1.0
    if vaac_n > 0:
        scale = math.sqrt(n / (n + vaac_n))
        values = scale * vaac_augment(values, vaac_n).augmented_singular_values
        plan_mode = "vaac"
    return _Streams(values, pair_subgroups(values, plan_mode), scale)


def pgp_precoder(svd: SvdFactors, n_streams: int, constellation: Constellation,
                 noise_var: float, vaac_n: int = 0, plan_mode: str = "max-distance",
                 budget: OptimizerBudget = OptimizerBudget()):
    """Plain PGP-WG on the channel's own singular values.

    Returns ``(PrecoderMatrix, PgpSolution)``. The matrix is
    ``U_N Sigma_PGP V_PGP^H`` restricted to the real stream rows; its MI
    assumes joint decoding inside the group. With ``vaac_n`` virtual streams
    the stream gains are scaled so that ``tr(P P^H) = n_streams``.
    """
    s = svd.singular_values[:n_streams]
    if np.any(s <= RANK_TOL * svd.singular_values[0]):
        raise SingularityError("PGP needs nonzero singular values on every real stream")
    st = _streams(s, vaac_n, plan_mode)
    U = svd.left[:, :n_streams]
    sol = pgp_wg(st.values, U, st.plan, constellation, noise_var, budget)
    rows = (st.scale * sol.sigma_eff[:, None] * sol.v_pgp.conj().T)[:n_streams]
    return PrecoderMatrix(U @ rows, "PGP"), sol


def zf_pgp(svd: SvdFactors, n_streams: int, constellation: Constellation, noise_var: float,
           vaac_n: int = 0, plan_mode: str = "user-aligned",
           budget: OptimizerBudget = OptimizerBudget()):
    """ZF-PGP precoder of a group with virtual channel ``U S V^H``.

    Returns ``(PrecoderMatrix, PgpSolution, EffectiveChannel)``. The matrix is
    ``P_ZF P_PGP`` with ``P_ZF = U_N S^-1 V^H`` and ``P_PGP`` holding, for each
    real stream ``m``, the row ``(c sigma_eff_m / w_m) (V_PGP^H)_m``. Here
    ``c = sqrt(n / (n + vaac_n))`` keeps ``tr(P P^H) = n_streams`` when
    virtual streams are added (``c = 1`` otherwise); the solution's stream
    values already include it.

    Raises
    ------
    SingularityError
        If any of the leading ``n_streams`` singular values vanishes.
    InternalConsistencyError
        If the composed matrix misses the reweighted power identity.
    """
    eff = effective_weights(svd, n_streams)
    st = _streams(eff.eff_singular_values, vaac_n, plan_mode)
    U = svd.left[:, :n_streams]
    sol = pgp_wg(st.values, U, st.plan, constellation, noise_var, budget)
    s = svd.singular_values[:n_streams]
    V = svd.right[:, :n_streams]
    p_zf = (U / s) @ V.conj().T
    s_pgp = st.scale * sol.sigma_eff[:n_streams] / eff.weights
    p_pgp = s_pgp[:, None] * sol.v_pgp.conj().T[:n_streams]
    P = p_zf @ p_pgp
    target = float(n_streams)
    power = float(np.sum(np.abs(P) ** 2))
    if abs(power - target) > 1e-9 * max(target, 1.0):
        raise InternalConsistencyError(
            f"ZF-PGP power {power!r} differs from the reweighted budget {target!r}"
        )
    return PrecoderMatrix(P, "ZF-PGP"), sol, eff


def subgroup_blocks(sol: PgpSolution) -> list:
    """Per subgroup, ``(gains, P_o)`` with received map ``diag(gains) @ P_o``.

    ``P_o = Sigma_i V_i^H`` is the part a receiver has to estimate; the gains
    are the stream values (zero for a virtual stream, whose row then
    carries nothing).
    """
    return [(sol.subgroup_gains(i), sol.subgroup_precoder(i)) for i in range(len(sol.plan.pairs))]


def format_solution(sol: PgpSolution) -> str:
    """Human-readable per-subgroup report for regression diffs."""
    lines = [f"plan mode={sol.plan.mode} real={sol.plan.n_real} streams={sol.plan.n_streams}"]
    for i, (pair, sub) in enumerate(zip(sol.plan.pairs, sol.per_subgroup)):
        angles = " ".join(f"{a:.6f}" for a in sub.angles)
        lines.append(
            f"subgroup {i} streams={pair[0]},{pair[1]} gains={sub.s_pair[0]:.6f},{sub.s_pair[1]:.6f} "
            f"sigma={sub.sigma_pair[0]:.6f},{sub.sigma_pair[1]:.6f} angles={angles} "
            f"mi={sub.mi_bits:.6f}"
        )
    lines.append(f"total mi={sol.total_mi_bits:.6f}")
    return "\n".join(lines)
