"""Batch evaluation of a scenario: every (group, subcarrier, precoder, SNR, repetition) cell."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..channel_model import (DimensionError, GroupChannel, generate_group_channel, svd_natural,
                             vcm_project_and_select)
from ..mutual_info import blocks_mi, gcmi, make_constellation
from ..pgp_core import OptimizerBudget, pgp_precoder, subgroup_blocks, zf_pgp
from ..precoder_bank import (pscp_precoder, rzf_precoder, sscp_precoder, stream_sinr,
                             zf_precoder)
from .config import ScenarioConfig

__all__ = ["Cell", "ResultRow", "CellFilter", "cfsdm_partition", "build_cells", "evaluate_cell",
           "run_sweep", "snr_b_transform", "aggregate_cfsdm", "check_monotone",
           "row_sort_key", "AGGREGATE"]

log = logging.getLogger("mimo_lab")

# subcarrier id carried by CFSDM aggregate rows
AGGREGATE = -1

# spawn-key prefixes keep the channel, estimation-error and Monte Carlo streams apart
_CHANNEL, _ERROR, _SAMPLING = 0, 1, 2


@dataclass(frozen=True)
class Cell:
    group: int
    subcarrier: int
    precoder: int
    snr_index: int
    repetition: int


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    group: int
    subcarrier: int
    kind: str
    precoder: str
    scheme: str
    tau: float
    snr_db: float
    snr_b_db: Optional[float]
    seed: int
    mi_bits: Optional[float]
    mi_bits_clamped: Optional[float]
    spectral_efficiency: Optional[float]
    std_error: Optional[float]
    method: str
    status: str
    runtime_ms: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def cfsdm_partition(group: GroupChannel, partition: Sequence[Sequence[int]]) -> list:
    """Split a group's antennas over subcarriers; each block keeps all beams.

    Raises ``ValueError`` if the blocks overlap or miss antennas and
    :class:`DimensionError` if a block has more antennas than beams.
    """
    flat = [int(c) for block in partition for c in block]
    if sorted(flat) != list(range(group.n_streams)):
        raise ValueError(f"partition does not cover the {group.n_streams} antennas exactly once")
    parts = []
    for block in partition:
        if len(block) > group.n_beams:
            raise DimensionError(
                f"a subcarrier block of {len(block)} antennas exceeds the {group.n_beams} beams; "
                "use more subcarriers"
            )
        parts.append(group.with_columns(block))
    return parts


class CellFilter:
    """``key=v1|v2,key=v`` selection over ``group, subcarrier, precoder, snr, seed, tau``."""

    KEYS = ("group", "subcarrier", "precoder", "snr", "seed", "tau")

    def __init__(self, text: Optional[str] = None):
        self.clauses: dict = {}
        if not text:
            return
        for clause in text.split(","):
            key, sep, values = clause.partition("=")
            key = key.strip()
            if not sep or key not in self.KEYS or not values.strip():
                raise ValueError(f"bad cell filter clause {clause!r}; expected key=value with key "
                                 f"in {', '.join(self.KEYS)}")
            vals = [v.strip() for v in values.split("|")]
            if key == "precoder":
                self.clauses[key] = set(vals)
            elif key in ("snr", "tau"):
                try:
                    self.clauses[key] = {float(v) for v in vals}
                except ValueError:
                    raise ValueError(f"cell filter {key} needs numbers, got {values!r}") from None
            else:
                try:
                    self.clauses[key] = {int(v) for v in vals}
                except ValueError:
                    raise ValueError(f"cell filter {key} needs integers, got {values!r}") from None

    def _match(self, key, value) -> bool:
        return key not in self.clauses or value in self.clauses[key]

    def cell(self, cfg: ScenarioConfig, c: Cell) -> bool:
        return (self._match("group", c.group) and self._match("subcarrier", c.subcarrier)
                and self._match("precoder", cfg.precoders[c.precoder].label)
                and self._match("snr", cfg.snr_grid[c.snr_index])
                and self._match("seed", c.repetition))

    def tau(self, tau: float) -> bool:
        return self._match("tau", tau)


def build_cells(cfg: ScenarioConfig, selection: Optional[CellFilter] = None) -> list:
    selection = selection or CellFilter()
    cells = []
    for g in range(len(cfg.groups)):
        for f in cfg.cfsdm.evaluate:
            for p in range(len(cfg.precoders)):
                for s in range(len(cfg.snr_grid)):
                    for r in range(cfg.repetitions):
                        c = Cell(g, f, p, s, r)
                        if selection.cell(cfg, c):
                            cells.append(c)
    return cells


def _rng(cfg: ScenarioConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=key))


def _channel_seed(cfg: ScenarioConfig, repetition: int) -> int:
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(_CHANNEL, repetition))
    return int(ss.generate_state(1, np.uint64)[0])


def subcarrier_channel(cfg: ScenarioConfig, group: int, subcarrier: int,
                       repetition: int) -> np.ndarray:
    """Normalized virtual channel of one CFSDM block; equal for every precoder and SNR."""
    params = cfg.groups[group]
    H = generate_group_channel(params, cfg.geometry, _channel_seed(cfg, repetition), group)
    g = vcm_project_and_select(H, cfg.geometry, cfg.beam_policy)
    block = cfg.cfsdm.blocks(params.n_streams)
    sub = cfsdm_partition(g, block)[subcarrier]
    Hv = sub.virtual
    if cfg.normalization == "per-antenna":
        Hv = Hv / math.sqrt(cfg.geometry.n_antennas)
    return Hv


def _scalar_blocks(gains) -> list:
    # one unit-power stream per antenna behind a known gain
    return [(np.array([g]), np.ones((1, 1), dtype=complex)) for g in gains]


def evaluate_cell(cfg: ScenarioConfig, cell: Cell, timing: bool = False) -> list:
    """Rows (one per tau) for one cell. Failures become rows with a non-``ok`` status."""
    entry = cfg.precoders[cell.precoder]
    snr_db = cfg.snr_grid[cell.snr_index]
    noise_var = 10.0 ** (-snr_db / 10.0)
    const = make_constellation(cfg.constellation)
    budget = OptimizerBudget(grid=cfg.optimizer_grid, rounds=cfg.optimizer_rounds,
                             n_nodes=cfg.mi_nodes)
    start = time.perf_counter()

    def row(tau, raw, clamped, se, method, status="ok"):
        ms = (time.perf_counter() - start) * 1e3 if timing else None
        snr_b = snr_db - 10.0 * math.log10(clamped) if clamped is not None and clamped > 0 else None
        return ResultRow(cfg.scenario, cell.group, cell.subcarrier, "subcarrier", entry.label,
                         entry.scheme, tau, snr_db, snr_b, cell.repetition, raw, clamped,
                         clamped, se, method, status, ms)

    try:
        Hv = subcarrier_channel(cfg, cell.group, cell.subcarrier, cell.repetition)
        n = Hv.shape[1]
        method = f"gauss-hermite({cfg.mi_nodes})"
        if entry.scheme == "GCMI":
            rng = _rng(cfg, _SAMPLING, cell.group, cell.subcarrier, cell.precoder,
                       cell.snr_index, cell.repetition)
            est = gcmi(Hv, const, noise_var, "auto", cfg.mc_samples, rng, cfg.mi_nodes)
            return [row(0.0, est.bits, est.clamped, est.std_error, est.method)]
        if entry.scheme == "ZF":
            P, gamma = zf_precoder(Hv)
            maps = _scalar_blocks(P.stream_gains)
        elif entry.scheme in ("SSCP", "PSCP"):
            P = (sscp_precoder if entry.scheme == "SSCP" else pscp_precoder)(Hv)
            maps = _scalar_blocks(P.stream_gains)
        elif entry.scheme == "RZF":
            # residual interference is folded into an equivalent scalar gain
            P = rzf_precoder(Hv, noise_var)
            maps = _scalar_blocks(np.sqrt(stream_sinr(Hv, P.matrix, noise_var) * noise_var))
        else:
            svd = svd_natural(Hv)
            if entry.scheme == "ZF-PGP":
                _, sol, _ = zf_pgp(svd, n, const, noise_var, entry.vaac_n, entry.plan_mode, budget)
            else:
                _, sol = pgp_precoder(svd, n, const, noise_var, entry.vaac_n, entry.plan_mode, budget)
            log.debug("cell %s plan %s", cell, sol.plan.pairs)
            maps = subgroup_blocks(sol)
        rows = []
        for t_index, tau in enumerate(entry.taus):
            rng = _rng(cfg, _ERROR, cell.group, cell.subcarrier, cell.precoder, t_index,
                       cell.snr_index, cell.repetition)
            raw, clamped = blocks_mi(maps, const, noise_var, tau, rng, cfg.mi_nodes)
            rows.append(row(tau, raw, clamped, 0.0, method))
        return rows
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        status = f"error: {type(exc).__name__}: {exc}"
        log.warning("cell %s failed: %s", cell, status)
        return [row(tau, None, None, None, "", status) for tau in entry.taus]


def row_sort_key(r: ResultRow, order: Optional[dict] = None):
    rank = order.get(r.precoder, len(order)) if order else 0
    return (r.scenario, r.group, r.kind == "aggregate", r.subcarrier, rank, r.precoder, r.tau,
            r.snr_db, r.seed)


def aggregate_cfsdm(rows: Sequence[ResultRow], n_subcarriers: int) -> list:
    """Per (group, precoder, tau, snr, seed): the mean over all subcarriers.

    Combinations with a missing or failed subcarrier are skipped (logged).
    """
    if n_subcarriers <= 1:
        return []
    buckets: dict = {}
    for r in rows:
        if r.kind != "subcarrier":
            continue
        key = (r.scenario, r.group, r.precoder, r.scheme, r.tau, r.snr_db, r.seed)
        buckets.setdefault(key, {})[r.subcarrier] = r
    out = []
    for key, parts in buckets.items():
        if sorted(parts) != list(range(n_subcarriers)) or not all(p.ok for p in parts.values()):
            log.info("no CFSDM aggregate for %s: %d of %d subcarriers available", key,
                     sum(p.ok for p in parts.values()), n_subcarriers)
            continue
        ordered = [parts[f] for f in range(n_subcarriers)]
        raw = sum(p.mi_bits for p in ordered)
        clamped = sum(p.mi_bits_clamped for p in ordered)
        se = sum(p.spectral_efficiency for p in ordered) / n_subcarriers
        err = math.sqrt(sum(p.std_error**2 for p in ordered)) / n_subcarriers
        snr_b = key[5] - 10.0 * math.log10(se) if se > 0 else None
        methods = sorted({p.method for p in ordered})
        out.append(ResultRow(key[0], key[1], AGGREGATE, "aggregate", key[2], key[3], key[4],
                             key[5], snr_b, key[6], raw, clamped, se, err, "+".join(methods),
                             "ok", None))
    return out


def snr_b_transform(rows: Sequence[ResultRow]) -> list:
    """Rows re-expressed on the per-information-bit SNR axis.

    ``SNR_b = SNR_s - 10 log10(eta)`` with ``eta`` the row's clamped spectral
    efficiency. Rows without positive information have no such point and
    are dropped.
    """
    out, dropped = [], 0
    for r in rows:
        se = r.spectral_efficiency
        if r.ok and se is not None and se > 0:
            out.append(replace(r, snr_b_db=r.snr_db - 10.0 * math.log10(se)))
        else:
            dropped += 1
    if dropped:
        log.info("per-bit axis: dropped %d rows without positive information", dropped)
    return out


def check_monotone(rows: Sequence[ResultRow], quad_tol: float = 1e-3) -> list:
    """Matched (tau = 0) series that decrease with SNR beyond estimator tolerance."""
    series: dict = {}
    for r in rows:
        if r.ok and r.tau == 0.0:
            key = (r.group, r.subcarrier, r.precoder, r.seed)
            series.setdefault(key, []).append(r)
    issues = []
    for key, pts in sorted(series.items()):
        pts.sort(key=lambda r: r.snr_db)
        for a, b in zip(pts, pts[1:]):
            tol = quad_tol if not a.std_error and not b.std_error else \
                3.0 * math.hypot(a.std_error, b.std_error)
            if b.mi_bits_clamped < a.mi_bits_clamped - tol:
                issues.append(f"series group={key[0]} subcarrier={key[1]} precoder={key[2]} "
                              f"seed={key[3]}: {a.mi_bits_clamped:.6g} at {a.snr_db:g} dB -> "
                              f"{b.mi_bits_clamped:.6g} at {b.snr_db:g} dB")
    return issues


def run_sweep(cfg: ScenarioConfig, workers: int = 1, selection: Optional[CellFilter] = None,
              timing: bool = False) -> list:
    """Evaluate all selected cells and return rows in canonical order.

    Results do not depend on ``workers``: every cell draws from its own
    random streams and the rows are sorted before they are returned.
    """
    selection = selection or CellFilter()
    cells = build_cells(cfg, selection)
    log.info("scenario %s: %d cells on %d worker(s)", cfg.scenario, len(cells), workers)
    rows: list = []
    done = 0
    step = max(1, len(cells) // 10)

    def progress(result):
        nonlocal done
        rows.extend(r for r in result if selection.tau(r.tau))
        done += 1
        if done % step == 0 or done == len(cells):
            log.info("progress %d/%d cells", done, len(cells))

    if workers <= 1:
        for c in cells:
            progress(evaluate_cell(cfg, c, timing))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(lambda c: evaluate_cell(cfg, c, timing), cells):
                progress(result)
    if len(cfg.cfsdm.evaluate) == cfg.cfsdm.subcarriers:
        rows.extend(aggregate_cfsdm(rows, cfg.cfsdm.subcarriers))
    for issue in check_monotone(rows):
        log.warning("nonmonotone matched curve: %s", issue)
    if cfg.snr_axis == "per-bit":
        rows = snr_b_transform(rows)
    order = {p.label: i for i, p in enumerate(cfg.precoders)}
    rows.sort(key=lambda r: row_sort_key(r, order))
    return rows
