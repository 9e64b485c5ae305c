"""Scenario files: TOML documents with a fixed set of tables and keys.

A scenario looks like::

    scenario = "small-group"
    constellation = 16

    [geometry]
    n_antennas = 100
    spacing = 0.5

    [[groups]]
    mean_elevation_deg = 20
    angular_spread_deg = 10
    n_paths = 10
    n_users = 2

    [beams]
    policy = "fixed"
    count = 6

    [snr]
    grid_db = [0, 5, 10]

    [[precoders]]
    scheme = "ZF-PGP"
    vaac_n = 4
    tau = [0.0, 0.1]

Every key not given takes the default listed in ``_DEFAULTS`` below; the
resolved configuration is available as text through
:meth:`ScenarioConfig.describe`.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..channel_model import ArrayGeometry, EnergyBeams, FixedBeams, GroupParams
from ..pgp_core import PLAN_MODES

__all__ = ["ConfigError", "PrecoderSpec", "CfsdmSpec", "ScenarioConfig", "load_scenario",
           "parse_scenario", "PRECODER_TAGS"]

PRECODER_TAGS = ("ZF", "RZF", "SSCP", "PSCP", "PGP-WG", "ZF-PGP", "GCMI")
CONSTELLATIONS = (4, 16, 64)
NORMALIZATIONS = ("per-antenna", "none")


class ConfigError(ValueError):
    """Scenario file could not be parsed or violates a documented rule."""


@dataclass(frozen=True)
class PrecoderSpec:
    scheme: str
    label: str
    taus: tuple = (0.0,)
    vaac_n: int = 0
    plan_mode: str = "user-aligned"
    alpha_rule: str = "n-noise"


@dataclass(frozen=True)
class CfsdmSpec:
    """Split of every group into ``subcarriers`` contiguous antenna blocks."""

    subcarriers: int = 1
    partition: tuple = ()
    evaluate: tuple = ()

    def blocks(self, n_streams: int) -> list:
        sizes = self.partition or (n_streams,)
        out, start = [], 0
        for size in sizes:
            out.append(tuple(range(start, start + size)))
            start += size
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    geometry: ArrayGeometry
    groups: tuple
    beam_policy: Any
    constellation: int
    snr_grid: tuple
    snr_axis: str
    precoders: tuple
    cfsdm: CfsdmSpec
    master_seed: int
    repetitions: int
    mi_nodes: int
    mc_samples: int
    optimizer_grid: int
    optimizer_rounds: int
    normalization: str
    source: Optional[str] = field(default=None, compare=False)

    def describe(self) -> str:
        """Resolved settings, one ``key = value`` per line, for the run log."""
        if isinstance(self.beam_policy, FixedBeams):
            beams = f"fixed count={self.beam_policy.r}"
        else:
            beams = f"energy eps={self.beam_policy.eps}"
        lines = [
            f"scenario = {self.scenario}",
            f"geometry = n_antennas={self.geometry.n_antennas} spacing={self.geometry.spacing}",
            f"beams = {beams}",
            f"channel.normalization = {self.normalization}",
            f"constellation = {self.constellation}",
            f"snr.grid_db = {list(self.snr_grid)}",
            f"snr.axis = {self.snr_axis}",
            f"cfsdm = subcarriers={self.cfsdm.subcarriers} partition={list(self.cfsdm.partition)} "
            f"evaluate={list(self.cfsdm.evaluate)}",
            f"seeds = master={self.master_seed} repetitions={self.repetitions}",
            f"mi = nodes={self.mi_nodes} mc_samples={self.mc_samples}",
            f"optimizer = grid={self.optimizer_grid} rounds={self.optimizer_rounds}",
        ]
        for i, g in enumerate(self.groups):
            lines.append(
                f"groups[{i}] = mean_elevation_deg={math.degrees(g.mean_elevation):.6g} "
                f"angular_spread_deg={math.degrees(g.angular_spread):.6g} n_paths={g.n_paths} "
                f"n_users={g.n_users} antennas_per_user={g.antennas_per_user}"
            )
        for i, p in enumerate(self.precoders):
            lines.append(
                f"precoders[{i}] = scheme={p.scheme} label={p.label} tau={list(p.taus)} "
                f"vaac_n={p.vaac_n} plan_mode={p.plan_mode} alpha_rule={p.alpha_rule}"
            )
        return "\n".join(lines)


_DEFAULTS = {
    "": {"scenario": "scenario", "constellation": 16},
    "geometry": {"n_antennas": 100, "spacing": 0.5},
    "beams": {"policy": "energy", "count": None, "eps": 0.01},
    "channel": {"normalization": "per-antenna"},
    "snr": {"grid_db": None, "axis": "symbol"},
    "cfsdm": {"subcarriers": 1, "partition": None, "evaluate": None},
    "seeds": {"master": 1, "repetitions": 1},
    "mi": {"nodes": 8, "mc_samples": 100_000},
    "optimizer": {"grid": 9, "rounds": 6},
}
_GROUP_KEYS = {"mean_elevation_deg": None, "angular_spread_deg": None, "n_paths": None,
               "n_users": None, "antennas_per_user": 2}
_PRECODER_KEYS = {"scheme": None, "label": None, "tau": [0.0], "vaac_n": 0,
                  "plan_mode": None, "alpha_rule": "n-noise"}


def _table(doc: dict, name: str, allowed: dict, where: str) -> dict:
    raw = doc if name == "" else doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a table")
    skip = set(_DEFAULTS) | {"groups", "precoders"} if name == "" else set()
    unknown = sorted(k for k in raw if k not in allowed and k not in skip)
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r}")
    out = dict(allowed)
    out.update({k: v for k, v in raw.items() if k in allowed})
    return out


def _int(value, where: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}, got {value}")
    return value


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _list(value, where: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list, got {value!r}")
    return value


def _required(table: dict, key: str, where: str):
    if table[key] is None:
        raise ConfigError(f"{where}.{key}: required")
    return table[key]


def _groups(doc: dict) -> tuple:
    raw = doc.get("groups")
    if not raw:
        raise ConfigError("groups: at least one [[groups]] entry is required")
    groups = []
    for i, g in enumerate(_list(raw, "groups")):
        where = f"groups[{i}]"
        t = _table({"g": g}, "g", _GROUP_KEYS, where)
        try:
            groups.append(GroupParams.from_degrees(
                _float(_required(t, "mean_elevation_deg", where), f"{where}.mean_elevation_deg"),
                _float(_required(t, "angular_spread_deg", where), f"{where}.angular_spread_deg"),
                _int(_required(t, "n_paths", where), f"{where}.n_paths", 1),
                _int(_required(t, "n_users", where), f"{where}.n_users", 1),
                _int(t["antennas_per_user"], f"{where}.antennas_per_user", 1),
            ))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}: {exc}") from None
    return tuple(groups)


def _precoders(doc: dict) -> tuple:
    raw = doc.get("precoders")
    if not raw:
        raise ConfigError("precoders: at least one [[precoders]] entry is required")
    specs, labels = [], set()
    for i, p in enumerate(_list(raw, "precoders")):
        where = f"precoders[{i}]"
        t = _table({"p": p}, "p", _PRECODER_KEYS, where)
        scheme = _required(t, "scheme", where)
        if scheme not in PRECODER_TAGS:
            raise ConfigError(f"{where}.scheme: unrecognized precoder tag {scheme!r}; "
                              f"expected one of {', '.join(PRECODER_TAGS)}")
        label = t["label"] if t["label"] is not None else scheme
        if not isinstance(label, str) or not label or "," in label:
            raise ConfigError(f"{where}.label: must be a nonempty string without commas")
        if label in labels:
            raise ConfigError(f"{where}.label: duplicate label {label!r}")
        labels.add(label)
        taus = tuple(_float(v, f"{where}.tau") for v in _list(t["tau"], f"{where}.tau"))
        if not taus or any(not 0.0 <= v <= 1.0 for v in taus):
            raise ConfigError(f"{where}.tau: values must lie in [0, 1]")
        if len(set(taus)) != len(taus) or list(taus) != sorted(taus):
            raise ConfigError(f"{where}.tau: values must be strictly ascending")
        if scheme == "GCMI" and taus != (0.0,):
            raise ConfigError(f"{where}.tau: the unprecoded baseline has no precoder estimate")
        vaac_n = _int(t["vaac_n"], f"{where}.vaac_n", 0)
        if vaac_n and scheme not in ("PGP-WG", "ZF-PGP"):
            raise ConfigError(f"{where}.vaac_n: virtual streams only apply to PGP-WG and ZF-PGP")
        plan_mode = t["plan_mode"]
        if plan_mode is None:
            plan_mode = "max-distance" if scheme == "PGP-WG" else "user-aligned"
        if plan_mode not in PLAN_MODES:
            raise ConfigError(f"{where}.plan_mode: expected one of {', '.join(PLAN_MODES)}")
        if t["alpha_rule"] != "n-noise":
            raise ConfigError(f"{where}.alpha_rule: only 'n-noise' is supported")
        specs.append(PrecoderSpec(scheme, label, taus, vaac_n, plan_mode, t["alpha_rule"]))
    return tuple(specs)


def parse_scenario(text: str, source: Optional[str] = None) -> ScenarioConfig:
    """Parse and validate scenario text. Raises :class:`ConfigError`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    top = _table(doc, "", _DEFAULTS[""], "top level")
    geo_t = _table(doc, "geometry", _DEFAULTS["geometry"], "geometry")
    beams_t = _table(doc, "beams", _DEFAULTS["beams"], "beams")
    chan_t = _table(doc, "channel", _DEFAULTS["channel"], "channel")
    snr_t = _table(doc, "snr", _DEFAULTS["snr"], "snr")
    cf_t = _table(doc, "cfsdm", _DEFAULTS["cfsdm"], "cfsdm")
    seed_t = _table(doc, "seeds", _DEFAULTS["seeds"], "seeds")
    mi_t = _table(doc, "mi", _DEFAULTS["mi"], "mi")
    opt_t = _table(doc, "optimizer", _DEFAULTS["optimizer"], "optimizer")

    scenario = top["scenario"]
    if not isinstance(scenario, str) or not scenario or "," in scenario:
        raise ConfigError("scenario: must be a nonempty string without commas")
    order = _int(top["constellation"], "constellation")
    if order not in CONSTELLATIONS:
        raise ConfigError(f"constellation: expected one of {CONSTELLATIONS}, got {order}")

    n_ant = _int(geo_t["n_antennas"], "geometry.n_antennas", 1)
    spacing = _float(geo_t["spacing"], "geometry.spacing")
    if spacing <= 0:
        raise ConfigError("geometry.spacing: must be positive")
    geometry = ArrayGeometry(n_ant, spacing)

    if beams_t["policy"] == "fixed":
        count = _int(_required(beams_t, "count", "beams"), "beams.count", 1)
        if count > n_ant:
            raise ConfigError(f"beams.count: {count} beams exceed {n_ant} array antennas")
        policy = FixedBeams(count)
    elif beams_t["policy"] == "energy":
        eps = _float(beams_t["eps"], "beams.eps")
        if not 0 <= eps < 1:
            raise ConfigError("beams.eps: must lie in [0, 1)")
        policy = EnergyBeams(eps)
    else:
        raise ConfigError(f"beams.policy: expected 'fixed' or 'energy', got {beams_t['policy']!r}")

    if chan_t["normalization"] not in NORMALIZATIONS:
        raise ConfigError(f"channel.normalization: expected one of {', '.join(NORMALIZATIONS)}")

    grid = _required(snr_t, "grid_db", "snr")
    grid = tuple(_float(v, "snr.grid_db") for v in _list(grid, "snr.grid_db"))
    if not grid:
        raise ConfigError("snr.grid_db: must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("snr.grid_db: must be strictly ascending")
    if snr_t["axis"] not in ("symbol", "per-bit"):
        raise ConfigError("snr.axis: expected 'symbol' or 'per-bit'")

    groups = _groups(doc)
    precoders = _precoders(doc)

    F = _int(cf_t["subcarriers"], "cfsdm.subcarriers", 1)
    partition = cf_t["partition"]
    if partition is None:
        if F != 1:
            raise ConfigError("cfsdm.partition: required when cfsdm.subcarriers > 1")
        partition = ()
    else:
        partition = tuple(_int(v, "cfsdm.partition", 1) for v in _list(partition, "cfsdm.partition"))
        if len(partition) != F:
            raise ConfigError(f"cfsdm.partition: {len(partition)} blocks for {F} subcarriers")
    for i, g in enumerate(groups):
        if partition and sum(partition) != g.n_streams:
            raise ConfigError(
                f"cfsdm.partition: partition does not cover the {g.n_streams} antennas "
                f"of groups[{i}] (sizes sum to {sum(partition)})"
            )
        if any(size % g.antennas_per_user for size in partition):
            raise ConfigError(f"cfsdm.partition: blocks must hold whole users of groups[{i}]")
        if isinstance(policy, FixedBeams):
            biggest = max(partition) if partition else g.n_streams
            needs_zf = any(p.scheme in ("ZF", "RZF", "SSCP", "PSCP", "ZF-PGP", "PGP-WG")
                           for p in precoders)
            if needs_zf and biggest > policy.r:
                raise ConfigError(
                    f"cfsdm: a block of {biggest} antennas exceeds the {policy.r} beams of "
                    f"groups[{i}]; use more subcarriers"
                )
    evaluate = cf_t["evaluate"]
    if evaluate is None:
        evaluate = tuple(range(F))
    else:
        evaluate = tuple(_int(v, "cfsdm.evaluate", 0) for v in _list(evaluate, "cfsdm.evaluate"))
        if not evaluate or any(v >= F for v in evaluate) or len(set(evaluate)) != len(evaluate):
            raise ConfigError(f"cfsdm.evaluate: distinct subcarrier indices below {F} required")
        evaluate = tuple(sorted(evaluate))

    master = _int(seed_t["master"], "seeds.master", 0)
    reps = _int(seed_t["repetitions"], "seeds.repetitions", 1)
    nodes = _int(mi_t["nodes"], "mi.nodes", 2)
    mc = _int(mi_t["mc_samples"], "mi.mc_samples", 1000)
    ogrid = _int(opt_t["grid"], "optimizer.grid", 2)
    orounds = _int(opt_t["rounds"], "optimizer.rounds", 0)

    return ScenarioConfig(scenario, geometry, groups, policy, order, grid, snr_t["axis"],
                          precoders, CfsdmSpec(F, partition, evaluate), master, reps, nodes, mc,
                          ogrid, orounds, chan_t["normalization"], source)


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario file. ``OSError`` propagates; content problems raise :class:`ConfigError`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_scenario(text, str(path))
