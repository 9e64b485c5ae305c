"""Summary statistics over result rows: per-series medians and gains over ZF."""

from __future__ import annotations

import statistics
from typing import Sequence

from .sweep import ResultRow

__all__ = ["series_medians", "gain_ratios", "format_report"]


def _series(rows: Sequence[ResultRow]) -> dict:
    out: dict = {}
    for r in rows:
        if r.ok:
            key = (r.group, r.subcarrier, r.precoder, r.tau)
            out.setdefault(key, {}).setdefault(r.snr_db, {})[r.seed] = r
    return out


def series_medians(rows: Sequence[ResultRow], field: str = "spectral_efficiency") -> dict:
    """``{(group, subcarrier, precoder, tau): {snr_db: median over seeds}}``."""
    return {key: {snr: statistics.median(getattr(r, field) for r in by_seed.values())
                  for snr, by_seed in sorted(pts.items())}
            for key, pts in _series(rows).items()}


def gain_ratios(rows: Sequence[ResultRow], baseline: str = "ZF") -> dict:
    """Median over seeds of ``SE / SE_baseline`` (baseline at tau = 0, same channel).

    Keyed like :func:`series_medians`; seeds missing from either side or with
    a zero baseline are left out.
    """
    series = _series(rows)
    out = {}
    for key, pts in series.items():
        group, sub, precoder, tau = key
        base = series.get((group, sub, baseline, 0.0))
        if base is None or precoder == baseline:
            continue
        ratios = {}
        for snr, by_seed in sorted(pts.items()):
            vals = [r.spectral_efficiency / base[snr][s].spectral_efficiency
                    for s, r in sorted(by_seed.items())
                    if snr in base and s in base[snr] and base[snr][s].spectral_efficiency > 0]
            if vals:
                ratios[snr] = statistics.median(vals)
        out[key] = ratios
    return out


def format_report(rows: Sequence[ResultRow], baseline: str = "ZF") -> str:
    lines = []
    failed = sum(not r.ok for r in rows)
    lines.append(f"rows={len(rows)} failed={failed}")
    for (group, sub, precoder, tau), pts in sorted(series_medians(rows).items()):
        where = "aggregate" if sub < 0 else f"subcarrier {sub}"
        lines.append(f"group {group} {where} {precoder} tau={tau:g}")
        for snr, med in pts.items():
            lines.append(f"  snr {snr:g} dB  median SE {med:.4f}")
    gains = gain_ratios(rows, baseline)
    if gains:
        lines.append(f"gain over {baseline} (median of per-seed ratios)")
        for (group, sub, precoder, tau), pts in sorted(gains.items()):
            where = "aggregate" if sub < 0 else f"subcarrier {sub}"
            cells = "  ".join(f"{snr:g}dB:{g:.3f}" for snr, g in pts.items())
            lines.append(f"  group {group} {where} {precoder} tau={tau:g}  {cells}")
    return "\n".join(lines)
