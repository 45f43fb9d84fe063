"""Diarization error rate with an optimal one-to-one speaker mapping.

Scoring follows the usual md-eval accounting. Every boundary of the reference,
the hypothesis and the collar zones splits the timeline into homogeneous
intervals. Each interval has ``R`` active reference speakers, ``H`` active
hypothesis speakers and ``C`` reference speakers whose mapped hypothesis
speaker is also active. It contributes ``max(0, R-H)`` to missed speech,
``max(0, H-R)`` to false alarm and ``min(R, H) - C`` to speaker error, each
weighted by the interval length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .timeline import Timeline


@dataclass
class DerReport:
    FA: float = 0.0
    MISS: float = 0.0
    SpkErr: float = 0.0
    TOTAL: float = 0.0
    mapping: dict[str, str] = field(default_factory=dict)  # hyp -> ref

    @property
    def DER(self) -> float:
        if self.TOTAL <= 0.0:
            return 0.0 if self.FA == 0.0 else float("inf")
        return (self.FA + self.MISS + self.SpkErr) / self.TOTAL

    def __add__(self, other: "DerReport") -> "DerReport":
        return DerReport(
            self.FA + other.FA,
            self.MISS + other.MISS,
            self.SpkErr + other.SpkErr,
            self.TOTAL + other.TOTAL,
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "FA": self.FA,
            "MISS": self.MISS,
            "SpkErr": self.SpkErr,
            "TOTAL": self.TOTAL,
            "DER": self.DER,
        }


def linear_assignment(weights) -> list[tuple[int, int]]:
    """Row/column pairs of a maximum-weight matching on a rectangular matrix.

    Pairs with zero weight are dropped.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        return []
    n = max(w.shape)
    cost = np.zeros((n, n))
    cost[: w.shape[0], : w.shape[1]] = -w
    col_of_row = kernels.assign_min_cost(cost)
    return [
        (i, int(col_of_row[i]))
        for i in range(w.shape[0])
        if col_of_row[i] < w.shape[1] and w[i, col_of_row[i]] > 0.0
    ]


def overlap_matrix(ref: Timeline, hyp: Timeline) -> tuple[np.ndarray, list[str], list[str]]:
    r = ref.by_speaker()
    h = hyp.by_speaker()
    r_names, h_names = list(r), list(h)
    mat = np.zeros((len(r_names), len(h_names)))
    for i, rn in enumerate(r_names):
        ra = np.array(r[rn]).reshape(-1, 2)
        for j, hn in enumerate(h_names):
            ha = np.array(h[hn]).reshape(-1, 2)
            mat[i, j] = kernels.intersection_length(ra[:, 0], ra[:, 1], ha[:, 0], ha[:, 1])
    return mat, r_names, h_names


def optimal_speaker_map(ref: Timeline, hyp: Timeline) -> dict[str, str]:
    """Hypothesis -> reference mapping maximising total overlapped time."""
    mat, r_names, h_names = overlap_matrix(ref, hyp)
    return {h_names[j]: r_names[i] for i, j in linear_assignment(mat)}


def _no_score_zones(ref: Timeline, collar: float) -> list[tuple[float, float]]:
    zones = []
    for s in ref.segments:
        for b in (s.start, s.end):
            zones.append((max(0.0, b - collar), b + collar))
    return zones


def der(ref: Timeline, hyp: Timeline, collar: float = 0.0) -> DerReport:
    if collar < 0:
        raise ValueError(f"collar must be >= 0, got {collar}")
    if ref.file_id and hyp.file_id and ref.file_id != hyp.file_id:
        raise ValueError(f"file ids differ: {ref.file_id!r} vs {hyp.file_id!r}")
    zones = _no_score_zones(ref, collar) if collar > 0 else []
    if zones:
        ref_s = _excise(ref, zones)
        hyp_s = _excise(hyp, zones)
    else:
        ref_s, hyp_s = ref, hyp
    mapping = optimal_speaker_map(ref_s, hyp_s)

    r = ref_s.by_speaker()
    h = hyp_s.by_speaker()
    r_names, h_names = list(r), list(h)
    r_idx = {n: i for i, n in enumerate(r_names)}
    h_idx = {n: j for j, n in enumerate(h_names)}
    ref_to_hyp = np.full(len(r_names), -1, dtype=np.int64)
    for hn, rn in mapping.items():
        ref_to_hyp[r_idx[rn]] = h_idx[hn]

    times, who, delta = [], [], []
    for i, rn in enumerate(r_names):
        for a, b in r[rn]:
            times += [a, b]
            who += [i, i]
            delta += [1, -1]
    for j, hn in enumerate(h_names):
        for a, b in h[hn]:
            times += [a, b]
            who += [len(r_names) + j] * 2
            delta += [1, -1]
    if not times:
        return DerReport(mapping=mapping)
    order = np.argsort(np.asarray(times), kind="stable")
    t = np.asarray(times)[order]
    w = np.asarray(who, dtype=np.int64)[order]
    d = np.asarray(delta, dtype=np.int64)[order]
    total, miss, fa, spkerr = kernels.sweep_components(
        t, w, d, len(r_names), len(h_names), ref_to_hyp
    )
    return DerReport(fa, miss, spkerr, total, mapping)


def _excise(tl: Timeline, zones: list[tuple[float, float]]) -> Timeline:
    """Remove the union of ``zones`` from every segment."""
    merged: list[list[float]] = []
    for a, b in sorted(zones):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    out = Timeline(tl.file_id)
    for spk, ivs in tl.by_speaker().items():
        for a, b in ivs:
            cur = a
            for za, zb in merged:
                if zb <= cur or za >= b:
                    continue
                if za > cur:
                    out.add(spk, cur, za - cur)
                cur = max(cur, zb)
                if cur >= b:
                    break
            if cur < b:
                out.add(spk, cur, b - cur)
    return out


def score_corpus(
    refs: Mapping[str, Timeline], hyps: Mapping[str, Timeline], collar: float = 0.0
) -> tuple[dict[str, DerReport], DerReport]:
    """Score every reference file; missing hypotheses count as empty."""
    per_file = {}
    total = DerReport()
    for fid in sorted(refs):
        rep = der(refs[fid], hyps.get(fid, Timeline(fid)), collar)
        per_file[fid] = rep
        total = total + rep
    return per_file, total


def format_report(per_file: Mapping[str, DerReport], total: DerReport) -> str:
    def line(name: str, rep: DerReport) -> str:
        tot = rep.TOTAL if rep.TOTAL > 0 else float("nan")
        return (
            f"{name:<24s} FA={100 * rep.FA / tot:6.2f}% MISS={100 * rep.MISS / tot:6.2f}% "
            f"SpkErr={100 * rep.SpkErr / tot:6.2f}% DER={100 * rep.DER:6.2f}%"
        )

    rows = [line(fid, rep) for fid, rep in per_file.items()]
    rows.append(line("TOTAL", total))
    return "\n".join(rows) + "\n"


def merge_reports(reports: Iterable[DerReport]) -> DerReport:
    total = DerReport()
    for r in reports:
        total = total + r
    return total
