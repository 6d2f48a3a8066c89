"""Poisson pieces on [0, L] and their finite-size statistics.

Points are a unit-intensity Poisson process started at x0 = 0.  The generator
is numpy's Philox (counter-based, 64-bit key) and gaps are drawn by inverse
CDF, so a (L, seed) pair reproduces bit-for-bit on any platform.  The final
partial interval [x_m, L] is not a piece.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .errors import EmptyDomainError, InvalidArgument


@dataclass(frozen=True)
class PieceConfiguration:
    box_length: float
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size == 0 or pts[0] != 0.0:
            raise InvalidArgument("points must start at 0")
        if np.any(np.diff(pts) <= 0) or pts[-1] > self.box_length:
            raise InvalidArgument("points must be strictly increasing and within [0, L]")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_lengths(cls, lengths: Sequence[float], box_length: float | None = None):
        lengths = np.asarray(lengths, dtype=np.float64)
        pts = np.concatenate([[0.0], np.cumsum(lengths)])
        return cls(float(pts[-1]) if box_length is None else float(box_length), pts)

    @property
    def lefts(self) -> np.ndarray:
        return self.points[:-1]

    @property
    def rights(self) -> np.ndarray:
        return self.points[1:]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def piece_count(self) -> int:
        return self.points.size - 1

    @property
    def stub(self) -> float:
        return self.box_length - self.points[-1]

    @property
    def pieces(self) -> list[tuple[float, float, float]]:
        return list(zip(self.lefts.tolist(), self.rights.tolist(), self.lengths.tolist()))


def sample_pieces(box_length: float, seed: int) -> PieceConfiguration:
    if not (box_length > 0 and np.isfinite(box_length)):
        raise InvalidArgument(f"box_length must be positive, got {box_length}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    chunk = int(box_length + 10 * np.sqrt(box_length) + 16)
    parts = [np.zeros(1)]
    last = 0.0
    while True:
        gaps = -np.log1p(-rng.random(chunk))
        pos = last + np.cumsum(gaps)
        k = np.searchsorted(pos, box_length, side="right")
        parts.append(pos[:k])
        if k < chunk:
            break
        last = pos[-1]
    return PieceConfiguration(float(box_length), np.concatenate(parts))


@dataclass(frozen=True)
class LengthHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    expected: np.ndarray

    @property
    def zscores(self) -> np.ndarray:
        diff = self.counts - self.expected
        with np.errstate(divide="ignore", invalid="ignore"):
            z = diff / np.sqrt(self.expected)
        return np.where(self.expected > 0, z, np.where(diff == 0, 0.0, np.inf))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "expected", "zscore"])
        for lo, hi, c, e, z in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts,
                                   self.expected, self.zscores):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(e)), repr(float(z))])
        return buf.getvalue()


def _check_edges(edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) < 0) or edges[0] < 0:
        raise InvalidArgument("bin_edges must be a non-decreasing, non-negative sequence")
    return edges


def piece_length_histogram(cfg: PieceConfiguration, bin_edges) -> LengthHistogram:
    edges = _check_edges(bin_edges)
    ls = np.sort(cfg.lengths)
    cum = np.searchsorted(ls, edges, side="left")
    counts = np.diff(cum)
    expected = cfg.box_length * -np.diff(np.exp(-edges))
    return LengthHistogram(edges, counts, expected)


def max_piece_length(cfg: PieceConfiguration) -> float:
    if cfg.piece_count == 0:
        raise EmptyDomainError("configuration has no pieces")
    return float(cfg.lengths.max())


def ks_exponential(cfg: PieceConfiguration) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of piece lengths against Exp(1)."""
    res = stats.kstest(cfg.lengths, "expon")
    return float(res.statistic), float(res.pvalue)


def long_piece_sequence(cfg: PieceConfiguration, l_min: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices and lengths of pieces with l >= l_min, and facing distances between consecutive ones."""
    idx = np.flatnonzero(cfg.lengths >= l_min)
    gaps = cfg.lefts[idx[1:]] - cfg.rights[idx[:-1]]
    return idx, cfg.lengths[idx], gaps


def _windows(ws, name) -> np.ndarray:
    arr = np.asarray(ws, dtype=np.float64).reshape(-1, 2) if len(ws) else np.zeros((0, 2))
    if np.any(arr[:, 1] < arr[:, 0]) or np.any(arr < 0):
        raise InvalidArgument(f"{name} must be [lo, hi] pairs with 0 <= lo <= hi")
    return arr


def gap_pattern_count(cfg: PieceConfiguration, length_windows, gap_windows, l_min: float) -> int:
    """Runs of consecutive long pieces whose lengths and facing distances fall in closed windows."""
    lw = _windows(length_windows, "length_windows")
    gw = _windows(gap_windows, "gap_windows")
    if len(lw) == 0 or len(gw) != len(lw) - 1:
        raise InvalidArgument("need r >= 1 length windows and r - 1 gap windows")
    _, ls, gaps = long_piece_sequence(cfg, l_min)
    return _kernels.pattern_count(ls, gaps, lw[:, 0], lw[:, 1], gw[:, 0], gw[:, 1])


def expected_gap_pattern_count(box_length: float, length_windows, gap_windows,
                               adjacency: str = "exact") -> float:
    """L * prod(gap widths) * prod(e^{-a} - e^{-b}).

    With ``adjacency="exact"`` a gap window starting at 0 gets an extra unit
    weight for two long pieces sharing an endpoint (distance exactly 0), which
    happens with positive probability.  ``"continuum"`` drops that atom.  Both
    assume length windows above l_min and gap windows below it.
    """
    lw = _windows(length_windows, "length_windows")
    gw = _windows(gap_windows, "gap_windows")
    val = box_length * np.prod(np.exp(-lw[:, 0]) - np.exp(-lw[:, 1]))
    widths = gw[:, 1] - gw[:, 0]
    if adjacency == "exact":
        widths = widths + (gw[:, 0] == 0.0)
    elif adjacency != "continuum":
        raise InvalidArgument(f"unknown adjacency mode {adjacency!r}")
    return float(val * np.prod(widths))
