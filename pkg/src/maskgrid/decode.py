"""Joint DoA and mask extraction from an estimated coding tensor.

The decoding chain averages the coding over frequency, finds per-frame
peaks that are prominent within an angular neighborhood, clusters the
detections into utterance-level DoAs, and samples per-speaker masks back
out of the tensor at the clustered angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coding import CodingTensor, DoaSet, MaskSet, SpatialGrid, wrapped_distance


@dataclass(frozen=True)
class FrameLikelihood:
    """Frequency-averaged coding, shape (frames, cells)."""

    values: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != self.grid.theta_count:
            raise ValueError(f"expected (frames, {self.grid.theta_count}), "
                             f"got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Detection:
    """A per-frame peak: frame index, cell-center angle, value at the peak."""

    frame: int
    angle_deg: float
    value: float


@dataclass(frozen=True)
class DoaCluster:
    center_deg: float
    support: int
    member_angles_deg: np.ndarray


@dataclass(frozen=True)
class DoaEstimates:
    """Utterance-level DoA clusters, sorted by support descending."""

    clusters: tuple
    span_deg: float = 360.0

    @property
    def count(self) -> int:
        return len(self.clusters)

    @property
    def centers_deg(self) -> np.ndarray:
        return np.array([c.center_deg for c in self.clusters])


def freq_average(coding: CodingTensor) -> FrameLikelihood:
    """Mean of the coding over all frequency bins, per frame and cell."""
    return FrameLikelihood(coding.values.mean(axis=1), coding.grid)


def peak_search(fl: FrameLikelihood, eps_theta: float,
                delta_theta_deg: float = 6.0) -> list:
    """Frame-wise peaks: cells at or above eps_theta that are maximal within
    a wrapped neighborhood of +-delta_theta_deg (closed at the boundary).

    A plateau of circularly adjacent equal-valued peaks yields only its
    lowest-index cell.
    """
    if not 0.0 < eps_theta < 1.0:
        raise ValueError(f"eps_theta must be in (0, 1), got {eps_theta}")
    if delta_theta_deg <= 0:
        raise ValueError(f"delta_theta must be positive, got {delta_theta_deg}")
    v = fl.values
    grid = fl.grid
    theta = grid.theta_count
    reach = int(math.floor(delta_theta_deg / grid.cell_width_deg + 1e-9))
    reach = min(reach, theta // 2)
    window_max = v.copy()
    for off in range(1, reach + 1):
        np.maximum(window_max, np.roll(v, off, axis=1), out=window_max)
        np.maximum(window_max, np.roll(v, -off, axis=1), out=window_max)
    is_peak = (v >= eps_theta) & (v >= window_max)

    detections = []
    for t in np.nonzero(is_peak.any(axis=1))[0]:
        cand = np.flatnonzero(is_peak[t])
        cand_set = set(cand.tolist())
        visited = set()
        for g in cand.tolist():
            if g in visited:
                continue
            # Collect the maximal circular run of adjacent equal-valued
            # peaks around g; only its lowest index is reported.
            run = [g]
            visited.add(g)
            nxt = (g + 1) % theta
            while (nxt in cand_set and nxt not in visited
                   and v[t, nxt] == v[t, run[-1]]):
                run.append(nxt)
                visited.add(nxt)
                nxt = (run[-1] + 1) % theta
            prv = (g - 1) % theta
            while (prv in cand_set and prv not in visited
                   and v[t, prv] == v[t, run[0]]):
                run.insert(0, prv)
                visited.add(prv)
                prv = (run[0] - 1) % theta
            low = min(run)
            detections.append(Detection(int(t), grid.angle_of(low),
                                        float(v[t, low])))
    detections.sort(key=lambda d: (d.frame, d.angle_deg))
    return detections


def circular_mean(angles_deg: np.ndarray, span_deg: float = 360.0) -> float:
    """Mean direction of angles on a circle of the given span, in [0, span)."""
    phases = np.asarray(angles_deg, dtype=np.float64) * (2 * np.pi / span_deg)
    mean = math.atan2(np.sin(phases).mean(), np.cos(phases).mean())
    value = (mean * span_deg / (2 * np.pi)) % span_deg
    # The mod rounds up to span_deg itself when mean is a hair below zero.
    return 0.0 if value >= span_deg else value


def _average_linkage(angles: np.ndarray, span: float, threshold: float) -> list:
    """Agglomerative clustering: merge while the smallest average pairwise
    wrapped distance between clusters is at or below the threshold.

    Returns a list of member-index arrays.
    """
    n = angles.size
    dist = wrapped_distance(angles[:, None], angles[None, :], span)
    np.fill_diagonal(dist, np.inf)
    members = [[i] for i in range(n)]
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    while alive.sum() > 1:
        masked = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        i, j = np.unravel_index(np.argmin(masked), masked.shape)
        if masked[i, j] > threshold:
            break
        # Lance-Williams update keeps dist[i] the exact mean pairwise distance.
        dist[i, :] = (sizes[i] * dist[i, :] + sizes[j] * dist[j, :]) / (
            sizes[i] + sizes[j])
        dist[:, i] = dist[i, :]
        dist[i, i] = np.inf
        members[i].extend(members[j])
        sizes[i] += sizes[j]
        alive[j] = False
    return [np.array(members[i]) for i in range(n) if alive[i]]


def cluster_doas(detections, sigma_deg: float = 6.0, span_deg: float = 360.0,
                 min_support_frac: float | None = 0.05) -> DoaEstimates:
    """Detections to utterance-level DoAs via average-linkage clustering.

    Merging continues while the average inter-cluster distance is at most
    2 sigma; afterwards any clusters whose circular-mean centers still sit
    within 2 sigma are merged so the result is unambiguous. Clusters
    supported by fewer than min_support_frac of the detected frames are
    dropped (pass None or 0 to keep everything).
    """
    if not detections:
        return DoaEstimates((), span_deg)
    angles = np.array([d.angle_deg for d in detections])
    frames = {d.frame for d in detections}
    groups = _average_linkage(angles, span_deg, 2.0 * sigma_deg)

    clusters = [(circular_mean(angles[g], span_deg), angles[g]) for g in groups]
    merged = True
    while merged and len(clusters) > 1:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if wrapped_distance(clusters[i][0], clusters[j][0],
                                    span_deg) <= 2.0 * sigma_deg:
                    union = np.concatenate([clusters[i][1], clusters[j][1]])
                    clusters[i] = (circular_mean(union, span_deg), union)
                    del clusters[j]
                    merged = True
                    break
            if merged:
                break

    if min_support_frac:
        min_support = min_support_frac * len(frames)
        clusters = [c for c in clusters if c[1].size >= min_support]
    clusters.sort(key=lambda c: (-c[1].size, c[0]))
    return DoaEstimates(
        tuple(DoaCluster(center, int(members.size), members)
              for center, members in clusters),
        span_deg)


def sample_masks(coding: CodingTensor, doas: DoaEstimates) -> MaskSet:
    """Per-speaker masks sliced from the coding at each cluster's cell."""
    cells = [coding.grid.index_of(c.center_deg) for c in doas.clusters]
    if not cells:
        return MaskSet(np.zeros((0, coding.frames, coding.bins)))
    return MaskSet(np.stack([coding.values[:, :, g] for g in cells]))


@dataclass(frozen=True)
class CalibrationRow:
    eps_theta: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class CalibrationResult:
    best_eps_theta: float
    best_f1: float
    rows: tuple


def calibrate_threshold(validation_scenes, candidates, delta_theta_deg: float = 6.0,
                        sigma_deg: float = 6.0, match_tol_deg: float = 10.0,
                        min_support_frac: float | None = 0.05) -> CalibrationResult:
    """Exhaustive threshold search maximizing micro-averaged F1.

    validation_scenes: (CodingTensor, DoaSet) pairs. Every candidate is run
    through peak search and clustering on every scene; matches within
    match_tol_deg count as true positives. Ties prefer the lower threshold.
    """
    from .metrics import doa_precision_recall

    if not candidates:
        raise ValueError("need at least one threshold candidate")
    scenes = [(freq_average(coding), truth) for coding, truth in validation_scenes]
    rows = []
    best = None
    for eps in sorted(candidates):
        tp = est_total = truth_total = 0
        for fl, truth in scenes:
            detections = peak_search(fl, eps, delta_theta_deg)
            estimates = cluster_doas(detections, sigma_deg, truth.span_deg,
                                     min_support_frac)
            pr = doa_precision_recall(estimates, truth, match_tol_deg)
            tp += pr.matches
            est_total += pr.estimate_count
            truth_total += pr.truth_count
        if est_total == 0 and truth_total == 0:
            precision = recall = 1.0
        else:
            precision = tp / est_total if est_total else 0.0
            recall = tp / truth_total if truth_total else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        rows.append(CalibrationRow(eps, precision, recall, f1))
        if best is None or f1 > best.f1:
            best = rows[-1]
    return CalibrationResult(best.eps_theta, best.f1, tuple(rows))
