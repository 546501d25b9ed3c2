"""SG counting, 2-cluster thresholding, verdict sweeps, and frequency filters."""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .model import iso

DEFAULT_WINDOW = 1800  # seconds of log history per observation
DEFAULT_CADENCE = 600  # seconds between observation moments
DEFAULT_ALPHA = 5.0
DEFAULT_TAU_MIN = 5.0
DEFAULT_PERCENTILE = 99.5
CV_THRESHOLD = 0.1
MIN_GROUP_SIZE = 3

VERDICTS = ("normal", "abnormal", "non_responsive")


class GroupTooSmall(ValueError):
    """Vicinity group has fewer than MIN_GROUP_SIZE usable observations."""


@dataclass(frozen=True)
class SGObservation:
    node: object  # NodeId
    at: int
    window: int
    sg: int


class SGIndex:
    """Per-node sorted timestamp index answering half-open window counts."""

    def __init__(self, entries):
        per_node: dict = {}
        for e in entries:
            per_node.setdefault(e.node, []).append(e.timestamp)
        self.times = {}
        for node, ts in per_node.items():
            ts.sort()
            self.times[node] = ts

    def count(self, node, at: int, window: int = DEFAULT_WINDOW) -> int:
        ts = self.times.get(node)
        if not ts:
            return 0
        # [at - window, at): the entry at `at` itself is not yet observed
        return bisect_left(ts, at) - bisect_left(ts, at - window)

    def observe(self, node, at: int, window: int = DEFAULT_WINDOW) -> SGObservation:
        return SGObservation(node, at, window, self.count(node, at, window))

    def nodes(self):
        return self.times.keys()

    def last_entry_before(self, node, t: int):
        """Timestamp of the node's last entry strictly before t, or None."""
        ts = self.times.get(node)
        if not ts:
            return None
        idx = bisect_left(ts, t)
        return ts[idx - 1] if idx else None


def compute_sg(index: SGIndex, node, at: int,
               window: int = DEFAULT_WINDOW) -> SGObservation:
    return index.observe(node, at, window)


def kmeans_1d_2(values):
    """Optimal 1-D 2-means: the best split of the sorted values.

    Returns (assign, (c_lo, c_hi), wcss) where assign[i] is 0 for the lower
    cluster. All-equal input degenerates to a single lower cluster with
    wcss 0. The optimum over sorted splits is the global 2-means optimum in
    one dimension, and it is deterministic.
    """
    n = len(values)
    if n < 1:
        raise ValueError("kmeans_1d_2 needs at least one value")
    order = sorted(range(n), key=lambda i: values[i])
    xs = [float(values[i]) for i in order]
    if xs[0] == xs[-1]:
        return [0] * n, (xs[0], xs[0]), 0.0

    prefix = [0.0]
    prefix_sq = [0.0]
    for x in xs:
        prefix.append(prefix[-1] + x)
        prefix_sq.append(prefix_sq[-1] + x * x)

    def sse(i, j):  # over xs[i:j]
        if j <= i:
            return 0.0
        s = prefix[j] - prefix[i]
        s2 = prefix_sq[j] - prefix_sq[i]
        return max(s2 - s * s / (j - i), 0.0)

    best_k, best_wcss = 1, math.inf
    for k in range(1, n):
        w = sse(0, k) + sse(k, n)
        if w < best_wcss - 1e-12:
            best_k, best_wcss = k, w
    c_lo = (prefix[best_k] - prefix[0]) / best_k
    c_hi = (prefix[n] - prefix[best_k]) / (n - best_k)
    assign = [0] * n
    for pos in range(best_k, n):
        assign[order[pos]] = 1
    return assign, (c_lo, c_hi), best_wcss


@dataclass(frozen=True)
class ThresholdReport:
    c_minor: float
    c_major: float
    wcss: float
    tau: float
    members: dict  # NodeId -> cluster index (0 lower, 1 upper)
    minority: frozenset  # NodeIds in the smaller cluster (empty when degenerate)

    @property
    def centers(self):
        return (self.c_minor, self.c_major)


def deviation_threshold(sgs, alpha: float = DEFAULT_ALPHA,
                        tau_min: float = DEFAULT_TAU_MIN) -> ThresholdReport:
    """Cluster a vicinity's SG values and derive its dynamic threshold."""
    n = len(sgs)
    if n < MIN_GROUP_SIZE:
        raise GroupTooSmall(f"need >= {MIN_GROUP_SIZE} observations, got {n}")
    values = [o.sg for o in sgs]
    assign, (c_lo, c_hi), wcss = kmeans_1d_2(values)
    members = {o.node: a for o, a in zip(sgs, assign)}
    tau = max(tau_min, alpha * math.sqrt(wcss / n))
    n_lo = assign.count(0)
    n_hi = n - n_lo
    if n_hi == 0:  # degenerate: all equal
        return ThresholdReport(c_lo, c_hi, wcss, tau, members, frozenset())
    if n_lo < n_hi or (n_lo == n_hi and c_lo <= c_hi):
        minor_cluster, c_minor, c_major = 0, c_lo, c_hi
    else:
        minor_cluster, c_minor, c_major = 1, c_hi, c_lo
    minority = frozenset(o.node for o, a in zip(sgs, assign) if a == minor_cluster)
    return ThresholdReport(c_minor, c_major, wcss, tau, members, minority)


@dataclass(frozen=True)
class DetectionResult:
    at: int
    group: str
    verdicts: dict  # NodeId -> verdict
    observations: dict  # NodeId -> SGObservation
    threshold: ThresholdReport


def detect_abnormal(sgs, report: ThresholdReport, at: int = 0,
                    group: str = "") -> DetectionResult:
    verdicts = {}
    for obs in sgs:
        if obs.sg == 0:
            verdicts[obs.node] = "non_responsive"
        elif (obs.node in report.minority
                and abs(obs.sg - report.c_major) > report.tau):
            verdicts[obs.node] = "abnormal"
        else:
            verdicts[obs.node] = "normal"
    return DetectionResult(at, group, verdicts, {o.node: o for o in sgs}, report)


@dataclass
class SweepResult:
    results: list = field(default_factory=list)
    skipped_groups: list = field(default_factory=list)  # (group, size), once each
    moments: list = field(default_factory=list)


def observation_moments(start: int, end: int,
                        cadence: int = DEFAULT_CADENCE,
                        window: int = DEFAULT_WINDOW) -> list:
    return list(range(start + window, end + 1, cadence))


def run_detection(index: SGIndex, assignment, obs_range,
                  cadence: int = DEFAULT_CADENCE,
                  window: int = DEFAULT_WINDOW,
                  alpha: float = DEFAULT_ALPHA,
                  tau_min: float = DEFAULT_TAU_MIN) -> SweepResult:
    """Sweep observation moments, emitting one DetectionResult per (moment, group)."""
    if cadence <= 0:
        raise ValueError("cadence must be positive")
    sweep = SweepResult(moments=observation_moments(
        obs_range.start, obs_range.end, cadence, window))
    for name, group in zip(assignment.group_names, assignment.groups):
        if len(group) < MIN_GROUP_SIZE:
            sweep.skipped_groups.append((name, len(group)))
    usable = [(name, sorted(group))
              for name, group in zip(assignment.group_names, assignment.groups)
              if len(group) >= MIN_GROUP_SIZE]
    for at in sweep.moments:
        for name, group in usable:
            sgs = [index.observe(node, at, window) for node in group]
            report = deviation_threshold(sgs, alpha=alpha, tau_min=tau_min)
            sweep.results.append(detect_abnormal(sgs, report, at=at, group=name))
    return sweep


def filter_frequent_raw(entries, rules, percentile: float = DEFAULT_PERCENTILE):
    """Drop entries whose deidentified template count is above the percentile."""
    counts: dict = {}
    for e in entries:
        t = rules.template(e.message)
        counts[t] = counts.get(t, 0) + 1
    if not counts:
        return list(entries), []
    cut = float(np.percentile(list(counts.values()), percentile))
    dropped = sorted(t for t, c in counts.items() if c > cut)
    dropped_set = set(dropped)
    kept = [e for e in entries if rules.template(e.message) not in dropped_set]
    return kept, dropped


def filter_frequent_anonymized(entries, percentile: float = DEFAULT_PERCENTILE,
                               cv_threshold: float = CV_THRESHOLD,
                               min_arrivals: int = 5):
    """Percentile rule on hash keys plus removal of near-periodic keys.

    A key is near-periodic when the median over nodes of its per-node
    inter-arrival coefficient of variation is below cv_threshold (nodes with
    fewer than min_arrivals occurrences don't vote).
    """
    counts: dict = {}
    arrivals: dict = {}
    for e in entries:
        counts[e.key] = counts.get(e.key, 0) + 1
        arrivals.setdefault((e.key, e.node), []).append(e.timestamp)
    if not counts:
        return list(entries), []
    cut = float(np.percentile(list(counts.values()), percentile))
    dropped = {k for k, c in counts.items() if c > cut}

    cvs: dict = {}
    for (key, _node), ts in arrivals.items():
        if len(ts) < min_arrivals:
            continue
        ts = sorted(ts)
        gaps = np.diff(ts)
        mean = float(gaps.mean())
        cv = float(gaps.std() / mean) if mean > 0 else 0.0
        cvs.setdefault(key, []).append(cv)
    for key, node_cvs in cvs.items():
        if float(np.median(node_cvs)) < cv_threshold:
            dropped.add(key)

    kept = [e for e in entries if e.key not in dropped]
    return kept, sorted(dropped)


def write_verdicts(sweep: SweepResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in sweep.results:
            for node in sorted(res.verdicts):
                obs = res.observations[node]
                fh.write(f"{iso(res.at)}\t{res.group}\t{node.name}\t"
                         f"{res.verdicts[node]}\t{obs.sg}\t{res.threshold.tau:.3f}\n")


def write_sg_matrix(index: SGIndex, nodes, obs_range, path,
                    cadence: int = DEFAULT_CADENCE,
                    window: int = DEFAULT_WINDOW) -> None:
    """CSV matrix: rows are observation moments, columns are nodes, cells SG."""
    nodes = sorted(nodes)
    moments = observation_moments(obs_range.start, obs_range.end, cadence, window)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("at," + ",".join(n.name for n in nodes) + "\n")
        for at in moments:
            row = ",".join(str(index.count(n, at, window)) for n in nodes)
            fh.write(f"{iso(at)},{row}\n")
