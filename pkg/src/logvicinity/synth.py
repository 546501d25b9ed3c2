"""Synthetic cluster corpus with injected failures and full ground truth."""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field

from .datasources import (JobRecord, MaintenanceWindow, OutageRecord, Scope,
                          write_job_report, write_maintenance, write_outage_db)
from .model import (LogEntry, NodeId, ObservationRange, Topology,
                    format_syslog_line, iso, parse_iso, parse_node_name,
                    save_topology, to_epoch, topen)

DAY = 86400
HOUR = 3600

# Cluster-wide streams shared by every node: a cron line (top template by
# count, the frequency-filter target and the storm vehicle) and a low-jitter
# heartbeat (the near-periodic template the anonymized filter removes).
CRON = (300, 45, "CRON", "(root) CMD (run-parts /etc/cron.hourly)")
HEARTBEAT = (600, 8, "systemd", "Session heartbeat check completed")

# Per-architecture chatter: jittered lattices sized so class mean rates stay
# a factor >= 2 apart for the classes in the default desk topology, with
# inter-arrival CV comfortably above the periodicity filter's 0.1.
CHATTER = {
    "Haswell": [
        (900, 180, "kernel", "perf interrupt took too long, lowering rate"),
    ],
    "SandyBridge": [
        (240, 45, "slurmd", "health check cycle completed without findings"),
        (400, 60, "kernel", "EDAC MC sdram scrub rate adjusted"),
        (600, 90, "ntpd", "clock discipline loop resynchronized"),
    ],
    "GPU": [
        (75, 12, "nvidiad", "device poll cycle ok, thermals nominal"),
        (150, 24, "slurmd", "gres accounting sample flushed"),
        (300, 45, "kernel", "PCIe bus link state renegotiated"),
    ],
    "Westmere": [
        (1800, 240, "kernel", "machine check poll completed clean"),
    ],
    "Broadwell": [
        (20, 3, "lustre", "ost bulk transfer window advanced"),
        (300, 45, "kernel", "NUMA balancer migrated pages batch"),
        (1800, 240, "mcelog", "periodic scan found no new events"),
    ],
}

POISSON_PER_WINDOW = 1.0  # variable-message rate, every class

GASP = ("kernel", "Kernel panic - not syncing: Fatal Exception")

FOOTPRINT_LINES = [
    ("kernel", "Booting Linux on physical CPU zero"),
    ("kernel", "Initializing cgroup subsys cpuset"),
    ("systemd", "Startup finished in userspace mode"),
]
FOOTPRINT_OFFSETS = [0, 20, 45]

BURST_LINES = [
    ("systemd", "Mounting local filesystems set"),
    ("systemd", "Started session management daemon"),
    ("kernel", "registered protocol family handler"),
    ("network", "interface link becomes ready"),
]

SHUTDOWN_LINES = [
    ("systemd", "Stopping user slices for maintenance"),
    ("systemd", "Reached target final shutdown checkpoint"),
]

STORM_PERIOD = 15  # seconds between storm repetitions of the cron line
STORM_LENGTH = 900

WINDOW = 1800  # sizing reference for rates below


def _stream_rate_per_window(arch: str) -> float:
    chatter = sum(WINDOW / period for period, _, _, _ in CHATTER[arch])
    return WINDOW / CRON[0] + WINDOW / HEARTBEAT[0] + POISSON_PER_WINDOW + chatter


DEFAULT_BASE_RATES = {
    arch: round(2 * _stream_rate_per_window(arch))
    for arch in ("Westmere", "Haswell", "SandyBridge", "GPU", "Broadwell")
}

CAUSES = ("crash_panic", "silent_hang", "no_reboot")


def _poisson_message(rng):
    kind = rng.randrange(3)
    if kind == 0:
        return ("smartd", f"Device temperature changed to {rng.randint(28, 71)} Celsius")
    if kind == 1:
        return ("sshd", f"Accepted publickey for operator from port {rng.randint(1024, 65000)}")
    return ("nfs", f"server responded after {rng.randint(2, 900)} ms retry delay")


@dataclass
class GeneratorSpec:
    topology: Topology | None = None  # None -> desk_topology()
    start: int = to_epoch(2023, 3, 6, 0, 0, 0)
    days: float = 7.0
    seed: int = 7
    base_rate: dict | None = None  # arch -> entries/hour; None -> defaults
    failure_count: int = 40
    failure_skew: float = 0.2
    skew_share: float = 0.7
    temporal_cluster_prob: float = 0.3
    rack_affinity: float = 0.5
    sudden_prob: float = 0.1
    cause_mix: tuple = (("crash_panic", 0.5), ("silent_hang", 0.35),
                        ("no_reboot", 0.15))
    storm_count: int = 60
    background_jobs: int = 150
    maintenance: bool = True

    def __post_init__(self):
        for name, p in (("failure_skew", self.failure_skew),
                        ("temporal_cluster_prob", self.temporal_cluster_prob),
                        ("rack_affinity", self.rack_affinity),
                        ("sudden_prob", self.sudden_prob)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.base_rate:
            for arch, rate in self.base_rate.items():
                if rate <= 0:
                    raise ValueError(f"base rate for {arch} must be positive")

    @property
    def end(self) -> int:
        return self.start + int(self.days * DAY)


@dataclass(frozen=True)
class InjectedFailure:
    node: NodeId
    outage_time: int
    has_reboot: bool
    cause: str


@dataclass
class GroundTruth:
    failures: list = field(default_factory=list)
    maintenance: list = field(default_factory=list)
    jobs: list = field(default_factory=list)
    outage_records: list = field(default_factory=list)
    storms: list = field(default_factory=list)  # (node, start), for analysis


@dataclass
class GeneratedCorpus:
    entries: list
    truth: GroundTruth
    topology: Topology
    spec: GeneratorSpec

    @property
    def range(self) -> ObservationRange:
        return ObservationRange(self.spec.start, self.spec.end)


def desk_topology() -> Topology:
    """Default 64-node bench topology: 3 classes, no rack below 8 nodes."""
    nodes, arch_of = [], {}

    def rack(island, rck, count, arch):
        for pos in range(count):
            node = NodeId(island, rck, pos)
            nodes.append(node)
            arch_of[node] = arch

    for r in range(3):
        rack(1, r, 12, "Haswell")
    for r in range(2):
        rack(2, r, 8, "SandyBridge")
    rack(3, 0, 12, "GPU")
    return Topology(nodes, arch_of)


TAURUS_LAYOUT = [
    # (island, rack count, nodes per rack, architecture)
    (1, 9, 30, "SandyBridge"),
    (2, 6, 18, "GPU"),
    (3, 6, 30, "Westmere"),
    (4, 2, 16, "Broadwell"),
    (4, 20, 20, "Haswell"),
    (5, 24, 22, "Haswell"),
    (6, 24, 22, "Haswell"),
]


def taurus_topology() -> Topology:
    nodes, arch_of = [], {}
    next_rack: dict = {}
    for island, racks, per_rack, arch in TAURUS_LAYOUT:
        base = next_rack.get(island, 0)
        for r in range(racks):
            for pos in range(per_rack):
                node = NodeId(island, base + r, pos)
                nodes.append(node)
                arch_of[node] = arch
        next_rack[island] = base + racks
    return Topology(nodes, arch_of)


def scale_topology(topology: Topology, factor: float) -> Topology:
    """Shrink a topology keeping per-class proportions and rack grouping."""
    if not 0 < factor <= 1:
        raise ValueError("factor must be in (0, 1]")
    by_class: dict = {}
    for node in topology.nodes:
        by_class.setdefault(topology.architecture_of[node], []).append(node)
    total = max(1, round(len(topology.nodes) * factor))

    # largest-remainder apportionment of `total` across classes
    quotas = {arch: len(ns) * factor for arch, ns in by_class.items()}
    counts = {arch: math.floor(q) for arch, q in quotas.items()}
    leftover = total - sum(counts.values())
    for arch in sorted(quotas, key=lambda a: (quotas[a] - counts[a], quotas[a]),
                       reverse=True):
        if leftover <= 0:
            break
        counts[arch] += 1
        leftover -= 1
    if sum(counts.values()) > total:  # floor sum already exceeded a tiny total
        biggest = max(counts, key=lambda a: counts[a])
        counts = {a: 0 for a in counts}
        counts[biggest] = total

    nodes, arch_of = [], {}
    for arch, members in by_class.items():
        want = counts.get(arch, 0)
        for node in members:  # members follow topology order: rack by rack
            if want <= 0:
                break
            nodes.append(node)
            arch_of[node] = arch
            want -= 1
    return Topology(nodes, arch_of)


def _scaled_streams(arch: str, rate_per_hour: float):
    """Chatter lattice set for a class, rescaled to hit a requested rate."""
    default_extra = sum(WINDOW / p for p, _, _, _ in CHATTER[arch])
    floor = WINDOW / CRON[0] + WINDOW / HEARTBEAT[0] + POISSON_PER_WINDOW
    extra = rate_per_hour / 2.0 - floor
    if extra < 0:
        raise ValueError(
            f"base rate {rate_per_hour}/h for {arch} is below the shared "
            f"template floor ({int(floor * 2)}/h)")
    if default_extra == 0:
        return []
    factor = extra / default_extra
    out = []
    for period, jitter, tag, msg in CHATTER[arch]:
        if factor <= 0:
            continue
        out.append((period / factor, jitter / factor, tag, msg))
    return out


# ---------------------------------------------------------------------------
# schedule construction

@dataclass
class _NodeFailure:
    nominal: int
    cause: str
    quiet: float  # seconds of reduced logging before the end, 0 when sudden
    downtime: float  # seconds until reboot; irrelevant for no_reboot


def _plan_maintenance(spec: GeneratorSpec, topology: Topology):
    if not spec.maintenance:
        return []
    windows = []
    islands = topology.islands()
    if len(islands) > 1:
        windows.append(MaintenanceWindow(
            spec.start + int(3.5 * DAY), spec.start + int(3.5 * DAY) + 2 * HOUR,
            Scope("island", island=islands[1])))
    first = topology.nodes[0]
    windows.append(MaintenanceWindow(
        spec.start + int(1.25 * DAY), spec.start + int(1.25 * DAY) + 90 * 60,
        Scope("node", node=first)))
    return windows


def _far_from_maintenance(node, t, maint, margin=2 * HOUR) -> bool:
    return all(not (w.start - margin <= t <= w.end + margin)
               or not w.scope.covers(node) for w in maint)


def _plan_failures(spec: GeneratorSpec, topology: Topology, maint, rng):
    """Pick (node, nominal time, cause) for every injected failure."""
    lo = spec.start + 6 * HOUR
    hi = spec.end - int(2.5 * HOUR)
    if hi <= lo or spec.failure_count * HOUR > (hi - lo) * len(topology.nodes) / 5:
        raise ValueError("spec infeasible: more failures than node-hours allow")

    failing_target = min(len(topology.nodes),
                         max(3, round(spec.failure_count * 0.4)))
    hot_count = max(1, round(spec.failure_skew * failing_target))
    roster = rng.sample(list(topology.nodes), failing_target)
    hot, cold = roster[:hot_count], roster[hot_count:]
    hot_quota = min(spec.failure_count, round(spec.skew_share * spec.failure_count))

    pool = []
    for i in range(hot_quota):
        pool.append(hot[i % len(hot)])
    for i in range(spec.failure_count - hot_quota):
        pool.append(cold[i % len(cold)] if cold else hot[i % len(hot)])
    rng.shuffle(pool)

    times_of: dict = {}

    def fits(node, t):
        if not (lo <= t <= hi):
            return False
        if not _far_from_maintenance(node, t, maint):
            return False
        return all(abs(t - u) >= 5 * HOUR for u in times_of.get(node, []))

    def take_node(t, exclude=(), prefer_rack=None):
        order = list(range(len(pool)))
        if prefer_rack is not None:
            order.sort(key=lambda i: (pool[i].island, pool[i].rack) != prefer_rack)
        for i in order:
            node = pool[i]
            if node in exclude or not fits(node, t):
                continue
            pool.pop(i)
            return node
        return None

    failures = []
    guard = 0
    while pool and guard < 200000:
        guard += 1
        t = rng.uniform(lo, hi)
        head = take_node(t)
        if head is None:
            continue
        times_of.setdefault(head, []).append(t)
        failures.append((head, t))
        if pool and rng.random() < spec.temporal_cluster_prob:
            t2 = t + rng.uniform(60, 540)
            rack = ((head.island, head.rack)
                    if rng.random() < spec.rack_affinity else None)
            mate = take_node(t2, exclude={head}, prefer_rack=rack)
            if mate is not None:
                times_of.setdefault(mate, []).append(t2)
                failures.append((mate, t2))
    if pool:
        raise ValueError("spec infeasible: could not place all failures")

    causes, weights = zip(*spec.cause_mix)
    per_node: dict = {}
    planned: dict = {}
    for node, t in sorted(failures, key=lambda f: f[1]):
        per_node.setdefault(node, []).append(t)
    for node, ts in per_node.items():
        last = max(ts)
        for t in ts:
            cause = rng.choices(causes, weights)[0]
            if cause == "no_reboot" and t != last:
                cause = rng.choices(causes[:2], weights[:2])[0]
            sudden = cause != "silent_hang" and rng.random() < spec.sudden_prob
            planned.setdefault(node, []).append(_NodeFailure(
                nominal=int(t),
                cause=cause,
                quiet=0.0 if sudden else rng.uniform(2700, 5400),
                downtime=rng.uniform(2700, 5400),
            ))
    for node in planned:
        planned[node].sort(key=lambda f: f.nominal)
    return planned


def _plan_storms(spec: GeneratorSpec, topology: Topology, planned, maint, rng):
    quiet_nodes = [n for n in topology.nodes if n not in planned]
    storms: dict = {}
    placed = 0
    guard = 0
    while placed < spec.storm_count and guard < 100000 and quiet_nodes:
        guard += 1
        node = rng.choice(quiet_nodes)
        t = rng.uniform(spec.start + 2 * HOUR, spec.end - 2 * HOUR)
        if not _far_from_maintenance(node, t, maint, margin=HOUR):
            continue
        if any(abs(t - u) < 2 * HOUR for u in storms.get(node, [])):
            continue
        storms.setdefault(node, []).append(int(t))
        placed += 1
    return storms


def _plan_jobs(spec: GeneratorSpec, topology: Topology, planned, maint, rng):
    jobs, odb = [], []
    seq = 0
    for node in sorted(planned):
        for failure in planned[node]:
            t = failure.nominal
            seq += 1
            if rng.random() < 0.7:
                # the scheduler notices the node going away slightly before
                # its last log line, so the hang-aligned instant stays inside
                # the classifier's correlation window
                end = t - int(rng.uniform(30, 300))
                start = end - int(rng.uniform(1 * HOUR, 4 * HOUR))
                members = {node}
                if rng.random() < 0.3:
                    peers = [p for p in topology.nodes
                             if (p.island, p.rack) == (node.island, node.rack)
                             and p != node and p not in planned]
                    members |= set(rng.sample(peers, min(len(peers), rng.randint(1, 2))))
                jobs.append(JobRecord(f"f{seq}", frozenset(members), start, end,
                                      "node_fail"))
            else:
                odb.append(OutageRecord(t - 900, t + 1800,
                                        Scope("node", node=node),
                                        "user-visible unavailability"))

    failure_times = {node: [f.nominal for f in fs] for node, fs in planned.items()}
    racks = topology.racks()
    attempts = 0
    made = 0
    while made < spec.background_jobs and attempts < spec.background_jobs * 20:
        attempts += 1
        island, rck = rng.choice(racks)
        members = [n for n in topology.nodes if (n.island, n.rack) == (island, rck)]
        size = rng.randint(1, min(8, len(members)))
        members = rng.sample(members, size)
        start = int(rng.uniform(spec.start, spec.end - HOUR))
        end = min(int(start + rng.uniform(HOUR, 12 * HOUR)), spec.end)
        status = rng.choices(("completed", "cancelled", "timeout"),
                             (0.85, 0.10, 0.05))[0]
        if status == "completed" and any(
                start - 900 <= t < end + 900
                for n in members for t in failure_times.get(n, [])):
            continue  # a completed job must never span a member's failure
        made += 1
        jobs.append(JobRecord(f"b{made}", frozenset(members), start, end, status))
    jobs.sort(key=lambda j: (j.start, j.job_id))
    odb.sort(key=lambda r: r.start)
    return jobs, odb


# ---------------------------------------------------------------------------
# per-node stream synthesis

def _lattice(rng, start, end, period, jitter):
    ticks = []
    t = start + rng.uniform(0, period)
    while t < end:
        ticks.append(t + rng.uniform(-jitter, jitter))
        t += period
    return [tick for tick in ticks if start <= tick < end]


def _node_stream(node, arch, spec, chatter, failures, maint_windows, storms,
                 resolved_out):
    rng = random.Random(f"{spec.seed}:{node.name}")
    start, end = spec.start, spec.end

    heart = [(t, HEARTBEAT[2], HEARTBEAT[3])
             for t in _lattice(rng, start, end, HEARTBEAT[0], HEARTBEAT[1])]
    other = [(t, CRON[2], CRON[3])
             for t in _lattice(rng, start, end, CRON[0], CRON[1])]
    for period, jitter, tag, msg in chatter:
        other.extend((t, tag, msg) for t in _lattice(rng, start, end, period, jitter))

    t = start
    mean_gap = WINDOW / POISSON_PER_WINDOW
    while True:
        t += rng.expovariate(1.0 / mean_gap)
        if t >= end:
            break
        tag, msg = _poisson_message(rng)
        other.append((t, tag, msg))

    for storm_start in storms:
        tick = storm_start + rng.uniform(0, STORM_PERIOD)
        while tick < storm_start + STORM_LENGTH:
            other.append((tick, CRON[2], CRON[3]))
            tick += STORM_PERIOD + rng.uniform(-3, 3)

    extra = []
    cut_spans = []  # (cut_from, resume_at) applied to non-heartbeat streams
    heart_cut = []  # (cut_after, resume_at) applied to heartbeats

    for failure in failures:
        if failure.cause == "silent_hang":
            # the hang leaves the heartbeat as the final entry: pin the
            # failure instant to the last tick at or before the planned time
            last_tick = max(h[0] for h in heart if h[0] <= failure.nominal)
            t_fail, heart_stop = int(last_tick), last_tick
        else:
            t_fail = failure.nominal
            heart_stop = float(t_fail)
            extra.append((float(t_fail), GASP[0], GASP[1]))
        has_reboot = failure.cause != "no_reboot"
        resume = t_fail + failure.downtime if has_reboot else end + DAY
        cut_spans.append((t_fail - failure.quiet, resume))
        heart_cut.append((heart_stop, resume))
        if has_reboot:
            extra.extend(_boot_entries(rng, resume))
        resolved_out.append(InjectedFailure(node, t_fail, has_reboot,
                                            failure.cause))

    for window in maint_windows:
        cutoff = window.start + rng.uniform(60, 300)
        resume = window.end - rng.uniform(600, 1200)
        # shutdown lines go after the cutoff so the node's final pre-boot
        # entry always falls inside the announced window
        for offset, (tag, msg) in enumerate(SHUTDOWN_LINES):
            extra.append((cutoff + 5 + 10 * offset, tag, msg))
        cut_spans.append((cutoff, resume))
        heart_cut.append((cutoff, resume))
        extra.extend(_boot_entries(rng, resume))

    def keep_other(item):
        return all(not (a < item[0] < b) for a, b in cut_spans)

    def keep_heart(item):
        return all(not (a < item[0] < b) for a, b in heart_cut)

    merged = [it for it in other if keep_other(it)]
    merged.extend(it for it in heart if keep_heart(it))
    merged.extend(extra)
    entries = [LogEntry(int(t), node, tag, msg)
               for t, tag, msg in merged if start <= t < end]
    entries.sort(key=lambda e: e.timestamp)
    return entries


def _boot_entries(rng, boot_time):
    out = [(boot_time + off, tag, msg)
           for off, (tag, msg) in zip(FOOTPRINT_OFFSETS, FOOTPRINT_LINES)]
    t = boot_time + FOOTPRINT_OFFSETS[-1] + 3
    for i in range(28):
        tag, msg = BURST_LINES[i % len(BURST_LINES)]
        out.append((t, tag, msg))
        t += rng.uniform(2, 6)
    return out


def generate(spec: GeneratorSpec) -> GeneratedCorpus:
    """Produce the corpus, sorted by time, plus authoritative ground truth."""
    topology = spec.topology or desk_topology()
    rates = dict(DEFAULT_BASE_RATES)
    if spec.base_rate:
        rates.update(spec.base_rate)
    chatter_of = {arch: _scaled_streams(arch, rates[arch])
                  for arch in {topology.architecture_of[n] for n in topology.nodes}}

    rng = random.Random(f"{spec.seed}:schedule")
    maint = _plan_maintenance(spec, topology)
    planned = _plan_failures(spec, topology, maint, rng)
    storms = _plan_storms(spec, topology, planned, maint, rng)
    jobs, odb = _plan_jobs(spec, topology, planned, maint, rng)

    entries = []
    resolved: list = []
    for node in topology.nodes:
        arch = topology.architecture_of[node]
        windows = [w for w in maint if w.scope.covers(node)]
        entries.extend(_node_stream(
            node, arch, spec, chatter_of[arch], planned.get(node, []),
            windows, storms.get(node, []), resolved))
    entries.sort(key=lambda e: (e.timestamp, e.node, e.tag))
    resolved.sort(key=lambda f: (f.outage_time, f.node))

    truth = GroundTruth(
        failures=resolved,
        maintenance=list(maint),
        jobs=jobs,
        outage_records=odb,
        storms=sorted((node, t) for node, ts in storms.items() for t in ts),
    )
    return GeneratedCorpus(entries, truth, topology, spec)


# ---------------------------------------------------------------------------
# file emission

def write_corpus_files(gen: GeneratedCorpus, outdir, compress=False) -> dict:
    """Write the syslog corpus and every auxiliary file; returns their paths."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": outdir / ("corpus.log.gz" if compress else "corpus.log"),
        "topology": outdir / "topology.tsv",
        "jobs": outdir / "jobs.csv",
        "outage_db": outdir / "outage.db",
        "maintenance": outdir / "maintenance.tsv",
        "truth": outdir / "truth.csv",
    }
    with topen(paths["corpus"], "w") as fh:
        for entry in gen.entries:
            fh.write(format_syslog_line(entry) + "\n")
    save_topology(gen.topology, paths["topology"])
    write_job_report(gen.truth.jobs, paths["jobs"])
    write_outage_db(gen.truth.outage_records, paths["outage_db"])
    write_maintenance(gen.truth.maintenance, paths["maintenance"])
    with open(paths["truth"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "outage_time", "has_reboot", "cause"])
        for f in gen.truth.failures:
            writer.writerow([f.node.name, iso(f.outage_time),
                             str(f.has_reboot).lower(), f.cause])
    return {k: str(v) for k, v in paths.items()}


def load_truth(path) -> list:
    failures = []
    with topen(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "node" or row[0].startswith("#"):
                continue
            failures.append(InjectedFailure(
                parse_node_name(row[0]), parse_iso(row[1]),
                row[2] == "true", row[3]))
    return failures
