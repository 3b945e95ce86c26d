"""Deterministic timeline realization for a schedule.

Given a scenario and a schedule (processing order, task-to-server assignment,
per-task offload fractions), realizes uplink queueing, per-server sequential
processing, downlink queueing and the local portion, then reports per-task
latency components and aggregate metrics.

A partitioned task occupies the channel and its server with the scaled
payload (fraction * size, fraction * remote time); its reported end-to-end
latency is the realized remote component sum plus the local remainder, so at
fraction 1 it is exactly communication latency + computation latency and at
fraction 0 exactly the local processing time.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from enum import Enum

from .channel import BandwidthPolicy, shannon_rate
from .errors import IntegrityError
from .scenario import Scenario, Task

# Ready/completion instants closer than this count as simultaneous (cohorts).
SIMULTANEITY_TOL = 1e-6
# Slack for deadline and feasibility comparisons on realized floats.
DEADLINE_TOL = 1e-9


class OffloadMode(Enum):
    MEC_ONLY = "mec-only"     # fraction 1 or dropped
    PARTITION = "partition"   # fraction in [0,1], never dropped


@dataclass
class Schedule:
    """Offload sequence, server assignment (None = dropped) and fractions."""

    order: list[int]
    assignment: dict[int, int | None]
    fraction: dict[int, float]


@dataclass(slots=True)
class TaskTimeline:
    """Realized instants and latency components of one task.

    Leg fields are None when the leg did not happen (dropped task, or a
    fraction-0 task that never touched the channel).
    """

    task_id: int
    server: int | None
    fraction: float
    dropped: bool
    uplink_wait_s: float | None = None
    uplink_tx_s: float | None = None
    rsu_arrival_s: float | None = None
    proc_wait_s: float | None = None
    proc_start_s: float | None = None
    ready_back_s: float | None = None
    downlink_wait_s: float | None = None
    downlink_tx_s: float | None = None
    vehicle_arrival_s: float | None = None
    local_time_s: float = 0.0
    comm_latency_s: float | None = None
    remote_latency_s: float | None = None
    e2e_latency_s: float | None = None
    deadline_met: bool = True


@dataclass
class SimOutcome:
    """Per-task timelines plus the aggregates the experiments report."""

    policy: BandwidthPolicy
    lambda_weight: float
    n_tasks: int
    drop_count: int
    drop_ratio: float
    completed_count: int
    sum_e2e_s: float
    mean_e2e_s: float
    sum_range_s: float
    latency_term: float
    drop_term: float
    total_objective: float
    mean_uplink_wait_s: float
    mean_downlink_wait_s: float
    mean_remote_portion: float
    mean_local_portion: float
    per_server_busy_s: list[float]
    per_server_utilization: list[float]
    timelines: dict[int, TaskTimeline] = field(default_factory=dict)


class _Tables:
    """Flat per-task attribute lists; the hot loops index these, not dataclasses."""

    __slots__ = ("ids", "index", "ready", "size", "tp", "tpl", "deadline",
                 "exit", "n", "sum_range", "rate_full")

    def __init__(self, scenario: Scenario):
        tasks = scenario.tasks
        self.ids = [t.id for t in tasks]
        self.index = {t.id: i for i, t in enumerate(tasks)}
        self.ready = [t.ready_time_s for t in tasks]
        self.size = [t.size_bits for t in tasks]
        self.tp = [t.remote_proc_time_s for t in tasks]
        self.tpl = [t.local_proc_time_s for t in tasks]
        self.deadline = [t.range_deadline_s for t in tasks]
        self.exit = [t.ready_time_s + t.range_deadline_s for t in tasks]
        self.n = len(tasks)
        self.sum_range = sum(self.deadline)
        self.rate_full = shannon_rate(scenario.radio, scenario.radio.effective_bandwidth_hz)


_tables_cache: "weakref.WeakKeyDictionary[Scenario, _Tables]" = weakref.WeakKeyDictionary()


def tables_for(scenario: Scenario) -> _Tables:
    tb = _tables_cache.get(scenario)
    if tb is None:
        tb = _Tables(scenario)
        _tables_cache[scenario] = tb
    return tb


def validate_schedule(scenario: Scenario, schedule: Schedule):
    """Check the schedule against the scenario; returns index-based views."""
    tb = tables_for(scenario)
    n = tb.n
    if len(schedule.order) != n:
        raise IntegrityError(f"order lists {len(schedule.order)} tasks, scenario has {n}")
    order_idx: list[int] = []
    seen = set()
    for tid in schedule.order:
        idx = tb.index.get(tid)
        if idx is None:
            raise IntegrityError(f"order references unknown task {tid}")
        if tid in seen:
            raise IntegrityError(f"task {tid} appears twice in order")
        seen.add(tid)
        order_idx.append(idx)
    assign: list[int | None] = [None] * n
    frac: list[float] = [0.0] * n
    m = scenario.num_servers
    for tid, idx in tb.index.items():
        try:
            srv = schedule.assignment[tid]
            p = schedule.fraction[tid]
        except KeyError as exc:
            raise IntegrityError(f"schedule misses task {exc}") from None
        if srv is not None and not 0 <= srv < m:
            raise IntegrityError(f"task {tid} assigned to unknown server {srv}")
        if not 0.0 <= p <= 1.0:
            raise IntegrityError(f"task {tid} has fraction {p} outside [0,1]")
        assign[idx] = srv
        frac[idx] = p
    return order_idx, assign, frac


def simulate(scenario: Scenario, schedule: Schedule, policy: BandwidthPolicy,
             lambda_weight: float = 0.3, detail: bool = True) -> SimOutcome:
    """Realize the full event timeline for `schedule`; pure and deterministic.

    detail=False skips building per-task TaskTimeline objects (aggregates
    only), which matters inside optimizer fitness loops.
    """
    tb = tables_for(scenario)
    order_idx, assign, frac = validate_schedule(scenario, schedule)
    n = tb.n
    ready, size, tp, tpl = tb.ready, tb.size, tb.tp, tb.tpl
    rate_full = tb.rate_full
    shared = policy is BandwidthPolicy.SHARED
    tol = SIMULTANEITY_TOL

    wu = [0.0] * n
    uptx = [0.0] * n
    ta = [0.0] * n

    # Uplink: one channel; the blocking reference is the latest in-flight
    # completion; equal-ready runs in the order share the band under Shared.
    offl = [k for k in order_idx if assign[k] is not None and frac[k] > 0.0]
    up_free = 0.0
    i, m_off = 0, len(offl)
    while i < m_off:
        j = i + 1
        r0 = ready[offl[i]]
        if shared:
            while j < m_off and abs(ready[offl[j]] - r0) <= tol:
                j += 1
        start = up_free
        for kk in range(i, j):
            rk = ready[offl[kk]]
            if rk > start:
                start = rk
        rate = rate_full / (j - i)  # log2 factor is linear in bandwidth
        for kk in range(i, j):
            k = offl[kk]
            tx = frac[k] * size[k] / rate
            wu[k] = start - ready[k]
            uptx[k] = tx
            a = start + tx
            ta[k] = a
            if a > up_free:
                up_free = a
        i = j

    # Per-server sequential processing, FIFO in RSU-arrival order;
    # start = max(previous finish, own arrival).
    num_servers = scenario.num_servers
    wp = [0.0] * n
    sp = [0.0] * n
    pe = [0.0] * n
    per_server: list[list[tuple[float, int, int]]] = [[] for _ in range(num_servers)]
    for pos, k in enumerate(order_idx):
        if assign[k] is not None and frac[k] > 0.0:
            per_server[assign[k]].append((ta[k], pos, k))
    busy = [0.0] * num_servers
    for srv_tasks in per_server:
        srv_tasks.sort()
        free = 0.0
        for a, _pos, k in srv_tasks:
            s = free if free > a else a
            d = frac[k] * tp[k]
            wp[k] = s - a
            sp[k] = s
            free = s + d
            pe[k] = free
    for j_srv in range(num_servers):
        busy[j_srv] = sum(frac[k] * tp[k] for _a, _p, k in per_server[j_srv])

    # Downlink: results leave in completion order; simultaneous completions
    # share under Shared and serialize (by server index) under Fixed.
    done: list[tuple[float, int, int, int]] = []
    for j_srv in range(num_servers):
        for _a, pos, k in per_server[j_srv]:
            done.append((pe[k], j_srv, pos, k))
    done.sort()
    wd = [0.0] * n
    dntx = [0.0] * n
    tav = [0.0] * n
    dn_free = 0.0
    i, m_done = 0, len(done)
    while i < m_done:
        j = i + 1
        e0 = done[i][0]
        if shared:
            while j < m_done and done[j][0] - e0 <= tol:
                j += 1
        start = dn_free
        if done[j - 1][0] > start:
            start = done[j - 1][0]
        rate = rate_full / (j - i)
        for kk in range(i, j):
            k = done[kk][3]
            tx = frac[k] * size[k] / rate
            wd[k] = start - pe[k]
            dntx[k] = tx
            v = start + tx
            tav[k] = v
            if v > dn_free:
                dn_free = v
        i = j

    # Aggregate.
    drop_count = sum(1 for a in assign if a is None)
    completed = n - drop_count
    sum_e2e = 0.0
    sum_wu = 0.0
    sum_wd = 0.0
    n_tx = 0
    sum_p = 0.0
    offloaded = set(offl)
    e2e = [0.0] * n
    for k in range(n):
        if assign[k] is None:
            continue
        p = frac[k]
        local = (1.0 - p) * tpl[k]
        if k in offloaded:
            lat = (wu[k] + uptx[k] + wd[k] + dntx[k]) + (wp[k] + p * tp[k]) + local
            sum_wu += wu[k]
            sum_wd += wd[k]
            n_tx += 1
        else:
            lat = local
        e2e[k] = lat
        sum_e2e += lat
        sum_p += p

    latency_term = sum_e2e / tb.sum_range if tb.sum_range > 0 else 0.0
    drop_term = drop_count / n if n else 0.0
    objective = lambda_weight * latency_term + (1.0 - lambda_weight) * drop_term
    mean_remote = sum_p / completed if completed else 0.0

    window = 0.0
    if offl:
        window = max(pe[k] for k in offl) - min(ta[k] for k in offl)
    util = [b / window if window > 0 else 0.0 for b in busy]

    timelines: dict[int, TaskTimeline] = {}
    if detail:
        for k in range(n):
            tid = tb.ids[k]
            if assign[k] is None:
                timelines[tid] = TaskTimeline(task_id=tid, server=None, fraction=0.0, dropped=True)
                continue
            p = frac[k]
            local = (1.0 - p) * tpl[k]
            if k in offloaded:
                timelines[tid] = TaskTimeline(
                    task_id=tid, server=assign[k], fraction=p, dropped=False,
                    uplink_wait_s=wu[k], uplink_tx_s=uptx[k], rsu_arrival_s=ta[k],
                    proc_wait_s=wp[k], proc_start_s=sp[k], ready_back_s=pe[k],
                    downlink_wait_s=wd[k], downlink_tx_s=dntx[k], vehicle_arrival_s=tav[k],
                    local_time_s=local,
                    comm_latency_s=wu[k] + uptx[k] + wd[k] + dntx[k],
                    remote_latency_s=wp[k] + p * tp[k],
                    e2e_latency_s=e2e[k],
                    deadline_met=tav[k] <= tb.exit[k] + DEADLINE_TOL,
                )
            else:
                timelines[tid] = TaskTimeline(
                    task_id=tid, server=assign[k], fraction=p, dropped=False,
                    local_time_s=local, comm_latency_s=0.0, remote_latency_s=0.0,
                    e2e_latency_s=e2e[k], deadline_met=True,
                )

    return SimOutcome(
        policy=policy, lambda_weight=lambda_weight, n_tasks=n,
        drop_count=drop_count, drop_ratio=drop_term, completed_count=completed,
        sum_e2e_s=sum_e2e, mean_e2e_s=sum_e2e / completed if completed else 0.0,
        sum_range_s=tb.sum_range, latency_term=latency_term, drop_term=drop_term,
        total_objective=objective,
        mean_uplink_wait_s=sum_wu / n_tx if n_tx else 0.0,
        mean_downlink_wait_s=sum_wd / n_tx if n_tx else 0.0,
        mean_remote_portion=mean_remote,
        mean_local_portion=1.0 - mean_remote if completed else 0.0,
        per_server_busy_s=busy, per_server_utilization=util,
        timelines=timelines,
    )


def feasible_fraction(task: Task, predicted_lcm: float, predicted_lp: float) -> float:
    """Largest fraction whose predicted offloaded round trip fits the deadline."""
    if predicted_lcm < 0 or predicted_lp < 0:
        raise ValueError("predicted latency components must be >= 0")
    cap = task.range_deadline_s
    if cap <= 0:
        return 0.0
    total = predicted_lcm + predicted_lp
    if total <= cap:
        return 1.0
    return cap / total


def check_deadline(timeline: TaskTimeline, task: Task) -> bool:
    """True iff the offloaded portion returned before the vehicle left coverage.

    Dropped tasks and fraction-0 tasks pass vacuously (nothing comes back).
    """
    if timeline.dropped or timeline.vehicle_arrival_s is None:
        return True
    return timeline.vehicle_arrival_s <= task.absolute_deadline_s + DEADLINE_TOL


class OffloadPlanner:
    """Forward predictor used for admission decisions while building schedules.

    Serial model: every transmission is predicted at the full effective
    bandwidth and legs are claimed in dispatch order. The realized timeline
    (with cohort sharing and completion-order downlink) comes from simulate();
    both figures are reported so either reading can be audited.
    """

    __slots__ = ("tb", "uplink_free", "downlink_free", "server_free")

    def __init__(self, scenario: Scenario):
        self.tb = tables_for(scenario)
        self.uplink_free = 0.0
        self.downlink_free = 0.0
        self.server_free = [0.0] * scenario.num_servers

    def predict(self, idx: int, server: int | None = None) -> tuple[int, float, float]:
        """Predicted full-offload (fraction 1) components for task position idx.

        Returns (server, communication latency, computation latency); picks the
        earliest-available server when none is forced, ties to the lower index.
        """
        tb = self.tb
        ready = tb.ready[idx]
        up_start = self.uplink_free if self.uplink_free > ready else ready
        tcm = tb.size[idx] / tb.rate_full
        arrival = up_start + tcm
        server_free = self.server_free
        if server is None:
            server = 0
            proc_start = server_free[0] if server_free[0] > arrival else arrival
            for j in range(1, len(server_free)):
                s = server_free[j] if server_free[j] > arrival else arrival
                if s < proc_start:
                    server, proc_start = j, s
        else:
            sf = server_free[server]
            proc_start = sf if sf > arrival else arrival
        proc_end = proc_start + tb.tp[idx]
        down_start = self.downlink_free if self.downlink_free > proc_end else proc_end
        lcm = (up_start - ready) + 2.0 * tcm + (down_start - proc_end)
        lp = (proc_start - arrival) + tb.tp[idx]
        return server, lcm, lp

    def commit(self, idx: int, server: int, p: float) -> None:
        """Claim channel and server time for an admitted offloaded portion."""
        if p <= 0.0:
            return
        tb = self.tb
        ready = tb.ready[idx]
        up_start = self.uplink_free if self.uplink_free > ready else ready
        tx = p * tb.size[idx] / tb.rate_full
        arrival = up_start + tx
        self.uplink_free = arrival
        sf = self.server_free[server]
        s = sf if sf > arrival else arrival
        e = s + p * tb.tp[idx]
        self.server_free[server] = e
        d = self.downlink_free if self.downlink_free > e else e
        self.downlink_free = d + tx
