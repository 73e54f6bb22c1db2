"""Deterministic cycle-level engine for jobs flowing through a mapped mesh.

Time is counted in integer clock cycles. The loop jumps between event
times: job milestones (computation done, hop done), the end of each upload
phase (status collection and controller work) and the end of each download
phase (new routing tables reach the nodes). Within one cycle, control events
run first, then jobs in ascending id order.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .app import AppSpec, op_counts
from .control import (
    ControlConfig,
    ControlPlane,
    RoutingContext,
    TdmaFrame,
    collect_reports,
    plan_frame,
    report_key,
)
from .kernels import NONE
from .platform import BatteryState, Platform, battery_level
from .routing import AllPairsResult, RoutingTables, compute_routes

INF = math.inf
AUDIT_SLACK = 1e-9

MODULE_EXTINCTION = "module-extinction"
CONTROLLER_EXTINCTION = "controller-extinction"
UNROUTABLE = "unroutable"


@dataclass(frozen=True)
class SimConfig:
    algorithm: str = "ear"
    Q: float = 1.0
    concurrent_jobs: int = 1
    buffer_capacity: int = 1
    hop_cycles: int = 8
    origin: int = 0
    seed: int = 0
    max_cycles: int = 10**11
    backend: str | None = None

    def __post_init__(self):
        if self.algorithm.lower() not in ("ear", "sdr"):
            raise ValueError(f"algorithm must be 'ear' or 'sdr', got {self.algorithm!r}")
        if self.concurrent_jobs < 1:
            raise ValueError("concurrent_jobs must be >= 1")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.hop_cycles < 1:
            raise ValueError("hop_cycles must be >= 1")
        if not self.Q > 0:
            raise ValueError("Q must be positive")


@dataclass
class JobState:
    id: int
    node: int
    flow_position: int = 0
    phase: str = "wait"  # wait | compute | transit
    ready_at: float = 0
    target: int = NONE
    stall_since: int | None = None
    flagged_at: int | None = None
    flagged_succ: int = NONE
    flag_alternative: bool = False


@dataclass
class NodeRuntime:
    id: int
    module: int
    battery: BatteryState
    x: int = 0
    comp: float = 0.0  # energy drawn for computation
    C: float = 0.0
    OH: float = 0.0
    held: list = field(default_factory=list)
    incoming: int = 0
    busy_until: int = 0
    died_at: int | None = None

    def stall_cycles(self, now: int) -> int | None:
        stalls = [now - j.stall_since for j in self.held if j.stall_since is not None]
        return max(stalls) if stalls else None

    @property
    def occupancy(self) -> int:
        return len(self.held) + self.incoming


@dataclass
class SimMetrics:
    algorithm: str
    topology: str
    K: int
    battery_model: str
    jobs_completed: int
    jobs_fractional: float
    elapsed_cycles: int
    death_cause: str
    frames: int
    recomputations: int
    changed_frames: int
    computation_pj: float
    communication_pj: float
    overhead_pj: float
    control_download_pj: float
    residual_pj: float
    initial_pj: float
    overhead_fraction: float  # node report energy over node consumption
    system_overhead_fraction: float
    budget_violations: int
    deadlock_flags: int
    deadlock_violations: int
    jobs_injected: int
    nodes: list[dict]
    controller_deaths: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_death(nodes: Sequence[NodeRuntime], p: int, plane: ControlPlane | None = None) -> str | None:
    """System death cause, or None while every module keeps a live duplicate."""
    live = [0] * p
    for n in nodes:
        if not n.battery.dead:
            live[n.module - 1] += 1
    if any(c == 0 for c in live):
        return MODULE_EXTINCTION
    if plane is not None and plane.finite and not plane.alive:
        return CONTROLLER_EXTINCTION
    return None


class Simulation:
    def __init__(self, app: AppSpec, platform: Platform, control: ControlConfig | None = None,
                 config: SimConfig | None = None):
        self.app = app
        self.platform = platform
        self.control = control or ControlConfig()
        self.config = config or SimConfig()
        self.flow = app.flow.steps
        self.flow_len = len(self.flow)
        self.K = platform.K
        self.p = app.p
        self.energy = app.energies
        self.latency = [m.compute_latency for m in app.modules]
        self.hop_pj = platform.hop_energy_matrix(app.packet_bits)
        self.neighbors = platform.topology.neighbors()
        self.frame: TdmaFrame = plan_frame(self.K, self.control, self.p)
        self.nodes = [
            NodeRuntime(j, platform.mapping.assignment[j], platform.battery.new())
            for j in range(self.K)
        ]
        self.ctx = RoutingContext(platform.topology, platform.mapping, self.config.algorithm.lower(),
                                  self.config.Q, platform.levels, self.config.backend)
        full = [platform.levels - 1] * self.K
        # initial tables are installed with the mapping, before the first frame
        _, self.ap, self.rt = compute_routes(platform.topology, platform.mapping,
                                             self.ctx.algorithm, full, self.config.Q,
                                             platform.levels, backend=self.config.backend)
        initial_key = tuple((platform.levels - 1, False) for _ in range(self.K))
        self.plane = ControlPlane(self.ctx, self.control, initial_key)

        self.t = 0
        self.jobs: list[JobState] = []
        self.next_job_id = 0
        self.pending_injections = 0
        self.jobs_completed = 0
        self.jobs_injected = 0
        self.death_cause: str | None = None
        self.death_time: int | None = None
        self.budget_violations = 0
        self.deadlock_flags = 0
        self.deadlock_violations = 0
        self.frames = 0
        self.pending_rt: tuple[int, RoutingTables, AllPairsResult] | None = None
        self.events = 0

    # ------------------------------------------------------------------ energy

    def _draw(self, node: NodeRuntime, amount: float, ledger: str) -> bool:
        """Debit ``amount``; False (and the node dies) if the battery cannot cover it."""
        ok = node.battery.can_supply(amount)
        drawn = node.battery.consume(amount)
        setattr(node, ledger, getattr(node, ledger) + drawn)
        used = self.energy[node.module - 1] * node.x + node.C + node.OH
        if used > node.battery.initial_pj * (1 + AUDIT_SLACK):
            self.budget_violations += 1
        if node.battery.dead and node.died_at is None:
            if ok and ledger == "comp":
                self._credit_last_computation(node)
            self._node_died(node)
        return ok

    def _credit_last_computation(self, node: NodeRuntime) -> None:
        # a computation paid in full counts even if it empties the battery
        for job in node.held:
            if job.phase == "compute":
                node.x += 1
                job.flow_position += 1
                job.phase = "wait"
                if job.flow_position == self.flow_len:
                    self._complete(job)
                return

    def _node_died(self, node: NodeRuntime) -> None:
        node.died_at = self.t
        cause = check_death(self.nodes, self.p)
        if cause:
            self._system_death(cause)
            return
        for job in self.jobs:
            if job.phase == "wait" and job.node == node.id:
                self._system_death(UNROUTABLE)  # the packet dies with its holder
                return
            if job.phase == "transit" and job.target == node.id:
                self._system_death(UNROUTABLE)
                return
        for job in self.jobs:
            src = job.target if job.phase == "transit" else job.node
            if job.phase == "compute" and job.flow_position + 1 < self.flow_len:
                want = self.flow[job.flow_position + 1]
            elif job.phase == "compute":
                continue
            else:
                want = self.flow[job.flow_position]
            if not self._reachable(src, want):
                self._system_death(UNROUTABLE)
                return

    def _reachable(self, src: int, module: int) -> bool:
        """Is a live host of ``module`` reachable from ``src`` over live nodes?"""
        nodes = self.nodes
        if nodes[src].module == module:
            return True
        seen = {src}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if v in seen or nodes[v].battery.dead:
                    continue
                if nodes[v].module == module:
                    return True
                seen.add(v)
                queue.append(v)
        return False

    def _system_death(self, cause: str) -> None:
        if self.death_cause is None:
            self.death_cause = cause
            self.death_time = self.t

    # -------------------------------------------------------------------- jobs

    def _injection_node(self, near: int) -> int | None:
        first = self.flow[0]
        best, best_d = None, INF
        for j in self.platform.mapping.members(first):
            n = self.nodes[j]
            if n.battery.dead or n.occupancy >= self.config.buffer_capacity:
                continue
            d = 0.0 if j == near else self.ap.D[near, j]
            if d < best_d:
                best, best_d = j, d
        return best

    def _inject(self, near: int) -> bool:
        node = self._injection_node(near)
        if node is None:
            return False
        job = JobState(self.next_job_id, node, ready_at=self.t)
        self.next_job_id += 1
        self.jobs_injected += 1
        self.nodes[node].held.append(job)
        self.jobs.append(job)
        return True

    def _complete(self, job: JobState) -> None:
        self.jobs_completed += 1
        holder = self.nodes[job.node]
        holder.held.remove(job)
        self.jobs.remove(job)
        near = job.node if self.config.concurrent_jobs == 1 else self.config.origin
        if not self._inject(near):
            self.pending_injections += 1

    def advance_job(self, job: JobState) -> bool:
        """Move ``job`` as far as it can go at the current cycle; True on progress."""
        t = self.t
        node = self.nodes[job.node]
        if job.phase == "compute":
            node.x += 1
            job.flow_position += 1
            job.phase = "wait"
            if job.flow_position == self.flow_len:
                self._complete(job)
                return True
            if node.battery.dead:
                self._system_death(UNROUTABLE)
                return True
        elif job.phase == "transit":
            node.held.remove(job)
            nxt = self.nodes[job.target]
            nxt.incoming -= 1
            nxt.held.append(job)
            job.node, job.target, job.phase = nxt.id, NONE, "wait"
            node = nxt
            if node.battery.dead:
                self._system_death(UNROUTABLE)
                return True

        # wait phase: compute here or forward one hop
        want = self.flow[job.flow_position]
        if node.busy_until > t:
            job.ready_at = node.busy_until
            return False
        if node.module == want:
            cost = self.energy[want - 1]
            job.stall_since = None
            self._clear_flag(job)
            job.phase = "compute"
            if not self._draw(node, cost, "comp"):
                self._system_death(UNROUTABLE)
                return True
            job.ready_at = t + self.latency[want - 1]
            node.busy_until = job.ready_at
            return True
        nxt_id = int(self.rt.RT[node.id, want - 1])
        blocked = (
            nxt_id == NONE
            or self.nodes[nxt_id].battery.dead
            or self.nodes[nxt_id].occupancy >= self.config.buffer_capacity
        )
        if blocked:
            if job.stall_since is None:
                job.stall_since = t
            job.ready_at = INF
            return False
        job.stall_since = None
        self._clear_flag(job)
        job.phase, job.target = "transit", nxt_id
        self.nodes[nxt_id].incoming += 1
        if not self._draw(node, self.hop_pj[node.id, nxt_id], "C"):
            self._system_death(UNROUTABLE)
            return True
        job.ready_at = t + self.config.hop_cycles
        node.busy_until = job.ready_at
        return True

    # -------------------------------------------------------- deadlock probe

    def _clear_flag(self, job: JobState) -> None:
        job.flagged_at = None

    def _alternative_exists(self, src: int, module: int, avoid: int) -> bool:
        """Live path from ``src`` to a live host of ``module`` not starting via ``avoid``."""
        nodes = self.nodes
        seen = {src, avoid}
        queue = deque()
        for v in self.neighbors[src]:
            if v in seen or nodes[v].battery.dead:
                continue
            if nodes[v].module == module:
                return True
            seen.add(v)
            queue.append(v)
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if v in seen or nodes[v].battery.dead:
                    continue
                if nodes[v].module == module:
                    return True
                seen.add(v)
                queue.append(v)
        return False

    def _note_flags(self, reports) -> None:
        flagged = {r.node for r in reports if r.deadlock_flag}
        if not flagged:
            return
        for job in self.jobs:
            if job.phase != "wait" or job.stall_since is None or job.node not in flagged:
                continue
            self.deadlock_flags += 1
            if job.flagged_at is None:
                want = self.flow[job.flow_position]
                job.flagged_at = self.t
                job.flagged_succ = int(self.rt.RT[job.node, want - 1])
                job.flag_alternative = self._alternative_exists(job.node, want, job.flagged_succ)

    def _audit_flags(self) -> None:
        limit = 2 * self.frame.frame_length
        for job in self.jobs:
            if job.flagged_at is None:
                continue
            if job.phase != "wait" or job.stall_since is None:
                job.flagged_at = None  # moved on
                continue
            want = self.flow[job.flow_position]
            if int(self.rt.RT[job.node, want - 1]) != job.flagged_succ:
                job.flagged_at = None  # rerouted
                continue
            if self.t - job.flagged_at > limit and job.flag_alternative:
                self.deadlock_violations += 1
                job.flagged_at = None

    def _install_tables(self, rt: RoutingTables, ap: AllPairsResult) -> None:
        """New tables reach the nodes; a stalled packet given a new next hop starts over."""
        old = self.rt
        self.rt, self.ap = rt, ap
        for job in self.jobs:
            if job.phase != "wait" or job.stall_since is None:
                continue
            want = self.flow[job.flow_position] - 1
            if rt.RT[job.node, want] != old.RT[job.node, want]:
                job.stall_since = self.t
        self._audit_flags()

    # -------------------------------------------------------------------- loop

    def _control_frame(self) -> None:
        reports = collect_reports(self.nodes, self.t, self.frame, self.control, self.platform.levels)
        for node in self.nodes:
            used = self.energy[node.module - 1] * node.x + node.C + node.OH
            if used > node.battery.initial_pj * (1 + AUDIT_SLACK):
                self.budget_violations += 1
            if node.battery.dead and node.died_at is None:
                self._node_died(node)
            if self.death_cause:
                return
        self._note_flags(reports)
        outcome, ctrl_dead_at = self.plane.tick(self.t, reports, self.frame, self.rt)
        self.frames += 1
        if ctrl_dead_at is not None:
            self.t = max(self.t, int(math.ceil(ctrl_dead_at)))
            self._system_death(CONTROLLER_EXTINCTION)
            return
        if outcome.deliver:
            self.pending_rt = (self.t + self.frame.download_cycles, outcome.tables, outcome.all_pairs)

    def run(self) -> SimMetrics:
        F = self.frame.frame_length
        next_tick = self.frame.upload_cycles
        cause = check_death(self.nodes, self.p)
        if cause:
            self._system_death(cause)
        if not self.death_cause and any(
            not self._reachable(j, m) for j in range(self.K) for m in range(1, self.p + 1)
            if not self.nodes[j].battery.dead
        ):
            self._system_death(UNROUTABLE)
        if not self.death_cause:
            dead_at = self.plane.prologue(self.frame.upload_cycles)
            if dead_at is not None:
                self.t = int(math.ceil(dead_at))
                self._system_death(CONTROLLER_EXTINCTION)
        if not self.death_cause:
            for _ in range(self.config.concurrent_jobs):
                if not self._inject(self.config.origin):
                    self.pending_injections += 1
            self._step_jobs()

        while self.death_cause is None:
            t_next = next_tick
            if self.pending_rt is not None and self.pending_rt[0] < t_next:
                t_next = self.pending_rt[0]
            for job in self.jobs:
                if job.ready_at < t_next and job.ready_at > self.t:
                    t_next = job.ready_at
            t_next = int(t_next)
            if t_next > self.config.max_cycles:
                raise RuntimeError(f"simulation exceeded {self.config.max_cycles} cycles")
            self.t = max(self.t, t_next)

            if self.pending_rt is not None and self.pending_rt[0] <= self.t:
                _, rt, ap = self.pending_rt
                self.pending_rt = None
                self._install_tables(rt, ap)
            if self.t >= next_tick:
                self._control_frame()
                next_tick += F
                if self.death_cause:
                    break
            self._step_jobs()
            self._audit_flags()
        return self._metrics()

    def _step_jobs(self) -> None:
        progressed = True
        rounds = 0
        while progressed and self.death_cause is None:
            progressed = False
            rounds += 1
            while self.pending_injections and self._inject(self.config.origin):
                self.pending_injections -= 1
                progressed = True
            for job in sorted(self.jobs, key=lambda j: j.id):
                if self.death_cause:
                    break
                if job not in self.jobs:
                    continue
                if job.ready_at <= self.t or (job.phase == "wait" and job.ready_at == INF):
                    self.events += 1
                    if self.advance_job(job):
                        progressed = True
            if rounds > 4 * (len(self.jobs) + 2) * self.flow_len:
                raise RuntimeError("job stepping did not settle")

    # ----------------------------------------------------------------- metrics

    def _metrics(self) -> SimMetrics:
        fractional = self.jobs_completed + sum(j.flow_position for j in self.jobs) / self.flow_len
        comp = math.fsum(n.comp for n in self.nodes)
        comm = math.fsum(n.C for n in self.nodes)
        oh = math.fsum(n.OH for n in self.nodes)
        resid = math.fsum(n.battery.residual_pj for n in self.nodes)
        initial = math.fsum(n.battery.initial_pj for n in self.nodes)
        control_pj = self.plane.download_pj
        spent = comp + comm + oh
        frac = oh / spent if spent > 0 else 0.0
        # the same share once table downloads on the medium are counted too
        sys_frac = (oh + control_pj) / (spent + control_pj) if spent + control_pj > 0 else 0.0
        per_node = [
            {
                "node": n.id,
                "module": n.module,
                "x": n.x,
                "computation_pj": n.comp,
                "C_pj": n.C,
                "OH_pj": n.OH,
                "residual_pj": n.battery.residual_pj,
                "died_at": n.died_at,
            }
            for n in self.nodes
        ]
        return SimMetrics(
            algorithm=self.ctx.algorithm.upper(),
            topology=self.platform.topology.label(),
            K=self.K,
            battery_model=self.platform.battery.model,
            jobs_completed=self.jobs_completed,
            jobs_fractional=fractional,
            elapsed_cycles=int(self.death_time if self.death_time is not None else self.t),
            death_cause=self.death_cause or "running",
            frames=self.frames,
            recomputations=self.plane.recomputations,
            changed_frames=self.plane.changed_frames,
            computation_pj=comp,
            communication_pj=comm,
            overhead_pj=oh,
            control_download_pj=control_pj,
            residual_pj=resid,
            initial_pj=initial,
            overhead_fraction=frac,
            system_overhead_fraction=sys_frac,
            budget_violations=self.budget_violations,
            deadlock_flags=self.deadlock_flags,
            deadlock_violations=self.deadlock_violations,
            jobs_injected=self.jobs_injected,
            nodes=per_node,
            controller_deaths=[c.died_at for c in self.plane.controllers],
        )


def run(app: AppSpec, platform: Platform, control: ControlConfig | None = None,
        config: SimConfig | None = None) -> SimMetrics:
    """Simulate until system death and return the collected metrics."""
    return Simulation(app, platform, control, config).run()
