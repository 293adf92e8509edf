"""Tiered coordination engine: circles, protocol readying, role enrollment,
exception escalation, and cancellation.

The community is organized as three nested circles. Each house forms a
level-1 circle (resident, detectors, coordinator). Level 2 groups the houses
with the informal carers; level 3 adds the hospital staff and ambulances.
An alarm readies a care-dispatch protocol (professional + ambulance) and,
when informal carers exist, a verification visit. Roles that cannot be
filled in a circle escalate to the parent circle within the same tick.
A confirmed false alarm is relayed to the top circle, which cancels the
care dispatch.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .metrics import CostLedger
from .world import (
    AgentKind,
    AgentState,
    AgentStatus,
    Position,
    World,
    step_toward,
    travel_time,
)


class Role(Enum):
    NEED_PROFESSIONAL = "need_professional"
    NEED_AMBULANCE = "need_ambulance"
    NEED_INFORMAL = "need_informal"
    NEED_TOP_COORDINATOR = "need_top_coordinator"


ROLE_KIND = {
    Role.NEED_PROFESSIONAL: AgentKind.PROFESSIONAL_CARER,
    Role.NEED_AMBULANCE: AgentKind.AMBULANCE,
    Role.NEED_INFORMAL: AgentKind.INFORMAL_CARER,
    Role.NEED_TOP_COORDINATOR: AgentKind.COORDINATOR,
}


class ProtocolKind(Enum):
    CARE_DISPATCH = "care_dispatch"  # professional + ambulance convoy
    VERIFY_VISIT = "verify_visit"  # informal carer checks on the resident
    FALSE_ALARM_RELAY = "false_alarm_relay"  # forward a confirmed false alarm up
    DISPATCH_CANCEL = "dispatch_cancel"  # role-free abort of the care dispatch


REQUIRED_ROLES: dict[ProtocolKind, tuple[Role, ...]] = {
    ProtocolKind.CARE_DISPATCH: (Role.NEED_PROFESSIONAL, Role.NEED_AMBULANCE),
    ProtocolKind.VERIFY_VISIT: (Role.NEED_INFORMAL,),
    ProtocolKind.FALSE_ALARM_RELAY: (Role.NEED_TOP_COORDINATOR,),
    ProtocolKind.DISPATCH_CANCEL: (),
}

#: Highest circle level at which each protocol's roles can ever be filled;
#: unfilled instances park there and retry every tick (FIFO).
RESOLUTION_LEVEL = {
    ProtocolKind.CARE_DISPATCH: 3,
    ProtocolKind.VERIFY_VISIT: 2,
    ProtocolKind.FALSE_ALARM_RELAY: 3,
    ProtocolKind.DISPATCH_CANCEL: 3,
}


class InstanceState(Enum):
    READIED = "readied"
    ESCALATING = "escalating"
    RUNNING = "running"
    COMPLETED = "completed"
    CANCELED = "canceled"


TERMINAL_STATES = frozenset({InstanceState.COMPLETED, InstanceState.CANCELED})


class EventKind(Enum):
    FALL_DETECTED = "fall_detected"
    FALL_CONFIRMED = "fall_confirmed"
    FALSE_POSITIVE_CONFIRMED = "false_positive_confirmed"
    ROLE_EXCEPTION = "role_exception"
    CARE_ARRIVED = "care_arrived"
    DISPATCH_CANCELED = "dispatch_canceled"


@dataclass(frozen=True, slots=True)
class FsoEvent:
    kind: EventKind
    source_agent_id: int
    case_id: int
    tick: int
    missing_roles: tuple[Role, ...] = ()
    instance_id: Optional[int] = None


@dataclass
class Circle:
    id: int
    level: int
    coordinator_id: int
    member_ids: set[int]
    parent: Optional[int] = None


@dataclass
class ProtocolInstance:
    instance_id: int
    kind: ProtocolKind
    case_id: int
    origin_circle: int
    state: InstanceState = InstanceState.READIED
    current_circle: int = -1
    enrolled: list[int] = field(default_factory=list)
    enroll_tick: int = -1
    # First tick the enrolled agents are allowed to move.
    first_move_tick: int = -1
    target: Optional[Position] = None


class CaseOutcome(Enum):
    SERVED = "served"
    CANCELED = "canceled"
    CLOSED_AT_RUN_END = "closed_at_run_end"


class FsoEngine:
    """Deterministic driver of the circle hierarchy for one simulation run.

    `cases` entries are supplied by the scenario layer via :meth:`raise_alarm`;
    they must expose case_id, ea_id, true_fall, raised_tick, and the mutable
    terminal/waiting/cost fields of the scenario's case record type.
    """

    def __init__(
        self,
        world: World,
        ledger: CostLedger,
        *,
        dispatch_delay: int = 5,
        count_return_travel: bool = True,
        trace: Optional[Callable[[dict], None]] = None,
    ) -> None:
        self.world = world
        self.ledger = ledger
        self.dispatch_delay = dispatch_delay
        self.count_return_travel = count_return_travel
        self.trace = trace

        self.circles: dict[int, Circle] = {}
        self.instances: dict[int, ProtocolInstance] = {}
        self.cases: dict[int, object] = {}
        self.level1_by_elderly: dict[int, int] = {}
        self.level2_id: Optional[int] = None
        self.level3_id: int = -1
        # case id -> {protocol kind: instance id} for the dispatch/verify pair
        self.case_instances: dict[int, dict[ProtocolKind, int]] = {}
        self.retry_queue: deque[int] = deque()
        self.returning: list[int] = []
        # Running dispatch/verify instances, the only ones that need ticking.
        self.active: set[int] = set()
        self._next_instance = 0
        self._next_circle = 0
        self._build_circles()
        self._role_candidates: dict[tuple[int, str], list[int]] = {}
        for circle in self.circles.values():
            for role, kind in ROLE_KIND.items():
                members = [
                    m for m in sorted(circle.member_ids)
                    if self.world.agents[m].kind is kind
                ]
                if members:
                    self._role_candidates[(circle.id, role.value)] = members

    # -- structure -----------------------------------------------------------

    def _new_circle(self, level: int, coordinator: int, members: set[int]) -> Circle:
        circle = Circle(self._next_circle, level, coordinator, members)
        self._next_circle += 1
        self.circles[circle.id] = circle
        return circle

    def _build_circles(self) -> None:
        world = self.world
        top_ca = world.add_coordinator(world.hospital)
        top_members = set(world.professional_ids) | set(world.ambulance_ids) | {top_ca.id}
        top = self._new_circle(3, top_ca.id, top_members)
        self.level3_id = top.id

        has_level2 = bool(world.informal_ids)
        mid: Optional[Circle] = None
        if has_level2:
            mid_ca = world.add_coordinator(world.hospital)
            mid = self._new_circle(2, mid_ca.id, set(world.informal_ids) | {mid_ca.id})
            mid.parent = top.id
            top.member_ids.add(mid_ca.id)
            self.level2_id = mid.id

        device_by_elderly: dict[int, list[int]] = {}
        for did in world.device_ids:
            device_by_elderly.setdefault(world.agents[did].watches, []).append(did)
        for eid in world.elderly_ids:
            house = world.agents[eid].position
            ca = world.add_coordinator(house)
            members = {eid, ca.id} | set(device_by_elderly.get(eid, ()))
            circle = self._new_circle(1, ca.id, members)
            circle.parent = mid.id if mid is not None else top.id
            if mid is not None:
                mid.member_ids.add(ca.id)
            else:
                top.member_ids.add(ca.id)
            self.level1_by_elderly[eid] = circle.id

    # -- tracing -------------------------------------------------------------

    def _emit(self, event: FsoEvent, out: list[FsoEvent]) -> None:
        out.append(event)
        if self.trace is not None:
            self.trace(
                {
                    "tick": event.tick,
                    "case": event.case_id,
                    "event": event.kind.value,
                    "agent": event.source_agent_id,
                    "instance": event.instance_id,
                    "missing": [r.value for r in event.missing_roles],
                }
            )

    # -- alarm intake --------------------------------------------------------

    def raise_alarm(self, case, device_id: int, tick: int) -> list[FsoEvent]:
        """Register a fresh alarm case and run the notification chain."""
        self.cases[case.case_id] = case
        self.case_instances[case.case_id] = {}
        self.ledger.treated_cases += 1
        elderly = self.world.agents[case.ea_id]
        elderly.pending_case = case.case_id
        events: list[FsoEvent] = []
        circle = self.circles[self.level1_by_elderly[case.ea_id]]
        event = FsoEvent(EventKind.FALL_DETECTED, device_id, case.case_id, tick)
        self._emit(event, events)
        self.notify(circle, event, tick, events)
        return events

    # -- coordinator behavior ------------------------------------------------

    def notify(
        self,
        circle: Circle,
        event: FsoEvent,
        tick: int,
        events: Optional[list[FsoEvent]] = None,
    ) -> list[ProtocolInstance]:
        """React to a notification by readying the associated protocols."""
        if event.case_id not in self.cases:
            raise ValueError(f"notification for unknown case {event.case_id}")
        if events is None:
            events = []
        readied: list[ProtocolInstance] = []
        if event.kind is EventKind.FALL_DETECTED:
            readied.append(self._ready(ProtocolKind.CARE_DISPATCH, event.case_id, circle))
            if self.level2_id is not None:
                readied.append(self._ready(ProtocolKind.VERIFY_VISIT, event.case_id, circle))
        elif event.kind is EventKind.FALSE_POSITIVE_CONFIRMED:
            readied.append(self._ready(ProtocolKind.FALSE_ALARM_RELAY, event.case_id, circle))
        for instance in readied:
            self._launch(instance, tick, events)
        return readied

    def _ready(self, kind: ProtocolKind, case_id: int, circle: Circle) -> ProtocolInstance:
        instance = ProtocolInstance(
            instance_id=self._next_instance,
            kind=kind,
            case_id=case_id,
            origin_circle=circle.id,
            current_circle=circle.id,
            target=self.world.agents[self.cases[case_id].ea_id].position,
        )
        self._next_instance += 1
        self.instances[instance.instance_id] = instance
        if kind in (ProtocolKind.CARE_DISPATCH, ProtocolKind.VERIFY_VISIT):
            self.case_instances[case_id][kind] = instance.instance_id
        return instance

    def _launch(self, instance: ProtocolInstance, tick: int, events: list[FsoEvent]) -> None:
        """Enroll, escalating through parents; park and retry if unfillable."""
        circle = self.circles[instance.current_circle]
        ceiling = RESOLUTION_LEVEL[instance.kind]
        while True:
            missing = self.try_enroll(instance, circle, tick)
            if not missing:
                self._on_running(instance, tick, events)
                return
            self._emit(
                FsoEvent(
                    EventKind.ROLE_EXCEPTION,
                    circle.coordinator_id,
                    instance.case_id,
                    tick,
                    missing_roles=tuple(missing),
                    instance_id=instance.instance_id,
                ),
                events,
            )
            if circle.level >= ceiling or circle.parent is None:
                instance.state = InstanceState.READIED
                instance.current_circle = circle.id
                self.retry_queue.append(instance.instance_id)
                return
            instance.state = InstanceState.ESCALATING
            circle = self.circles[circle.parent]
            instance.current_circle = circle.id

    def escalate(self, instance: ProtocolInstance, circle: Circle) -> Circle:
        """Move an unfilled instance to the parent circle."""
        if circle.parent is None:
            raise ValueError(f"circle {circle.id} has no parent to escalate to")
        instance.state = InstanceState.ESCALATING
        parent = self.circles[circle.parent]
        instance.current_circle = parent.id
        return parent

    # -- enrollment ----------------------------------------------------------

    def _available(self, agent: AgentState, role: Role) -> bool:
        if role is Role.NEED_TOP_COORDINATOR:
            return agent.id == self.circles[self.level3_id].coordinator_id
        if agent.kind is not ROLE_KIND[role]:
            return False
        if agent.kind is AgentKind.INFORMAL_CARER:
            return agent.status is AgentStatus.RANDOM_WALKING
        return agent.status is AgentStatus.IDLE

    def try_enroll(
        self, instance: ProtocolInstance, circle: Circle, tick: int
    ) -> list[Role]:
        """Bind every required role or report the missing ones.

        Selection per role: nearest qualified available member by travel time
        to the resident's house, ties broken by lowest agent id. Nothing is
        bound unless every role can be filled.
        """
        if instance.state in TERMINAL_STATES:
            raise ValueError("cannot enroll a terminal protocol instance")
        agents = self.world.agents
        target = instance.target
        speed = self.world.config.speed
        chosen: list[int] = []
        missing: list[Role] = []
        for role in REQUIRED_ROLES[instance.kind]:
            best: Optional[AgentState] = None
            best_key: tuple[int, int] = (0, 0)
            for member_id in self._role_candidates.get((circle.id, role.value), ()):
                agent = agents[member_id]
                if member_id in chosen or not self._available(agent, role):
                    continue
                key = (travel_time(agent.position, target, speed), agent.id)
                if best is None or key < best_key:
                    best, best_key = agent, key
            if best is None:
                missing.append(role)
            else:
                chosen.append(best.id)
        if missing:
            return missing

        instance.enrolled = chosen
        instance.enroll_tick = tick
        instance.current_circle = circle.id
        instance.state = InstanceState.RUNNING
        delay = self.dispatch_delay if instance.kind is ProtocolKind.CARE_DISPATCH else 0
        instance.first_move_tick = tick + 1 + delay
        if instance.kind in (ProtocolKind.CARE_DISPATCH, ProtocolKind.VERIFY_VISIT):
            self.active.add(instance.instance_id)
        for agent_id in chosen:
            agent = agents[agent_id]
            if agent.kind is AgentKind.COORDINATOR:
                continue
            agent.status = AgentStatus.ENROLLED_TRAVELING
            agent.target = target
            agent.instance_id = instance.instance_id
            agent.serving_case = instance.case_id
        return []

    def _on_running(self, instance: ProtocolInstance, tick: int, events: list[FsoEvent]) -> None:
        """Kick off protocols whose effect is instantaneous."""
        if instance.kind is ProtocolKind.FALSE_ALARM_RELAY:
            # The relay only hands the confirmed false alarm to the top
            # coordinator, which immediately runs the role-free cancellation.
            instance.state = InstanceState.COMPLETED
            instance.enrolled = []
            cancel = self._ready(
                ProtocolKind.DISPATCH_CANCEL,
                instance.case_id,
                self.circles[self.level3_id],
            )
            self._launch(cancel, tick, events)
        elif instance.kind is ProtocolKind.DISPATCH_CANCEL:
            instance.state = InstanceState.COMPLETED
            self._execute_cancel(instance.case_id, tick, events)

    def _execute_cancel(self, case_id: int, tick: int, events: list[FsoEvent]) -> None:
        case = self.cases[case_id]
        dispatch_id = self.case_instances[case_id].get(ProtocolKind.CARE_DISPATCH)
        if dispatch_id is not None:
            dispatch = self.instances[dispatch_id]
            if dispatch.state not in TERMINAL_STATES:
                self.cancel_protocol(dispatch, tick)
        self._close_case(case, CaseOutcome.CANCELED, tick)
        self._emit(
            FsoEvent(
                EventKind.DISPATCH_CANCELED,
                self.circles[self.level3_id].coordinator_id,
                case_id,
                tick,
                instance_id=dispatch_id,
            ),
            events,
        )

    # -- cancellation and release --------------------------------------------

    def cancel_protocol(self, instance: ProtocolInstance, tick: int) -> None:
        """Abort a non-terminal instance, freeing its agents.

        Carers resume their walk immediately; hospital agents head back to
        base and become enrollable again on arrival. Terminal instances are
        left untouched.
        """
        if instance.state in TERMINAL_STATES:
            return
        if instance.state is InstanceState.READIED and instance.instance_id in self.retry_queue:
            self.retry_queue.remove(instance.instance_id)
        for agent_id in instance.enrolled:
            self._release(self.world.agents[agent_id])
        instance.enrolled = []
        instance.state = InstanceState.CANCELED
        self.active.discard(instance.instance_id)

    def _release(self, agent: AgentState) -> None:
        if agent.kind is AgentKind.INFORMAL_CARER:
            agent.status = AgentStatus.RANDOM_WALKING
            agent.target = None
            agent.instance_id = None
            agent.serving_case = None
        elif agent.kind is AgentKind.COORDINATOR:
            pass
        elif agent.position == agent.base:
            agent.status = AgentStatus.IDLE
            agent.target = None
            agent.instance_id = None
            agent.serving_case = None
        else:
            agent.status = AgentStatus.RETURNING_TO_BASE
            agent.target = agent.base
            agent.instance_id = None
            self.returning.append(agent.id)

    # -- per-tick driving ----------------------------------------------------

    def tick_protocols(self, tick: int) -> list[FsoEvent]:
        """Advance travel, resolve arrivals, and retry parked enrollments."""
        events: list[FsoEvent] = []
        self._advance_returning(tick)
        # Verification visits resolve before the convoy on ties, so a carer
        # reaching the house the same tick as the ambulance does the check.
        active = [self.instances[i] for i in sorted(self.active)]
        for instance in active:
            if instance.kind is ProtocolKind.VERIFY_VISIT:
                self._advance_instance(instance, tick, events)
        for instance in active:
            if instance.kind is ProtocolKind.CARE_DISPATCH:
                self._advance_instance(instance, tick, events)
        self._retry_parked(tick, events)
        return events

    def _advance_returning(self, tick: int) -> None:
        still: list[int] = []
        for agent_id in self.returning:
            agent = self.world.agents[agent_id]
            if agent.status is not AgentStatus.RETURNING_TO_BASE:
                continue
            if self.count_return_travel:
                self._accrue(agent, 1)
            step_toward(agent, agent.base)
            if agent.status is AgentStatus.IDLE:
                agent.target = None
                agent.serving_case = None
            else:
                still.append(agent_id)
        self.returning = still

    def _accrue(self, agent: AgentState, ticks: int) -> None:
        self.ledger.add_cost(agent.kind, ticks)
        case = self.cases.get(agent.serving_case)
        if case is not None:
            case.cost_by_kind[agent.kind] = case.cost_by_kind.get(agent.kind, 0) + ticks

    def _advance_instance(
        self, instance: ProtocolInstance, tick: int, events: list[FsoEvent]
    ) -> None:
        if instance.state is not InstanceState.RUNNING or tick <= instance.enroll_tick:
            return
        agents = [self.world.agents[a] for a in instance.enrolled]
        arrived = all(a.position == instance.target for a in agents)
        if not arrived:
            if instance.kind is ProtocolKind.CARE_DISPATCH:
                # Mobilization ticks before departure still occupy the crew.
                for agent in agents:
                    self._accrue(agent, 1)
                if tick < instance.first_move_tick:
                    return
            else:
                for agent in agents:
                    self._accrue(agent, 1)
            for agent in agents:
                step_toward(agent, agent.target)
            arrived = all(a.status is AgentStatus.AT_SCENE for a in agents)
        if arrived:
            if instance.kind is ProtocolKind.VERIFY_VISIT:
                self._on_verifier_arrival(instance, tick, events)
            else:
                self._on_convoy_arrival(instance, tick, events)

    def _on_verifier_arrival(
        self, instance: ProtocolInstance, tick: int, events: list[FsoEvent]
    ) -> None:
        case = self.cases[instance.case_id]
        carer = self.world.agents[instance.enrolled[0]]
        self.ledger.v_informal += 1
        case.verified_by = AgentKind.INFORMAL_CARER
        self._record_waiting(case, tick)
        instance.state = InstanceState.COMPLETED
        instance.enrolled = []
        self.active.discard(instance.instance_id)
        self._release(carer)
        if case.true_fall:
            self._emit(
                FsoEvent(EventKind.FALL_CONFIRMED, carer.id, case.case_id, tick),
                events,
            )
        else:
            event = FsoEvent(
                EventKind.FALSE_POSITIVE_CONFIRMED, carer.id, case.case_id, tick
            )
            self._emit(event, events)
            self.notify(self.circles[self.level2_id], event, tick, events)

    def _on_convoy_arrival(
        self, instance: ProtocolInstance, tick: int, events: list[FsoEvent]
    ) -> None:
        case = self.cases[instance.case_id]
        if case.true_fall:
            self.ledger.interventions += 1
        else:
            self.ledger.v_ambulance += 1
            case.verified_by = AgentKind.AMBULANCE
        self._record_waiting(case, tick)
        self._emit(
            FsoEvent(
                EventKind.CARE_ARRIVED,
                instance.enrolled[0],
                case.case_id,
                tick,
                instance_id=instance.instance_id,
            ),
            events,
        )
        verify_id = self.case_instances[case.case_id].get(ProtocolKind.VERIFY_VISIT)
        if verify_id is not None:
            verify = self.instances[verify_id]
            if verify.state not in TERMINAL_STATES:
                self.cancel_protocol(verify, tick)
        for agent_id in instance.enrolled:
            self._release(self.world.agents[agent_id])
        instance.enrolled = []
        instance.state = InstanceState.COMPLETED
        self.active.discard(instance.instance_id)
        self._close_case(case, CaseOutcome.SERVED, tick)

    def _retry_parked(self, tick: int, events: list[FsoEvent]) -> None:
        pending = len(self.retry_queue)
        for _ in range(pending):
            instance_id = self.retry_queue.popleft()
            instance = self.instances[instance_id]
            if instance.state is not InstanceState.READIED:
                continue
            missing = self.try_enroll(instance, self.circles[instance.current_circle], tick)
            if missing:
                self.retry_queue.append(instance_id)
            else:
                self._on_running(instance, tick, events)

    # -- case closure --------------------------------------------------------

    def _record_waiting(self, case, tick: int) -> None:
        if case.waiting_time is None:
            case.waiting_time = tick - case.raised_tick
            self.ledger.sum_wt += case.waiting_time

    def _close_case(self, case, outcome: CaseOutcome, tick: int) -> None:
        case.outcome = outcome
        case.terminal_tick = tick
        self._record_waiting(case, tick)
        self.world.agents[case.ea_id].pending_case = None

    def finalize(self, final_tick: int) -> None:
        """Close everything still in flight at the end of the run."""
        for instance in self.instances.values():
            if instance.state not in TERMINAL_STATES:
                self.cancel_protocol(instance, final_tick)
        for case in self.cases.values():
            if case.terminal_tick is None:
                self._close_case(case, CaseOutcome.CLOSED_AT_RUN_END, final_tick)

    # -- invariant audit -----------------------------------------------------

    def audit(self) -> None:
        """Assert cross-cutting safety invariants; used by tests."""
        bound: dict[int, int] = {}
        for instance in self.instances.values():
            if instance.state in TERMINAL_STATES:
                assert not instance.enrolled, (
                    f"terminal instance {instance.instance_id} still holds agents"
                )
                continue
            if instance.state is InstanceState.RUNNING:
                circle = self.circles[instance.current_circle]
                if instance.kind is ProtocolKind.CARE_DISPATCH:
                    assert circle.level == 3, "care dispatch running below the top circle"
                elif instance.kind is ProtocolKind.VERIFY_VISIT:
                    assert circle.level == 2, "verification running outside the middle circle"
                for role, agent_id in zip(REQUIRED_ROLES[instance.kind], instance.enrolled):
                    agent = self.world.agents[agent_id]
                    expected = ROLE_KIND[role]
                    assert agent.kind is expected, (
                        f"agent {agent_id} of kind {agent.kind} bound to role {role}"
                    )
                    assert agent_id not in bound, f"agent {agent_id} enrolled twice"
                    bound[agent_id] = instance.instance_id
        for agent in self.world.agents.values():
            if agent.status in (AgentStatus.ENROLLED_TRAVELING, AgentStatus.AT_SCENE):
                assert agent.instance_id is not None
                inst = self.instances[agent.instance_id]
                assert inst.state not in TERMINAL_STATES
            assert self.world.in_bounds(agent.position), f"agent {agent.id} out of bounds"
