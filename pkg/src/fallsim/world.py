"""Bounded 2-D grid world: agent roster, placement, and movement kinematics.

Distances are Chebyshev (king moves), one cell per tick by default. The grid
spans x in [-half_width, half_width] and y in [-half_height, half_height] with
no wrapping. Elderly residents and their detector devices never move; carers
and ambulances do.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Optional


class ConfigurationError(ValueError):
    """Raised when a world or scenario configuration cannot be realized."""


@dataclass(frozen=True, slots=True)
class Position:
    x: int
    y: int


class AgentKind(Enum):
    ELDERLY = "elderly"
    DEVICE = "device"
    INFORMAL_CARER = "informal_carer"
    PROFESSIONAL_CARER = "professional_carer"
    AMBULANCE = "ambulance"
    COORDINATOR = "coordinator"


#: Kinds that are allowed to change position.
MOBILE_KINDS = frozenset(
    {AgentKind.INFORMAL_CARER, AgentKind.PROFESSIONAL_CARER, AgentKind.AMBULANCE}
)


class AgentStatus(Enum):
    IDLE = "idle"
    RANDOM_WALKING = "random_walking"
    ENROLLED_TRAVELING = "enrolled_traveling"
    AT_SCENE = "at_scene"
    RETURNING_TO_BASE = "returning_to_base"


@dataclass(frozen=True, slots=True)
class SensorModel:
    """Error model of one fall detector; draws are independent per tick."""

    p_false_negative: float
    p_false_positive: float

    def __post_init__(self) -> None:
        for name in ("p_false_negative", "p_false_positive"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {p}")


@dataclass(slots=True)
class AgentState:
    id: int
    kind: AgentKind
    position: Position
    base: Optional[Position]
    status: AgentStatus = AgentStatus.IDLE
    sensor: Optional[SensorModel] = None
    # Elderly only: id of the unresolved alarm case, if any.
    pending_case: Optional[int] = None
    # Device only: id of the elderly resident it watches.
    watches: Optional[int] = None
    # Mobile agents: movement target and the protocol instance they serve.
    target: Optional[Position] = None
    instance_id: Optional[int] = None
    # Case whose costs a returning agent is still attributed to.
    serving_case: Optional[int] = None


@dataclass(frozen=True)
class WorldConfig:
    half_width: int = 16
    half_height: int = 16
    n_elderly: int = 30
    n_professional: int = 6
    n_ambulances: int = 5
    speed: int = 1
    # None means: derive from the run seed.
    placement_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.half_width < 0 or self.half_height < 0:
            raise ConfigurationError("grid half-extents must be non-negative")
        if min(self.n_elderly, self.n_professional, self.n_ambulances) < 0:
            raise ConfigurationError("agent counts must be non-negative")
        if self.speed < 1:
            raise ConfigurationError("speed must be >= 1")

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    @property
    def height(self) -> int:
        return 2 * self.half_height + 1


def chebyshev(a: Position, b: Position) -> int:
    return max(abs(a.x - b.x), abs(a.y - b.y))


def travel_time(a: Position, b: Position, speed: int = 1) -> int:
    """Ticks needed to cover the Chebyshev distance between two cells."""
    if speed < 1:
        raise ValueError("speed must be >= 1")
    return -(-chebyshev(a, b) // speed)


def place_agents(
    config: WorldConfig,
    rng: Random,
    n_informal: int = 0,
    detectors_per_elderly: int = 1,
) -> list[AgentState]:
    """Place the full roster; deterministic in the supplied rng state.

    Houses and the hospital occupy distinct cells chosen uniformly without
    replacement. Professionals and ambulances start at the hospital; informal
    carers start at uniformly random cells, already walking.
    """
    return _place(config, rng, n_informal, detectors_per_elderly)[0]


def _place(
    config: WorldConfig,
    rng: Random,
    n_informal: int,
    detectors_per_elderly: int,
) -> tuple[list[AgentState], Position]:
    if n_informal < 0 or detectors_per_elderly < 0:
        raise ConfigurationError("agent counts must be non-negative")
    n_cells = config.width * config.height
    if config.n_elderly + 1 > n_cells:
        raise ConfigurationError(
            f"grid of {n_cells} cells cannot hold {config.n_elderly} distinct "
            "houses plus a hospital"
        )

    def cell(index: int) -> Position:
        return Position(
            index % config.width - config.half_width,
            index // config.width - config.half_height,
        )

    picks = rng.sample(range(n_cells), config.n_elderly + 1)
    houses = [cell(i) for i in picks[: config.n_elderly]]
    hospital = cell(picks[config.n_elderly])

    agents: list[AgentState] = []
    next_id = 0

    def add(kind: AgentKind, position: Position, base: Optional[Position], **kw) -> AgentState:
        nonlocal next_id
        agent = AgentState(id=next_id, kind=kind, position=position, base=base, **kw)
        next_id += 1
        agents.append(agent)
        return agent

    for house in houses:
        elderly = add(AgentKind.ELDERLY, house, house)
        for _ in range(detectors_per_elderly):
            add(AgentKind.DEVICE, house, house, watches=elderly.id)
    for _ in range(config.n_professional):
        add(AgentKind.PROFESSIONAL_CARER, hospital, hospital)
    for _ in range(config.n_ambulances):
        add(AgentKind.AMBULANCE, hospital, hospital)
    for _ in range(n_informal):
        start = cell(rng.randrange(n_cells))
        add(AgentKind.INFORMAL_CARER, start, None, status=AgentStatus.RANDOM_WALKING)
    return agents, hospital


@dataclass
class World:
    """Roster plus placement landmarks for one simulation run."""

    config: WorldConfig
    agents: dict[int, AgentState]
    hospital: Position
    elderly_ids: list[int] = field(default_factory=list)
    device_ids: list[int] = field(default_factory=list)
    informal_ids: list[int] = field(default_factory=list)
    professional_ids: list[int] = field(default_factory=list)
    ambulance_ids: list[int] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        config: WorldConfig,
        rng: Random,
        n_informal: int = 0,
        detectors_per_elderly: int = 1,
    ) -> "World":
        roster, hospital = _place(config, rng, n_informal, detectors_per_elderly)
        world = cls(config=config, agents={a.id: a for a in roster}, hospital=hospital)
        buckets = {
            AgentKind.ELDERLY: world.elderly_ids,
            AgentKind.DEVICE: world.device_ids,
            AgentKind.INFORMAL_CARER: world.informal_ids,
            AgentKind.PROFESSIONAL_CARER: world.professional_ids,
            AgentKind.AMBULANCE: world.ambulance_ids,
        }
        for a in roster:
            buckets[a.kind].append(a.id)
        return world

    def add_coordinator(self, position: Position) -> AgentState:
        agent = AgentState(
            id=max(self.agents, default=-1) + 1,
            kind=AgentKind.COORDINATOR,
            position=position,
            base=position,
        )
        self.agents[agent.id] = agent
        return agent

    def in_bounds(self, p: Position) -> bool:
        return (
            -self.config.half_width <= p.x <= self.config.half_width
            and -self.config.half_height <= p.y <= self.config.half_height
        )


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def step_toward(agent: AgentState, target: Position) -> AgentState:
    """Advance a mobile agent one king-move toward target (in place).

    On reaching the target the status transitions: ENROLLED_TRAVELING becomes
    AT_SCENE, RETURNING_TO_BASE becomes IDLE.
    """
    if agent.kind not in MOBILE_KINDS:
        raise ValueError(f"agent {agent.id} of kind {agent.kind.value} cannot move")
    p = agent.position
    if p != target:
        agent.position = Position(p.x + _sign(target.x - p.x), p.y + _sign(target.y - p.y))
    if agent.position == target:
        if agent.status is AgentStatus.ENROLLED_TRAVELING:
            agent.status = AgentStatus.AT_SCENE
        elif agent.status is AgentStatus.RETURNING_TO_BASE:
            agent.status = AgentStatus.IDLE
    return agent


_DIRS8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def random_walk_step(
    agent: AgentState, rng: Random, half_width: int, half_height: int
) -> AgentState:
    """Move a walking carer to a uniformly chosen in-bounds 8-neighbor cell."""
    x, y = agent.position.x, agent.position.y
    if half_width == 0 and half_height == 0:
        return agent
    # Rejection sampling keeps boundary cells uniform over their valid neighbors.
    while True:
        dx, dy = _DIRS8[int(rng.random() * 8)]
        nx, ny = x + dx, y + dy
        if -half_width <= nx <= half_width and -half_height <= ny <= half_height:
            agent.position = Position(nx, ny)
            return agent
