"""Core enums and record types shared by the simulator, ingestion and features."""

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

N_STATES = 6
TWO_PI = 2.0 * 3.141592653589793


class Face(str, Enum):
    """Package face, named relative to the reader (Front faces it)."""

    FRONT = "Front"
    REAR = "Rear"
    LEFT = "Left"
    RIGHT = "Right"
    TOP = "Top"
    BOTTOM = "Bottom"

    @property
    def opposite(self):
        return _OPPOSITE[self]

    @property
    def axis(self):
        """0 for the reader axis, 1 lateral, 2 vertical."""
        return _AXIS[self]


_OPPOSITE = {
    Face.FRONT: Face.REAR,
    Face.REAR: Face.FRONT,
    Face.LEFT: Face.RIGHT,
    Face.RIGHT: Face.LEFT,
    Face.TOP: Face.BOTTOM,
    Face.BOTTOM: Face.TOP,
}
_AXIS = {
    Face.FRONT: 0,
    Face.REAR: 0,
    Face.LEFT: 1,
    Face.RIGHT: 1,
    Face.TOP: 2,
    Face.BOTTOM: 2,
}


class TagRole(str, Enum):
    TAG1 = "Tag1"
    TAG2 = "Tag2"
    TAG3 = "Tag3"

    @property
    def index(self):
        return int(self.value[-1]) - 1


class MaterialClass(str, Enum):
    CONTROL = "Control"
    CLOTHING = "Clothing"
    TOILET_PAPER = "ToiletPaper"
    CHIPS = "Chips"
    PLASTIC_WRAP = "PlasticWrap"

    @property
    def index(self):
        return _MATERIAL_ORDER.index(self)

    @classmethod
    def from_index(cls, i):
        return _MATERIAL_ORDER[int(i)]


_MATERIAL_ORDER = list(MaterialClass)


class ClassifierKind(str, Enum):
    """Material classifier family, by where the selected tag sits."""

    SIDE = "Side"
    REAR = "Rear"
TAG_ROLES = list(TagRole)


def active_tags(n_tags):
    if n_tags not in (2, 3):
        raise ValueError(f"n_tags must be 2 or 3, got {n_tags!r}")
    return TAG_ROLES[:n_tags]


def check_state(state):
    """Validate an orientation state id and return it as int."""
    if isinstance(state, bool) or int(state) != state or not 0 <= int(state) < N_STATES:
        raise ValueError(f"orientation state must be an integer in [0, 5], got {state!r}")
    return int(state)


class RawRead(NamedTuple):
    """One tag observation: timestamp (s), tag, RSSI (dBm), phase (rad, [0, 2pi))."""

    timestamp: float
    tag: TagRole
    rssi: float
    phase: float


DEFAULT_TAG_IDS = {"E200-1": TagRole.TAG1, "E200-2": TagRole.TAG2, "E200-3": TagRole.TAG3}


@dataclass
class SessionManifest:
    """Labels and tag-id mapping for one recorded session."""

    session_id: str
    material: MaterialClass
    state: int
    n_tags: int = 3
    tags: dict = field(default_factory=lambda: dict(DEFAULT_TAG_IDS))
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.material = MaterialClass(self.material)
        self.state = check_state(self.state)
        active_tags(self.n_tags)
        self.tags = {str(k): TagRole(v) for k, v in self.tags.items()}
        roles = list(self.tags.values())
        if len(set(roles)) != len(roles):
            raise ValueError("tag ids must map to distinct tag roles")

    def to_dict(self):
        return {
            "session_id": self.session_id,
            "material": self.material.value,
            "state": self.state,
            "n_tags": self.n_tags,
            "tags": {k: v.value for k, v in self.tags.items()},
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            session_id=d["session_id"],
            material=d["material"],
            state=d["state"],
            n_tags=d.get("n_tags", 3),
            tags=d.get("tags", DEFAULT_TAG_IDS),
            config=d.get("config", {}),
        )
