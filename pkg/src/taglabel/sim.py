"""Parametric UHF backscatter simulator for a tagged package.

The model is deliberately coarse: per-face path length and gain, a
per-material absorption/reflection/scattering signature scaled by how much of
the package the signal crosses, Gaussian RSSI noise with a weak-multipath
mixture on perpendicular faces, and wrapped-Gaussian phase noise.
"""

from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np

from ._seeding import stream_seed
from .domain import (
    DEFAULT_TAG_IDS,
    N_STATES,
    TWO_PI,
    Face,
    MaterialClass,
    RawRead,
    SessionManifest,
    TagRole,
    active_tags,
    check_state,
)

SPEED_OF_LIGHT = 299_792_458.0
BOX_EDGE_M = 0.1524  # 6 inch cube

# (Tag1, Tag2, Tag3) faces per orientation state.
FACE_TABLE = {
    0: (Face.BOTTOM, Face.RIGHT, Face.FRONT),
    1: (Face.BOTTOM, Face.REAR, Face.RIGHT),
    2: (Face.REAR, Face.BOTTOM, Face.RIGHT),
    3: (Face.RIGHT, Face.BOTTOM, Face.FRONT),
    4: (Face.TOP, Face.LEFT, Face.FRONT),
    5: (Face.TOP, Face.RIGHT, Face.REAR),
}

PERPENDICULAR_FACES = frozenset({Face.LEFT, Face.RIGHT, Face.TOP, Face.BOTTOM})


@dataclass(frozen=True)
class MaterialParams:
    attenuation_db_per_pass: float = 0.0
    phase_offset: float = 0.0
    rssi_var_boost: float = 0.0
    phase_var_boost: float = 0.0

    def __post_init__(self):
        vals = asdict(self).values()
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("material parameters must be finite")
        if self.attenuation_db_per_pass < 0 or self.rssi_var_boost < 0 or self.phase_var_boost < 0:
            raise ValueError("attenuation and variance boosts must be non-negative")


NO_MATERIAL = MaterialParams()

DEFAULT_MATERIALS = {
    MaterialClass.CONTROL: MaterialParams(0.0, 0.0, 0.0, 0.0),
    MaterialClass.CLOTHING: MaterialParams(3.0, 0.20, 0.3, 0.010),
    MaterialClass.TOILET_PAPER: MaterialParams(10.0, 0.45, 0.2, 0.001),
    MaterialClass.CHIPS: MaterialParams(6.0, 1.00, 1.0, 0.015),
    MaterialClass.PLASTIC_WRAP: MaterialParams(14.0, 0.70, 0.2, 0.001),
}


def _default_gain_penalty():
    # Left carries the end-on penalty for the tag mounted there; Top is
    # partially end-on.
    return {
        Face.FRONT: 0.0,
        Face.REAR: 0.0,
        Face.LEFT: 2.5,
        Face.RIGHT: 0.0,
        Face.TOP: 6.0,
        Face.BOTTOM: 0.0,
    }


@dataclass(frozen=True)
class ChannelModel:
    """Calibration knobs of the channel; none of these are measured values."""

    box_edge: float = BOX_EDGE_M
    d_ref: float = 0.5
    link_loss_db: float = 80.0
    rssi_sigma_db: float = 1.0
    phase_sigma_rad: float = 0.05
    gain_penalty_db: dict = field(default_factory=_default_gain_penalty)
    occlusion_db: float = 15.0
    bottom_read_prob: float = 0.5
    side_extra_var_db2: float = 0.3
    weak_multipath_prob: float = 0.06
    weak_multipath_shift_db: float = 4.0
    weak_multipath_sigma_db: float = 1.5
    jitter: float = 0.45
    materials: dict = field(default_factory=lambda: dict(DEFAULT_MATERIALS))

    def __post_init__(self):
        if self.box_edge <= 0 or self.d_ref <= 0:
            raise ValueError("box_edge and d_ref must be positive")
        if self.rssi_sigma_db < 0 or self.phase_sigma_rad < 0 or self.side_extra_var_db2 < 0:
            raise ValueError("noise parameters must be non-negative")
        if not 0.0 <= self.bottom_read_prob <= 1.0 or not 0.0 <= self.weak_multipath_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")
        gain = {Face(k): float(v) for k, v in self.gain_penalty_db.items()}
        missing = set(Face) - set(gain)
        if missing:
            raise ValueError(f"gain penalty missing faces: {sorted(f.value for f in missing)}")
        object.__setattr__(self, "gain_penalty_db", gain)
        mats = {}
        for k, v in self.materials.items():
            mats[MaterialClass(k)] = v if isinstance(v, MaterialParams) else MaterialParams(**v)
        if set(mats) != set(MaterialClass):
            raise ValueError("channel model must define parameters for all five materials")
        object.__setattr__(self, "materials", mats)

    def to_dict(self):
        d = asdict(self)
        d["gain_penalty_db"] = {f.value: v for f, v in self.gain_penalty_db.items()}
        d["materials"] = {m.value: asdict(p) for m, p in self.materials.items()}
        return d


@dataclass(frozen=True)
class ScenarioConfig:
    material: MaterialClass = MaterialClass.CONTROL
    state: int = 0
    duration: float = 300.0
    reads_per_sec_per_tag: float = 5.0
    reader_distance: float = 0.5
    frequency: float = 915e6
    tx_power_dbm: float = 32.5
    rx_floor_dbm: float = -84.0
    seed: int = 0
    n_tags: int = 3
    channel: ChannelModel = field(default_factory=ChannelModel)

    def __post_init__(self):
        object.__setattr__(self, "material", MaterialClass(self.material))
        object.__setattr__(self, "state", check_state(self.state))
        active_tags(self.n_tags)
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not self.reads_per_sec_per_tag > 0:
            raise ValueError("reads_per_sec_per_tag must be > 0")
        if not self.reader_distance > self.channel.box_edge / 2:
            raise ValueError("reader must sit outside the package (reader_distance > box_edge/2)")
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        if not self.rx_floor_dbm < self.tx_power_dbm:
            raise ValueError("rx_floor_dbm must be below tx_power_dbm")

    @property
    def material_params(self):
        return self.channel.materials[self.material]

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "channel"}
        d["material"] = self.material.value
        d["channel"] = self.channel.to_dict()
        return d


def tag_face_for_state(state, tag):
    """Face occupied by ``tag`` when the package is in orientation ``state``."""
    return FACE_TABLE[check_state(state)][TagRole(tag).index]


def path_distance(face, reader_distance, box_edge=BOX_EDGE_M):
    """Reader-to-tag distance for a tag centred on ``face``."""
    if not reader_distance > box_edge / 2:
        raise ValueError("reader_distance must exceed box_edge / 2")
    half = box_edge / 2
    face = Face(face)
    if face is Face.FRONT:
        return reader_distance - half
    if face is Face.REAR:
        return reader_distance + half
    return math.hypot(reader_distance, half)


def penetration_fraction(face):
    """Fraction of the package crossed by the signal reaching a tag on ``face``."""
    face = Face(face)
    if face is Face.REAR:
        return 1.0
    if face is Face.FRONT:
        return 0.0
    return 0.3


def wavelength(frequency):
    return SPEED_OF_LIGHT / frequency


def expected_phase(d, frequency, mat=NO_MATERIAL, penetration=0.0):
    if not d > 0:
        raise ValueError("distance must be positive")
    raw = 4.0 * math.pi * d * frequency / SPEED_OF_LIGHT + mat.phase_offset * penetration
    phase = math.fmod(raw, TWO_PI)
    if phase < 0:
        phase += TWO_PI
    return 0.0 if phase >= TWO_PI else phase


def gain_penalty(face, channel):
    return channel.gain_penalty_db[Face(face)]


def occlusion_db(face, channel):
    return channel.occlusion_db if Face(face) is Face.BOTTOM else 0.0


def read_probability(face, channel):
    return channel.bottom_read_prob if Face(face) is Face.BOTTOM else 1.0


def side_multipath_var(face, channel):
    return channel.side_extra_var_db2 if Face(face) in PERPENDICULAR_FACES else 0.0


def expected_rssi(d, face, mat, penetration, cfg):
    """Mean RSSI (dBm) before noise for a tag at distance ``d`` on ``face``."""
    if not d > 0:
        raise ValueError("distance must be positive")
    ch = cfg.channel
    base = cfg.tx_power_dbm - ch.link_loss_db
    return (
        base
        - 40.0 * math.log10(d / ch.d_ref)
        - gain_penalty(face, ch)
        - mat.attenuation_db_per_pass * penetration
        - occlusion_db(face, ch)
    )


@dataclass(frozen=True)
class TagChannel:
    """Per-tag draw parameters for one scenario."""

    face: Face
    mean_rssi: float
    rssi_var: float
    mean_phase: float
    phase_var: float
    read_prob: float
    weak_prob: float


def tag_channel(cfg, tag):
    face = tag_face_for_state(cfg.state, tag)
    ch = cfg.channel
    mat = cfg.material_params
    pen = penetration_fraction(face)
    d = path_distance(face, cfg.reader_distance, ch.box_edge)
    perpendicular = face in PERPENDICULAR_FACES
    return TagChannel(
        face=face,
        mean_rssi=expected_rssi(d, face, mat, pen, cfg),
        rssi_var=ch.rssi_sigma_db**2 + mat.rssi_var_boost * pen + side_multipath_var(face, ch),
        mean_phase=expected_phase(d, cfg.frequency, mat, pen),
        phase_var=ch.phase_sigma_rad**2 + mat.phase_var_boost * pen,
        read_prob=read_probability(face, ch),
        weak_prob=ch.weak_multipath_prob if perpendicular else 0.0,
    )


def _draw(cfg, tc, n, rng):
    """Vectorised draws for one tag. Returns (kept mask, rssi, phase)."""
    ch = cfg.channel
    u_read = rng.random(n)
    z_rssi = rng.standard_normal(n)
    u_weak = rng.random(n)
    z_weak = rng.standard_normal(n)
    z_phase = rng.standard_normal(n)

    weak = u_weak < tc.weak_prob
    rssi = tc.mean_rssi + math.sqrt(tc.rssi_var) * z_rssi
    rssi = rssi + weak * (-ch.weak_multipath_shift_db + ch.weak_multipath_sigma_db * z_weak)
    rssi = np.minimum(rssi, 0.0)
    phase = np.mod(tc.mean_phase + math.sqrt(tc.phase_var) * z_phase, TWO_PI)
    phase[phase >= TWO_PI] = 0.0
    kept = (u_read < tc.read_prob) & (rssi >= cfg.rx_floor_dbm)
    return kept, rssi, phase


def sample_read(cfg, tag, t, rng):
    """Draw a single read for ``tag`` at time ``t``; ``None`` when the read is dropped."""
    if not 0.0 <= t < cfg.duration:
        raise ValueError(f"t must lie in [0, {cfg.duration})")
    tag = TagRole(tag)
    tc = tag_channel(cfg, tag)
    kept, rssi, phase = _draw(cfg, tc, 1, rng)
    if not kept[0]:
        return None
    return RawRead(float(t), tag, float(rssi[0]), float(phase[0]))


def _read_times(cfg, rng):
    rate = cfg.reads_per_sec_per_tag
    n = int(math.floor(cfg.duration * rate + 1e-9))
    slots = (np.arange(n) + 0.5) / rate
    t = slots + rng.uniform(-cfg.channel.jitter, cfg.channel.jitter, n) / rate
    return np.clip(t, 0.0, np.nextafter(cfg.duration, 0.0))


def generate_session(cfg):
    """All reads for one scenario, sorted by timestamp; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    ts, tags, rssis, phases = [], [], [], []
    for tag in active_tags(cfg.n_tags):
        t = _read_times(cfg, rng)
        kept, rssi, phase = _draw(cfg, tag_channel(cfg, tag), len(t), rng)
        ts.append(t[kept])
        tags.append(np.full(kept.sum(), tag.index))
        rssis.append(rssi[kept])
        phases.append(phase[kept])
    t = np.concatenate(ts)
    tag_idx = np.concatenate(tags)
    rssi = np.concatenate(rssis)
    phase = np.concatenate(phases)
    order = np.lexsort((tag_idx, t))
    roles = active_tags(3)
    return [
        RawRead(float(t[i]), roles[tag_idx[i]], float(rssi[i]), float(phase[i])) for i in order
    ]


@dataclass
class Session:
    manifest: SessionManifest
    reads: list


def session_id(material, state):
    return f"{MaterialClass(material).value}-s{check_state(state)}"


def generate_corpus(base_cfg, materials=None, states=None, seed=0):
    """One session per (material, state) pair, each with its own derived seed."""
    materials = list(MaterialClass) if materials is None else [MaterialClass(m) for m in materials]
    states = list(range(N_STATES)) if states is None else [check_state(s) for s in states]
    tag_ids = {v: k for k, v in DEFAULT_TAG_IDS.items()}
    sessions = []
    for m in materials:
        for s in states:
            sid = session_id(m, s)
            cfg = replace(base_cfg, material=m, state=s, seed=stream_seed(seed, f"sim/{sid}"))
            manifest = SessionManifest(
                session_id=sid,
                material=m,
                state=s,
                n_tags=cfg.n_tags,
                tags={tag_ids[r]: r for r in active_tags(cfg.n_tags)},
                config=cfg.to_dict(),
            )
            sessions.append(Session(manifest, generate_session(cfg)))
    return sessions
