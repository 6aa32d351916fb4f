from dataclasses import dataclass, field

from fastped.errors import ConfigError

MAX_SPEED = 5
U64_MASK = (1 << 64) - 1


@dataclass
class SimParams:
    """Parameters of the planning kernel and the run length

    Attributes
    ----------
    v_max: int
        Maximum speed in cells per step, uniform across all agents (1 to 5)
    k_s: float
        Coupling of the static floor field in the choice weights
    k_other: float
        Coupling of every other model term. Must be 0
    seed: int
        Unsigned 64-bit seed of all random streams
    steps: int
        Number of time steps in a run
    dt: float
        Simulated seconds per time step
    """

    v_max: int = 4
    k_s: float = 1.2
    k_other: float = 0.0
    seed: int = 0
    steps: int = 396
    dt: float = 1.0

    def __post_init__(self):
        if self.k_other != 0.0:
            raise ConfigError(
                f"k_other must be 0, got {self.k_other}; no other coupling terms exist"
            )
        if not 1 <= self.v_max <= MAX_SPEED:
            raise ConfigError(f"v_max must be in [1, {MAX_SPEED}], got {self.v_max}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not 0 <= self.seed <= U64_MASK:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class ScheduleParams:
    """Worker configuration of the planning phase

    The chunk size is not stored; it is recomputed every step from the number
    of alive agents (see fastped.engine.compute_blocksize).

    Attributes
    ----------
    cores: int
        Number of planning workers
    """

    cores: int = 1

    def __post_init__(self):
        if self.cores < 1:
            raise ConfigError(f"cores must be >= 1, got {self.cores}")


@dataclass
class SweepSpec:
    """Grid of benchmark measurements

    Attributes
    ----------
    cores_list: list[int]
        Worker counts to measure
    agents_list: list[int]
        Initial agent counts to measure
    vmax_list: list[int]
        Maximum speeds to measure, each in [1, 5]
    steps: int
        Time steps per measured run
    repetitions: int
        Timed runs per measurement; the minimum wall time is reported
    """

    cores_list: list[int]
    agents_list: list[int]
    vmax_list: list[int] = field(default_factory=lambda: [4])
    steps: int = 396
    repetitions: int = 3

    def __post_init__(self):
        for name in ("cores_list", "agents_list", "vmax_list"):
            values = getattr(self, name)
            if len(values) == 0:
                raise ConfigError(f"{name} must not be empty")
            if any(v < 1 for v in values):
                raise ConfigError(f"{name} must hold positive values, got {values}")
        if any(v > MAX_SPEED for v in self.vmax_list):
            raise ConfigError(f"vmax_list values must be <= {MAX_SPEED}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")


@dataclass
class FundamentalDiagramParameters:
    """Parameters of the periodic-corridor density sweep

    Attributes
    ----------
    v_max: int
        Maximum speed in cells per step
    densities: list[float]
        Requested densities in persons per square meter
    warmup: int
        Untimed steps before measuring
    measure: int
        Steps averaged into the mean speed
    gradient: float
        Slope of the driving potential in potential units per cell
    k_s: float
        Coupling of the driving potential
    seed: int
        Unsigned 64-bit seed
    cores: int
        Planning workers
    """

    v_max: int = 4
    densities: list[float] = field(
        default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]
    )
    warmup: int = 100
    measure: int = 296
    gradient: float = 4.0
    k_s: float = 1.2
    seed: int = 0
    cores: int = 1

    def __post_init__(self):
        if not 1 <= self.v_max <= MAX_SPEED:
            raise ConfigError(f"v_max must be in [1, {MAX_SPEED}], got {self.v_max}")
        if any(d < 0.0 for d in self.densities):
            raise ConfigError("densities must be non-negative")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if self.measure < 1:
            raise ConfigError(f"measure must be >= 1, got {self.measure}")
        if not self.gradient > 0.0:
            raise ConfigError(f"gradient must be > 0, got {self.gradient}")
        if self.cores < 1:
            raise ConfigError(f"cores must be >= 1, got {self.cores}")
