from dataclasses import dataclass, field

import numpy as np

from diffcore.tensor import DTYPE
from utils.errors import ConfigError, ReportError

PLACEMENT_POLICIES = ("random", "center", "corner")
STEP_RULES = ("sign", "gradient")


@dataclass(frozen=True)
class FgsmConfig:
    """epsilon is a fraction of the raw pixel range [0, 1]."""

    epsilon: float
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= float(self.epsilon) <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.clamp_lo < self.clamp_hi:
            raise ConfigError(f"clamp range [{self.clamp_lo}, {self.clamp_hi}] is empty")


@dataclass(frozen=True, eq=False)
class Patch:
    pixels: np.ndarray
    target_class: int
    name: str = "patch"
    steps: int = 0
    seed: int = 0
    source: str = "random"
    objective: tuple = field(default=(), repr=False)

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=DTYPE)
        if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2]:
            raise ConfigError(f"patch pixels must be (C, s, s), got {pixels.shape}")
        if not np.isfinite(pixels).all() or pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ConfigError("patch pixels must lie within [0, 1]")
        pixels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "objective", tuple(float(v) for v in self.objective))

    @property
    def size(self):
        return int(self.pixels.shape[1])

    @property
    def channels(self):
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class PatchTrainConfig:
    size: int
    target_class: int
    steps: int = 1000
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    placement_policy: str = "random"
    name: str = None
    step_rule: str = "sign"

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError(f"patch size must be positive, got {self.size}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError(f"steps and batch_size must be at least 1, got {self.steps}, {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.placement_policy not in PLACEMENT_POLICIES:
            raise ConfigError(f"placement_policy must be one of {PLACEMENT_POLICIES}, got {self.placement_policy!r}")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")


def _check_percent(value, what):
    if not 0.0 <= value <= 100.0:
        raise ReportError(f"{what} = {value} outside [0, 100]")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    top1_error: float
    top5_error: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple
    model_id: str = ""
    dataset_id: str = ""

    def __post_init__(self):
        rows = tuple(self.rows)
        for row in rows:
            _check_percent(row.top1_error, "top1_error")
            _check_percent(row.top5_error, "top5_error")
            if row.top1_error < row.top5_error:
                raise ReportError(f"top-1 error {row.top1_error} below top-5 error {row.top5_error} at eps={row.epsilon}")
        epsilons = [row.epsilon for row in rows]
        if epsilons != sorted(epsilons):
            raise ReportError(f"sweep rows are not in ascending epsilon order: {epsilons}")
        object.__setattr__(self, "rows", rows)

    @property
    def epsilons(self):
        return [row.epsilon for row in self.rows]

    @property
    def top1(self):
        return [row.top1_error for row in self.rows]


@dataclass(frozen=True)
class PatchResult:
    patch: str
    size: int
    top1_success: float
    top5_success: float


@dataclass(frozen=True)
class PatchReport:
    rows: tuple
    model_id: str = ""
    dataset_id: str = ""

    def __post_init__(self):
        rows = tuple(self.rows)
        for row in rows:
            _check_percent(row.top1_success, "top1_success")
            _check_percent(row.top5_success, "top5_success")
            if row.top5_success < row.top1_success:
                raise ReportError(f"{row.patch}: top-5 success {row.top5_success} below top-1 {row.top1_success}")
        object.__setattr__(self, "rows", rows)

    def pivot(self, metric="top1_success"):
        """(sizes, {patch name: {size: value}}) in first-seen patch order."""
        sizes = sorted({row.size for row in self.rows})
        table = {}
        for row in self.rows:
            table.setdefault(row.patch, {})[row.size] = getattr(row, metric)
        return sizes, table
