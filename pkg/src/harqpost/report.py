"""Result record shared by every hypothesis test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


class DegenerateDataError(ValueError):
    """Dataset too small or degenerate for the requested statistic."""


@dataclass(frozen=True)
class TestReport:
    """Outcome of one hypothesis test. ``decision`` is reject iff ``p < alpha``."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    dof: float | None
    p_value: float
    alpha: float = 0.01
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "p_value", float(self.p_value))
        if self.dof is not None:
            dof = float(self.dof)
            object.__setattr__(self, "dof", int(dof) if dof.is_integer() else dof)
        if not (0.0 <= self.p_value <= 1.0) or math.isnan(self.p_value):
            raise ValueError(f"p-value out of range: {self.p_value}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def decision(self) -> str:
        return "reject" if self.p_value < self.alpha else "accept"

    @property
    def rejected(self) -> bool:
        return self.p_value < self.alpha

    def annotate(self, note: str) -> "TestReport":
        if note in self.notes:
            return self
        return replace(self, notes=self.notes + (note,))
