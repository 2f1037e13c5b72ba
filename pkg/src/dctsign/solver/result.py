from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveResult:
    """Outcome of an LP or MILP solve.

    ``status`` is one of ``optimal``, ``timeout-incumbent`` (``values`` is
    the best integer solution found), ``timeout-no-incumbent``,
    ``infeasible`` or ``unbounded``.
    """

    status: str
    objective: float
    values: np.ndarray | None
    stats: dict = field(default_factory=dict)

    @property
    def has_solution(self):
        return self.values is not None
