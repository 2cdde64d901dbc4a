"""Log-spaced step-size grid search with edge extension.

Cells are scored by final training loss. If the winning step size lies on the
edge of the step-size axis, the axis is extended by one point (the grid ratio
beyond that edge) and the new cells are run, until the winner is interior or
``max_extensions`` is reached.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple


class GridError(RuntimeError):
    pass


@dataclass
class GridSpec:
    axes: Dict[str, List[float]]
    interior: bool = True
    max_extensions: int = 3
    ratio: Optional[float] = None

    def __post_init__(self):
        if "alpha" not in self.axes:
            raise ValueError("the grid needs a step-size axis 'alpha'")
        self.axes = {k: sorted(float(v) for v in vals) for k, vals in self.axes.items()}
        if self.interior and len(self.axes["alpha"]) < 3:
            raise ValueError("the interior rule needs at least 3 step sizes")
        if min(self.axes["alpha"]) <= 0:
            raise ValueError("step sizes must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(axes={k: list(v) for k, v in d["axes"].items()}, interior=d.get("interior", True),
                   max_extensions=int(d.get("max_extensions", 3)), ratio=d.get("ratio"))

    def step_ratio(self) -> float:
        if self.ratio is not None:
            return float(self.ratio)
        a = self.axes["alpha"]
        if len(a) < 2:
            return 10.0
        return (a[-1] / a[0]) ** (1.0 / (len(a) - 1))

    def cells(self) -> List[Tuple[Tuple[str, float], ...]]:
        names = sorted(self.axes)
        return [tuple(zip(names, combo)) for combo in itertools.product(*(self.axes[n] for n in names))]


@dataclass
class GridResult:
    best: Dict[str, float]
    best_loss: float
    table: List[dict]
    extensions: int
    interior: bool
    alpha_axis: List[float] = field(default_factory=list)


def _score(loss: float) -> float:
    return loss if math.isfinite(loss) else math.inf


def select_best(results: Dict[Tuple[Tuple[str, float], ...], float]):
    """Cell with the lowest loss; ties go to the smaller step size, then the smaller cell tuple."""
    def key(item):
        cell, loss = item
        return (_score(loss), dict(cell)["alpha"], cell)

    finite = [(c, l) for c, l in results.items() if math.isfinite(l)]
    if not finite:
        raise GridError("every grid cell diverged: " + ", ".join(str(dict(c)) for c in sorted(results)))
    return min(finite, key=key)


def edge_direction(alpha: float, axis: Sequence[float]) -> int:
    """+1 if ``alpha`` is the largest step on the axis, -1 if the smallest, 0 if interior."""
    if alpha >= max(axis):
        return 1
    if alpha <= min(axis):
        return -1
    return 0


def grid_search(grid: GridSpec, evaluate: Callable[[Dict[str, float]], float],
                run_cells: Optional[Callable[[List[Dict[str, float]]], List[float]]] = None) -> GridResult:
    """Run ``evaluate(cell) -> final training loss`` over the grid, extending at edges.

    ``run_cells`` may evaluate a batch of cells at once (e.g. concurrently); it
    must return losses in the order given.
    """
    if run_cells is None:
        def run_cells(cells):
            return [evaluate(c) for c in cells]

    axes = {k: list(v) for k, v in grid.axes.items()}
    results: Dict[Tuple[Tuple[str, float], ...], float] = {}
    pending = GridSpec(axes, interior=False).cells()
    ratio = grid.step_ratio()
    extensions = 0
    while True:
        todo = [c for c in pending if c not in results]
        for cell, loss in zip(todo, run_cells([dict(c) for c in todo])):
            results[cell] = float(loss)
        best_cell, best_loss = select_best(results)
        alpha = dict(best_cell)["alpha"]
        direction = edge_direction(alpha, axes["alpha"])
        if not grid.interior or direction == 0 or extensions >= grid.max_extensions:
            break
        new_alpha = max(axes["alpha"]) * ratio if direction > 0 else min(axes["alpha"]) / ratio
        axes["alpha"] = sorted(axes["alpha"] + [new_alpha])
        extensions += 1
        others = {k: v for k, v in axes.items() if k != "alpha"}
        names = sorted(axes)
        pending = []
        for combo in itertools.product(*(others[n] for n in sorted(others))):
            assign = dict(zip(sorted(others), combo))
            assign["alpha"] = new_alpha
            pending.append(tuple((n, assign[n]) for n in names))
    table = [dict(cell, loss=loss) for cell, loss in sorted(results.items())]
    return GridResult(best=dict(best_cell), best_loss=best_loss, table=table, extensions=extensions,
                      interior=edge_direction(alpha, axes["alpha"]) == 0, alpha_axis=axes["alpha"])
