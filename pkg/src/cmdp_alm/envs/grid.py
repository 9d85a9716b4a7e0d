from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

Cell = t.Tuple[int, int]

SYMBOLS: t.Dict[str, str] = {
    "start": "S",
    "goal": "G",
    "cliff": "C",
    "treasure": "T",
    "landmine": "M",
}
EMPTY = "."


@dataclass(frozen=True)
class GridGeometry:
    """
    Row-major grid layout of a tabular environment.

    State s sits at (s // cols, s % cols). `cells` maps a cell kind (see `SYMBOLS`)
    to the cells of that kind; kinds never share a cell.
    """

    rows: int
    cols: int
    action_names: t.Tuple[str, ...]
    cells: t.Dict[str, t.Tuple[Cell, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        seen: t.Dict[Cell, str] = {}
        for kind, cells in self.cells.items():
            if kind not in SYMBOLS:
                raise ValueError(f"unknown cell kind '{kind}'")
            for cell in cells:
                if not self.contains(cell):
                    raise ValueError(f"{kind} cell {cell} lies outside the grid")
                if cell in seen:
                    raise ValueError(f"cell {cell} is both {seen[cell]} and {kind}")
                seen[cell] = kind

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def contains(self, cell: Cell) -> bool:
        row, col = cell
        return 0 <= row < self.rows and 0 <= col < self.cols

    def state_of(self, row: int, col: int) -> int:
        if not self.contains((row, col)):
            raise ValueError(f"cell ({row}, {col}) lies outside the {self.rows}x{self.cols} grid")
        return row * self.cols + col

    def coords(self, state: int) -> Cell:
        if not 0 <= state < self.n_states:
            raise ValueError(f"state {state} out of range for {self.n_states} states")
        return divmod(state, self.cols)

    def kind_of(self, cell: Cell) -> t.Optional[str]:
        for kind, cells in self.cells.items():
            if cell in cells:
                return kind
        return None

    def states_of(self, kind: str) -> t.List[int]:
        return [self.state_of(*cell) for cell in self.cells.get(kind, ())]

    def ascii_map(self) -> str:
        lines = []
        for row in range(self.rows):
            symbols = []
            for col in range(self.cols):
                kind = self.kind_of((row, col))
                symbols.append(SYMBOLS[kind] if kind is not None else EMPTY)
            lines.append(" ".join(symbols))
        legend = ", ".join(
            f"{SYMBOLS[kind]}={kind}" for kind in SYMBOLS if kind in self.cells
        )
        actions = ", ".join(f"{a}={name}" for a, name in enumerate(self.action_names))
        return "\n".join(lines + ["", f"legend: {legend}", f"actions: {actions}"]) + "\n"
