import numpy as np
from pydantic import BaseModel, Field, model_validator


class TimeSeries(BaseModel):
    """Rows of (t, named scalar columns); t strictly increasing."""

    t: list[float] = Field(default_factory=list)
    columns: dict[str, list[float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_rows(self) -> "TimeSeries":
        for name, values in self.columns.items():
            if len(values) != len(self.t):
                raise ValueError(f"column {name!r} has {len(values)} rows, expected {len(self.t)}")
        if any(b <= a for a, b in zip(self.t, self.t[1:])):
            raise ValueError("t must be strictly increasing")
        return self

    @classmethod
    def from_rows(cls, names: list[str], rows: list[tuple[float, ...]]) -> "TimeSeries":
        """Rows are (t, value_1, ..., value_k) in the order of ``names``."""
        data = np.asarray(rows, dtype=float).reshape(len(rows), len(names) + 1)
        return cls(t=data[:, 0].tolist(), columns={n: data[:, k + 1].tolist() for k, n in enumerate(names)})

    def __len__(self) -> int:
        return len(self.t)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    def at(self, name: str, t: float | np.ndarray) -> float | np.ndarray:
        """Linear interpolation of a column in time."""
        return np.interp(t, self.times, self.column(name))
