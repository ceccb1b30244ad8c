from typing import Self
from dataclasses import dataclass

from cutfeec.util import GeometryError


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError(f"degenerate box {self}")

    @classmethod
    def square(cls, half_width: float, center: tuple[float, float] = (0.0, 0.0)) -> Self:
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def __str__(self) -> str:
        return f"[{self.xmin:g}, {self.xmax:g}] x [{self.ymin:g}, {self.ymax:g}]"
