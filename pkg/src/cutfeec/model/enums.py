import enum


class TriangleLabel(enum.Enum):
    CUT = enum.auto()
    IMMERSED = enum.auto()

    def __str__(self) -> str:
        return self.name


class Region(enum.Enum):
    PHYSICAL = enum.auto()
    ACTIVE = enum.auto()

    def __str__(self) -> str:
        return self.name.lower()


class FacetSet(enum.StrEnum):
    FULL = enum.auto()
    MACRO = enum.auto()


class GeometryKind(enum.StrEnum):
    DISK = enum.auto()
    ANNULUS = enum.auto()


class Command(enum.StrEnum):
    @staticmethod
    def _generate_next_value_(name, start, count, last_values) -> str:
        return name.lower().replace("_", "-")

    CONVERGE = enum.auto()
    SWEEP_CUT = enum.auto()
    NORM_EQUIV = enum.auto()
    SOLVE = enum.auto()
