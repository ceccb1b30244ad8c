from cutfeec.model.enums import (  # noqa: F401
    Command,
    FacetSet,
    GeometryKind,
    Region,
    TriangleLabel,
)
from cutfeec.model.util import Box  # noqa: F401
