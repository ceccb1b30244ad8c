from cutfeec.util import cap_threads

cap_threads()

from cutfeec.util import CutFeecException, ConfigError, SolverError, GeometryError  # noqa: E402, F401
from cutfeec.forms import AltForm, FacetFrame, wedge, hodge_star, contract, trace, normal_trace  # noqa: E402, F401
from cutfeec.geometry import LevelSet, build_background, classify, macro_facets  # noqa: E402, F401
from cutfeec.spaces import build_space, coboundary, mass_matrix  # noqa: E402, F401
from cutfeec.ghost import assemble_ghost, ghost_gram  # noqa: E402, F401
from cutfeec.hodge import harmonic_basis, assemble_mixed, solve_mixed, condition_estimate  # noqa: E402, F401
from cutfeec.config import ExperimentConfig, load_config, parse_config  # noqa: E402, F401
