from typing import Optional

import numpy as np

from cutfeec.forms import AltForm, FacetFrame, dimension
from cutfeec.geometry import ActiveMesh, LevelSet, build_background, classify
from cutfeec.model.util import Box

BOX = Box.square(1.0)
RADIUS = 0.75
R_INNER = 0.375
R_OUTER = 0.875


def disk(epsilon: float = 0.0) -> LevelSet:
    return LevelSet.circle((0.0, 0.0), RADIUS).shifted((epsilon, 0.0))


def annulus(epsilon: float = 0.0) -> LevelSet:
    return LevelSet.annulus((0.0, 0.0), R_INNER, R_OUTER).shifted((epsilon, 0.0))


def everywhere() -> LevelSet:
    """Level set whose domain contains the whole box."""
    return LevelSet(lambda x: -np.ones(x.shape[0]))


def mesh(phi: LevelSet, m: int, n_max: Optional[int] = 10) -> ActiveMesh:
    return classify(build_background(BOX, m), phi, n_max)


def random_form(rng: np.random.Generator, n: int, k: int) -> AltForm:
    return AltForm(n, k, rng.normal(size=dimension(n, k)))


def random_frame(rng: np.random.Generator, n: int) -> FacetFrame:
    normal = rng.normal(size=n)
    # random orientation of the completing tangents
    frame = FacetFrame.from_normal(normal)
    Q, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
    return FacetFrame(frame.normal, Q @ frame.tangents, np.zeros(n))
