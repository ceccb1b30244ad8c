from typing import Callable, Optional
from dataclasses import dataclass
import math

import numpy as np

from cutfeec.forms import dimension
from cutfeec.geometry import LevelSet
from cutfeec.model.enums import GeometryKind
from cutfeec.util import ConfigError

FormField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExactFields:
    """Closed-form solution fields; None stands for the zero field."""

    eta: Optional[FormField] = None
    d_eta: Optional[FormField] = None
    sigma: Optional[FormField] = None
    d_sigma: Optional[FormField] = None
    lam: Optional[FormField] = None


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    k: int
    source: FormField
    exact: Optional[ExactFields]

    @property
    def has_exact(self) -> bool:
        return self.exact is not None


def _polar(x: np.ndarray, center: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.atleast_2d(x)
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    return dx, dy, np.hypot(dx, dy)


def _require(phi: LevelSet, kind: GeometryKind, name: str, k: int, expected_k: int):
    if phi.kind != kind:
        raise ConfigError(f"problem {name} needs a {kind} geometry, got {phi.kind}")
    if k != expected_k:
        raise ConfigError(f"problem {name} is posed for k={expected_k}, got k={k}")


def disk_poisson(phi: LevelSet, k: int = 2) -> ManufacturedProblem:
    """-Δu = 4 with u = R² - ρ² vanishing on the circle, as a top-degree problem."""
    _require(phi, GeometryKind.DISK, "disk_poisson", k, 2)
    c = phi.center
    (radius,) = phi.radii

    def eta(x):
        _, _, rho = _polar(x, c)
        return (radius**2 - rho**2)[:, None]

    def sigma(x):
        dx, dy, _ = _polar(x, c)
        return np.column_stack([-2.0 * dy, 2.0 * dx])

    def source(x):
        return np.full((np.atleast_2d(x).shape[0], 1), 4.0)

    return ManufacturedProblem(
        "disk_poisson", 2, source, ExactFields(eta=eta, sigma=sigma, d_sigma=source)
    )


def annulus_poisson(phi: LevelSet, k: int = 2) -> ManufacturedProblem:
    """-Δu = f with u = (ρ - r1)(r2 - ρ) vanishing on both circles."""
    _require(phi, GeometryKind.ANNULUS, "annulus_poisson", k, 2)
    c = phi.center
    r1, r2 = phi.radii

    def eta(x):
        _, _, rho = _polar(x, c)
        return ((rho - r1) * (r2 - rho))[:, None]

    def sigma(x):
        dx, dy, rho = _polar(x, c)
        du = (r1 + r2 - 2.0 * rho) / rho
        # (∂_y u, -∂_x u)
        return np.column_stack([du * dy, -du * dx])

    def source(x):
        _, _, rho = _polar(x, c)
        return (4.0 - (r1 + r2) / rho)[:, None]

    return ManufacturedProblem(
        "annulus_poisson", 2, source, ExactFields(eta=eta, sigma=sigma, d_sigma=source)
    )


def annulus_harmonic(phi: LevelSet, k: int = 1) -> ManufacturedProblem:
    """Source equal to the harmonic 1-form (-y dx + x dy)/ρ²; the solution is λ = f."""
    _require(phi, GeometryKind.ANNULUS, "annulus_harmonic", k, 1)
    c = phi.center

    def source(x):
        dx, dy, rho = _polar(x, c)
        return np.column_stack([-dy, dx]) / (rho**2)[:, None]

    return ManufacturedProblem("annulus_harmonic", 1, source, ExactFields(lam=source))


def disk_neumann(phi: LevelSet, k: int = 0) -> ManufacturedProblem:
    """-Δu = f with u = cos(πρ²/R²), whose normal derivative and mean vanish."""
    _require(phi, GeometryKind.DISK, "disk_neumann", k, 0)
    c = phi.center
    (radius,) = phi.radii
    a = math.pi / radius**2

    def eta(x):
        _, _, rho = _polar(x, c)
        return np.cos(a * rho**2)[:, None]

    def d_eta(x):
        dx, dy, rho = _polar(x, c)
        g = -2.0 * a * np.sin(a * rho**2)
        return np.column_stack([g * dx, g * dy])

    def source(x):
        _, _, rho = _polar(x, c)
        s = a * rho**2
        return (4.0 * a * np.sin(s) + 4.0 * a**2 * rho**2 * np.cos(s))[:, None]

    return ManufacturedProblem("disk_neumann", 0, source, ExactFields(eta=eta, d_eta=d_eta))


def uniform(phi: LevelSet, k: int) -> ManufacturedProblem:
    """Unit coefficient in every component; no exact solution."""
    ncomp = dimension(2, k)

    def source(x):
        return np.ones((np.atleast_2d(x).shape[0], ncomp))

    return ManufacturedProblem("uniform", k, source, None)


PROBLEMS: dict[str, Callable[[LevelSet, int], ManufacturedProblem]] = {
    "disk_poisson": disk_poisson,
    "annulus_poisson": annulus_poisson,
    "annulus_harmonic": annulus_harmonic,
    "disk_neumann": disk_neumann,
    "uniform": uniform,
}


def get_problem(name: str, phi: LevelSet, k: int) -> ManufacturedProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}, expected one of {', '.join(PROBLEMS)}")
    return factory(phi, k)
