"""Planar bench geometry: the source aperture, the activation slab behind it,
and which of the two slits each emission point can illuminate.

Coordinates: ``y`` is transverse (slit A at ``+s/2``, slit B at ``-s/2``),
``depth`` is measured backward from the aperture plane into the crystal.
The slit plane sits a distance ``d`` in front of the aperture.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np


class LayoutError(ValueError):
    """Raised when an OpticalLayout violates one of its invariants."""


class ZoneContainmentWarning(UserWarning):
    """Crystal deeper than the zone apex; the both-access construction no longer holds."""


class SlitAccess(enum.IntEnum):
    NONE = 0
    A_ONLY = 1
    B_ONLY = 2
    BOTH = 3


# small-angle validity limits on s/d and w/d
MAX_SEPARATION_ANGLE = 0.1
MAX_WIDTH_ANGLE = 0.01
MIN_IDLER_DISTANCE_RATIO = 100.0


@dataclass(frozen=True)
class OpticalLayout:
    """All lengths in meters, angles in radians.

    ``slit_width``, ``screen_distance``, ``idler_distance`` and
    ``detector_angular_radius`` default to ``s/20``, 1 m, ``100 d`` and
    ``2 phi0`` when left as ``None``.
    """

    wavelength: float
    phi0: float
    source_width: float
    crystal_thickness: float
    slit_distance: float
    slit_separation: float
    slit_width: float | None = None
    idler_distance: float | None = None
    detector_angular_radius: float | None = None
    screen_distance: float | None = None
    # x = 0 is only legal for the incoherent-source validation mode
    allow_zero_thickness: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        defaults = {
            "slit_width": lambda: self.slit_separation / 20.0,
            "idler_distance": lambda: 100.0 * self.slit_distance,
            "detector_angular_radius": lambda: 2.0 * self.phi0,
            "screen_distance": lambda: 1.0,
        }
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, float(default()))
        self.validate()

    def validate(self) -> None:
        for name in ("wavelength", "phi0", "source_width", "slit_distance",
                     "slit_separation", "slit_width", "idler_distance",
                     "detector_angular_radius", "screen_distance"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise LayoutError(f"{name} must be strictly positive, got {value!r}")
        x = self.crystal_thickness
        if not np.isfinite(x) or x < 0 or (x == 0 and not self.allow_zero_thickness):
            raise LayoutError(f"crystal_thickness must be strictly positive, got {x!r}")
        if self.idler_distance < MIN_IDLER_DISTANCE_RATIO * self.slit_distance:
            raise LayoutError(
                f"idler_distance must be >= {MIN_IDLER_DISTANCE_RATIO:g} * slit_distance "
                f"(d' >> d), got d'={self.idler_distance!r}, d={self.slit_distance!r}")
        if self.slit_separation / self.slit_distance >= MAX_SEPARATION_ANGLE:
            raise LayoutError(
                f"small-angle breach: s/d = {self.slit_separation / self.slit_distance:.4g}"
                f" must be < {MAX_SEPARATION_ANGLE}")
        if self.source_width / self.slit_distance >= MAX_WIDTH_ANGLE:
            raise LayoutError(
                f"small-angle breach: w/d = {self.source_width / self.slit_distance:.4g}"
                f" must be < {MAX_WIDTH_ANGLE}")
        if x > zone_axial_extent(self) * (1 + 1e-12):
            warnings.warn(
                f"crystal_thickness {x:.4g} m exceeds the zone apex w*d/s = "
                f"{zone_axial_extent(self):.4g} m", ZoneContainmentWarning, stacklevel=3)

    @property
    def separation_angle(self) -> float:
        """s/d, the angle the slit pair subtends at the source."""
        return self.slit_separation / self.slit_distance

    @property
    def fringe_period(self) -> float:
        """Reference fringe spacing lambda*D/s on the screen."""
        return self.wavelength * self.screen_distance / self.slit_separation

    @property
    def envelope_halfwidth(self) -> float:
        """Screen offset of the first single-slit envelope zero, lambda*D/a."""
        return self.wavelength * self.screen_distance / self.slit_width

    @property
    def transverse_half_extent(self) -> float:
        """Half-width of the sampled slab, w/2 + (s/2d) x."""
        return self.source_width / 2 + self.separation_angle * self.crystal_thickness / 2

    @property
    def zone_contained(self) -> bool:
        return self.crystal_thickness <= zone_axial_extent(self) * (1 + 1e-12)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("allow_zero_thickness")
        return d

    def replace(self, **changes) -> "OpticalLayout":
        kw = self.to_dict()
        kw["allow_zero_thickness"] = self.allow_zero_thickness
        kw.update(changes)
        return OpticalLayout(**kw)


@dataclass(frozen=True)
class SourcePoint:
    transverse: float
    depth: float


def zone_axial_extent(layout: OpticalLayout) -> float:
    """Depth w*d/s at which the view cones to the two slits stop overlapping."""
    return layout.source_width * layout.slit_distance / layout.slit_separation


def aperture_crossings(y, depth, layout: OpticalLayout):
    """Small-angle crossing heights of the rays toward slit A and slit B."""
    lean = np.asarray(depth) * layout.slit_separation / (2 * layout.slit_distance)
    return y + lean, y - lean


def classify_points(y, depth, layout: OpticalLayout) -> np.ndarray:
    """Vectorized slit-access classification; returns SlitAccess codes as int8."""
    y = np.asarray(y, dtype=float)
    half = layout.source_width / 2
    to_a, to_b = aperture_crossings(y, depth, layout)
    sees_a = np.abs(to_a) <= half
    sees_b = np.abs(to_b) <= half
    return (sees_a.astype(np.int8) * SlitAccess.A_ONLY
            + sees_b.astype(np.int8) * SlitAccess.B_ONLY).astype(np.int8)


def classify_slit_access(p: SourcePoint, layout: OpticalLayout) -> SlitAccess:
    return SlitAccess(int(classify_points(p.transverse, p.depth, layout)))


def both_access_fraction(layout: OpticalLayout) -> float:
    """Area fraction of the slit-accessible slab that sees both slits.

    The both-access band at depth z has width ``w - z s/d`` and the union of
    the two view cones has width ``w + z s/d``; integrating over ``[0, x]``::

        (w x - s x^2 / 2d) / (w x + s x^2 / 2d)
    """
    w, x = layout.source_width, layout.crystal_thickness
    if x > zone_axial_extent(layout) * (1 + 1e-12):
        raise ValueError(
            f"crystal_thickness {x:.6g} m exceeds w*d/s = {zone_axial_extent(layout):.6g} m; "
            "the both-access band would have negative width")
    if x == 0:
        return 1.0
    tilt = layout.separation_angle * x / 2
    return (w - tilt) / (w + tilt)


def double_slit_count_fraction(p_both: float) -> float:
    """Share of screen counts that come through two slits.

    Both-access points transmit through two slits, single-access points
    through one, so the count share is ``2p / (1 + p)``.
    """
    if not 0.0 <= p_both <= 1.0:
        raise ValueError(f"p_both must lie in [0, 1], got {p_both!r}")
    return 2.0 * p_both / (1.0 + p_both)
