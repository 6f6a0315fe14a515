"""Design algebra: the f, g, h multipliers, entanglement measures, feasibility
margins and grid sweeps over the design space.

The three defining equations are::

    K_pe = f K_ae            (degree of entanglement)
    s/d  = 4 g phi0          (discriminating slit A from slit B)
    lambda/s = 2 h w/d       (fringe resolution)

with ``x = w d / 2s``.  Solving them gives ``phi0 = 1/(32 pi f g^2 h)`` and
``w = lambda / (8 g h phi0)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .geometry import OpticalLayout, zone_axial_extent

WINDOW = (0.5, 1.0)

PAPER_WAVELENGTH = 702e-9
PAPER_PHI0 = 2e-3
PAPER_SLIT_DISTANCE = 0.6


@dataclass(frozen=True)
class DesignParams:
    f: float
    g: float
    h: float

    @property
    def fg2h(self) -> float:
        return self.f * self.g ** 2 * self.h

    @property
    def g2h(self) -> float:
        return self.g ** 2 * self.h

    @property
    def hg2(self) -> float:
        return self.h * self.g ** 2


@dataclass(frozen=True)
class EntanglementMeasures:
    k_pe: float
    k_ae: float
    ratio: float
    in_window: bool


@dataclass(frozen=True)
class FeasibilityReport:
    """Each flag is the sign test of its margin.

    Margins: resolution ``lambda/s - w/d`` and discrimination ``s/d - phi0`` in
    radians, width ``lambda/phi0 - w`` in meters, window
    ``min(ratio - 0.5, 1 - ratio)`` dimensionless.
    """

    resolution_ok: bool
    discrimination_ok: bool
    width_ok: bool
    window_ok: bool
    resolution_margin: float
    discrimination_margin: float
    width_margin: float
    window_margin: float
    # w < lambda d / s, the width bound at this particular slit separation
    separation_width_bound: float

    @property
    def feasible(self) -> bool:
        return self.resolution_ok and self.discrimination_ok and self.width_ok and self.window_ok


def _require_positive(**values):
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be strictly positive, got {v!r}")


def phi0_from_fgh(p: DesignParams) -> float:
    _require_positive(f=p.f, g=p.g, h=p.h)
    return 1.0 / (32.0 * math.pi * p.f * p.g ** 2 * p.h)


def width_from_design(wavelength: float, phi0: float, p: DesignParams) -> float:
    _require_positive(wavelength=wavelength, phi0=phi0, g=p.g, h=p.h)
    return wavelength / (8.0 * p.g * p.h * phi0)


def layout_from_design(wavelength: float, phi0: float, p: DesignParams, d: float,
                       crystal_thickness: float | None = None, **plumbing) -> OpticalLayout:
    """Build the bench for a design point.

    ``x`` defaults to ``w d / 2s``.  ``f`` does not enter the layout; it is
    recovered by :func:`params_from_layout` only when ``phi0`` equals
    ``phi0_from_fgh(p)``.  Extra keyword arguments (slit_width,
    screen_distance, ...) pass through to :class:`OpticalLayout`.
    """
    _require_positive(wavelength=wavelength, phi0=phi0, f=p.f, g=p.g, h=p.h, d=d)
    s = 4.0 * p.g * phi0 * d
    w = width_from_design(wavelength, phi0, p)
    x = w * d / (2.0 * s) if crystal_thickness is None else crystal_thickness
    return OpticalLayout(wavelength=wavelength, phi0=phi0, source_width=w,
                         crystal_thickness=x, slit_distance=d, slit_separation=s,
                         **plumbing)


def entanglement_measures(layout: OpticalLayout) -> EntanglementMeasures:
    k_pe = layout.crystal_thickness / layout.wavelength
    k_ae = (math.pi / 2.0) / layout.phi0
    ratio = k_ae / k_pe if k_pe > 0 else math.inf
    return EntanglementMeasures(k_pe, k_ae, ratio, WINDOW[0] < ratio < WINDOW[1])


def params_from_layout(layout: OpticalLayout) -> DesignParams:
    g = layout.separation_angle / (4.0 * layout.phi0)
    h = (layout.wavelength / layout.slit_separation) / (
        2.0 * layout.source_width / layout.slit_distance)
    m = entanglement_measures(layout)
    return DesignParams(f=m.k_pe / m.k_ae, g=g, h=h)


def check_feasibility(layout: OpticalLayout) -> FeasibilityReport:
    lam, w, d, s = layout.wavelength, layout.source_width, layout.slit_distance, layout.slit_separation
    resolution = lam / s - w / d
    discrimination = s / d - layout.phi0
    width = lam / layout.phi0 - w
    ratio = entanglement_measures(layout).ratio
    window = min(ratio - WINDOW[0], WINDOW[1] - ratio)
    return FeasibilityReport(
        resolution_ok=resolution > 0,
        discrimination_ok=discrimination > 0,
        width_ok=width > 0,
        window_ok=window > 0,
        resolution_margin=resolution,
        discrimination_margin=discrimination,
        width_margin=width,
        window_margin=window,
        separation_width_bound=lam * d / s,
    )


def paper_layout(**plumbing) -> OpticalLayout:
    """The concrete bench with the quoted values w = 1.75e-5 m and s = 7.2 mm."""
    w = 1.75e-5
    s = 6 * PAPER_PHI0 * PAPER_SLIT_DISTANCE
    return OpticalLayout(wavelength=PAPER_WAVELENGTH, phi0=PAPER_PHI0, source_width=w,
                         crystal_thickness=w * PAPER_SLIT_DISTANCE / (2 * s),
                         slit_distance=PAPER_SLIT_DISTANCE, slit_separation=s, **plumbing)


THRESHOLD_PARAMS = DesignParams(1.0, 1.0, 1.0)


# --- sweeps ---------------------------------------------------------------

SWEEP_COLUMNS = (
    "f", "g", "h", "phi0", "w", "s", "d", "x", "k_pe", "k_ae", "ratio", "g2h",
    "resolution_ok", "discrimination_ok", "width_ok", "window_ok",
    "resolution_margin", "discrimination_margin", "width_margin", "window_margin",
)


@dataclass(frozen=True)
class SweepRow:
    params: DesignParams
    layout: OpticalLayout
    measures: EntanglementMeasures
    report: FeasibilityReport

    def as_record(self) -> dict:
        p, lay, m, r = self.params, self.layout, self.measures, self.report
        return {
            "f": p.f, "g": p.g, "h": p.h, "phi0": lay.phi0,
            "w": lay.source_width, "s": lay.slit_separation, "d": lay.slit_distance,
            "x": lay.crystal_thickness, "k_pe": m.k_pe, "k_ae": m.k_ae, "ratio": m.ratio,
            "g2h": p.g2h,
            "resolution_ok": r.resolution_ok, "discrimination_ok": r.discrimination_ok,
            "width_ok": r.width_ok, "window_ok": r.window_ok,
            "resolution_margin": r.resolution_margin,
            "discrimination_margin": r.discrimination_margin,
            "width_margin": r.width_margin, "window_margin": r.window_margin,
        }


def evaluate_design(p: DesignParams, wavelength: float = PAPER_WAVELENGTH,
                    d: float = PAPER_SLIT_DISTANCE, phi0: float | None = None,
                    **plumbing) -> SweepRow:
    phi0 = phi0_from_fgh(p) if phi0 is None else phi0
    layout = layout_from_design(wavelength, phi0, p, d, **plumbing)
    return SweepRow(p, layout, entanglement_measures(layout), check_feasibility(layout))


def sweep_designs(grid: dict, wavelength: float = PAPER_WAVELENGTH,
                  d: float = PAPER_SLIT_DISTANCE, **plumbing) -> list[SweepRow]:
    """Evaluate every point of a Cartesian grid over ``f``, ``g``, ``h``, ``phi0``.

    An empty grid, or any empty axis, yields an empty table; otherwise axes
    missing from ``grid`` default to 1.  When ``phi0`` is an axis, ``h``
    is solved from ``phi0 * 32 pi f g^2 h = 1`` and may not be given as well.
    Rows come back in lexicographic order of the grid indices (f, g, h/phi0).
    """
    unknown = set(grid) - {"f", "g", "h", "phi0"}
    if unknown:
        raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
    if "phi0" in grid and "h" in grid:
        raise ValueError("sweep over phi0 fixes h; give either 'h' or 'phi0', not both")
    if not grid or any(len(v) == 0 for v in grid.values()):
        return []
    axes = [list(grid.get("f", [1.0])), list(grid.get("g", [1.0]))]
    solve_h = "phi0" in grid
    axes.append(list(grid["phi0"]) if solve_h else list(grid.get("h", [1.0])))

    rows = []
    for f, g, third in itertools.product(*axes):
        if solve_h:
            phi0 = float(third)
            p = DesignParams(float(f), float(g), 1.0 / (32 * math.pi * f * g ** 2 * phi0))
        else:
            p = DesignParams(float(f), float(g), float(third))
            phi0 = None
        rows.append(evaluate_design(p, wavelength, d, phi0=phi0, **plumbing))
    return rows


__all__ = [
    "DesignParams", "EntanglementMeasures", "FeasibilityReport", "SweepRow",
    "SWEEP_COLUMNS", "THRESHOLD_PARAMS", "phi0_from_fgh", "width_from_design",
    "layout_from_design", "params_from_layout", "entanglement_measures",
    "check_feasibility", "evaluate_design", "sweep_designs", "paper_layout",
    "zone_axial_extent",
]
