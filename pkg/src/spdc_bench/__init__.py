"""Monte Carlo simulator and closed-form design solver for an SPDC double-slit
bench with coincidence-gated idler detection."""
from .design import (DesignParams, EntanglementMeasures, FeasibilityReport, check_feasibility,
                     entanglement_measures, layout_from_design, paper_layout, params_from_layout,
                     phi0_from_fgh, sweep_designs, width_from_design)
from .fringes import (FringeAnalysis, FringeFitter, double_slit_fraction_estimate, fit_fringes,
                      fringe_period_check)
from .geometry import (LayoutError, OpticalLayout, SlitAccess, SourcePoint, both_access_fraction,
                       classify_slit_access, double_slit_count_fraction, zone_axial_extent)
from .montecarlo import (DetectionRecord, ExperimentConfig, IdlerOutcome, PhotonPair, RunResult,
                         incoherent_source_visibility_check, propagate_idler, run_experiment,
                         sample_pair, signal_screen_density)

__version__ = "0.1.0"
