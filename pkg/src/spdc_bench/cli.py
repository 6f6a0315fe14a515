"""``spdc-bench`` command line: design, simulate, analyze.

Exit codes: 0 success, 1 infeasible design under ``--strict``, 2 configuration
error, 3 runtime error, 4 fit non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import io
from .config import ConfigError, RunConfig, layout_digest, load_preset, parse_config
from .design import (SWEEP_COLUMNS, SweepRow, check_feasibility, entanglement_measures,
                     params_from_layout, sweep_designs)
from .fringes import (PERIOD_OK_TOLERANCE, FringeFitError, FringeFitter,
                      both_component_visibility, fringe_period_check)
from .geometry import OpticalLayout, both_access_fraction, double_slit_count_fraction
from .montecarlo import rayleigh_ks_statistic, run_experiment, sample_pairs

log = logging.getLogger("spdc_bench")

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_FIT = 0, 1, 2, 3, 4


def _add_source(p: argparse.ArgumentParser, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--config", type=Path, help="run configuration JSON")
    g.add_argument("--paper", action="store_true", help="the concrete design preset")
    g.add_argument("--threshold", action="store_true", help="the f = g = h = 1 preset")


def _load_config(args) -> RunConfig | None:
    if getattr(args, "paper", False):
        return load_preset("paper")
    if getattr(args, "threshold", False):
        return load_preset("threshold")
    if getattr(args, "config", None) is not None:
        try:
            data = args.config.read_bytes()
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from exc
        try:
            return parse_config(data)
        except ConfigError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
    return None


def design_report(layout: OpticalLayout) -> str:
    p = params_from_layout(layout)
    m = entanglement_measures(layout)
    r = check_feasibility(layout)
    lam = layout.wavelength
    lines = [
        f"wavelength      {lam * 1e9:.1f} nm",
        f"phi0            {layout.phi0 * 1e3:.3f} mrad",
        f"d               {layout.slit_distance * 1e3:.1f} mm",
        f"s               {layout.slit_separation * 1e3:.3f} mm   (s/d = {layout.separation_angle * 1e3:.2f} mrad)",
        f"w               {layout.source_width * 1e3:.4g} mm   ({layout.source_width / lam:.2f} lambda)",
        f"x               {layout.crystal_thickness * 1e3:.3f} mm",
        f"zone extent wd/s {layout.source_width * layout.slit_distance / layout.slit_separation * 1e3:.3f} mm",
        f"f, g, h         {p.f:.4f}, {p.g:.4f}, {p.h:.4f}",
        f"fg^2h           {p.fg2h:.3f}",
        f"hg^2            {p.hg2:.3f}",
        f"g^2h            {p.g2h:.3f}   (= 1/({32 * math.pi * p.f:.1f} phi0))",
        f"K_pe            {m.k_pe:.4g}",
        f"K_ae            {m.k_ae:.4g}",
        f"K_ae/K_pe       {m.ratio:.4f}   window (0.5, 1): {'yes' if m.in_window else 'no'}",
        f"resolution      {'ok' if r.resolution_ok else 'FAIL'}   lambda/s - w/d = {r.resolution_margin:.4g} rad",
        f"discrimination  {'ok' if r.discrimination_ok else 'FAIL'}   s/d - phi0 = {r.discrimination_margin:.4g} rad",
        f"width           {'ok' if r.width_ok else 'FAIL'}   lambda/phi0 - w = {r.width_margin:.4g} m",
        f"width bound     w < lambda d/s = {r.separation_width_bound / lam:.1f} lambda",
    ]
    if layout.zone_contained:
        p_both = both_access_fraction(layout)
        lines.append(f"both-access     {p_both:.4f}   double-slit count share {double_slit_count_fraction(p_both):.4f}")
    return "\n".join(lines)


def cmd_design(args) -> int:
    config = _load_config(args)
    status = EXIT_OK
    if config is not None:
        layout = config.resolved_layout
        print(design_report(layout))
        if args.strict and not check_feasibility(layout).feasible:
            status = EXIT_INFEASIBLE
    rows = []
    if args.sweep is not None:
        text = Path(args.sweep).read_text() if Path(args.sweep).is_file() else args.sweep
        try:
            grid = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--sweep: malformed JSON: {exc}") from exc
        if not isinstance(grid, dict):
            raise ConfigError("--sweep: expected an object mapping axis -> list of values")
        kw = {}
        if config is not None:
            kw = {"wavelength": config.resolved_layout.wavelength,
                  "d": config.resolved_layout.slit_distance}
        try:
            rows = sweep_designs(grid, **kw)
        except ValueError as exc:
            raise ConfigError(f"--sweep: {exc}") from exc
        print(f"sweep: {len(rows)} rows")
    elif config is not None:
        layout = config.resolved_layout
        rows = [SweepRow(params_from_layout(layout), layout, entanglement_measures(layout),
                         check_feasibility(layout))]
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        io.write_table_csv(args.out / "design.csv", SWEEP_COLUMNS, [r.as_record() for r in rows])
    elif args.sweep is not None:
        io.write_table_csv(sys.stdout, SWEEP_COLUMNS, [r.as_record() for r in rows])
    return status


def cmd_simulate(args) -> int:
    config = _load_config(args)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.pairs is not None:
        changes["n_pairs"] = args.pairs
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    config = config.replace(**changes) if changes else config
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config.experiment(), config.n_pairs, config.seed, config.workers)
    io.write_histogram_csv(out / "histogram.csv", result)
    extra = {}
    if config.two_axis:
        n = min(config.n_pairs, 1_000_000)
        batch = sample_pairs(config.experiment().layout, config.seed, 0, n, two_axis=True)
        extra["two_axis_ks_statistic"] = rayleigh_ks_statistic(
            batch.deviation, batch.deviation_perp, config.experiment().layout.phi0)
    io.write_metadata(out / "metadata.json", config, result, extra)
    c = result.counters
    print(f"pairs {c['n_pairs_sampled']}  blocked {c['n_blocked']}  single {c['n_single_access']}"
          f"  both {c['n_both_access']}  single transmitted {c['n_single_transmitted']}")
    if c["n_both_access"] + c["n_single_access"]:
        print(f"both-access share {result.both_access_share:.4f}"
              f"  double-slit count share {result.double_slit_count_share:.4f}")
    print(f"digest {result.digest}")
    print(f"wrote {out / 'histogram.csv'} and {out / 'metadata.json'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    hist = io.read_histogram_csv(args.histogram)
    meta_path = args.histogram.parent / "metadata.json"
    meta = io.read_metadata(meta_path) if meta_path.is_file() else None
    config = _load_config(args)
    if config is not None:
        layout = config.experiment().layout
        if meta is not None and meta.get("layout_digest") != layout_digest(layout):
            if not args.force:
                raise ConfigError(
                    f"{meta_path}: histogram was simulated with a different layout "
                    f"(digest {meta.get('layout_digest', '?')[:12]}); pass --force to analyze anyway")
            log.warning("layout digest mismatch ignored (--force)")
    elif meta is not None:
        values = dict(meta["resolved_layout"])
        layout = OpticalLayout(**values, allow_zero_thickness=values["crystal_thickness"] == 0)
    else:
        raise ConfigError("no layout source: give --config/--paper/--threshold "
                          "or keep metadata.json next to the histogram")

    counts = hist[args.column]
    fitter = FringeFitter(period_hint=layout.fringe_period,
                          envelope_halfwidth=layout.envelope_halfwidth,
                          reference_visibility=both_component_visibility(layout))
    fitter.fit(hist["bin_center_m"], counts)
    analysis = fitter.analysis_
    margin = fringe_period_check(analysis, layout)
    record = {"digest": meta.get("digest", "") if meta else "", "column": args.column,
              **analysis.as_record(), "period_margin": margin,
              "period_ok": abs(margin) <= PERIOD_OK_TOLERANCE}
    out = args.out or args.histogram.parent
    out.mkdir(parents=True, exist_ok=True)
    io.write_table_csv(out / f"analysis_{args.column}.csv", list(record), [record])
    io.write_plot_data(out / f"plot_{args.column}.dat", hist["bin_center_m"],
                       fitter.predict(hist["bin_center_m"]))
    for k, v in record.items():
        print(f"{k:16s} {v}")
    if not analysis.converged:
        log.error("fringe fit did not converge: %s", analysis.diagnostics)
        return EXIT_FIT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdc-bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="closed-form design numbers, feasibility and sweeps")
    _add_source(d, required=False)
    d.add_argument("--sweep", help="grid as JSON (inline or file): {\"phi0\": [...], \"f\": [...]}")
    d.add_argument("--out", type=Path)
    d.add_argument("--strict", action="store_true", help="exit 1 if the design is infeasible")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="Monte Carlo run -> histogram CSV + metadata JSON")
    _add_source(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--pairs", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="fringe fit of a simulator histogram")
    a.add_argument("histogram", type=Path)
    _add_source(a, required=False)
    a.add_argument("--column", default="total", choices=io.HISTOGRAM_HEADER[1:])
    a.add_argument("--out", type=Path)
    a.add_argument("--force", action="store_true", help="analyze despite a layout digest mismatch")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FringeFitError as exc:
        print(f"fit error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_FIT
    except (io.HistogramFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
