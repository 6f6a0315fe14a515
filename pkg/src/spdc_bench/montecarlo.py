"""Monte Carlo simulation of the SPDC double-slit bench.

Each pair index owns a fixed slot in a counter-based random stream, so a run
is a pure function of (config, n_pairs, seed) regardless of how the pair
indices are partitioned across worker processes.

Per pair:

1. emission point uniform over the crystal slab, signal angle uniform over
   ``+/- (s/2d + 3 phi0)``, idler angle ``-theta_s + delta`` with
   ``delta ~ N(0, phi0)``;
2. slit access from the emission point; NONE-access pairs are blocked;
3. a single-access signal is transmitted only when it heads toward the side of
   its accessible slit, so one-slit emitters deliver half the flux of
   two-slit emitters;
4. screen position drawn from the emitter's tabulated screen density;
5. idler resolved at the far detector plane after the signal is recorded.
"""
from __future__ import annotations

import enum
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .geometry import OpticalLayout, SlitAccess, SourcePoint, classify_points

CHUNK_SIZE = 1 << 18
TABLE_POINTS = 2048
WINDOW_PERIODS = 40
BINS_PER_PERIOD = 20
QUANTIZATION = 64
ANGLE_TAIL_SIGMAS = 3.0
NORMALIZATION_POINTS = (1 << 15) + 1


class IdlerOutcome(enum.IntEnum):
    MISS = 0
    DET_A_BAR = 1
    DET_B_BAR = 2


@dataclass(frozen=True)
class PhotonPair:
    origin: SourcePoint
    signal_angle: float
    idler_angle: float
    deviation: float
    # out-of-plane deviation, only drawn in the two-axis validation mode
    deviation_perp: float | None = None


@dataclass(frozen=True)
class DetectionRecord:
    screen_position: float
    slit_access: SlitAccess
    idler_outcome: IdlerOutcome
    signal_seq: int
    idler_seq: int


RECORD_DTYPE = np.dtype([
    ("screen_position", "f8"), ("slit_access", "i1"), ("idler_outcome", "i1"),
    ("signal_seq", "i8"), ("idler_seq", "i8"),
])


@dataclass(frozen=True)
class ExperimentConfig:
    layout: OpticalLayout
    force_both: bool = False
    two_axis: bool = False

    def to_dict(self) -> dict:
        return {"layout": self.layout.to_dict(), "force_both": self.force_both,
                "two_axis": self.two_axis}


@dataclass
class ScreenGrid:
    half_width: float
    nodes: np.ndarray
    edges: np.ndarray

    @classmethod
    def for_layout(cls, layout: OpticalLayout) -> "ScreenGrid":
        period = layout.fringe_period
        half = WINDOW_PERIODS * period
        n_bins = 2 * WINDOW_PERIODS * BINS_PER_PERIOD
        return cls(half, np.linspace(-half, half, TABLE_POINTS),
                   np.linspace(-half, half, n_bins + 1))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def bin_width(self) -> float:
        return self.edges[1] - self.edges[0]


@dataclass
class RunResult:
    bin_edges: np.ndarray
    histogram_total: np.ndarray
    histogram_coinc_A: np.ndarray
    histogram_coinc_B: np.ndarray
    histogram_no_coinc: np.ndarray
    n_pairs_sampled: int
    n_blocked: int
    n_single_access: int
    n_both_access: int
    n_single_transmitted: int
    n_outside_window: int
    seed: int
    digest: str
    records: np.ndarray | None = field(default=None, repr=False)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def both_access_share(self) -> float:
        return self.n_both_access / (self.n_both_access + self.n_single_access)

    @property
    def double_slit_count_share(self) -> float:
        """Counter estimate ``2 n_both / (2 n_both + n_single)``."""
        return 2 * self.n_both_access / (2 * self.n_both_access + self.n_single_access)

    @property
    def counters(self) -> dict:
        return {k: int(getattr(self, k)) for k in (
            "n_pairs_sampled", "n_blocked", "n_single_access", "n_both_access",
            "n_single_transmitted", "n_outside_window")}

    def iter_records(self):
        if self.records is None:
            raise ValueError("run was made without keep_records=True")
        for r in self.records:
            yield DetectionRecord(float(r["screen_position"]), SlitAccess(int(r["slit_access"])),
                                  IdlerOutcome(int(r["idler_outcome"])),
                                  int(r["signal_seq"]), int(r["idler_seq"]))


# --- sampling -------------------------------------------------------------

@dataclass
class PairBatch:
    """Vectorized pairs for consecutive pair indices starting at ``start``."""

    start: int
    y: np.ndarray
    depth: np.ndarray
    signal_angle: np.ndarray
    deviation: np.ndarray
    screen_uniform: np.ndarray
    deviation_perp: np.ndarray | None = None

    def __len__(self):
        return len(self.y)

    @property
    def idler_angle(self) -> np.ndarray:
        return -self.signal_angle + self.deviation

    def pair(self, i: int) -> PhotonPair:
        perp = None if self.deviation_perp is None else float(self.deviation_perp[i])
        return PhotonPair(SourcePoint(float(self.y[i]), float(self.depth[i])),
                          float(self.signal_angle[i]), float(self.idler_angle[i]),
                          float(self.deviation[i]), perp)


def max_signal_angle(layout: OpticalLayout) -> float:
    return layout.separation_angle / 2 + ANGLE_TAIL_SIGMAS * layout.phi0


def _chunk_stream(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _draw_chunk(layout: OpticalLayout, seed: int, chunk: int, n: int,
                two_axis: bool = False) -> PairBatch:
    # always consume a whole chunk so a pair's values never depend on n
    rng = _chunk_stream(seed, chunk)
    m = CHUNK_SIZE
    depth = layout.crystal_thickness * rng.random(m)[:n]
    y = layout.transverse_half_extent * (2 * rng.random(m)[:n] - 1)
    theta = max_signal_angle(layout) * (2 * rng.random(m)[:n] - 1)
    delta = layout.phi0 * rng.standard_normal(m)[:n]
    u = rng.random(m)[:n]
    perp = layout.phi0 * rng.standard_normal(m)[:n] if two_axis else None
    return PairBatch(chunk * CHUNK_SIZE, y, depth, theta, delta, u, perp)


def sample_pairs(layout: OpticalLayout, seed: int, start: int, count: int,
                 two_axis: bool = False) -> PairBatch:
    """Pairs ``start .. start+count-1`` of the stream keyed by ``seed``."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    parts = []
    stop = start + count
    for chunk in range(start // CHUNK_SIZE, -(-stop // CHUNK_SIZE)):
        c0 = chunk * CHUNK_SIZE
        b = _draw_chunk(layout, seed, chunk, CHUNK_SIZE, two_axis)
        lo, hi = max(start, c0) - c0, min(stop, c0 + CHUNK_SIZE) - c0
        parts.append(b.__class__(c0 + lo, b.y[lo:hi], b.depth[lo:hi], b.signal_angle[lo:hi],
                                 b.deviation[lo:hi], b.screen_uniform[lo:hi],
                                 None if b.deviation_perp is None else b.deviation_perp[lo:hi]))
    if not parts:
        empty = np.empty(0)
        return PairBatch(start, empty, empty, empty, empty, empty,
                         empty if two_axis else None)
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    return PairBatch(start, cat("y"), cat("depth"), cat("signal_angle"), cat("deviation"),
                     cat("screen_uniform"), cat("deviation_perp") if two_axis else None)


def sample_pair(seed: int, index: int, layout: OpticalLayout, two_axis: bool = False) -> PhotonPair:
    """The pair at ``index`` of the stream keyed by ``seed``."""
    return sample_pairs(layout, seed, index, 1, two_axis).pair(0)


def deviation_magnitude_cdf(phi, phi0):
    """CDF of the angular deviation magnitude, ``1 - exp(-(phi/phi0)^2 / 2)``.

    This is the normalized form of the shape ``(phi/phi0) exp(-(phi/phi0)^2/2)``,
    the magnitude law of a two-axis Gaussian with per-axis deviation phi0.
    """
    return -np.expm1(-0.5 * (np.asarray(phi) / phi0) ** 2)


def rayleigh_ks_statistic(deviation, deviation_perp, phi0) -> float:
    """Kolmogorov-Smirnov distance of two-axis deviation magnitudes from that CDF."""
    mag = np.hypot(deviation, deviation_perp)
    return float(stats.kstest(mag, lambda r: deviation_magnitude_cdf(r, phi0)).statistic)


# --- signal arm -------------------------------------------------------------

def _screen_intensity(y, depth, access, screen_y, layout: OpticalLayout) -> np.ndarray:
    """Unnormalized screen intensity; leading axes of the emitter arrays broadcast
    against ``screen_y``."""
    lam, s, d, D = (layout.wavelength, layout.slit_separation,
                    layout.slit_distance, layout.screen_distance)
    Y = np.asarray(screen_y, dtype=float)
    direction = Y / np.hypot(Y, D)
    envelope = np.sinc(layout.slit_width * direction / lam) ** 2
    # path differences L_A - L_B written as (a^2 - b^2)/(a + b) to avoid cancellation
    y = np.asarray(y, dtype=float)
    z = d + np.asarray(depth, dtype=float)
    first = -2 * s * y / (np.hypot(s / 2 - y, z) + np.hypot(s / 2 + y, z))
    second = -2 * s * Y / (np.hypot(Y - s / 2, D) + np.hypot(Y + s / 2, D))
    fringe = 2 + 2 * np.cos(2 * np.pi * (first + second) / lam)
    both = np.asarray(access) == SlitAccess.BOTH
    return envelope * np.where(both, fringe, 1.0)


class ScreenDensity:
    """Normalized screen density of one emitter, over the screen window."""

    def __init__(self, origin: SourcePoint, access: SlitAccess, layout: OpticalLayout):
        if access == SlitAccess.NONE:
            raise ValueError("emitter has no slit access; it produces no screen density")
        self.origin, self.access, self.layout = origin, SlitAccess(access), layout
        self.grid = ScreenGrid.for_layout(layout)
        fine = np.linspace(-self.grid.half_width, self.grid.half_width, NORMALIZATION_POINTS)
        self.norm = integrate.simpson(self._raw(fine), x=fine)

    def _raw(self, Y):
        return _screen_intensity(self.origin.transverse, self.origin.depth, self.access, Y,
                                 self.layout)

    def __call__(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        inside = np.abs(Y) <= self.grid.half_width
        return np.where(inside, self._raw(Y) / self.norm, 0.0)

    @property
    def window(self) -> tuple[float, float]:
        return -self.grid.half_width, self.grid.half_width


def signal_screen_density(pair: PhotonPair | SourcePoint, layout: OpticalLayout,
                          access: SlitAccess | None = None) -> ScreenDensity:
    origin = pair.origin if isinstance(pair, PhotonPair) else pair
    if access is None:
        access = SlitAccess(int(classify_points(origin.transverse, origin.depth, layout)))
    return ScreenDensity(origin, access, layout)


class _TableCache:
    """Inverse-CDF tables keyed by quantized emitter cell and access class."""

    def __init__(self, layout: OpticalLayout):
        self.layout = layout
        self.grid = ScreenGrid.for_layout(layout)
        self.step_y = layout.source_width / QUANTIZATION
        self.step_z = layout.crystal_thickness / QUANTIZATION
        self.rows: dict[int, int] = {}
        self.cdf = np.empty((0, TABLE_POINTS))

    def keys(self, y, depth, access):
        iy = np.rint(y / self.step_y).astype(np.int64)
        iz = (np.rint(depth / self.step_z).astype(np.int64) if self.step_z > 0
              else np.zeros_like(iy))
        return ((iy + (1 << 20)) << 16 | iz) << 2 | access.astype(np.int64)

    def _build(self, keys: np.ndarray) -> np.ndarray:
        access = keys & 3
        iz = (keys >> 2) & 0xFFFF
        iy = (keys >> 18) - (1 << 20)
        out = np.empty((len(keys), TABLE_POINTS))
        for lo in range(0, len(keys), 256):
            sl = slice(lo, lo + 256)
            dens = _screen_intensity((iy[sl] * self.step_y)[:, None],
                                     (iz[sl] * self.step_z)[:, None],
                                     access[sl][:, None], self.grid.nodes, self.layout)
            seg = 0.5 * (dens[:, 1:] + dens[:, :-1])
            c = np.concatenate([np.zeros((len(seg), 1)), np.cumsum(seg, axis=1)], axis=1)
            out[sl] = c / c[:, -1:]
            out[sl, -1] = 1.0
        return out

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        uniq, inverse = np.unique(keys, return_inverse=True)
        missing = np.array([k for k in uniq.tolist() if k not in self.rows], dtype=np.int64)
        if len(missing):
            base = len(self.cdf)
            self.cdf = np.concatenate([self.cdf, self._build(missing)])
            for i, k in enumerate(missing.tolist()):
                self.rows[k] = base + i
        row_of = np.array([self.rows[k] for k in uniq.tolist()], dtype=np.int64)
        return row_of[inverse]

    def sample(self, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
        lo = np.zeros(len(rows), dtype=np.int64)
        hi = np.full(len(rows), TABLE_POINTS - 1, dtype=np.int64)
        while True:
            active = hi - lo > 1
            if not active.any():
                break
            mid = (lo + hi) // 2
            go = self.cdf[rows, mid] <= u
            lo = np.where(active & go, mid, lo)
            hi = np.where(active & ~go, mid, hi)
        c_lo, c_hi = self.cdf[rows, lo], self.cdf[rows, hi]
        span = c_hi - c_lo
        frac = np.divide(u - c_lo, span, out=np.full_like(u, 0.5), where=span > 0)
        nodes = self.grid.nodes
        return nodes[lo] + frac * (nodes[1] - nodes[0])


_CACHES: dict[tuple, _TableCache] = {}


def _cache_for(layout: OpticalLayout) -> _TableCache:
    key = tuple(sorted(layout.to_dict().items()))
    if key not in _CACHES:
        _CACHES.clear()
        _CACHES[key] = _TableCache(layout)
    return _CACHES[key]


def transmitted(y, depth, signal_angle, access, layout: OpticalLayout) -> np.ndarray:
    """Whether each signal reaches the screen.

    Both-access emitters always transmit; a single-access emitter transmits
    when the signal heads toward its accessible slit's side of the midline.
    """
    midline = -np.asarray(y) / (layout.slit_distance + np.asarray(depth))
    toward_a = np.asarray(signal_angle) >= midline
    access = np.asarray(access)
    return ((access == SlitAccess.BOTH)
            | ((access == SlitAccess.A_ONLY) & toward_a)
            | ((access == SlitAccess.B_ONLY) & ~toward_a))


# --- idler arm --------------------------------------------------------------

def idler_outcomes(y, idler_angle, layout: OpticalLayout) -> np.ndarray:
    """Detector Abar sits opposite slit A at ``-(s/2d) d'``, Bbar at ``+(s/2d) d'``;
    each accepts a half-width ``rho d'``.  Overlapping detectors resolve to the
    nearer center."""
    dp = layout.idler_distance
    yi = np.asarray(y) + dp * np.asarray(idler_angle)
    center = layout.separation_angle / 2 * dp
    half = layout.detector_angular_radius * dp
    dist_a, dist_b = np.abs(yi + center), np.abs(yi - center)
    out = np.full(yi.shape, IdlerOutcome.MISS, dtype=np.int8)
    out[(dist_b <= half) & (dist_b < dist_a)] = IdlerOutcome.DET_B_BAR
    out[(dist_a <= half) & (dist_a <= dist_b)] = IdlerOutcome.DET_A_BAR
    return out


def propagate_idler(pair: PhotonPair, layout: OpticalLayout) -> IdlerOutcome:
    return IdlerOutcome(int(idler_outcomes(pair.origin.transverse, pair.idler_angle, layout)))


# --- experiment -------------------------------------------------------------

def run_digest(config: ExperimentConfig, n_pairs: int, seed: int) -> str:
    payload = {
        "config": config.to_dict(), "n_pairs": int(n_pairs), "seed": int(seed),
        "chunk_size": CHUNK_SIZE, "table_points": TABLE_POINTS,
        "quantization": [QUANTIZATION, QUANTIZATION], "window_periods": WINDOW_PERIODS,
        "bins_per_period": BINS_PER_PERIOD,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _simulate_chunk(config: ExperimentConfig, seed: int, chunk: int, n: int,
                    keep_records: bool) -> dict:
    layout = config.layout
    cache = _cache_for(layout)
    batch = _draw_chunk(layout, seed, chunk, n)
    if config.force_both:
        access = np.full(n, SlitAccess.BOTH, dtype=np.int8)
    else:
        access = classify_points(batch.y, batch.depth, layout)
    blocked = access == SlitAccess.NONE
    both = access == SlitAccess.BOTH
    single = ~blocked & ~both
    passes = transmitted(batch.y, batch.depth, batch.signal_angle, access, layout)

    idx = np.flatnonzero(passes)
    rows = cache.lookup(cache.keys(batch.y[idx], batch.depth[idx], access[idx]))
    screen = cache.sample(rows, batch.screen_uniform[idx])
    # the idler is only resolved once the signal has been recorded
    outcome = idler_outcomes(batch.y[idx], batch.idler_angle[idx], layout)

    edges = cache.grid.edges
    n_bins = len(edges) - 1
    b = np.floor((screen - edges[0]) / (edges[1] - edges[0])).astype(np.int64)
    b[screen == edges[-1]] = n_bins - 1
    inside = (b >= 0) & (b < n_bins)
    hist = {}
    for name, code in (("coinc_A", IdlerOutcome.DET_A_BAR), ("coinc_B", IdlerOutcome.DET_B_BAR),
                       ("no_coinc", IdlerOutcome.MISS)):
        hist[name] = np.bincount(b[inside & (outcome == code)], minlength=n_bins)
    out = {
        "hist": hist,
        "n_pairs_sampled": n, "n_blocked": int(blocked.sum()),
        "n_single_access": int(single.sum()), "n_both_access": int(both.sum()),
        "n_single_transmitted": int((single & passes).sum()),
        "n_outside_window": int((~inside).sum()),
    }
    if keep_records:
        start = chunk * CHUNK_SIZE
        rec = np.empty(len(idx), dtype=RECORD_DTYPE)
        rec["screen_position"] = screen
        rec["slit_access"] = access[idx]
        rec["idler_outcome"] = outcome
        # signals of a chunk all precede its idlers
        rec["signal_seq"] = 2 * start + idx
        rec["idler_seq"] = 2 * start + n + idx
        out["records"] = rec
    return out


def _simulate_chunks(config, seed, chunks, keep_records):
    return [_simulate_chunk(config, seed, c, n, keep_records) for c, n in chunks]


def run_experiment(config: ExperimentConfig | OpticalLayout, n_pairs: int, seed: int,
                   workers: int = 1, keep_records: bool = False) -> RunResult:
    """Simulate ``n_pairs`` emission events.

    ``workers`` > 1 spreads chunks of the pair-index range over processes
    (0 means one per CPU); results are identical for any worker count.
    """
    if isinstance(config, OpticalLayout):
        config = ExperimentConfig(config)
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    config.layout.validate()
    if config.force_both and config.layout.crystal_thickness != 0:
        raise ValueError("forced both-slit access is only defined for the x = 0 validation mode")

    chunks = [(c, min(CHUNK_SIZE, n_pairs - c * CHUNK_SIZE))
              for c in range(-(-n_pairs // CHUNK_SIZE))]
    workers = (os.cpu_count() or 1) if workers == 0 else workers
    if workers <= 1 or len(chunks) == 1:
        parts = _simulate_chunks(config, seed, chunks, keep_records)
    else:
        groups = [chunks[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunks, config, seed, g, keep_records)
                       for g in groups if g]
            by_chunk = {}
            for g, f in zip([g for g in groups if g], futures):
                by_chunk.update({c: part for (c, _), part in zip(g, f.result())})
        parts = [by_chunk[c] for c, _ in chunks]

    grid = ScreenGrid.for_layout(config.layout)
    hist = {k: sum(p["hist"][k] for p in parts).astype(np.int64)
            for k in ("coinc_A", "coinc_B", "no_coinc")}
    total = hist["coinc_A"] + hist["coinc_B"] + hist["no_coinc"]
    counters = {k: sum(p[k] for p in parts) for k in (
        "n_pairs_sampled", "n_blocked", "n_single_access", "n_both_access",
        "n_single_transmitted", "n_outside_window")}
    records = np.concatenate([p["records"] for p in parts]) if keep_records else None
    return RunResult(grid.edges, total, hist["coinc_A"], hist["coinc_B"], hist["no_coinc"],
                     seed=seed, digest=run_digest(config, n_pairs, seed), records=records,
                     **counters)


def validation_layout(layout: OpticalLayout, source_width: float | None = None) -> OpticalLayout:
    """The x = 0 bench used to isolate source-width fringe washout."""
    changes = {"crystal_thickness": 0.0, "allow_zero_thickness": True}
    if source_width is not None:
        changes["source_width"] = source_width
    return layout.replace(**changes)


def incoherent_source_visibility_check(layout: OpticalLayout, n_pairs: int, seed: int,
                                       workers: int = 1) -> float:
    """Fitted visibility of the total histogram with every emitter on the aperture
    plane and both slits forced open."""
    from .fringes import fit_fringes

    config = ExperimentConfig(validation_layout(layout), force_both=True)
    result = run_experiment(config, n_pairs, seed, workers)
    analysis = fit_fringes(result.bin_centers, result.histogram_total,
                           config.layout.fringe_period,
                           envelope_halfwidth=config.layout.envelope_halfwidth)
    return analysis.visibility
