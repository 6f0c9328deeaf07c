"""
Clock synchronisation between the two time taggers.

The coarse offset comes from the rising edge of the calibration burst in
each stream and is refined on the coincidence cross-correlation. Skew is
tracked by re-estimating the offset once per segment of stream time and
fitting a line through the estimates and then through the matched pairs.
"""

import logging
from typing import Optional

import numpy as np

from .coincidence import ClockModel, match_coincidences
from .session import PS_PER_MS, PS_PER_S, DetectionStream

logger = logging.getLogger("qotp")

EDGE_WINDOW = 1 * PS_PER_MS
EDGE_HISTORY = 10 * PS_PER_MS
EDGE_FACTOR = 10.0
EDGE_MIN_EVENTS = 5
# Differences examined per search; larger candidate sets are thinned.
MAX_CANDIDATES = 5_000_000


class CalibrationEdgeNotFound(Exception):
    """No rising edge in the detection rate; the stream is empty or too short."""

    pass


def find_calibration_edge(
    stream: DetectionStream,
    window: int = EDGE_WINDOW,
    history: int = EDGE_HISTORY,
    factor: float = EDGE_FACTOR,
    min_events: int = EDGE_MIN_EVENTS,
) -> int:
    """
    First timestamp where the count in the following `window` exceeds
    `factor` times the average count per window over the preceding `history`.
    """
    t = stream.timestamps
    if len(t) < min_events:
        raise CalibrationEdgeNotFound(
            f"{stream.party.name} stream has {len(t)} detections, need at least {min_events}"
        )
    index = np.arange(len(t))
    counts = np.searchsorted(t, t + window, side="left") - index
    preceding = index - np.searchsorted(t, t - history, side="left")
    average = preceding * (window / history)
    rising = (counts >= min_events) & (counts > factor * average)
    if not rising.any():
        raise CalibrationEdgeNotFound(f"No calibration edge in the {stream.party.name} stream")
    return int(t[int(np.argmax(rising))])


def _pair_differences(
    a: np.ndarray, b: np.ndarray, guess: float, search_range: float
) -> np.ndarray:
    """All b - a - guess with |b - a - guess| <= search_range."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros(0)
    lo = np.searchsorted(a, b - guess - search_range, side="left")
    hi = np.searchsorted(a, b - guess + search_range, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total > MAX_CANDIDATES:
        keep = np.linspace(0, len(b) - 1, max(1, len(b) * MAX_CANDIDATES // total)).astype(int)
        b, lo, counts = b[keep], lo[keep], counts[keep]
        total = int(counts.sum())
    b_idx = np.repeat(np.arange(len(b)), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    a_idx = np.arange(total) - starts + np.repeat(lo, counts)
    return b[b_idx] - a[a_idx] - guess


def _peak_offset(
    a: np.ndarray, b: np.ndarray, guess: float, search_range: float, bin_width: float
) -> Optional[float]:
    d = _pair_differences(
        np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), guess, search_range
    )
    if len(d) == 0:
        return None
    bins = ((d + search_range) // bin_width).astype(np.int64)
    hist = np.bincount(bins)
    peak = int(np.argmax(hist))
    if hist[peak] < 3:
        return None
    center = -search_range + (peak + 0.5) * bin_width
    near = d[np.abs(d - center) <= bin_width]
    return guess + float(np.median(near))


def find_clock_offset(
    alice: DetectionStream,
    bob: DetectionStream,
    search_range: int = 2 * PS_PER_MS,
    window: int = 6_000,
    calibration: int = 100 * PS_PER_MS,
) -> int:
    """
    Offset t_bob - t_alice from the calibration edges, refined by maximising
    the coincidence count over the calibration burst.
    """
    edge_a = find_calibration_edge(alice)
    edge_b = find_calibration_edge(bob)
    coarse = edge_b - edge_a
    burst_a = alice.window(edge_a, edge_a + calibration).timestamps
    burst_b = bob.window(edge_b - search_range, edge_b + calibration + search_range).timestamps
    refined = _peak_offset(burst_a, burst_b, coarse, search_range, window)
    if refined is None:
        logger.warning("Cross-correlation found no peak; using the coarse edge offset")
        return int(coarse)
    logger.debug(f"Clock offset: coarse {coarse} ps, refined {refined:.0f} ps")
    return int(round(refined))


def _fit_pairs(alice: DetectionStream, bob: DetectionStream, model: ClockModel, window: float) -> ClockModel:
    pairs = match_coincidences(alice, bob, model, window)
    if len(pairs) < 3:
        return model
    ta = alice.timestamps[pairs.alice_index].astype(np.float64)
    d = bob.timestamps[pairs.bob_index].astype(np.float64) - ta
    slope, intercept = np.polyfit(ta, d, 1)
    residual = d - (intercept + slope * ta)
    mad = float(np.median(np.abs(residual - np.median(residual))))
    good = np.abs(residual) <= max(5.0 * 1.4826 * mad, 1.0)
    if good.sum() >= 3:
        slope, intercept = np.polyfit(ta[good], d[good], 1)
    return ClockModel(offset=float(intercept), skew_ppm=float(slope) * 1e6)


def estimate_clock_drift(
    alice: DetectionStream,
    bob: DetectionStream,
    offset: float,
    window: int = 6_000,
    segment: int = PS_PER_S,
    slice_half_width: int = 5 * PS_PER_MS,
    search_range: int = 50_000_000,
    slice_bin: int = 250_000,
) -> ClockModel:
    """
    Piecewise offset re-estimation once per `segment` of Alice's stream time,
    a least-squares line through the estimates, then a refit on the pairs
    matched under that line.
    """
    if len(alice) == 0 or len(bob) == 0:
        return ClockModel(offset=float(offset))
    start, stop = int(alice.timestamps[0]), int(alice.timestamps[-1])
    times: list[float] = []
    offsets: list[float] = []
    model = ClockModel(offset=float(offset))
    center = start + segment // 2
    while center < stop:
        prediction = model.offset_at(center)
        a = alice.window(center - slice_half_width, center + slice_half_width).timestamps
        b = bob.window(
            int(center + prediction - slice_half_width - search_range),
            int(center + prediction + slice_half_width + search_range),
        ).timestamps
        local = _peak_offset(a, b, prediction, search_range, slice_bin)
        if local is not None:
            times.append(float(center))
            offsets.append(local)
            if len(times) >= 2:
                slope, intercept = np.polyfit(times, offsets, 1)
                model = ClockModel(offset=float(intercept), skew_ppm=float(slope) * 1e6)
            else:
                model = ClockModel(offset=local - center * model.skew_ppm * 1e-6, skew_ppm=model.skew_ppm)
        center += segment
    logger.debug(f"Piecewise clock estimates: {len(times)} segments, {model}")

    for match_window in (max(window, 1_000_000), window):
        model = _fit_pairs(alice, bob, model, match_window)
    logger.debug(f"Clock model after pair refit: {model}")
    return model
