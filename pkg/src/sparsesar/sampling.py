"""Azimuth sampling patterns: constructors, feasibility projection, interval
statistics and CSV round-tripping.

A pattern is a sorted set of continuous pulse times inside a half-open
aperture ``[t_start, t_end)`` with a minimum spacing between consecutive
pulses.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# relative slack on the spacing constraint, absorbs rounding in projections
_SPACING_RTOL = 1e-9


@dataclass(frozen=True)
class SamplingPattern:
    positions: np.ndarray
    aperture: tuple[float, float]
    min_spacing: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        object.__setattr__(self, "positions", pos)
        t0, t1 = map(float, self.aperture)
        object.__setattr__(self, "aperture", (t0, t1))
        if not t1 > t0:
            raise ValueError("aperture must have positive length")
        if self.min_spacing < 0:
            raise ValueError("min_spacing must be non-negative")
        if pos.size < 1:
            raise ValueError("pattern must contain at least one position")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if pos[0] < t0 or pos[-1] >= t1:
            raise ValueError(f"positions must lie in [{t0}, {t1})")
        gaps = np.diff(pos)
        if np.any(gaps <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(gaps < self.min_spacing * (1.0 - _SPACING_RTOL)):
            raise ValueError(f"gaps below min_spacing {self.min_spacing}")

    @property
    def budget(self) -> int:
        return self.positions.size

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    def __len__(self) -> int:
        return self.positions.size


def _aperture(aperture) -> tuple[float, float]:
    t0, t1 = map(float, aperture)
    if not t1 > t0:
        raise ValueError("aperture must have positive length")
    return t0, t1


def uniform_pattern(aperture, budget: int) -> SamplingPattern:
    """Equispaced pulses at stride ``length / budget`` starting at ``t_start``."""
    t0, t1 = _aperture(aperture)
    if budget < 2:
        raise ValueError("budget must be at least 2")
    stride = (t1 - t0) / budget
    return SamplingPattern(t0 + stride * np.arange(budget), (t0, t1), 0.0)


def jittered_uniform_pattern(aperture, budget: int, jitter: float = 0.1, seed: int = 0, min_spacing: float = 0.0) -> SamplingPattern:
    """Uniform pattern with seeded jitter of up to ``jitter * stride``, projected feasible."""
    base = uniform_pattern(aperture, budget)
    stride = (base.aperture[1] - base.aperture[0]) / budget
    rng = np.random.default_rng(seed)
    raw = base.positions + rng.uniform(-jitter, jitter, budget) * stride
    return project_constraints(raw, base.aperture, min_spacing)


def poisson_disk_pattern(aperture, budget: int, min_spacing: float, seed: int, max_attempts: int = 100_000) -> SamplingPattern:
    """Dart throwing: uniform candidates are rejected when closer than
    ``min_spacing`` to an accepted pulse, until ``budget`` pulses are placed."""
    t0, t1 = _aperture(aperture)
    if budget < 1:
        raise ValueError("budget must be positive")
    if budget * min_spacing >= t1 - t0:
        raise ValueError("budget * min_spacing must be below the aperture length")
    rng = np.random.default_rng(seed)
    accepted: list[float] = []
    attempts = 0
    while len(accepted) < budget:
        if attempts >= max_attempts:
            raise ValueError(
                f"could not place {budget} pulses with spacing {min_spacing} after {max_attempts} attempts"
            )
        attempts += 1
        t = t0 + (t1 - t0) * rng.random()
        if t >= t1:
            continue
        if min_spacing > 0 and accepted:
            if np.min(np.abs(np.asarray(accepted) - t)) < min_spacing:
                continue
        elif t in accepted:
            continue
        accepted.append(t)
    return SamplingPattern(np.sort(accepted), (t0, t1), min_spacing)


def staggered_pattern(aperture, budget: int, pri_min: float, pri_max: float, ramp_length: int | None = None) -> SamplingPattern:
    """Pulse times whose PRIs sweep linearly from ``pri_min`` to ``pri_max``
    in ``ramp_length`` steps and then repeat.

    ``ramp_length`` defaults to ``budget - 1`` (a single sweep).  Raises if
    the last pulse falls outside the aperture.
    """
    t0, t1 = _aperture(aperture)
    if budget < 2:
        raise ValueError("budget must be at least 2")
    if not (0 < pri_min <= pri_max):
        raise ValueError("need 0 < pri_min <= pri_max")
    if ramp_length is None:
        ramp_length = budget - 1
    if ramp_length < 1:
        raise ValueError("ramp_length must be positive")
    ramp = np.linspace(pri_min, pri_max, ramp_length) if ramp_length > 1 else np.array([pri_min])
    pris = ramp[np.arange(budget - 1) % ramp_length]
    positions = t0 + np.concatenate(([0.0], np.cumsum(pris)))
    if positions[-1] >= t1:
        raise ValueError(f"staggered sequence spans {positions[-1] - t0}, longer than the aperture")
    return SamplingPattern(positions, (t0, t1), pri_min)


def staggered_for_budget(aperture, budget: int, spread: float = 0.5, ramp_length: int | None = None) -> SamplingPattern:
    """Staggered pattern whose mean PRI fills the aperture at the given budget.

    The PRIs ramp over ``[1 - spread/2, 1 + spread/2]`` times a base PRI
    chosen so that the sequence spans just under the aperture length.
    """
    t0, t1 = _aperture(aperture)
    if ramp_length is None:
        ramp_length = budget - 1
    ramp = np.linspace(1.0 - spread / 2.0, 1.0 + spread / 2.0, ramp_length) if ramp_length > 1 else np.ones(1)
    unit_span = ramp[np.arange(budget - 1) % ramp_length].sum()
    # leave the mean stride free at the end so the wrap-around gap is comparable
    base = (t1 - t0) * (budget - 1) / budget / unit_span
    return staggered_pattern((t0, t1), budget, base * ramp[0], base * ramp[-1], ramp_length)


def _pav_nondecreasing(y: np.ndarray) -> np.ndarray:
    """Least-squares nondecreasing fit (pool adjacent violators)."""
    means: list[float] = []
    counts: list[int] = []
    for v in y:
        means.append(float(v))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            c = counts[-2] + counts[-1]
            m = (means[-2] * counts[-2] + means[-1] * counts[-1]) / c
            means[-2:] = [m]
            counts[-2:] = [c]
    return np.repeat(means, counts)


def is_feasible(positions, aperture, min_spacing: float) -> bool:
    try:
        SamplingPattern(positions, aperture, min_spacing)
    except ValueError:
        return False
    return True


def project_constraints(raw_positions, aperture, min_spacing: float = 0.0) -> SamplingPattern:
    """Nearest feasible pattern (in the least-squares sense) to ``raw_positions``.

    Positions are sorted, shifted by ``i * min_spacing`` so the spacing
    constraint becomes monotonicity, repaired with pool-adjacent-violators,
    clamped into the aperture and shifted back.  Feasible input is returned
    unchanged.
    """
    t0, t1 = _aperture(aperture)
    x = np.sort(np.asarray(raw_positions, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise ValueError("no positions to project")
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    if min_spacing < 0:
        raise ValueError("min_spacing must be non-negative")
    if m * min_spacing > t1 - t0:
        raise ValueError(f"{m} pulses with spacing {min_spacing} cannot fit in the aperture")
    if is_feasible(x, (t0, t1), min_spacing):
        return SamplingPattern(x, (t0, t1), min_spacing)

    # strictly increasing output needs a resolvable floor even when min_spacing is zero or tiny
    spacing = max(min_spacing, (t1 - t0) * 1e-9)
    if (m - 1) * spacing >= t1 - t0:
        raise ValueError("aperture too short for the requested pulses")
    idx = np.arange(m)
    y = _pav_nondecreasing(x - idx * spacing)
    # headroom of a few ulps per pulse for the rounding guard below
    slack = 4 * m * np.spacing(max(abs(t0), abs(t1)))
    hi = t1 - (m - 1) * spacing - slack
    y = np.clip(y, t0, max(hi, t0))
    out = y + idx * spacing
    # rounding guard: re-impose the spacing where it slipped by an ulp
    for i in range(1, m):
        if out[i] - out[i - 1] < spacing:
            out[i] = out[i - 1] + spacing
            while out[i] - out[i - 1] < spacing:
                out[i] = np.nextafter(out[i], np.inf)
    if out[-1] >= t1:
        raise ValueError("aperture too short for the requested pulses")
    return SamplingPattern(out, (t0, t1), min_spacing)


def interval_histogram(pattern: SamplingPattern, bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of consecutive pulse gaps; counts sum to ``M - 1``."""
    if pattern.budget < 2:
        raise ValueError("need at least two pulses for an interval histogram")
    gaps = pattern.gaps
    lo, hi = float(gaps.min()), float(gaps.max())
    if hi - lo <= 1e-9 * hi:
        # equal gaps up to rounding: one bin holds everything
        lo, hi = lo - 0.5 * hi, hi + 0.5 * hi
        gaps = np.full_like(gaps, 0.5 * (lo + hi))
    counts, edges = np.histogram(gaps, bins=bins, range=(lo, hi))
    return edges, counts


def save_pattern_csv(pattern: SamplingPattern, path) -> None:
    """One position per line, seconds, 15 significant digits."""
    Path(path).write_text("".join(f"{p:.15g}\n" for p in pattern.positions))


def load_pattern_csv(path, aperture, min_spacing: float = 0.0) -> SamplingPattern:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    return project_constraints([float(ln) for ln in lines], aperture, min_spacing)
