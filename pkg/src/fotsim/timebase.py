"""Site clock models: deterministic time-error evolution plus power-law noise.

A site clock is described by its time error x(t), the amount in seconds by
which the local reading leads true time at true time t.  The deterministic
part is x0 + y0*t + 0.5*d*t**2; on top of that a configurable mix of the
five standard power-law noise classes is sampled on a fixed internal grid.
A clock with x > 0 is fast and emits its pulses early in true time.

Noise amplitude conventions, with dt the sampling interval and w unit white
Gaussian noise:

    white_pm        x_i = amp * w_i                       amp: s (per-sample jitter)
    flicker_pm      x_i = amp * I12(w)_i                  amp: s (per-sample scale)
    white_fm        x_i = amp * sqrt(dt) * cumsum(w)_i    amp: s/sqrt(s) (diffusion)
    flicker_fm      x_i = amp * dt * cumsum(I12(w))_i     amp: 1/sqrt(sample) frequency scale
    random_walk_fm  x_i = amp * dt**1.5 * cumsum2(w)_i    amp: 1/(s*sqrt(s)) frequency diffusion

I12 is the half-order fractional integration filter (1 - z**-1)**(-1/2),
realized by convolution with its binomial impulse response.  The white_pm,
white_fm and random_walk_fm scalings are invariant under resampling; the two
flicker scalings are tied to the grid they are generated on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import ValidationError

NOISE_TYPES = ("white_pm", "flicker_pm", "white_fm", "flicker_fm", "random_walk_fm")

_MIN_CHUNK = 1024


def _half_integration_kernel(n: int) -> np.ndarray:
    # impulse response of (1 - z^-1)^(-1/2): h[0]=1, h[i] = h[i-1]*(i - 1/2)/i
    h = np.empty(n)
    h[0] = 1.0
    for i in range(1, n):
        h[i] = h[i - 1] * (i - 0.5) / i
    return h


def _half_integrate(w: np.ndarray) -> np.ndarray:
    n = w.size
    return fftconvolve(_half_integration_kernel(n), w)[:n]


def _component_series(kind: str, amplitude: float, w: np.ndarray, dt: float) -> np.ndarray:
    if kind == "white_pm":
        return amplitude * w
    if kind == "flicker_pm":
        return amplitude * _half_integrate(w)
    if kind == "white_fm":
        return amplitude * math.sqrt(dt) * np.cumsum(w)
    if kind == "flicker_fm":
        return amplitude * dt * np.cumsum(_half_integrate(w))
    if kind == "random_walk_fm":
        return amplitude * dt ** 1.5 * np.cumsum(np.cumsum(w))
    raise ValidationError(f"unknown noise type {kind!r}; expected one of {NOISE_TYPES}")


@dataclass(frozen=True)
class NoiseProfile:
    """Power-law noise mix for one clock.

    components: sequence of (noise_type, amplitude) pairs; amplitudes >= 0.
    An empty component list describes a noiseless ideal clock.
    """

    components: tuple = ()
    rng_seed: int = 0

    def __post_init__(self):
        comps = tuple((str(kind), float(amp)) for kind, amp in self.components)
        for kind, amp in comps:
            if kind not in NOISE_TYPES:
                raise ValidationError(
                    f"unknown noise type {kind!r}; expected one of {NOISE_TYPES}"
                )
            if amp < 0 or not math.isfinite(amp):
                raise ValidationError(f"noise amplitude for {kind} must be finite and >= 0")
        object.__setattr__(self, "components", comps)


@dataclass
class TimeErrorSeries:
    """Uniformly sampled time-error values x_i at interval tau0."""

    tau0_s: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValidationError("series values must be a non-empty 1-d array")
        if not self.tau0_s > 0:
            raise ValidationError("tau0_s must be > 0")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("series values must all be finite")

    def __len__(self):
        return self.values.size


class _NoiseState:
    """Lazily extended noise realization on a fixed grid.

    Each component draws white noise from its own child stream (split off
    the profile seed).  The colored filters are causal, so an extension is
    computed over the full white prefix; samples already handed out are
    kept verbatim rather than recomputed, which pins every realized value
    for the lifetime of the instance.
    """

    def __init__(self, profile: NoiseProfile, dt: float):
        self.profile = profile
        self.dt = float(dt)
        children = np.random.SeedSequence(profile.rng_seed).spawn(len(profile.components))
        self._rngs = [np.random.default_rng(s) for s in children]
        self._whites = [np.empty(0) for _ in profile.components]
        self._x = np.empty(0)

    def _extend(self, n: int) -> None:
        size = max(_MIN_CHUNK, 1 << (n - 1).bit_length())
        total = np.zeros(size)
        for i, (kind, amp) in enumerate(self.profile.components):
            w = self._whites[i]
            if w.size < size:
                extra = self._rngs[i].standard_normal(size - w.size)
                w = np.concatenate([w, extra])
                self._whites[i] = w
            total += _component_series(kind, amp, w[:size], self.dt)
        realized = self._x.size
        self._x = np.concatenate([self._x, total[realized:]])

    def value_at(self, index: int) -> float:
        if index >= self._x.size:
            self._extend(index + 1)
        return float(self._x[index])

    def prefix(self, n: int) -> np.ndarray:
        if n > self._x.size:
            self._extend(n)
        return self._x[:n].copy()


class ClockModel:
    """A site clock: deterministic offset/frequency/drift plus noise.

    The noise realization is pinned by the profile seed at construction, so
    repeated queries at the same instant return the same value.  Instances
    are single-threaded; parallel Monte-Carlo runs should use independent
    instances (one per seed).
    """

    def __init__(
        self,
        initial_offset_s: float = 0.0,
        frac_frequency: float = 0.0,
        drift_per_s: float = 0.0,
        noise: NoiseProfile | None = None,
        freq_ref_shared: bool = False,
        pulse_period_s: float = 0.010,
        noise_grid_s: float | None = None,
    ):
        if not pulse_period_s > 0:
            raise ValidationError("pulse_period_s must be > 0")
        grid = pulse_period_s if noise_grid_s is None else noise_grid_s
        if not grid > 0:
            raise ValidationError("noise_grid_s must be > 0")
        self.initial_offset_s = float(initial_offset_s)
        self.frac_frequency = float(frac_frequency)
        self.drift_per_s = float(drift_per_s)
        self.noise = noise
        self.freq_ref_shared = bool(freq_ref_shared)
        self.pulse_period_s = float(pulse_period_s)
        self.noise_grid_s = float(grid)
        self._state = (
            _NoiseState(noise, self.noise_grid_s) if noise and noise.components else None
        )

    def time_error(self, t: float) -> float:
        """Time error x(t) in seconds at true time t >= 0."""
        if not (math.isfinite(t) and t >= 0):
            raise ValidationError(f"query time must be finite and >= 0, got {t}")
        x = self.initial_offset_s + self.frac_frequency * t + 0.5 * self.drift_per_s * t * t
        if self._state is not None:
            x += self._state.value_at(int(round(t / self.noise_grid_s)))
        return x

    def pulse_times(self, true_start: float, count: int) -> list[float]:
        """True emission instants of `count` pulses with local marks from true_start.

        The k-th pulse fires when the local clock reads true_start +
        k*pulse_period; to first order that is at true time mark - x(mark),
        exact to O(x*y) for the magnitudes involved here.
        """
        if count < 1:
            raise ValidationError("count must be >= 1")
        out = []
        for k in range(count):
            mark = true_start + k * self.pulse_period_s
            out.append(mark - self.time_error(mark))
        return out

    def with_frequency_reference(self, frac_frequency: float, drift_per_s: float) -> "ClockModel":
        """Copy of this clock with its deterministic frequency terms replaced."""
        return ClockModel(
            initial_offset_s=self.initial_offset_s,
            frac_frequency=frac_frequency,
            drift_per_s=drift_per_s,
            noise=self.noise,
            freq_ref_shared=self.freq_ref_shared,
            pulse_period_s=self.pulse_period_s,
            noise_grid_s=self.noise_grid_s,
        )


def clock_time_error(clock: ClockModel, t: float) -> float:
    """Time error x(t) of `clock` at true time t."""
    return clock.time_error(t)


def pulse_times(clock: ClockModel, true_start: float, count: int) -> list[float]:
    """True emission instants of `count` pulses of `clock`."""
    return clock.pulse_times(true_start, count)


def apply_shared_frequency_reference(
    clocks: Sequence[ClockModel],
    frac_frequency: float = 0.0,
    drift_per_s: float = 0.0,
) -> list[ClockModel]:
    """Force the common reference frequency onto every clock flagged as sharing it.

    Clocks with freq_ref_shared get the reference's frac_frequency and drift,
    so the difference of two such clocks has no deterministic frequency term.
    Unflagged clocks are returned unchanged.
    """
    out = []
    for c in clocks:
        if c.freq_ref_shared:
            out.append(c.with_frequency_reference(frac_frequency, drift_per_s))
        else:
            out.append(c)
    return out


def synthesize_time_error_series(
    profile: NoiseProfile, n: int, tau0_s: float
) -> TimeErrorSeries:
    """Generate a length-n time-error series sampled at tau0_s.

    Bit-reproducible for identical (profile, n, tau0_s).  An empty profile
    yields the all-zero series.
    """
    if n < 4:
        raise ValidationError("n must be >= 4 (minimum for one stability point)")
    if not tau0_s > 0:
        raise ValidationError("tau0_s must be > 0")
    if profile.components:
        values = _NoiseState(profile, tau0_s).prefix(n)
    else:
        values = np.zeros(n)
    meta = {
        "rng_seed": profile.rng_seed,
        "components": list(profile.components),
        "n": n,
        "tau0_s": tau0_s,
    }
    return TimeErrorSeries(tau0_s=tau0_s, values=values, meta=meta)
