"""Rolling-window aggregation, phasor extraction, and information-loss estimators.

Five aggregation methods reduce a window before it leaves the edge: `all`
(every sample), `sum`, `average`, `last`, and `phasor` (amplitude/phase of the
dominant spectral bin, two numbers replacing the whole window). The loss
estimators quantify what each method throws away, both analytically and
against an empirical reconstruction.

All functions here are pure and operate on immutable snapshots; durations are
seconds (float), timestamps nanoseconds (int). Phases use the cosine
convention: x(t) = A*cos(2*pi*f*t + phi), phi in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .model import Measurement, MeasurementWindow


class EmptyWindowError(ValueError):
    """Aggregation requested over an empty window."""


class InsufficientSamplesError(ValueError):
    """Phasor extraction needs at least 4 samples."""


class NoFundamentalError(ValueError):
    """All spectral mass sits in the DC bin (constant signal)."""


class UndefinedLossError(ValueError):
    """Loss ratio is undefined for a zero-power signal."""


class AggregateKind(str, Enum):
    ALL = "all"
    SUM = "sum"
    AVERAGE = "average"
    LAST = "last"
    PHASOR = "phasor"

    @classmethod
    def parse(cls, text: str) -> "AggregateKind":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown aggregate kind {text!r}") from None


@dataclass(frozen=True)
class SeriesPayload:
    """The `all` method: every (timestamp, values) pair in window order."""

    points: tuple  # of (timestamp_ns, tuple-of-values)


@dataclass(frozen=True)
class ScalarPayload:
    """One value per channel, tagged with the reducing method."""

    values: tuple
    method: str


@dataclass(frozen=True)
class ChannelPhasor:
    amplitude: float
    phase: float
    frequency: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("phasor amplitude must be >= 0")
        if not (-math.pi < self.phase <= math.pi):
            raise ValueError("phasor phase must lie in (-pi, pi]")


@dataclass(frozen=True)
class PhasorPayload:
    """Per-channel (amplitude, phase, bin frequency) triples."""

    channels: tuple  # of ChannelPhasor


AggregatePayload = Union[SeriesPayload, ScalarPayload, PhasorPayload]


@dataclass(frozen=True)
class LossEstimate:
    """Mean squared reconstruction error, absolute and as a variance fraction."""

    mse: float
    relative: Optional[float]  # None when the original has zero variance


def aggregate(
    window: MeasurementWindow, kind: AggregateKind, sampling_interval: float
) -> AggregatePayload:
    """Reduce a window snapshot with the configured method.

    `sampling_interval` (seconds) is only needed by the phasor method, which
    requires at least 4 samples in the window. Multi-channel windows are
    reduced per channel.
    """
    kind = AggregateKind(kind)
    snap = window.snapshot()
    if not snap:
        raise EmptyWindowError("cannot aggregate an empty window")

    if kind is AggregateKind.ALL:
        return SeriesPayload(tuple((m.timestamp, m.values) for m in snap))

    columns = [[m.values[c] for m in snap] for c in range(window.channels)]
    if kind is AggregateKind.SUM:
        return ScalarPayload(tuple(math.fsum(col) for col in columns), kind.value)
    if kind is AggregateKind.AVERAGE:
        return ScalarPayload(
            tuple(math.fsum(col) / len(col) for col in columns), kind.value
        )
    if kind is AggregateKind.LAST:
        return ScalarPayload(tuple(col[-1] for col in columns), kind.value)

    if len(snap) < 4:
        raise InsufficientSamplesError(
            f"phasor aggregation needs >= 4 samples, window has {len(snap)}"
        )
    phasors = tuple(
        ChannelPhasor(*phasor_dft(col, sampling_interval)) for col in columns
    )
    return PhasorPayload(phasors)


def _fundamental_bin(x: np.ndarray) -> tuple:
    """Spectrum and index of the dominant non-DC bin (ties -> smaller bin)."""
    n = len(x)
    spectrum = np.fft.rfft(x)
    half = n // 2
    mags = np.abs(spectrum[1 : half + 1])
    floor = 32 * n * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x))))
    if mags.size == 0 or float(np.max(mags)) <= floor:
        raise NoFundamentalError("no spectral mass outside the DC bin")
    k = int(np.argmax(mags)) + 1  # argmax returns the first (smallest) maximum
    return spectrum, k


def phasor_dft(samples: Sequence[float], sampling_interval: float) -> tuple:
    """Amplitude, phase and frequency of the dominant spectral bin.

    Returns (A, phi, f_hz) with A = 2|X_k|/N, phi = arg(X_k) in (-pi, pi]
    and f = k/(N*Ts), where k maximises |X_k| over bins 1..floor(N/2).
    The phase references the first sample of the window.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise InsufficientSamplesError("phasor extraction needs >= 4 samples")
    if sampling_interval <= 0:
        raise ValueError("sampling interval must be > 0")
    n = len(x)
    spectrum, k = _fundamental_bin(x)
    coeff = spectrum[k]
    amplitude = 2.0 * abs(coeff) / n
    phase = float(np.angle(coeff))
    if phase <= -math.pi:
        phase += 2 * math.pi
    frequency = k / (n * sampling_interval)
    return amplitude, phase, frequency


def bin_powers(samples: Sequence[float]) -> np.ndarray:
    """Per-bin signal power for bins 0..floor(N/2).

    Satisfies Parseval: the powers sum to mean(x^2). Interior bins fold in
    their negative-frequency mirror; DC and (for even N) Nyquist do not.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    spectrum = np.fft.rfft(x)
    powers = np.abs(spectrum) ** 2 / n**2
    powers[1:] *= 2.0
    if n % 2 == 0:
        powers[-1] /= 2.0
    return powers


def empirical_mse(
    original: Sequence[float], reconstructed: Sequence[float]
) -> LossEstimate:
    """Mean squared error of a reconstruction against the original window.

    `relative` is the MSE as a fraction of the original's variance, clamped to
    [0, 1]; it is None when the original is constant.
    """
    orig = np.asarray(original, dtype=float)
    reco = np.asarray(reconstructed, dtype=float)
    if orig.shape != reco.shape or orig.ndim != 1 or orig.size < 1:
        raise ValueError(f"length mismatch: {orig.shape} vs {reco.shape}")
    mse = float(np.mean((orig - reco) ** 2))
    variance = float(np.var(orig))
    relative = None if variance == 0 else min(1.0, max(0.0, mse / variance))
    return LossEstimate(mse=mse, relative=relative)


def reconstruct(
    payload: AggregatePayload,
    n: int,
    sampling_interval: float,
    window_start: int = 0,
    channel: int = 0,
) -> list:
    """Best-effort reconstruction of one channel of the original window.

    Series payloads are lossless; scalar payloads broadcast their single
    value; phasor payloads re-evaluate A*cos(2*pi*f*t + phi) at the window's
    sample offsets (t = i*Ts relative to `window_start`, the instant the
    phase references).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(payload, SeriesPayload):
        return [values[channel] for _, values in payload.points]
    if isinstance(payload, ScalarPayload):
        value = payload.values[channel]
        if payload.method == "sum":
            value = value / n
        return [value] * n
    if isinstance(payload, PhasorPayload):
        ph = payload.channels[channel]
        t = np.arange(n) * sampling_interval
        return list(ph.amplitude * np.cos(2 * math.pi * ph.frequency * t + ph.phase))
    raise TypeError(f"not an aggregate payload: {payload!r}")


def loss_avg(n: int, sigma2: float) -> float:
    """Analytical MSE of average aggregation over an i.i.d. window: (1 - 1/n) * sigma^2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    return (1.0 - 1.0 / n) * sigma2


def loss_last(rho: float, sigma2: float) -> float:
    """Analytical MSE of last-value aggregation for an AR(1) stream: (1 - rho^2) * sigma^2.

    This is the error of the optimal linear one-step predictor rho*x_last;
    with rho near 1 little information is lost, near 0 most is discarded.
    """
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    return (1.0 - rho * rho) * sigma2


def loss_phasor(samples: Sequence[float]) -> float:
    """Fraction of (mean-removed) signal power outside the fundamental bin.

    Approximately 0 for a steady-state sinusoid; harmonics and noise push it
    toward 1. A DC offset is not counted as signal power.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 4:
        raise InsufficientSamplesError("phasor loss needs >= 4 samples")
    centered = x - x.mean()
    p_total = float(np.mean(centered**2))
    if p_total <= 0:
        raise UndefinedLossError("zero-power signal has no defined phasor loss")
    _, k = _fundamental_bin(x)
    p_fundamental = float(bin_powers(x)[k])
    return min(1.0, max(0.0, 1.0 - p_fundamental / p_total))


def lag1_autocorrelation(samples: Sequence[float]) -> float:
    """Sample lag-1 autocorrelation, the rho plugged into `loss_last`.

    How deployments should estimate rho is an open modelling question; this
    is the plain sample statistic.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least 2 samples")
    centered = x - x.mean()
    denom = float(np.dot(centered, centered))
    if denom == 0:
        return 0.0
    return float(np.dot(centered[:-1], centered[1:]) / denom)
