"""Median denoising and gravity/body separation with a Chebyshev-I low-pass."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, fields
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .signals import RATE_HZ, SampleStream, read_meta

log = logging.getLogger(__name__)

TRANSIENT_S = 10.0
GRAVITY_GRID = 2.0**-40


class ShortStreamWarning(UserWarning):
    pass


class DesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    order: int = 5
    passband_ripple_db: float = 0.001
    cutoff_hz: float = 0.25
    # stop-band figures are descriptive: order/ripple/cutoff fix the design
    stop_hz: float = 2.0
    stop_atten_db: float = 100.0
    sample_rate_hz: float = RATE_HZ

    def __post_init__(self):
        if not 0 < self.cutoff_hz < self.stop_hz < self.sample_rate_hz / 2:
            raise ValueError("need 0 < cutoff_hz < stop_hz < sample_rate_hz / 2")
        if self.order < 1 or self.passband_ripple_db <= 0:
            raise ValueError("order must be >= 1 and ripple > 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "FilterSpec":
        return cls.from_mapping(read_meta(path))

    @classmethod
    def from_mapping(cls, values: dict) -> "FilterSpec":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in types:
                raise ValueError(f"unknown filter key {key!r}")
            kwargs[key] = int(value) if key == "order" else float(value)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class IirFilter:
    """Second-order sections, rows ``[b0, b1, b2, 1, a1, a2]``."""

    sos: np.ndarray
    spec: FilterSpec

    @property
    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(s[3:]) for s in self.sos])

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at the given frequencies."""
        h = np.ones(np.shape(freqs_hz), dtype=complex)
        for num, den in self._sections(freqs_hz):
            h = h * num / den
        return h

    def gain_db(self, freqs_hz) -> np.ndarray:
        # per-section log magnitudes, so equal numerator and denominator give exactly 0 dB
        g = np.zeros(np.shape(freqs_hz))
        for num, den in self._sections(freqs_hz):
            g = g + 20 * (np.log10(np.abs(num)) - np.log10(np.abs(den)))
        return g

    def _sections(self, freqs_hz):
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.spec.sample_rate_hz
        zinv = np.exp(-1j * w)
        for b0, b1, b2, _, a1, a2 in self.sos:
            yield (b0 + b1 * zinv) + b2 * zinv**2, (1 + a1 * zinv) + a2 * zinv**2

    @cached_property
    def zi(self) -> np.ndarray:
        """Step-response initial state per section, shaped for column data."""
        return signal.sosfilt_zi(self.sos)[:, :, None]

    @property
    def transient_samples(self) -> int:
        return int(TRANSIENT_S * self.spec.sample_rate_hz)


def cheby1_analog_poles(order: int, ripple_db: float) -> np.ndarray:
    """Poles of the unit-cutoff analog Chebyshev-I prototype."""
    eps = np.sqrt(10 ** (ripple_db / 10) - 1)
    mu = np.arcsinh(1 / eps) / order
    theta = np.pi * (2 * np.arange(1, order + 1) - 1) / (2 * order)
    return -np.sinh(mu) * np.sin(theta) + 1j * np.cosh(mu) * np.cos(theta)


def _unit_dc(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Scale ``num`` to unit DC gain, then nudge its lead tap until the
    left-to-right coefficient sums of numerator and denominator agree bitwise."""
    num = num * den.sum() / num.sum()
    target = (den[0] + den[1]) + den[2]
    for _ in range(8):
        got = (num[0] + num[1]) + num[2]
        if got == target:
            break
        num[0] = np.nextafter(num[0], np.inf if got < target else -np.inf)
    return num


def design_cheby1_lowpass(spec: FilterSpec = FilterSpec()) -> IirFilter:
    """Analog prototype, prewarped cutoff, bilinear transform, then SOS.

    Every section is scaled to unit DC gain, which is the exact DC gain of
    an odd-order Chebyshev-I low-pass.
    """
    fs = spec.sample_rate_hz
    warped = 2 * fs * np.tan(np.pi * spec.cutoff_hz / fs)
    poles_a = cheby1_analog_poles(spec.order, spec.passband_ripple_db) * warped
    poles_d = (2 * fs + poles_a) / (2 * fs - poles_a)

    sections = []
    complex_poles = sorted((p for p in poles_d if p.imag > 1e-12), key=lambda p: abs(p))
    real_poles = [p.real for p in poles_d if abs(p.imag) <= 1e-12]
    for p in real_poles:
        den = np.array([1.0, -p, 0.0])
        num = np.array([1.0, 1.0, 0.0])
        sections.append(np.concatenate([_unit_dc(num, den), den]))
    for p in complex_poles:
        den = np.array([1.0, -2 * p.real, abs(p) ** 2])
        num = np.array([1.0, 2.0, 1.0])
        sections.append(np.concatenate([_unit_dc(num, den), den]))
    sos = np.array(sections)
    filt = IirFilter(sos, spec)
    if spec.order % 2 == 0:
        # even orders sit at the bottom of the ripple at DC
        sos[0, :3] /= 10 ** (spec.passband_ripple_db / 20)
    if np.any(np.abs(filt.poles) >= 1):
        raise DesignError("designed filter is unstable")
    return filt


def median_filter(stream: SampleStream, window: int = 3) -> SampleStream:
    """Per-axis sliding median; edges replicate the boundary sample."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd and >= 1, got {window}")
    if len(stream) == 0:
        raise ValueError("empty stream")
    if window == 1:
        return stream
    out = ndimage.median_filter(stream.a, size=(window, 1), mode="nearest")
    return stream.with_values(out)


def lowpass(values: np.ndarray, filt: IirFilter, zero_phase: bool = True) -> np.ndarray:
    """Apply ``filt`` along axis 0 of ``values``.

    Zero-phase mode runs the filter forward and backward over the data
    extended on both sides by repeated mirror reflection, two transient
    lengths long, so the start-up transient dies out inside the padding.
    """
    values = np.asarray(values, dtype=float)
    zi = filt.zi
    if not zero_phase:
        out, _ = signal.sosfilt(filt.sos, values, axis=0, zi=zi * values[0])
        return out
    if len(values) < 2:
        return values.copy()
    pad = 2 * filt.transient_samples
    ext = np.pad(values, ((pad, pad), (0, 0)), mode="reflect")
    fwd, _ = signal.sosfilt(filt.sos, ext, axis=0, zi=zi * ext[0])
    rev = fwd[::-1]
    bwd, _ = signal.sosfilt(filt.sos, rev, axis=0, zi=zi * rev[0])
    return bwd[::-1][pad:-pad]


def separate_gravity_body(
    stream: SampleStream, filt: IirFilter, zero_phase: bool = True
) -> tuple[SampleStream, SampleStream]:
    """Split raw acceleration into gravity (low-passed) and body (raw - gravity)."""
    if abs(stream.rate_hz - filt.spec.sample_rate_hz) > 1e-9:
        raise ValueError("stream rate differs from the filter's sample rate")
    if len(stream) < filt.transient_samples:
        warnings.warn(
            f"stream of {len(stream)} samples is shorter than the {filt.transient_samples}-sample "
            "filter transient; edges are padded by reflection",
            ShortStreamWarning,
            stacklevel=2,
        )
    raw = stream.a
    # snapping to a dyadic grid keeps raw - gravity exact for quantized sensor data
    gravity = np.round(lowpass(raw, filt, zero_phase) / GRAVITY_GRID) * GRAVITY_GRID
    body = raw - gravity
    # Fast2Sum: exact whenever |raw| >= |gravity|
    gravity = raw - body
    return stream.with_values(gravity), stream.with_values(body)


def preprocess(stream: SampleStream, filt: IirFilter, median_window: int = 3,
               zero_phase: bool = True) -> tuple[SampleStream, SampleStream]:
    return separate_gravity_body(median_filter(stream, median_window), filt, zero_phase)
