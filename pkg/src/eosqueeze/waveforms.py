"""Time grids, physical constants and the classical mid-infrared transient.

Everything here is SI internally: seconds, V/m, metres, joules.  Conversion
factors for the lab units used at the I/O boundary (fs, THz, nJ, V/cm, um)
live at module level so callers never hand-roll them.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Literal

import numpy as np
from scipy import constants as _sc

# Lab units -> SI.
FS = 1e-15
THZ = 1e12
NJ = 1e-9
UM = 1e-6
PM_PER_V = 1e-12
V_PER_CM = 100.0

EDGE_TOLERANCE = 1e-6
_CEP_QUANTUM = 2.0**40

DerivativeMethod = Literal["spectral", "fd"]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PhysConstants:
    """CODATA constants used by the field formulas."""

    c: float = _sc.c
    hbar: float = _sc.hbar
    eps0: float = _sc.epsilon_0


CONSTANTS = PhysConstants()


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling axis ``t_k = t0 + k*dt`` for ``k = 0 .. n-1``."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValueError(f"grid step must be positive, got dt={self.dt!r}")
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs at least 8 samples, got n={self.n!r}")
        if not np.isfinite(self.t0):
            raise ValueError("grid origin must be finite")
        object.__setattr__(self, "n", int(self.n))

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.n) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    @property
    def span(self) -> float:
        return self.n * self.dt

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    @property
    def freqs(self) -> np.ndarray:
        """Non-negative frequencies (Hz) matching ``np.fft.rfft`` bins."""
        return np.fft.rfftfreq(self.n, self.dt)

    def contains(self, time: float) -> bool:
        return self.t0 <= time <= self.t_end

    def index_of(self, time: float) -> int:
        """Nearest sample index; ties go to the earlier sample."""
        if not self.contains(time):
            raise ValueError(f"time {time!r} s lies outside the grid")
        pos = (time - self.t0) / self.dt
        k = int(np.floor(pos))
        if pos - k > 0.5:
            k += 1
        return min(k, self.n - 1)


def make_grid(t0: float, dt: float, n: int) -> TimeGrid:
    return TimeGrid(float(t0), float(dt), n)


@dataclass(frozen=True)
class ProbeParams:
    """Near-infrared gate pulse of the electro-optic detector.

    ``duration`` is the intensity FWHM, ``waist`` the focal spot radius and
    ``dx_n`` the index that converts the gate duration into a longitudinal
    length, ``dz = c * duration / dx_n``.
    """

    duration: float = 5.8 * FS
    waist: float = 3.6 * UM
    dx_n: float = 2.6

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("probe duration must be positive")
        if not self.waist > 0:
            raise ValueError("probe waist must be positive")
        if not self.dx_n >= 1:
            raise ValueError("probe index dx_n must be >= 1")


@dataclass(frozen=True)
class CrystalParams:
    """Generation crystal: nonlinear coefficient, index and thickness.

    The sign of ``d_eff`` is meaningful.  With ``d_eff < 0`` excess noise
    appears where the coherent field falls fastest.
    """

    d_eff: float = -54.0 * PM_PER_V
    n: float = 2.8
    length: float = 16.0 * UM
    label: str = "GaSe"

    def __post_init__(self):
        if not np.isfinite(self.d_eff):
            raise ValueError("d_eff must be finite")
        if not self.n >= 1:
            raise ValueError("refractive index must be >= 1")
        if not self.length > 0:
            raise ValueError("crystal length must be positive")

    @property
    def coupling(self) -> float:
        """``d*l/(n*c)`` in s*m/V; multiplies dE/dt to give the squeezing factor."""
        return self.d_eff * self.length / (self.n * CONSTANTS.c)

    @property
    def transit_delay(self) -> float:
        """Group delay ``n*l/c`` accumulated across the crystal."""
        return self.n * self.length / CONSTANTS.c


@dataclass(frozen=True)
class CoherentTransient:
    grid: TimeGrid
    field: np.ndarray = dc_field(repr=False)
    center_freq: float
    cep: float
    pump_energy: float
    gain: float = float("nan")
    env_fwhm: float = float("nan")

    def __post_init__(self):
        arr = _frozen(self.field)
        if arr.shape != (self.grid.n,):
            raise ValueError(f"field has shape {arr.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite samples")
        peak = np.max(np.abs(arr))
        if peak > 0 and max(abs(arr[0]), abs(arr[-1])) >= EDGE_TOLERANCE * peak:
            raise ValueError(
                "transient envelope leaks past the grid edges; widen the grid "
                "or shorten the envelope"
            )
        object.__setattr__(self, "field", arr)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t


def synthesize_transient(
    grid: TimeGrid,
    pump_energy: float,
    cep: float = 0.0,
    center_freq: float = 44 * THZ,
    env_fwhm: float = 90 * FS,
    gain: float = 1.0,
) -> CoherentTransient:
    """Gaussian-envelope carrier wave with amplitude ``gain * pump_energy``.

    ``E(t) = gain*W*exp(-2 ln2 (t/fwhm)^2) * cos(2 pi nu t + cep)`` so the
    intensity envelope has the stated FWHM.  Shifting ``cep`` by pi negates
    every sample exactly: whole half-turns of the phase become a sign flip
    rather than a phase offset, which would round.
    """
    if not env_fwhm > 0:
        raise ValueError("envelope FWHM must be positive")
    if not center_freq >= 0:
        raise ValueError("carrier frequency must be non-negative")
    if center_freq * grid.dt >= 0.5:
        raise ValueError(
            f"grid too coarse: {1.0 / (center_freq * grid.dt):.2f} samples per carrier cycle, need > 2"
        )
    t = grid.t
    envelope = np.exp(-2.0 * np.log(2.0) * (t / env_fwhm) ** 2)
    # cos(x + pi) == -cos(x) only up to rounding; reduce cep modulo pi first
    # and snap the residual to a 2**-40 rad lattice so cep and the (rounded)
    # cep + pi land on the same residual.
    half_turns = np.floor(cep / np.pi + 0.5)
    residual = np.round((cep - half_turns * np.pi) * _CEP_QUANTUM) / _CEP_QUANTUM
    sign = -1.0 if int(half_turns) % 2 else 1.0
    carrier = sign * np.cos(2.0 * np.pi * center_freq * t + residual)
    amp = gain * pump_energy
    return CoherentTransient(
        grid,
        amp * envelope * carrier,
        center_freq=center_freq,
        cep=cep,
        pump_energy=pump_energy,
        gain=gain,
        env_fwhm=env_fwhm,
    )


def rectification_centroid(pump_env_fwhm: float) -> float:
    """Closed-form amplitude-spectrum centroid of d^2/dt^2 of a Gaussian.

    For ``I(t) = exp(-a t^2)`` the spectrum of ``I''`` is ``nu^2 exp(-pi^2 nu^2 / a)``
    whose first moment over ``nu > 0`` is ``2 sqrt(a) / pi^(3/2)``.
    """
    a = 4.0 * np.log(2.0) / pump_env_fwhm**2
    return 2.0 * np.sqrt(a) / np.pi**1.5


def optical_rectification(
    grid: TimeGrid,
    pump_env_fwhm: float = 12 * FS,
    pump_energy: float = 1.0,
    gain: float = 1.0,
) -> CoherentTransient:
    """Single-cycle transient proportional to the second derivative of the
    pump intensity envelope.

    Normalized so that ``|E(0)| = gain * pump_energy``.  The waveform is the
    negative of a Mexican hat, hence ``cep = pi`` in the metadata.
    """
    if not pump_env_fwhm > 0:
        raise ValueError("pump envelope FWHM must be positive")
    centroid = rectification_centroid(pump_env_fwhm)
    if 1.0 / (centroid * grid.dt) < 8:
        raise ValueError(
            f"grid too coarse: {1.0 / (centroid * grid.dt):.2f} samples per cycle, need >= 8"
        )
    a = 4.0 * np.log(2.0) / pump_env_fwhm**2
    t = grid.t
    shape = (2.0 * a * t**2 - 1.0) * np.exp(-a * t**2)
    return CoherentTransient(
        grid,
        gain * pump_energy * shape,
        center_freq=centroid,
        cep=np.pi,
        pump_energy=pump_energy,
        gain=gain,
        env_fwhm=pump_env_fwhm,
    )


@dataclass(frozen=True)
class TransientSpec:
    """Recipe for a transient whose amplitude is set later by ``gain``."""

    kind: Literal["gaussian", "rectification"] = "gaussian"
    center_freq: float = 44 * THZ
    env_fwhm: float = 90 * FS
    cep: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "rectification"):
            raise ValueError(f"unknown transient kind {self.kind!r}")

    def build(self, grid: TimeGrid, pump_energy: float, gain: float) -> CoherentTransient:
        if self.kind == "gaussian":
            return synthesize_transient(
                grid, pump_energy, self.cep, self.center_freq, self.env_fwhm, gain
            )
        tr = optical_rectification(grid, self.env_fwhm, pump_energy, gain)
        if np.cos(self.cep) < 0:
            return CoherentTransient(
                grid, -tr.field, tr.center_freq, tr.cep + np.pi, pump_energy, gain, self.env_fwhm
            )
        return tr


def time_derivative(
    series: np.ndarray, grid: TimeGrid, method: DerivativeMethod = "spectral"
) -> np.ndarray:
    """d/dt along the last axis.

    ``spectral`` multiplies the real FFT by ``2*pi*i*nu`` (Nyquist bin dropped,
    periodic boundary).  ``fd`` is second-order central differences with
    second-order one-sided stencils at the ends.
    """
    x = np.asarray(series, dtype=float)
    if x.shape[-1] != grid.n:
        raise ValueError(f"series length {x.shape[-1]} does not match grid n={grid.n}")
    if method == "spectral":
        spec = np.fft.rfft(x, axis=-1)
        k = 2j * np.pi * grid.freqs
        if grid.n % 2 == 0:
            k[-1] = 0.0
        return np.fft.irfft(spec * k, n=grid.n, axis=-1)
    if method == "fd":
        return np.gradient(x, grid.dt, axis=-1, edge_order=2)
    raise ValueError(f"unknown derivative method {method!r}")


def fourier_shift(series: np.ndarray, grid: TimeGrid, delay: float) -> np.ndarray:
    """Return ``y(t) = x(t - delay)`` by band-limited periodic interpolation."""
    x = np.asarray(series, dtype=float)
    phase = np.exp(-2j * np.pi * grid.freqs * delay)
    if grid.n % 2 == 0:
        # keep the Nyquist bin real
        phase[-1] = np.cos(np.pi * grid.freqs[-1] * 2 * delay)
    return np.fft.irfft(np.fft.rfft(x, axis=-1) * phase, n=grid.n, axis=-1)


def amplitude_spectrum(series: np.ndarray, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    return grid.freqs, np.abs(np.fft.rfft(np.asarray(series, dtype=float))) * grid.dt


def spectral_centroid(series: np.ndarray, grid: TimeGrid) -> float:
    """Amplitude-weighted mean frequency over the positive FFT bins."""
    nu, amp = amplitude_spectrum(series, grid)
    nu, amp = nu[1:], amp[1:]
    total = amp.sum()
    if total == 0:
        raise ValueError("zero series has no spectral centroid")
    return float(np.sum(nu * amp) / total)
