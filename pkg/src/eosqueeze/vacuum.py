"""Vacuum field amplitude of the probed space-time segment and Gaussian
vacuum ensembles for Monte Carlo detection.

The operator-valued vacuum correction is represented semiclassically: an
ensemble of real Gaussian time series whose symmetrized second moments equal
the vacuum variance.  Because the crystal map is linear in the fluctuation,
all second-moment observables are reproduced exactly.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field as dc_field
from typing import Iterator, Literal

import numpy as np

from .waveforms import CONSTANTS, FS, THZ, V_PER_CM, PhysConstants, ProbeParams, TimeGrid

WidthConvention = Literal["fwhm", "rms", "integral"]

ENSEMBLE_MAGIC = b"EOSQENS1"
_HEADER = struct.Struct("<8sQQdd")


@dataclass(frozen=True)
class SpaceTimeSegment:
    dx_dy: float
    dz: float
    dt: float

    def __post_init__(self):
        for name in ("dx_dy", "dz", "dt"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"segment {name} must be positive, got {v!r}")

    @property
    def volume_time(self) -> float:
        return self.dx_dy * self.dz * self.dt


@dataclass(frozen=True)
class VacuumStats:
    """rms vacuum field together with the segment it belongs to.

    ``delta_e_vac**2 * eps0 * dx_dy * dz * dt == hbar`` holds to 1e-12.
    """

    delta_e_vac: float
    segment: SpaceTimeSegment
    consts: PhysConstants = CONSTANTS

    def __post_init__(self):
        if not (np.isfinite(self.delta_e_vac) and self.delta_e_vac > 0):
            raise ValueError("vacuum amplitude must be positive")
        lhs = self.delta_e_vac**2 * self.consts.eps0 * self.segment.volume_time
        if abs(lhs / self.consts.hbar - 1.0) > 1e-12:
            raise ValueError("segment is inconsistent with the vacuum amplitude")

    @property
    def variance(self) -> float:
        return self.delta_e_vac**2


def effective_duration(probe: ProbeParams, width: WidthConvention = "fwhm") -> float:
    """Temporal extent of the probe intensity envelope under a width convention.

    ``fwhm`` returns the FWHM itself, ``rms`` the standard deviation of the
    Gaussian intensity profile and ``integral`` the area under the
    peak-normalized intensity.
    """
    if width == "fwhm":
        return probe.duration
    if width == "rms":
        return probe.duration / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    if width == "integral":
        return probe.duration * np.sqrt(np.pi / (4.0 * np.log(2.0)))
    raise ValueError(f"unknown width convention {width!r}")


def vacuum_amplitude(
    probe: ProbeParams,
    consts: PhysConstants = CONSTANTS,
    width: WidthConvention = "fwhm",
) -> VacuumStats:
    """rms vacuum field ``sqrt(hbar / (eps0 * pi w^2 * dz * dt))`` of the
    segment gated by the probe, with ``dz = c*dt/dx_n``."""
    dt = effective_duration(probe, width)
    seg = SpaceTimeSegment(np.pi * probe.waist**2, consts.c * dt / probe.dx_n, dt)
    e = np.sqrt(consts.hbar / (consts.eps0 * seg.dx_dy * seg.dz * seg.dt))
    return VacuumStats(float(e), seg, consts)


def make_reference_vacuum(
    delta_e_vac: float,
    consts: PhysConstants = CONSTANTS,
    probe: ProbeParams | None = None,
) -> VacuumStats:
    """Wrap a calibrated vacuum amplitude (V/m).

    The segment keeps the probe cross-section and duration and absorbs the
    calibration into ``dz`` so the vacuum identity holds.
    """
    if not (np.isfinite(delta_e_vac) and delta_e_vac > 0):
        raise ValueError(f"vacuum amplitude must be positive, got {delta_e_vac!r}")
    probe = probe or ProbeParams()
    area = np.pi * probe.waist**2
    dt = probe.duration
    dz = consts.hbar / (delta_e_vac**2 * consts.eps0 * area * dt)
    return VacuumStats(float(delta_e_vac), SpaceTimeSegment(area, dz, dt), consts)


@dataclass(frozen=True)
class FieldEnsemble:
    """``M x n`` real field realizations on a common grid (V/m)."""

    grid: TimeGrid
    realizations: np.ndarray = dc_field(repr=False)
    seed: int
    target_rms: float
    band_limit: float = float("nan")
    first_index: int = 0

    def __post_init__(self):
        arr = np.array(self.realizations, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[1] != self.grid.n:
            raise ValueError(f"realizations must be M x {self.grid.n}, got {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("ensemble needs at least two realizations")
        arr.flags.writeable = False
        object.__setattr__(self, "realizations", arr)

    @property
    def m(self) -> int:
        return self.realizations.shape[0]

    def column_std(self) -> np.ndarray:
        return self.realizations.std(axis=0, ddof=1)

    def column_mean(self) -> np.ndarray:
        return self.realizations.mean(axis=0)

    def scaled(self, factor: float) -> "FieldEnsemble":
        return FieldEnsemble(
            self.grid, factor * self.realizations, self.seed,
            abs(factor) * self.target_rms, self.band_limit, self.first_index,
        )


def realization_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based stream for one realization.

    Philox keyed by ``(seed, stream)``; realization ``index`` starts at counter
    ``index * 2**192``, so streams never overlap and row ``i`` is the same
    whatever chunking or thread layout produced it.  ``stream`` separates
    consumers (vacuum ensembles use 0, lock-in detection 1).
    """
    if not 0 <= seed < (1 << 64):
        raise ValueError("seed must be a non-negative 64-bit integer")
    if index < 0 or stream < 0:
        raise ValueError("index and stream must be non-negative")
    key = seed | (stream << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=index << 192))


def _band_bins(grid: TimeGrid, band_limit: float) -> int:
    if not band_limit > 0:
        raise ValueError("band limit must be positive")
    if band_limit >= grid.nyquist:
        raise ValueError(
            f"band limit {band_limit / THZ:.3g} THz must stay below the grid "
            f"Nyquist frequency {grid.nyquist / THZ:.3g} THz"
        )
    nu = grid.freqs
    nbins = int(np.count_nonzero((nu > 0) & (nu <= band_limit)))
    if nbins < 1:
        raise ValueError("band limit is below the grid frequency resolution")
    return nbins


def sample_vacuum_ensemble(
    grid: TimeGrid,
    stats: VacuumStats,
    m: int,
    seed: int,
    band_limit: float = 100 * THZ,
    start: int = 0,
) -> FieldEnsemble:
    """Band-limited, stationary Gaussian vacuum realizations.

    Each row is a periodic white process over ``(0, band_limit]`` with
    independent Gaussian Fourier coefficients, scaled so every sample has
    standard deviation ``stats.delta_e_vac``.  Rows ``start .. start+m-1`` of
    a given seed are reproducible in isolation.
    """
    if m < 2:
        raise ValueError(f"ensemble size must be >= 2, got {m}")
    nbins = _band_bins(grid, band_limit)
    spec = np.zeros((m, grid.n // 2 + 1), dtype=complex)
    for row in range(m):
        z = realization_rng(seed, start + row).standard_normal(2 * nbins)
        spec[row, 1 : nbins + 1] = z[:nbins] + 1j * z[nbins:]
    # irfft gives var = 4*nbins/n^2 per sample for unit-variance coefficients
    scale = stats.delta_e_vac * grid.n / (2.0 * np.sqrt(nbins))
    data = np.fft.irfft(spec, n=grid.n, axis=-1) * scale
    return FieldEnsemble(grid, data, seed, stats.delta_e_vac, band_limit, start)


def iter_vacuum_chunks(
    grid: TimeGrid,
    stats: VacuumStats,
    m: int,
    seed: int,
    band_limit: float = 100 * THZ,
    chunk: int = 4096,
) -> Iterator[FieldEnsemble]:
    """Yield a large ensemble in row blocks; concatenating them equals one
    ``sample_vacuum_ensemble`` call."""
    if chunk < 2:
        raise ValueError("chunk must hold at least two realizations")
    lo = 0
    while lo < m:
        size = min(chunk, m - lo)
        if m - lo - size == 1:
            size += 1  # a block of one realization is not an ensemble
        yield sample_vacuum_ensemble(grid, stats, size, seed, band_limit, start=lo)
        lo += size


def write_ensemble_binary(ens: FieldEnsemble, fh) -> None:
    """Header ``magic, M, n, dt, t0`` (little-endian) then row-major float64."""
    fh.write(_HEADER.pack(ENSEMBLE_MAGIC, ens.m, ens.grid.n, ens.grid.dt, ens.grid.t0))
    fh.write(np.ascontiguousarray(ens.realizations, dtype="<f8").tobytes())


def read_ensemble_binary(fh, seed: int = 0, target_rms: float = float("nan")) -> FieldEnsemble:
    head = fh.read(_HEADER.size)
    magic, m, n, dt, t0 = _HEADER.unpack(head)
    if magic != ENSEMBLE_MAGIC:
        raise ValueError("not an ensemble file")
    data = np.frombuffer(fh.read(8 * m * n), dtype="<f8")
    if data.size != m * n:
        raise ValueError("truncated ensemble file")
    return FieldEnsemble(TimeGrid(t0, dt, n), data.reshape(m, n), seed, target_rms)


def ensemble_to_csv(ens: FieldEnsemble, max_rows: int = 64) -> str:
    """CSV with one column per realization, fields in V/cm."""
    if ens.m > max_rows:
        raise ValueError(f"CSV export is meant for small ensembles (M <= {max_rows})")
    buf = io.StringIO()
    buf.write(f"# seed={ens.seed}\n# target_rms_Vcm={ens.target_rms / V_PER_CM:.12g}\n")
    buf.write(f"# band_limit_THz={ens.band_limit / THZ:.12g}\n")
    buf.write("t_fs," + ",".join(f"r{i + ens.first_index}" for i in range(ens.m)) + "\n")
    for k, t in enumerate(ens.grid.t):
        vals = ens.realizations[:, k] / V_PER_CM
        buf.write(f"{t / FS:.12g}," + ",".join(f"{v:.12g}" for v in vals) + "\n")
    return buf.getvalue()
