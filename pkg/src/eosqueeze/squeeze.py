"""Time-local squeezing of the vacuum by a coherent transient.

Three routes to the exit-face noise are provided:

* the closed form ``dE_rms(t) = exp(f(t)) * dE_vac`` with
  ``f(t) = d*l/(n*c) * dE/dt``;
* explicit z-marching of the linearized fluctuation equation in a frame that
  co-moves with the group velocity (``time_domain``);
* the same equation marched in the Fourier domain, where the product with
  the coherent field becomes a convolution of spectra (``spectral``).

The fluctuation equation in the co-moving frame is::

    d(dE)/dz = (d/(n c)) * [ E' * dE  +  E * (d dE/dt) ]

The second bracket term is optional; dropping it gives the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Literal

import numpy as np
from scipy import fft, optimize

from .errors import NumericalInstabilityError
from .vacuum import FieldEnsemble, VacuumStats, iter_vacuum_chunks, _band_bins
from .waveforms import (
    CONSTANTS,
    THZ,
    CoherentTransient,
    CrystalParams,
    DerivativeMethod,
    TimeGrid,
    TransientSpec,
    fourier_shift,
    time_derivative,
)

PropagationMethod = Literal["analytic", "time_domain", "spectral"]

# Energy may exceed the exp(2 max|f|) bound only by integration error.
_ENERGY_SLACK = 1.01


def _ro(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SqueezingProfile:
    grid: TimeGrid
    f: np.ndarray = dc_field(repr=False)
    delta_e_rms: np.ndarray | None = dc_field(default=None, repr=False)
    transient: CoherentTransient | None = dc_field(default=None, repr=False)
    crystal: CrystalParams | None = None
    delta_e_vac: float | None = None

    def __post_init__(self):
        f = _ro(self.f)
        if f.shape != (self.grid.n,):
            raise ValueError("squeezing factor does not match the grid")
        if not np.all(np.isfinite(f)):
            raise ValueError("squeezing factor must be finite")
        object.__setattr__(self, "f", f)
        if self.delta_e_rms is not None:
            rms = _ro(self.delta_e_rms)
            if rms.shape != f.shape or np.any(rms < 0):
                raise ValueError("rms noise must be non-negative and match the grid")
            object.__setattr__(self, "delta_e_rms", rms)

    @property
    def max_abs_f(self) -> float:
        return float(np.max(np.abs(self.f)))

    @property
    def f_min(self) -> float:
        return float(np.min(self.f))

    @property
    def f_max(self) -> float:
        return float(np.max(self.f))


@dataclass(frozen=True)
class PropagationConfig:
    z_steps: int = 256
    include_second_term: bool = False
    method: PropagationMethod = "time_domain"
    derivative: DerivativeMethod = "spectral"

    def __post_init__(self):
        if int(self.z_steps) != self.z_steps or self.z_steps < 1:
            raise ValueError("z_steps must be a positive integer")
        if self.method not in ("analytic", "time_domain", "spectral"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if self.derivative not in ("spectral", "fd"):
            raise ValueError(f"unknown derivative method {self.derivative!r}")


@dataclass(frozen=True)
class VelocityProfile:
    grid: TimeGrid
    delta_n: np.ndarray = dc_field(repr=False)
    v_loc: np.ndarray = dc_field(repr=False)
    f_from_velocity: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        for name in ("delta_n", "v_loc", "f_from_velocity"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        if np.any(self.v_loc <= 0):
            raise ValueError("local phase velocity must be positive")


def squeezing_factor(
    transient: CoherentTransient,
    crystal: CrystalParams,
    derivative: DerivativeMethod = "spectral",
) -> SqueezingProfile:
    f = crystal.coupling * time_derivative(transient.field, transient.grid, derivative)
    return SqueezingProfile(transient.grid, f, transient=transient, crystal=crystal)


def analytic_noise(profile: SqueezingProfile, vacuum: VacuumStats) -> SqueezingProfile:
    return replace(
        profile,
        delta_e_rms=np.exp(profile.f) * vacuum.delta_e_vac,
        delta_e_vac=vacuum.delta_e_vac,
    )


def profile_from_rms(
    transient: CoherentTransient,
    crystal: CrystalParams,
    delta_e_rms: np.ndarray,
    vacuum: VacuumStats,
) -> SqueezingProfile:
    """Wrap a numerically obtained exit-face rms; ``f = ln(rms / vac)``."""
    rms = np.asarray(delta_e_rms, dtype=float)
    if rms.shape != (transient.grid.n,) or np.any(rms <= 0):
        raise ValueError("rms noise must be positive and match the grid")
    return SqueezingProfile(
        transient.grid,
        np.log(rms / vacuum.delta_e_vac),
        delta_e_rms=rms,
        transient=transient,
        crystal=crystal,
        delta_e_vac=vacuum.delta_e_vac,
    )


def calibrate_gain(
    target_f_min: float,
    at_pump_energy: float,
    template: TransientSpec,
    crystal: CrystalParams,
    grid: TimeGrid,
    derivative: DerivativeMethod = "spectral",
) -> float:
    """Field-per-energy gain for which ``min_t f(t) == target_f_min``.

    Solved by bisection on the gain to a relative tolerance of 1e-10.
    """
    if not target_f_min < 0:
        raise ValueError(f"target minimum squeezing factor must be negative, got {target_f_min!r}")
    if not at_pump_energy > 0:
        raise ValueError("calibration pump energy must be positive")

    def f_min(gain: float) -> float:
        tr = template.build(grid, at_pump_energy, gain)
        return squeezing_factor(tr, crystal, derivative).f_min

    unit = f_min(1.0)
    if not unit < 0:
        raise ValueError("template transient never produces squeezing with this crystal")
    hi = 1.0
    while f_min(hi) > target_f_min:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("could not bracket the calibration gain")
    lo = 0.0
    return float(
        optimize.bisect(lambda g: f_min(g) - target_f_min, lo, hi, xtol=1e-300, rtol=1e-10, maxiter=2000)
    )


def pockels_velocity(
    transient: CoherentTransient,
    crystal: CrystalParams,
    derivative: DerivativeMethod = "spectral",
) -> VelocityProfile:
    """Refractive-index modulation and local phase velocity in the crystal.

    Electro-optic coefficient ``r = -d/n^4`` gives ``dn = r n^3 E`` and the
    squeezing factor follows from the index slope, ``f = -(l/c) dn/dt``.
    """
    n = crystal.n
    r = -crystal.d_eff / n**4
    delta_n = r * n**3 * transient.field
    if np.any(np.abs(delta_n) >= n):
        raise ValueError("index modulation reaches the linear index; Pockels model breaks down")
    v_loc = CONSTANTS.c / (n + delta_n)
    f = -(crystal.length / CONSTANTS.c) * time_derivative(delta_n, transient.grid, derivative)
    return VelocityProfile(transient.grid, delta_n, v_loc, f)


@dataclass(frozen=True)
class NoiseExtrema:
    t_max: float
    t_min: float
    i_max: int
    i_min: int
    rms_max: float
    rms_min: float


def extrema_of_noise(profile: SqueezingProfile) -> NoiseExtrema:
    """Sample positions of maximal and minimal rms noise (earliest on ties)."""
    rms = profile.delta_e_rms
    if rms is None:
        raise ValueError("profile has no rms noise; run analytic_noise first")
    if np.ptp(rms) == 0:
        raise ValueError("no extrema: noise profile is constant")
    i_max = int(np.argmax(rms))
    i_min = int(np.argmin(rms))
    t = profile.grid.t
    return NoiseExtrema(float(t[i_max]), float(t[i_min]), i_max, i_min, float(rms[i_max]), float(rms[i_min]))


# --------------------------------------------------------------------------
# numerical propagation


def _march_time_domain(u, e, de, grid, cfg, kappa, h):
    d = cfg.derivative

    def rhs(x):
        out = de * x
        if cfg.include_second_term:
            out = out + e * time_derivative(x, grid, d)
        return kappa * out

    for _ in range(cfg.z_steps):
        u = u + h * rhs(u + 0.5 * h * rhs(u))
    return u


def _march_spectral(u, e, grid, cfg, kappa, h):
    """RK4 in z on two-sided spectra; products become linear convolutions."""
    n = grid.n
    omega = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, grid.dt))
    if n % 2 == 0:
        omega[0] = 0.0  # Nyquist bin carries no derivative, as in the time-domain operator
    e_hat = np.fft.fftshift(np.fft.fft(e)) / n
    lo = n // 2
    kernel = e_hat if cfg.include_second_term else 1j * omega * e_hat
    # linear (non-wrapping) convolution of length-n spectra, kernel transform cached
    size = fft.next_fast_len(2 * n - 1)
    k_f = fft.fft(kernel, size)

    def conv(x):
        return fft.ifft(fft.fft(x, size, axis=-1) * k_f, axis=-1)[:, lo : lo + n]

    if cfg.include_second_term:
        def rhs(x):
            return kappa * (1j * omega) * conv(x)
    else:
        def rhs(x):
            return kappa * conv(x)

    x = np.fft.fftshift(np.fft.fft(np.atleast_2d(u), axis=-1), axes=-1)
    for _ in range(cfg.z_steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    out = np.fft.ifft(np.fft.ifftshift(x, axes=-1), axis=-1).real
    return out.reshape(np.shape(u))


def _march(u, transient, crystal, cfg):
    grid = transient.grid
    kappa = crystal.d_eff / (crystal.n * CONSTANTS.c)
    h = crystal.length / cfg.z_steps
    e = np.asarray(transient.field)
    if cfg.method == "spectral":
        return _march_spectral(u, e, grid, cfg, kappa, h)
    if cfg.method == "time_domain":
        de = time_derivative(e, grid, cfg.derivative)
        return _march_time_domain(u, e, de, grid, cfg, kappa, h)
    raise ValueError("analytic method has no z-march; use analytic_noise")


def _check_energy(u_in, u_out, max_f):
    if not np.all(np.isfinite(u_out)):
        raise NumericalInstabilityError("propagation produced non-finite fields; increase z_steps")
    _check_energy_sums(float(np.sum(u_in**2)), float(np.sum(u_out**2)), max_f)


def _check_energy_sums(e_in, e_out, max_f):
    if not np.isfinite(e_out):
        raise NumericalInstabilityError("propagation produced non-finite fields; increase z_steps")
    if e_in > 0 and e_out > e_in * np.exp(2.0 * max_f) * _ENERGY_SLACK:
        raise NumericalInstabilityError(
            f"ensemble energy grew by {e_out / e_in:.4g}, above the exp(2 max|f|) = "
            f"{np.exp(2 * max_f):.4g} bound; increase z_steps"
        )


def propagate_numeric(
    transient: CoherentTransient,
    crystal: CrystalParams,
    ensemble: FieldEnsemble,
    cfg: PropagationConfig = PropagationConfig(),
) -> FieldEnsemble:
    """March every realization from the entrance to the exit face.

    The entrance field is first relabelled by exit time (shift by the transit
    delay ``n*l/c``); the coherent transient is taken fully formed and
    z-independent in the co-moving frame.  Returns exit-face realizations on
    the same grid.
    """
    if ensemble.grid != transient.grid:
        raise ValueError("ensemble and transient live on different grids")
    grid = transient.grid
    u0 = fourier_shift(ensemble.realizations, grid, crystal.transit_delay)
    u = _march(u0, transient, crystal, cfg)
    max_f = squeezing_factor(transient, crystal, cfg.derivative).max_abs_f
    _check_energy(u0, u, max_f)
    return FieldEnsemble(grid, u, ensemble.seed, ensemble.target_rms, ensemble.band_limit, ensemble.first_index)


def transfer_operator(
    transient: CoherentTransient,
    crystal: CrystalParams,
    cfg: PropagationConfig = PropagationConfig(),
) -> np.ndarray:
    """The exit-time-frame linear map obtained by marching basis vectors.

    Without the second term the map is diagonal and a length-``n`` gain vector
    (the march of a constant 1) is returned; otherwise the ``n x n`` matrix
    ``T`` with ``u_out = T @ u_in``.
    """
    grid = transient.grid
    if not cfg.include_second_term and cfg.method == "time_domain":
        return _march(np.ones((1, grid.n)), transient, crystal, cfg)[0]
    basis = np.eye(grid.n)
    # rows are marched realizations of unit impulses -> columns of T
    return _march(basis, transient, crystal, cfg).T


def _apply_transfer(op: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u * op if op.ndim == 1 else u @ op.T


def input_covariance(grid: TimeGrid, stats: VacuumStats, band_limit: float = 100 * THZ) -> np.ndarray:
    """Exact covariance of the band-limited vacuum ensemble (circulant)."""
    nbins = _band_bins(grid, band_limit)
    k = np.arange(grid.n)
    lag = np.cos(2.0 * np.pi * np.outer(np.arange(1, nbins + 1), k) / grid.n).sum(axis=0) / nbins
    idx = (k[:, None] - k[None, :]) % grid.n
    return stats.variance * lag[idx]


def propagated_std_exact(
    transient: CoherentTransient,
    crystal: CrystalParams,
    stats: VacuumStats,
    cfg: PropagationConfig = PropagationConfig(),
    band_limit: float = 100 * THZ,
) -> np.ndarray:
    """Per-sample exit-face rms from exact second moments, ``diag(T C T^T)``.

    The transit-delay relabelling is a phase rotation of the Fourier
    coefficients, so the input covariance is unchanged by it.
    """
    op = transfer_operator(transient, crystal, cfg)
    if op.ndim == 1:
        var = op**2 * stats.variance
    else:
        cov = input_covariance(transient.grid, stats, band_limit)
        var = np.einsum("ij,jk,ik->i", op, cov, op, optimize=True)
    max_f = squeezing_factor(transient, crystal, cfg.derivative).max_abs_f
    _check_energy_sums(transient.grid.n * stats.variance, float(np.sum(var)), max_f)
    return np.sqrt(var)


def propagated_std_mc(
    transient: CoherentTransient,
    crystal: CrystalParams,
    stats: VacuumStats,
    m: int,
    seed: int,
    cfg: PropagationConfig = PropagationConfig(),
    band_limit: float = 100 * THZ,
    chunk: int = 4096,
) -> np.ndarray:
    """Per-column sample std (ddof=1) of ``m`` propagated vacuum realizations.

    Streams the ensemble in blocks through the marched transfer operator so
    that ``m = 1e5`` fits in memory; each block equals what
    ``propagate_numeric`` would return for those rows.
    """
    grid = transient.grid
    op = transfer_operator(transient, crystal, cfg)
    s1 = np.zeros(grid.n)
    s2 = np.zeros(grid.n)
    e_in = 0.0
    total = 0
    for block in iter_vacuum_chunks(grid, stats, m, seed, band_limit, chunk):
        u0 = fourier_shift(block.realizations, grid, crystal.transit_delay)
        u = _apply_transfer(op, u0)
        e_in += float(np.sum(u0**2))
        s1 += u.sum(axis=0)
        s2 += (u**2).sum(axis=0)
        total += block.m
    max_f = squeezing_factor(transient, crystal, cfg.derivative).max_abs_f
    _check_energy_sums(e_in, float(np.sum(s2)), max_f)
    mean = s1 / total
    return np.sqrt(np.maximum(s2 - total * mean**2, 0.0) / (total - 1))


def convergence_order(
    transient: CoherentTransient,
    crystal: CrystalParams,
    steps: tuple[int, ...] = (16, 32, 64, 128),
) -> tuple[float, np.ndarray]:
    """Observed z-convergence order of the time-domain march (second term off)
    against the closed-form gain ``exp(f)``."""
    f = squeezing_factor(transient, crystal).f
    errs = []
    for s in steps:
        g = transfer_operator(transient, crystal, PropagationConfig(z_steps=s))
        errs.append(np.max(np.abs(g / np.exp(f) - 1.0)))
    errs = np.asarray(errs)
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    return float(-slope), errs
