"""Electro-optic readout: probe gating, shot noise and the relative
differential noise (RDN) statistic of the two lock-in sub-readouts.

RDN compares the rms of the channel that sees the squeezed field with the rms
of the channel that sees bare vacuum, both on top of the probe shot noise::

    RDN = (sqrt(SN^2 + rms^2) - sqrt(SN^2 + vac^2)) / sqrt(SN^2 + vac^2)
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Literal

import numpy as np
from scipy import special

from .squeeze import SqueezingProfile
from .vacuum import VacuumStats, realization_rng
from .waveforms import V_PER_CM, CoherentTransient, ProbeParams, TimeGrid

RdnMode = Literal["analytic_exact", "analytic_linearized", "monte_carlo"]
Sampler = Literal["chi2", "samples"]

LOCKIN_STREAM = 1
# Gaussian gate weights below exp(-4 ln2 * 25) ~ 1e-30 are dropped.
_KERNEL_HALF_WIDTHS = 5.0


@dataclass(frozen=True)
class DetectionParams:
    """Electro-optic detector settings.

    ``eta`` is the fraction of the squeezed state that reaches the gated
    segment; the rest is replaced by bare vacuum (facet reflections, imperfect
    mode and segment matching).  ``sampler`` picks how each lock-in channel's
    sample standard deviation is drawn: ``samples`` draws all ``M`` readouts,
    ``chi2`` draws the exactly equivalent scaled chi variate in O(1).
    """

    delta_e_sn: float = 81.0 * V_PER_CM
    samples_per_point: int = 100_000
    probe: ProbeParams = ProbeParams()
    seed: int = 0
    eta: float = 1.0
    probe_smoothing: bool = True
    sampler: Sampler = "chi2"

    def __post_init__(self):
        if not (np.isfinite(self.delta_e_sn) and self.delta_e_sn > 0):
            raise ValueError("shot-noise field must be positive")
        if int(self.samples_per_point) != self.samples_per_point or self.samples_per_point < 100:
            raise ValueError("samples_per_point must be an integer >= 100")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.sampler not in ("chi2", "samples"):
            raise ValueError(f"unknown sampler {self.sampler!r}")


@dataclass(frozen=True)
class RdnTrace:
    delays: TimeGrid
    rdn: np.ndarray = dc_field(repr=False)
    rdn_stderr: np.ndarray = dc_field(repr=False)
    mode: RdnMode = "analytic_exact"

    def __post_init__(self):
        rdn = np.array(self.rdn, dtype=float)
        err = np.array(self.rdn_stderr, dtype=float)
        if rdn.shape != (self.delays.n,) or err.shape != rdn.shape:
            raise ValueError("trace arrays must match the delay grid")
        if np.any(rdn <= -1):
            raise ValueError("RDN must stay above -1")
        if np.any(err < 0):
            raise ValueError("standard errors must be non-negative")
        rdn.flags.writeable = False
        err.flags.writeable = False
        object.__setattr__(self, "rdn", rdn)
        object.__setattr__(self, "rdn_stderr", err)


@dataclass(frozen=True)
class CoherentReadout:
    delays: TimeGrid
    field: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        arr = np.array(self.field, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "field", arr)


def _vac(vacuum: VacuumStats | float) -> float:
    return vacuum.delta_e_vac if isinstance(vacuum, VacuumStats) else float(vacuum)


def _sn(det: DetectionParams | float) -> float:
    return det.delta_e_sn if isinstance(det, DetectionParams) else float(det)


# --------------------------------------------------------------------------
# probe gating


def _is_delta_gate(probe: ProbeParams, grid: TimeGrid) -> bool:
    if probe.duration < grid.dt * (1 - 1e-12):
        raise ValueError("probe duration is shorter than the grid step")
    return probe.duration <= grid.dt * (1 + 1e-12)


def probe_convolve(series: np.ndarray, grid: TimeGrid, probe: ProbeParams, delay: float) -> float:
    """Average of ``series`` under the normalized Gaussian intensity gate
    centred at ``delay``.

    A gate no longer than the grid step cannot be resolved and collapses to
    the nearest sample.
    """
    x = np.asarray(series, dtype=float)
    if not grid.contains(delay):
        raise ValueError(f"delay {delay!r} s lies outside the grid")
    if _is_delta_gate(probe, grid):
        return float(x[grid.index_of(delay)])
    w = np.exp(-4.0 * np.log(2.0) * ((grid.t - delay) / probe.duration) ** 2)
    return float(np.dot(w, x) / w.sum())


def probe_smooth(series: np.ndarray, grid: TimeGrid, probe: ProbeParams) -> np.ndarray:
    """``probe_convolve`` evaluated at every grid sample.

    The gate is truncated at five FWHM and renormalized near the grid ends.
    """
    x = np.asarray(series, dtype=float)
    if _is_delta_gate(probe, grid):
        return x.copy()
    half = int(np.ceil(_KERNEL_HALF_WIDTHS * probe.duration / grid.dt))
    half = min(half, grid.n - 1)
    lags = np.arange(-half, half + 1) * grid.dt
    w = np.exp(-4.0 * np.log(2.0) * (lags / probe.duration) ** 2)
    num = np.convolve(x, w, mode="same") if grid.n >= w.size else _direct_smooth(x, w, half)
    den = np.convolve(np.ones_like(x), w, mode="same") if grid.n >= w.size else _direct_smooth(np.ones_like(x), w, half)
    return num / den


def _direct_smooth(x, w, half):
    n = x.size
    out = np.empty(n)
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        out[k] = np.dot(x[lo:hi], w[lo - k + half : hi - k + half])
    return out


def coherent_readout(transient: CoherentTransient, det: DetectionParams) -> CoherentReadout:
    return CoherentReadout(transient.grid, probe_smooth(transient.field, transient.grid, det.probe))


# --------------------------------------------------------------------------
# RDN arithmetic


def rdn_exact(delta_e_rms, vacuum: VacuumStats | float, det: DetectionParams | float):
    rms = np.asarray(delta_e_rms, dtype=float)
    if np.any(rms < 0):
        raise ValueError("rms field must be non-negative")
    sn, vac = _sn(det), _vac(vacuum)
    ref = np.hypot(sn, vac)
    out = (np.hypot(sn, rms) - ref) / ref
    return float(out) if out.ndim == 0 else out


def rdn_linearized(delta_e_rms, vacuum: VacuumStats | float, det: DetectionParams | float):
    """First-order expansion of ``rdn_exact`` around ``rms = vac``.

    Deviates from the exact value by O((rms - vac)^2); it overshoots for
    excess noise and undershoots for squeezing.
    """
    rms = np.asarray(delta_e_rms, dtype=float)
    if np.any(rms < 0):
        raise ValueError("rms field must be non-negative")
    sn, vac = _sn(det), _vac(vacuum)
    out = (rms - vac) * vac / sn**2
    return float(out) if out.ndim == 0 else out


def vacuum_fraction(det: DetectionParams | float, vacuum: VacuumStats | float) -> float:
    """Share of the reference-channel rms contributed by bare vacuum."""
    sn, vac = _sn(det), _vac(vacuum)
    return float(np.hypot(sn, vac) / sn - 1.0)


def contaminate(delta_e_rms, delta_e_vac: float, eta: float):
    """Mix a fraction ``1 - eta`` of bare vacuum variance into the signal."""
    rms = np.asarray(delta_e_rms, dtype=float)
    return np.sqrt(eta * rms**2 + (1.0 - eta) * delta_e_vac**2)


def detected_rms(
    profile: SqueezingProfile,
    vacuum: VacuumStats | float,
    det: DetectionParams,
    smooth: bool,
) -> np.ndarray:
    if profile.delta_e_rms is None:
        raise ValueError("profile has no rms noise; run analytic_noise first")
    rms = profile.delta_e_rms
    if smooth:
        rms = probe_smooth(rms, profile.grid, det.probe)
    return contaminate(rms, _vac(vacuum), det.eta)


def rdn_trace_analytic(
    profile: SqueezingProfile,
    vacuum: VacuumStats | float,
    det: DetectionParams,
    linearized: bool = False,
    smooth: bool = False,
) -> RdnTrace:
    rms = detected_rms(profile, vacuum, det, smooth)
    fn = rdn_linearized if linearized else rdn_exact
    mode = "analytic_linearized" if linearized else "analytic_exact"
    return RdnTrace(profile.grid, fn(rms, vacuum, det), np.zeros(profile.grid.n), mode)


# --------------------------------------------------------------------------
# Monte Carlo lock-in


def ratio_bias(m: int) -> float:
    """``E[s_x/s_y]`` for two independent unit-variance Gaussian samples of
    size ``m`` (sample std with ddof=1); dividing by it centres the null case."""
    nu = m - 1
    return float(np.exp(
        special.gammaln((nu + 1) / 2) + special.gammaln((nu - 1) / 2) - 2 * special.gammaln(nu / 2)
    ))


def ratio_rel_stderr(m: int) -> float:
    """Relative standard deviation of ``s_x/s_y`` (delta method on log chi)."""
    nu = m - 1
    return float(np.sqrt(special.polygamma(1, nu / 2) / 2))


def _channel_std(rng: np.random.Generator, sigma_field: float, sigma_sn: float, m: int, sampler: Sampler) -> float:
    if sampler == "samples":
        x = rng.normal(0.0, sigma_field, m) + rng.normal(0.0, sigma_sn, m)
        return float(x.std(ddof=1))
    var = sigma_field**2 + sigma_sn**2
    return float(np.sqrt(var * rng.chisquare(m - 1) / (m - 1)))


def lockin_point(
    rms: float, vac: float, det: DetectionParams, index: int, m: int | None = None, trace_id: int = 0
) -> tuple[float, float]:
    """One delay point: RDN estimate and its standard error.

    The stream is keyed by ``(det.seed, trace_id, index)`` so the value does
    not depend on which thread or in which order the point is evaluated, and
    distinct traces of one run draw independent noise.
    """
    m = det.samples_per_point if m is None else m
    rng = realization_rng(det.seed, index, LOCKIN_STREAM + trace_id)
    s_sig = _channel_std(rng, rms, det.delta_e_sn, m, det.sampler)
    s_ref = _channel_std(rng, vac, det.delta_e_sn, m, det.sampler)
    ratio = s_sig / s_ref / ratio_bias(m)
    return ratio - 1.0, ratio * ratio_rel_stderr(m)


def simulate_lockin_rdn(
    profile: SqueezingProfile,
    vacuum: VacuumStats | float,
    det: DetectionParams,
    smooth: bool | None = None,
    workers: int = 1,
    trace_id: int = 0,
) -> RdnTrace:
    """Monte Carlo RDN trace from two Gaussian lock-in sub-readouts per delay.

    Signal channel: ``N(0, rms^2) + N(0, SN^2)``; reference channel:
    ``N(0, vac^2) + N(0, SN^2)``.  The estimate is the bias-corrected ratio of
    sample standard deviations minus one.
    """
    m = det.samples_per_point
    if m < 100:
        raise ValueError("need at least 100 samples per point")
    smooth = det.probe_smoothing if smooth is None else smooth
    rms = detected_rms(profile, vacuum, det, smooth)
    vac = _vac(vacuum)

    def point(k):
        return lockin_point(float(rms[k]), vac, det, k, m, trace_id)

    idx = range(profile.grid.n)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(point, idx))
    else:
        results = [point(k) for k in idx]
    arr = np.asarray(results)
    return RdnTrace(profile.grid, arr[:, 0], arr[:, 1], "monte_carlo")
