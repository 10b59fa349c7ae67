"""Pump-energy sweeps: extremal RDN, the uncertainty-product forward model
and the least-squares calibration of in-crystal squeezing.

Forward model.  Inside the crystal the extremal squeezing factors are
``f = +/- g*W`` for pump energy ``W``, so the two extremal noise amplitudes
multiply to the vacuum variance exactly.  Before detection a fraction
``1 - eta`` of that state is replaced by bare vacuum::

    dE^2(t_max) = eta * exp(+2 g W) * vac^2 + (1 - eta) * vac^2
    dE^2(t_min) = eta * exp(-2 g W) * vac^2 + (1 - eta) * vac^2

and both are read out through ``rdn_exact``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .detect import DetectionParams, RdnTrace, rdn_exact
from .squeeze import SqueezingProfile
from .vacuum import VacuumStats

# Fixed multi-start grid: (g * W_max, eta).
FIT_STARTS = tuple((ge, eta) for ge in (0.1, 0.4, 1.0, 2.0) for eta in (0.1, 0.5, 0.9))
_LOGIT_CLIP = 30.0


@dataclass(frozen=True)
class SweepPoint:
    pump_energy: float
    rdn_max: float
    rdn_min: float
    stderr_max: float = 0.0
    stderr_min: float = 0.0

    def __post_init__(self):
        vals = (self.pump_energy, self.rdn_max, self.rdn_min, self.stderr_max, self.stderr_min)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("sweep point values must be finite")
        if self.rdn_max < self.rdn_min:
            raise ValueError("rdn_max must not be below rdn_min")
        if self.stderr_max < 0 or self.stderr_min < 0:
            raise ValueError("standard errors must be non-negative")


@dataclass(frozen=True)
class FitResult:
    g: float
    eta: float
    residual_rms: float
    energies: np.ndarray = dc_field(repr=False)
    squeezing_curve: np.ndarray = dc_field(repr=False)
    g_stderr: float = float("nan")
    eta_stderr: float = float("nan")
    correlation: float = float("nan")

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("fitted gain must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("fitted eta must lie in [0, 1]")

    def squeezing_at(self, pump_energy: float) -> float:
        """In-crystal squeezing ``1 - exp(-g W)``."""
        return float(1.0 - np.exp(-self.g * pump_energy))


@dataclass(frozen=True)
class AsymmetryMetric:
    pump_energy: float
    value: float


def forward_model(g: float, eta: float, pump_energy, vacuum: VacuumStats | float, det: DetectionParams | float):
    """Extremal RDN pair ``(rdn_max, rdn_min)`` predicted for pump energy."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    if not g > 0:
        raise ValueError("g must be positive")
    vac = vacuum.delta_e_vac if isinstance(vacuum, VacuumStats) else float(vacuum)
    ge = g * np.asarray(pump_energy, dtype=float)
    var_max = eta * np.exp(2 * ge) + (1 - eta)
    var_min = eta * np.exp(-2 * ge) + (1 - eta)
    return (
        rdn_exact(vac * np.sqrt(var_max), vac, det),
        rdn_exact(vac * np.sqrt(var_min), vac, det),
    )


def _validate(points: Sequence[SweepPoint]) -> None:
    energies = {p.pump_energy for p in points}
    if len(energies) < 3:
        raise ValueError(">= 3 distinct energies required for the sweep fit")
    if any(p.pump_energy < 0 for p in points):
        raise ValueError("pump energies must be non-negative")


def fit_sweep(
    points: Sequence[SweepPoint],
    vacuum: VacuumStats | float,
    det: DetectionParams | float,
    starts: Sequence[tuple[float, float]] = FIT_STARTS,
) -> FitResult:
    """Weighted least squares for ``(g, eta)`` over both extremal branches.

    Works in ``(log(g*W_max), logit(eta))``; every start in ``starts`` (given
    as ``(g*W_max, eta)``) is refined by trust-region least squares and the
    lowest cost wins, ties to the earlier start.  Weights are ``1/stderr``
    when every point carries standard errors, uniform otherwise.
    """
    _validate(points)
    w_pump = np.array([p.pump_energy for p in points])
    data = np.concatenate([[p.rdn_max for p in points], [p.rdn_min for p in points]])
    errs = np.concatenate([[p.stderr_max for p in points], [p.stderr_min for p in points]])
    weighted = bool(np.all(errs > 0))
    wts = 1.0 / errs if weighted else np.ones_like(data)
    scale = float(w_pump.max())
    if not scale > 0:
        raise ValueError("sweep needs a positive pump energy")

    def unpack(p):
        return np.exp(np.clip(p[0], -50.0, 5.0)) / scale, special.expit(np.clip(p[1], -_LOGIT_CLIP, _LOGIT_CLIP))

    def resid(p):
        g, eta = unpack(p)
        hi, lo = forward_model(g, eta, w_pump, vacuum, det)
        return (np.concatenate([hi, lo]) - data) * wts

    best = None
    for ge, eta0 in starts:
        p0 = np.array([np.log(ge), special.logit(eta0)])
        sol = optimize.least_squares(resid, p0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        if best is None or sol.cost < best.cost:
            best = sol
    g, eta = unpack(best.x)
    res = best.fun / wts
    g_err = eta_err = corr = float("nan")
    jac = best.jac
    try:
        d = np.array([g, eta * (1 - eta)])
        cov = np.linalg.inv(jac.T @ jac) * np.outer(d, d)
        sd = np.sqrt(np.diag(cov))
        corr = cov[0, 1] / (sd[0] * sd[1])
        if not weighted:
            sd = sd * np.sqrt(2 * best.cost / max(data.size - 2, 1))
        g_err, eta_err = sd
    except np.linalg.LinAlgError:
        pass
    return FitResult(
        g=float(g),
        eta=float(eta),
        residual_rms=float(np.sqrt(np.mean(res**2))),
        energies=w_pump.copy(),
        squeezing_curve=1.0 - np.exp(-g * w_pump),
        g_stderr=float(g_err),
        eta_stderr=float(eta_err),
        correlation=float(corr),
    )


def asymmetry_series(points: Sequence[SweepPoint]) -> list[AsymmetryMetric]:
    """``rdn_max + rdn_min`` per point, sorted by pump energy; positive when
    excess noise outweighs squeezing."""
    if not points:
        raise ValueError("asymmetry needs at least one sweep point")
    ordered = sorted(points, key=lambda p: p.pump_energy)
    return [AsymmetryMetric(p.pump_energy, p.rdn_max + p.rdn_min) for p in ordered]


def product_invariant_check(
    profile_plus: SqueezingProfile, profile_minus: SqueezingProfile, vacuum: VacuumStats | float
) -> float:
    """Largest relative deviation of ``rms+(t) * rms-(t)`` from ``vac^2``."""
    if profile_plus.grid != profile_minus.grid:
        raise ValueError("profiles live on different grids")
    if profile_plus.delta_e_rms is None or profile_minus.delta_e_rms is None:
        raise ValueError("profiles need rms noise")
    vac = vacuum.delta_e_vac if isinstance(vacuum, VacuumStats) else float(vacuum)
    prod = profile_plus.delta_e_rms * profile_minus.delta_e_rms / vac**2
    return float(np.max(np.abs(prod - 1.0)))


def sweep_point_from_trace(
    trace: RdnTrace,
    pump_energy: float,
    i_max: int | None = None,
    i_min: int | None = None,
) -> SweepPoint:
    """Extremal RDN of a trace.

    Without indices the trace's own maximum and minimum are used; pass the
    sample indices of extremal coherent slope to read the trace there instead.
    """
    i_max = int(np.argmax(trace.rdn)) if i_max is None else i_max
    i_min = int(np.argmin(trace.rdn)) if i_min is None else i_min
    return SweepPoint(
        pump_energy,
        float(trace.rdn[i_max]),
        float(trace.rdn[i_min]),
        float(trace.rdn_stderr[i_max]),
        float(trace.rdn_stderr[i_min]),
    )
