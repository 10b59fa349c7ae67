"""CSV and text writers.  All numbers carry 12 significant digits and lab
units (fs, V/cm, nJ); provenance goes into '#'-prefixed header lines."""

from __future__ import annotations

import io
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detect import CoherentReadout, DetectionParams, RdnTrace, rdn_trace_analytic
from .fit import FitResult, SweepPoint, forward_model
from .squeeze import SqueezingProfile, VelocityProfile
from .vacuum import VacuumStats
from .waveforms import CONSTANTS, FS, NJ, V_PER_CM


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def constants_header() -> dict:
    return {
        "const.c_m_per_s": CONSTANTS.c,
        "const.hbar_Js": CONSTANTS.hbar,
        "const.eps0_F_per_m": CONSTANTS.eps0,
    }


def header_lines(params: Mapping | None) -> list[str]:
    if not params:
        return []
    return [f"# {k} = {fmt(v) if not isinstance(v, (list, tuple)) else '[' + ', '.join(fmt(x) for x in v) + ']'}"
            for k, v in params.items()]


def _table(header: Sequence[str], columns: Iterable[np.ndarray], params: Mapping | None) -> str:
    buf = io.StringIO()
    for line in header_lines(params):
        buf.write(line + "\n")
    buf.write(",".join(header) + "\n")
    cols = [np.asarray(c) if not isinstance(c, list) else c for c in columns]
    for row in zip(*cols):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def profile_csv(profile: SqueezingProfile, vacuum: VacuumStats, det: DetectionParams, params: Mapping | None = None) -> str:
    if profile.delta_e_rms is None or profile.transient is None:
        raise ValueError("profile needs rms noise and its transient")
    return _table(
        ["t_fs", "E_Vcm", "f", "dErms_Vcm", "RDN_analytic"],
        [
            profile.grid.t / FS,
            profile.transient.field / V_PER_CM,
            profile.f,
            profile.delta_e_rms / V_PER_CM,
            rdn_trace_analytic(profile, vacuum, det).rdn,
        ],
        params,
    )


def velocity_csv(vel: VelocityProfile, field: np.ndarray, params: Mapping | None = None) -> str:
    return _table(
        ["t_fs", "E_Vcm", "delta_n", "v_loc_over_c", "f"],
        [vel.grid.t / FS, np.asarray(field) / V_PER_CM, vel.delta_n, vel.v_loc / CONSTANTS.c, vel.f_from_velocity],
        params,
    )


def rdn_csv(trace: RdnTrace, params: Mapping | None = None) -> str:
    return _table(
        ["t_D_fs", "RDN", "RDN_stderr", "mode"],
        [trace.delays.t / FS, trace.rdn, trace.rdn_stderr, [trace.mode] * trace.delays.n],
        params,
    )


def coherent_csv(readout: CoherentReadout, params: Mapping | None = None) -> str:
    return _table(["t_D_fs", "E_Vcm"], [readout.delays.t / FS, readout.field / V_PER_CM], params)


SWEEP_COLUMNS = ["pump_energy_nJ", "rdn_max", "rdn_min", "stderr_max", "stderr_min"]


def sweep_csv(points: Sequence[SweepPoint], params: Mapping | None = None) -> str:
    return _table(
        SWEEP_COLUMNS,
        [
            [p.pump_energy / NJ for p in points],
            [p.rdn_max for p in points],
            [p.rdn_min for p in points],
            [p.stderr_max for p in points],
            [p.stderr_min for p in points],
        ],
        params,
    )


def read_params(text: str) -> dict[str, str]:
    """``# key = value`` provenance lines of a CSV, values left as strings."""
    params = {}
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            params[key.strip()] = val.strip()
    return params


def read_sweep_csv(text: str) -> tuple[list[SweepPoint], dict]:
    """Parse ``sweep_csv`` output; returns points and the header parameters."""
    params = read_params(text)
    rows = []
    header = None
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        if header is None:
            header = [h.strip() for h in line.split(",")]
            missing = [c for c in SWEEP_COLUMNS[:3] if c not in header]
            if missing:
                raise ValueError(f"sweep CSV lacks columns {missing}")
            continue
        vals = dict(zip(header, (float(x) for x in line.split(","))))
        rows.append(
            SweepPoint(
                vals["pump_energy_nJ"] * NJ,
                vals["rdn_max"],
                vals["rdn_min"],
                vals.get("stderr_max", 0.0),
                vals.get("stderr_min", 0.0),
            )
        )
    if header is None:
        raise ValueError("sweep CSV has no header row")
    return rows, params


def fit_report(fit: FitResult, params: Mapping | None = None) -> str:
    """``key = value`` lines, one squeezing entry per fitted energy."""
    lines = header_lines(params)
    lines += [
        f"g_perJ = {fmt(fit.g)}",
        f"g_stderr_perJ = {fmt(fit.g_stderr)}",
        f"eta = {fmt(fit.eta)}",
        f"eta_stderr = {fmt(fit.eta_stderr)}",
        f"g_eta_correlation = {fmt(fit.correlation)}",
        f"residual_rms = {fmt(fit.residual_rms)}",
    ]
    for e, s in zip(fit.energies, fit.squeezing_curve):
        lines.append(f"squeezing_percent_at[{fmt(e / NJ)}nJ] = {fmt(100 * s)}")
    return "\n".join(lines) + "\n"


def fit_branches_csv(
    fit: FitResult,
    points: Sequence[SweepPoint],
    vacuum: VacuumStats | float,
    det: DetectionParams | float,
    n_model: int = 50,
    params: Mapping | None = None,
) -> str:
    """Model curves on a dense energy grid followed by the data rows."""
    top = max(p.pump_energy for p in points)
    dense = np.linspace(0.0, top * 1.1, n_model)
    hi, lo = forward_model(fit.g, fit.eta, dense, vacuum, det)
    kinds = ["model"] * n_model + ["data"] * len(points)
    energies = list(dense / NJ) + [p.pump_energy / NJ for p in points]
    rmax = list(hi) + [p.rdn_max for p in points]
    rmin = list(lo) + [p.rdn_min for p in points]
    sq = list(1 - np.exp(-fit.g * dense)) + [fit.squeezing_at(p.pump_energy) for p in points]
    return _table(
        ["kind", "pump_energy_nJ", "rdn_max", "rdn_min", "squeezing"],
        [kinds, energies, rmax, rmin, sq],
        params,
    )


def read_table(text: str) -> tuple[list[str], list[list[str]]]:
    """Column names and raw string rows of a CSV, skipping '#' lines."""
    header, rows = None, []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if header is None:
            header = parts
        else:
            rows.append(parts)
    if header is None:
        raise ValueError("table has no header")
    return header, rows
