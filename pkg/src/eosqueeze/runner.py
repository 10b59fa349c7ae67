"""End-to-end orchestration: scenario -> transients -> squeezing -> detection
-> CSV/JSON/SVG artifacts, recorded in a checksummed run manifest.

Results never depend on ``workers``: every Monte Carlo stream is keyed by
``(seed, trace, delay index)`` and parallel maps keep their input order.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import Scenario, load_scenario
from .detect import (
    CoherentReadout,
    RdnTrace,
    coherent_readout,
    rdn_trace_analytic,
    simulate_lockin_rdn,
    vacuum_fraction,
)
from .errors import ConfigError
from .export import (
    coherent_csv,
    constants_header,
    fit_branches_csv,
    fit_report,
    profile_csv,
    rdn_csv,
    sweep_csv,
    velocity_csv,
)
from .fit import FitResult, SweepPoint, asymmetry_series, fit_sweep, product_invariant_check, sweep_point_from_trace
from .squeeze import (
    SqueezingProfile,
    analytic_noise,
    calibrate_gain,
    pockels_velocity,
    profile_from_rms,
    propagated_std_exact,
    squeezing_factor,
)
from .vacuum import VacuumStats
from .waveforms import FS, NJ, V_PER_CM, CoherentTransient, time_derivative

OUTPUT_ENV = "EOSQUEEZE_OUTPUT_DIR"
MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    command: str
    scenario_hash: str
    version: str
    seed: int
    wall_clock_s: float
    output_dir: str
    scenario: dict
    files: list[dict] = dc_field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunManifest":
        try:
            return cls(
                command=doc["command"],
                scenario_hash=doc["scenario_hash"],
                version=doc["version"],
                seed=int(doc["seed"]),
                wall_clock_s=float(doc["wall_clock_s"]),
                output_dir=doc["output_dir"],
                scenario=doc["scenario"],
                files=list(doc.get("files", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            raise ValueError(f"{path}: manifest is empty")
        return cls.from_dict(json.loads(text))

    def checksums(self) -> dict[str, str]:
        return {f["path"]: f["sha256"] for f in self.files}


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def output_dir_for(sc: Scenario, override: str | Path | None = None) -> Path:
    """Explicit override, then the environment variable, then the scenario."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(sc.output_dir)


class _Writer:
    def __init__(self, root: Path):
        self.root = root
        self.entries: list[dict] = []
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str, kind: str, **meta) -> Path:
        path = self.root / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.entries.append({"path": name, "sha256": sha256_file(path), "kind": kind, **meta})
        return path


# --------------------------------------------------------------------------
# physics pipeline


def resolve_gain(sc: Scenario) -> float:
    if sc.gain is not None:
        return sc.gain
    return calibrate_gain(
        sc.calibrate_f_min, sc.calibrate_at, sc.transient, sc.crystal, sc.grid, sc.propagation.derivative
    )


def build_transient(sc: Scenario, gain: float, pump_energy: float, flip_cep: bool = False) -> CoherentTransient:
    spec = replace(sc.transient, cep=sc.transient.cep + np.pi) if flip_cep else sc.transient
    return spec.build(sc.grid, pump_energy, gain)


def noise_profile(sc: Scenario, transient: CoherentTransient, vacuum: VacuumStats) -> SqueezingProfile:
    """Exit-face rms through the configured route."""
    if sc.propagation.method == "analytic":
        return analytic_noise(squeezing_factor(transient, sc.crystal, sc.propagation.derivative), vacuum)
    rms = propagated_std_exact(transient, sc.crystal, vacuum, sc.propagation, sc.band_limit)
    return profile_from_rms(transient, sc.crystal, rms, vacuum)


@dataclass
class TraceResult:
    tag: str
    pump_energy: float
    flipped: bool
    transient: CoherentTransient
    profile: SqueezingProfile
    readout: CoherentReadout
    analytic: RdnTrace
    mc: RdnTrace | None

    @property
    def detected(self) -> RdnTrace:
        return self.mc if self.mc is not None else self.analytic


def energy_tag(pump_energy: float, flipped: bool | None = None) -> str:
    tag = f"E{pump_energy / NJ:g}nJ"
    if flipped is not None:
        tag += "_cepPi" if flipped else "_cep0"
    return tag


def simulate_trace(
    sc: Scenario,
    gain: float,
    vacuum: VacuumStats,
    pump_energy: float,
    flipped: bool,
    trace_id: int,
    tag: str,
    workers: int = 1,
) -> TraceResult:
    tr = build_transient(sc, gain, pump_energy, flipped)
    prof = noise_profile(sc, tr, vacuum)
    det = sc.detection
    # the analytic trace is the bare (unsmoothed) pattern; probe smoothing applies to the MC readout
    analytic = rdn_trace_analytic(prof, vacuum, det)
    mc = simulate_lockin_rdn(prof, vacuum, det, workers=workers, trace_id=trace_id) if sc.monte_carlo else None
    return TraceResult(tag, pump_energy, flipped, tr, prof, coherent_readout(tr, det), analytic, mc)


def slope_extrema(readout: CoherentReadout, d_eff: float) -> tuple[int, int]:
    """Delay indices where excess noise and squeezing peak according to the
    coherent readout: ``sign(d_eff) * dE/dt`` maximal and minimal."""
    slope = np.sign(d_eff) * time_derivative(readout.field, readout.delays)
    return int(np.argmax(slope)), int(np.argmin(slope))


def sweep_point(sc: Scenario, res: TraceResult) -> SweepPoint:
    trace = res.detected
    if sc.extrema == "slope" and res.pump_energy > 0:
        i_max, i_min = slope_extrema(res.readout, sc.crystal.d_eff)
        return sweep_point_from_trace(trace, res.pump_energy, i_max, i_min)
    return sweep_point_from_trace(trace, res.pump_energy)


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# artifact writing


def _header(sc: Scenario, gain: float, vacuum: VacuumStats, extra: dict | None = None) -> dict:
    h = {"tool": "eosqueeze", "version": __version__, "scenario_hash": sc.hash}
    h.update(sc.header())
    h.update(constants_header())
    h["derived.gain_Vcm_per_nJ"] = gain / V_PER_CM * NJ
    h["derived.delta_e_vac_Vcm"] = vacuum.delta_e_vac / V_PER_CM
    h["derived.vacuum_fraction"] = vacuum_fraction(sc.detection, vacuum)
    if extra:
        h.update(extra)
    return h


def _write_trace_files(w: _Writer, sc: Scenario, res: TraceResult, vacuum: VacuumStats, base: dict) -> None:
    hdr = dict(base, **{"trace.tag": res.tag, "trace.pump_energy_nJ": res.pump_energy / NJ,
                        "trace.cep_rad": res.transient.cep})
    meta = {"tag": res.tag, "pump_energy_nJ": res.pump_energy / NJ, "cep_flipped": res.flipped}
    w.write(f"profile_{res.tag}.csv", profile_csv(res.profile, vacuum, sc.detection, hdr), "profile", **meta)
    w.write(f"coherent_{res.tag}.csv", coherent_csv(res.readout, hdr), "coherent", **meta)
    w.write(f"rdn_analytic_{res.tag}.csv", rdn_csv(res.analytic, hdr), "rdn_analytic", **meta)
    if res.mc is not None:
        w.write(f"rdn_mc_{res.tag}.csv", rdn_csv(res.mc, hdr), "rdn_mc", **meta)
    if res.pump_energy > 0:
        vel = pockels_velocity(res.transient, sc.crystal, sc.propagation.derivative)
        w.write(f"velocity_{res.tag}.csv", velocity_csv(vel, res.transient.field, hdr), "velocity", **meta)


def _trace_summary(res: TraceResult) -> dict:
    det = res.detected
    return {
        "tag": res.tag,
        "pump_energy_nJ": res.pump_energy / NJ,
        "cep_flipped": res.flipped,
        "f_min": res.profile.f_min,
        "f_max": res.profile.f_max,
        "rdn_max": float(np.max(det.rdn)),
        "rdn_min": float(np.min(det.rdn)),
        "t_rdn_max_fs": float(det.delays.t[int(np.argmax(det.rdn))] / FS),
        "t_rdn_min_fs": float(det.delays.t[int(np.argmin(det.rdn))] / FS),
        "rdn_mode": det.mode,
    }


def _finish(w: _Writer, sc: Scenario, command: str, start: float, summary: dict) -> RunManifest:
    if "json" in sc.formats:
        w.write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n", "summary")
    manifest = RunManifest(
        command=command,
        scenario_hash=sc.hash,
        version=__version__,
        seed=sc.detection.seed,
        wall_clock_s=0.0,
        output_dir=str(w.root),
        scenario=sc.resolved,
        files=list(w.entries),
    )
    if "svg" in sc.formats:
        from .figures import emit_figures

        emit_figures(manifest, root=w.root)
    manifest.wall_clock_s = round(time.perf_counter() - start, 6)
    (w.root / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8", newline="\n")
    return manifest


def _scenario(src: Scenario | str | Path) -> Scenario:
    return src if isinstance(src, Scenario) else load_scenario(src)


def run_scenario(
    src: Scenario | str | Path,
    output_dir: str | Path | None = None,
    workers: int | None = None,
) -> RunManifest:
    """Single-energy (or per-energy, when a sweep list is given) traces with
    optional CEP-flipped partners, exported as CSV, JSON and SVG."""
    start = time.perf_counter()
    sc = _scenario(src)
    workers = sc.workers if workers is None else workers
    gain = resolve_gain(sc)
    vacuum = sc.vacuum()
    energies = sc.energies if sc.energies is not None else (sc.pump_energy,)
    jobs = []
    for e in energies:
        for flipped in ((False, True) if sc.cep_pair else (False,)):
            tag = energy_tag(e, flipped if sc.cep_pair else None)
            jobs.append((e, flipped, len(jobs), tag))
    # delay-level threads inside a trace, trace-level threads across traces
    inner = workers if len(jobs) == 1 else 1
    results = _pmap(lambda j: simulate_trace(sc, gain, vacuum, j[0], j[1], j[2], j[3], inner), jobs, workers)

    w = _Writer(output_dir_for(sc, output_dir))
    base = _header(sc, gain, vacuum)
    for res in results:
        _write_trace_files(w, sc, res, vacuum, base)

    summary = {
        "scenario": sc.name,
        "gain_Vcm_per_nJ": gain / V_PER_CM * NJ,
        "delta_e_vac_Vcm": vacuum.delta_e_vac / V_PER_CM,
        "vacuum_fraction": vacuum_fraction(sc.detection, vacuum),
        "traces": [_trace_summary(r) for r in results],
    }
    if sc.cep_pair:
        pairs = []
        for i in range(0, len(results), 2):
            a, b = results[i], results[i + 1]
            pairs.append({
                "pump_energy_nJ": a.pump_energy / NJ,
                "product_invariant_deviation": product_invariant_check(a.profile, b.profile, vacuum),
                "max_abs_rdn_sum": float(np.max(np.abs(a.detected.rdn + b.detected.rdn))),
            })
        summary["cep_pairs"] = pairs
    return _finish(w, sc, "run", start, summary)


def run_sweep_and_fit(
    src: Scenario | str | Path,
    output_dir: str | Path | None = None,
    workers: int | None = None,
) -> RunManifest:
    """Pump-energy sweep -> extremal RDN per energy -> (g, eta) fit."""
    start = time.perf_counter()
    sc = _scenario(src)
    if not sc.energies:
        raise ConfigError("sweep needs [sweep] energies_nJ")
    if len(set(sc.energies)) < 3:
        raise ValueError(">= 3 distinct energies required for the sweep fit")
    workers = sc.workers if workers is None else workers
    gain = resolve_gain(sc)
    vacuum = sc.vacuum()
    jobs = [(e, k, energy_tag(e)) for k, e in enumerate(sc.energies)]
    results = _pmap(lambda j: simulate_trace(sc, gain, vacuum, j[0], False, j[1], j[2]), jobs, workers)
    points = [sweep_point(sc, r) for r in results]
    fit = fit_sweep(points, vacuum, sc.detection)

    w = _Writer(output_dir_for(sc, output_dir))
    base = _header(sc, gain, vacuum)
    for res in results:
        _write_trace_files(w, sc, res, vacuum, base)
    w.write("sweep.csv", sweep_csv(points, base), "sweep")
    w.write("fit_report.txt", fit_report(fit, base), "fit_report")
    w.write("fit_branches.csv", fit_branches_csv(fit, points, vacuum, sc.detection, params=base), "fit_branches")
    summary = {
        "scenario": sc.name,
        "gain_Vcm_per_nJ": gain / V_PER_CM * NJ,
        "delta_e_vac_Vcm": vacuum.delta_e_vac / V_PER_CM,
        "fit": fit_summary(fit),
        "points": [asdict(p) | {"pump_energy_nJ": p.pump_energy / NJ} for p in points],
        "asymmetry": [{"pump_energy_nJ": a.pump_energy / NJ, "value": a.value} for a in asymmetry_series(points)],
    }
    return _finish(w, sc, "sweep", start, summary)


def fit_summary(fit: FitResult) -> dict:
    return {
        "g_perJ": fit.g,
        "g_stderr_perJ": fit.g_stderr,
        "eta": fit.eta,
        "eta_stderr": fit.eta_stderr,
        "g_eta_correlation": fit.correlation,
        "residual_rms": fit.residual_rms,
        "squeezing_at_nJ": {f"{e / NJ:g}": s for e, s in zip(fit.energies, fit.squeezing_curve)},
    }
