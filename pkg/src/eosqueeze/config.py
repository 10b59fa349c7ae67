"""Scenario files: a TOML tree in lab units (fs, nJ, V/cm, THz, um, pm/V),
validated in full and converted to SI before anything is computed.

Every section and key is listed in ``SCHEMA``; unknown ones are rejected with
the line they appear on.  ``Scenario.resolved`` is the fully defaulted tree in
lab units, which is what manifests embed and what the scenario hash covers.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .detect import DetectionParams
from .errors import ConfigError
from .squeeze import PropagationConfig
from .vacuum import VacuumStats, make_reference_vacuum, vacuum_amplitude
from .waveforms import (
    FS,
    NJ,
    PM_PER_V,
    THZ,
    UM,
    V_PER_CM,
    CrystalParams,
    ProbeParams,
    TimeGrid,
    TransientSpec,
)


@dataclass(frozen=True)
class Key:
    kind: type | tuple
    default: Any
    doc: str
    choices: tuple | None = None
    check: Callable[[Any], bool] | None = None
    check_msg: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _u64(x):
    return 0 <= x < (1 << 64)


# section -> key -> spec.  ``None`` defaults are optional keys.
SCHEMA: dict[str, dict[str, Key]] = {
    "scenario": {
        "name": Key(str, "scenario", "label written into every output header"),
        "cep_pair": Key(bool, False, "also run the transient with CEP shifted by pi"),
        "monte_carlo": Key(bool, True, "simulate the lock-in readout in addition to the analytic trace"),
        "workers": Key(int, 1, "threads for delay/energy parallelism (results do not depend on it)", check=_pos, check_msg="must be >= 1"),
    },
    "grid": {
        "t0_fs": Key(float, -512.0, "first delay sample"),
        "dt_fs": Key(float, 0.5, "delay step", check=_pos, check_msg="must be positive"),
        "n": Key(int, 2048, "number of delay samples", check=lambda v: v >= 8, check_msg="must be >= 8"),
    },
    "transient": {
        "kind": Key(str, "gaussian", "waveform family", choices=("gaussian", "rectification")),
        "center_freq_THz": Key(float, 44.0, "carrier frequency (gaussian kind)", check=_pos, check_msg="must be positive"),
        "env_fwhm_fs": Key(float, 90.0, "intensity-envelope FWHM; pump FWHM for the rectification kind", check=_pos, check_msg="must be positive"),
        "cep_rad": Key(float, 0.0, "carrier-envelope phase"),
        "pump_energy_nJ": Key(float, 3.5, "pump energy of the single run", check=_nonneg, check_msg="must be non-negative"),
        "gain_Vcm_per_nJ": Key(float, None, "field per pump energy; omit to calibrate", check=_pos, check_msg="must be positive"),
        "calibrate_f_min": Key(float, -0.6931471805599453, "target minimum squeezing factor of the calibration", check=lambda v: v < 0, check_msg="must be negative"),
        "calibrate_at_nJ": Key(float, 3.5, "pump energy of the calibration anchor", check=_pos, check_msg="must be positive"),
    },
    "crystal": {
        "label": Key(str, "GaSe", "crystal name"),
        "d_eff_pm_per_V": Key(float, -54.0, "effective nonlinear coefficient", check=lambda v: v != 0, check_msg="must be non-zero"),
        "n": Key(float, 2.8, "refractive index", check=lambda v: v >= 1, check_msg="must be >= 1"),
        "length_um": Key(float, 16.0, "crystal thickness", check=_pos, check_msg="must be positive"),
    },
    "probe": {
        "duration_fs": Key(float, 5.8, "probe intensity FWHM", check=_pos, check_msg="must be positive"),
        "waist_um": Key(float, 3.6, "probe waist radius", check=_pos, check_msg="must be positive"),
        "dx_n": Key(float, 2.6, "refractive-index group factor of the segment length", check=_pos, check_msg="must be positive"),
    },
    "detection": {
        "delta_e_sn_Vcm": Key(float, 81.0, "shot-noise-equivalent field", check=_pos, check_msg="must be positive"),
        "vacuum": Key(str, "reference", "vacuum amplitude source", choices=("reference", "derived")),
        "delta_e_vac_Vcm": Key(float, 24.0, "reference vacuum amplitude (vacuum = reference)", check=_pos, check_msg="must be positive"),
        "width": Key(str, "fwhm", "probe width convention (vacuum = derived)", choices=("fwhm", "rms", "integral")),
        "eta": Key(float, 1.0, "fraction of the squeezed state reaching the detector", check=lambda v: 0 <= v <= 1, check_msg="must lie in [0, 1]"),
        "samples_per_point": Key(int, 100000, "lock-in samples per channel and delay", check=lambda v: v >= 100, check_msg="must be >= 100"),
        "seed": Key(int, 0, "root seed of every random stream", check=_u64, check_msg="must be a 64-bit unsigned integer"),
        "probe_smoothing": Key(bool, True, "gate the noise profile with the probe before the Monte Carlo readout (analytic traces stay bare)"),
        "sampler": Key(str, "chi2", "lock-in channel sampler", choices=("chi2", "samples")),
    },
    "propagation": {
        "method": Key(str, "analytic", "exit-face noise route", choices=("analytic", "time_domain", "spectral")),
        "z_steps": Key(int, 256, "z-steps of the numerical march", check=_pos, check_msg="must be >= 1"),
        "include_second_term": Key(bool, False, "keep the field-times-derivative term"),
        "derivative": Key(str, "spectral", "time-derivative method", choices=("spectral", "fd")),
        "band_limit_THz": Key(float, 100.0, "vacuum band limit of numerical propagation", check=_pos, check_msg="must be positive"),
    },
    "sweep": {
        "energies_nJ": Key(list, None, "pump energies of the sweep"),
        "extrema": Key(str, "trace", "where extremal RDN is read", choices=("trace", "slope")),
    },
    "output": {
        "directory": Key(str, "eosqueeze-out", "output directory (overridden by EOSQUEEZE_OUTPUT_DIR)"),
        "formats": Key(list, ["csv", "json", "svg"], "artifact kinds to write"),
    },
}

OUTPUT_FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class Scenario:
    """Validated scenario in SI units plus the resolved lab-unit tree."""

    name: str
    grid: TimeGrid
    transient: TransientSpec
    pump_energy: float
    gain: float | None
    calibrate_f_min: float
    calibrate_at: float
    crystal: CrystalParams
    probe: ProbeParams
    detection: DetectionParams
    vacuum_source: str
    delta_e_vac: float
    width: str
    propagation: PropagationConfig
    band_limit: float
    energies: tuple[float, ...] | None
    extrema: str
    cep_pair: bool
    monte_carlo: bool
    workers: int
    output_dir: str
    formats: tuple[str, ...]
    resolved: dict

    def vacuum(self) -> VacuumStats:
        if self.vacuum_source == "derived":
            return vacuum_amplitude(self.probe, width=self.width)
        return make_reference_vacuum(self.delta_e_vac, probe=self.probe)

    def physics_tree(self) -> dict:
        """Resolved tree without the output section (which must not influence results)."""
        return {k: v for k, v in self.resolved.items() if k != "output"}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.physics_tree(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def header(self) -> dict:
        """Flat ``section.key -> value`` view for CSV provenance headers."""
        out = {}
        for sec, keys in self.physics_tree().items():
            for k, v in keys.items():
                out[f"{sec}.{k}"] = "none" if v is None else v
        return out


def _key_line(text: str, section: str, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or the section header)."""
    current = None
    sec_re = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]")
    for no, line in enumerate(text.splitlines(), 1):
        m = sec_re.match(line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            km = re.match(r"^\s*([A-Za-z0-9_\"'-]+)\s*=", line)
            if km and km.group(1).strip("\"'") == key:
                return no
    return None


def _where(text: str | None, source: str, section: str, key: str | None) -> str:
    line = _key_line(text, section, key) if text else None
    loc = f"{source}:{line}" if line else source
    name = f"[{section}]" if key is None else f"{section}.{key}"
    return f"{loc}: {name}"


def _coerce(val, spec: Key, where: str):
    if val is None and spec.default is None:
        return None  # optional key left unset (only expressible in JSON manifests)
    kind = spec.kind
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {val!r}")
        val = float(val)
        if not np.isfinite(val):
            raise ConfigError(f"{where}: must be finite")
    elif kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{where}: expected an integer, got {val!r}")
    elif kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{where}: expected true or false, got {val!r}")
    elif kind is str:
        if not isinstance(val, str):
            raise ConfigError(f"{where}: expected a string, got {val!r}")
    elif kind is list:
        if not isinstance(val, list):
            raise ConfigError(f"{where}: expected a list, got {val!r}")
    if spec.choices is not None and val not in spec.choices:
        raise ConfigError(f"{where}: {val!r} is not one of {', '.join(spec.choices)}")
    if spec.check is not None and not spec.check(val):
        raise ConfigError(f"{where}: {spec.check_msg} (got {val!r})")
    return val


def resolve_tree(tree: dict, text: str | None = None, source: str = "<scenario>") -> dict:
    """Validate a raw tree against ``SCHEMA`` and fill in defaults."""
    if not isinstance(tree, dict):
        raise ConfigError(f"{source}: scenario must be a table")
    for sec, body in tree.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(text, source, sec, None)}: unknown section {sec!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{_where(text, source, sec, None)}: section must be a table")
        for key in body:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{_where(text, source, sec, key)}: unknown key {key!r}")
    resolved: dict = {}
    for sec, keys in SCHEMA.items():
        body = tree.get(sec, {})
        out = {}
        for key, spec in keys.items():
            if key in body:
                out[key] = _coerce(body[key], spec, _where(text, source, sec, key))
            else:
                out[key] = list(spec.default) if isinstance(spec.default, list) else spec.default
        resolved[sec] = out
    _cross_checks(resolved, text, source)
    return resolved


def _cross_checks(r: dict, text, source) -> None:
    energies = r["sweep"]["energies_nJ"]
    if energies is not None:
        where = _where(text, source, "sweep", "energies_nJ")
        if not energies:
            raise ConfigError(f"{where}: energy list is empty")
        vals = []
        for e in energies:
            if isinstance(e, bool) or not isinstance(e, (int, float)) or not np.isfinite(e) or e < 0:
                raise ConfigError(f"{where}: energies must be non-negative numbers, got {e!r}")
            vals.append(float(e))
        r["sweep"]["energies_nJ"] = vals
    fmts = r["output"]["formats"]
    where = _where(text, source, "output", "formats")
    for f in fmts:
        if f not in OUTPUT_FORMATS:
            raise ConfigError(f"{where}: unknown format {f!r}; choose from {', '.join(OUTPUT_FORMATS)}")
    if "csv" not in fmts:
        raise ConfigError(f"{where}: 'csv' is required, figures and fits read the CSV data")
    g = r["grid"]
    nyq = 0.5 / (g["dt_fs"] * FS)
    if r["propagation"]["method"] != "analytic" and r["propagation"]["band_limit_THz"] * THZ >= nyq:
        raise ConfigError(
            f"{_where(text, source, 'propagation', 'band_limit_THz')}: band limit must stay below "
            f"the grid Nyquist frequency {nyq / THZ:.6g} THz"
        )
    if r["probe"]["duration_fs"] < g["dt_fs"] * (1 - 1e-12):
        raise ConfigError(f"{_where(text, source, 'probe', 'duration_fs')}: probe is shorter than the grid step")


def build_scenario(resolved: dict) -> Scenario:
    """Convert a resolved lab-unit tree into SI objects."""
    s, g, t, c, p, d, pr, sw, o = (
        resolved[k] for k in ("scenario", "grid", "transient", "crystal", "probe", "detection", "propagation", "sweep", "output")
    )
    try:
        grid = TimeGrid(g["t0_fs"] * FS, g["dt_fs"] * FS, g["n"])
        probe = ProbeParams(p["duration_fs"] * FS, p["waist_um"] * UM, p["dx_n"])
        spec = TransientSpec(t["kind"], t["center_freq_THz"] * THZ, t["env_fwhm_fs"] * FS, t["cep_rad"])
        crystal = CrystalParams(c["d_eff_pm_per_V"] * PM_PER_V, c["n"], c["length_um"] * UM, c["label"])
        det = DetectionParams(
            d["delta_e_sn_Vcm"] * V_PER_CM, d["samples_per_point"], probe, d["seed"], d["eta"],
            d["probe_smoothing"], d["sampler"],
        )
        prop = PropagationConfig(pr["z_steps"], pr["include_second_term"], pr["method"], pr["derivative"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    gain = t["gain_Vcm_per_nJ"]
    energies = sw["energies_nJ"]
    return Scenario(
        name=s["name"],
        grid=grid,
        transient=spec,
        pump_energy=t["pump_energy_nJ"] * NJ,
        gain=None if gain is None else gain * V_PER_CM / NJ,
        calibrate_f_min=t["calibrate_f_min"],
        calibrate_at=t["calibrate_at_nJ"] * NJ,
        crystal=crystal,
        probe=probe,
        detection=det,
        vacuum_source=d["vacuum"],
        delta_e_vac=d["delta_e_vac_Vcm"] * V_PER_CM,
        width=d["width"],
        propagation=prop,
        band_limit=pr["band_limit_THz"] * THZ,
        energies=None if energies is None else tuple(e * NJ for e in energies),
        extrema=sw["extrema"],
        cep_pair=s["cep_pair"],
        monte_carlo=s["monte_carlo"],
        workers=s["workers"],
        output_dir=o["directory"],
        formats=tuple(o["formats"]),
        resolved=resolved,
    )


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return build_scenario(resolve_tree(tree, text, source))


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or the scenario embedded in a run manifest (``.json``)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict) or "scenario" not in doc:
            raise ConfigError(f"{path}: manifest has no embedded scenario")
        return build_scenario(resolve_tree(doc["scenario"], None, str(path)))
    return parse_scenario_text(text, str(path))


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``fig2``, ``fig3``, ``fig4``)."""
    p = Path(__file__).parent / "scenarios" / f"{name}.toml"
    if not p.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return p


def schema_markdown() -> str:
    """Reference table of every key, used for the documentation."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, spec in keys.items():
            extra = f" one of {', '.join(spec.choices)};" if spec.choices else ""
            lines.append(f"  {k} (default {spec.default!r}):{extra} {spec.doc}")
    return "\n".join(lines)
