"""Command-line entry point.

Exit codes: 0 success, 2 invalid input (scenario, CSV or manifest),
3 numerical failure.  ``EOSQUEEZE_OUTPUT_DIR`` overrides the output
directory of every verb unless ``--output-dir`` is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import bundled_scenario_path, load_scenario
from .errors import ConfigError, NumericalInstabilityError
from .export import fit_branches_csv, fit_report, read_sweep_csv
from .fit import fit_sweep
from .runner import MANIFEST_NAME, OUTPUT_ENV, RunManifest, fit_summary, run_scenario, run_sweep_and_fit
from .waveforms import V_PER_CM

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _scenario_path(arg: str) -> Path:
    """A file path, or the name of a bundled scenario (``fig2``, ``fig3``, ``fig4``)."""
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    return bundled_scenario_path(arg)


def _print_manifest(m: RunManifest) -> None:
    print(f"scenario {m.scenario_hash[:12]}  seed {m.seed}  {len(m.files)} files -> {m.output_dir}")
    for f in m.files:
        print(f"  {f['path']}  {f['sha256'][:16]}")


def cmd_run(args) -> int:
    _print_manifest(run_scenario(load_scenario(_scenario_path(args.config)), args.output_dir, args.workers))
    return EXIT_OK


def cmd_sweep(args) -> int:
    m = run_sweep_and_fit(load_scenario(_scenario_path(args.config)), args.output_dir, args.workers)
    _print_manifest(m)
    report = Path(m.output_dir) / "fit_report.txt"
    for line in report.read_text(encoding="utf-8").splitlines():
        if not line.startswith("#"):
            print(line)
    return EXIT_OK


def _header_float(params: dict, key: str, fallback: float) -> float:
    try:
        return float(params[key])
    except (KeyError, ValueError):
        return fallback


def cmd_fit(args) -> int:
    path = Path(args.csv)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    points, params = read_sweep_csv(text)
    sn = args.sn_Vcm or _header_float(params, "detection.delta_e_sn_Vcm", 81.0)
    vac = args.vac_Vcm or _header_float(params, "derived.delta_e_vac_Vcm", 24.0)
    fit = fit_sweep(points, vac * V_PER_CM, sn * V_PER_CM)
    # default next to the CSV, but never on top of files a run manifest already tracks
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or path.parent / f"refit_{path.stem}")
    out.mkdir(parents=True, exist_ok=True)
    hdr = {"source": path.name, "detection.delta_e_sn_Vcm": sn, "derived.delta_e_vac_Vcm": vac}
    report = fit_report(fit, hdr)
    (out / "fit_report.txt").write_text(report, encoding="utf-8", newline="\n")
    (out / "fit_branches.csv").write_text(
        fit_branches_csv(fit, points, vac * V_PER_CM, sn * V_PER_CM, params=hdr), encoding="utf-8", newline="\n"
    )
    print(json.dumps(fit_summary(fit), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_figures(args) -> int:
    from .figures import emit_figures

    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        manifest = RunManifest.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    entries = emit_figures(manifest, root=path.parent)
    path.write_text(manifest.to_json(), encoding="utf-8", newline="\n")
    for e in entries:
        print(f"{path.parent / e['path']}  {e['sha256'][:16]}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(_scenario_path(args.config))
    print(f"ok: {sc.name}  hash {sc.hash}")
    print(json.dumps(sc.resolved, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eosqueeze", description="Subcycle squeezed-vacuum simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--output-dir", default=None, help=f"overrides ${OUTPUT_ENV} and the scenario")
        sp.add_argument("--workers", type=int, default=None, help="threads; results do not depend on it")

    sp = sub.add_parser("run", help="simulate the traces of a scenario")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("sweep", help="pump-energy sweep and squeezing fit")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("fit", help="fit a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--output-dir", default=None, help="default: refit_<csv stem>/ next to the CSV")
    sp.add_argument("--sn-Vcm", type=float, default=None, help="shot-noise field if the CSV header lacks it")
    sp.add_argument("--vac-Vcm", type=float, default=None, help="vacuum field if the CSV header lacks it")
    sp.set_defaults(fn=cmd_fit)

    sp = sub.add_parser("figures", help="re-emit SVG figures from a run manifest")
    sp.add_argument("manifest")
    sp.set_defaults(fn=cmd_figures)

    sp = sub.add_parser("validate", help="check a scenario and print it fully resolved")
    sp.add_argument("config")
    sp.set_defaults(fn=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except NumericalInstabilityError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
