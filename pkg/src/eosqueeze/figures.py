"""Static SVG figures written directly from the CSV artifacts of a run.

* ``fig2.svg`` - coherent readout above its RDN trace, one pair of panels
  per CEP variant, dashed guides at the extremal-slope delays;
* ``fig3.svg`` - RDN traces stacked by pump energy;
* ``fig4.svg`` - extremal RDN branches with fitted model curves and a
  right-hand squeezing axis.

RDN below zero (less noise than vacuum) is filled blue, above zero red.
Coordinates are printed with fixed precision so re-emission from unchanged
data gives identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .export import read_table

if TYPE_CHECKING:
    from .runner import RunManifest

BLUE = "#2b6cd8"
RED = "#d83b2b"
GREEN = "#1f9d55"
INK = "#222222"
GREY = "#888888"
FONT = "font-family='Helvetica, Arial, sans-serif'"


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        v = first + k * step
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        k += 1
    return ticks


def _label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def _pad(lo: float, hi: float, frac: float = 0.08) -> tuple[float, float]:
    if hi <= lo:
        d = abs(lo) * 0.1 or 1.0
        return lo - d, hi + d
    span = hi - lo
    return lo - frac * span, hi + frac * span


@dataclass
class Panel:
    x: float
    y: float
    w: float
    h: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]

    def px(self, v):
        lo, hi = self.xlim
        return self.x + (np.asarray(v, dtype=float) - lo) / (hi - lo) * self.w

    def py(self, v, ylim=None):
        lo, hi = ylim or self.ylim
        return self.y + self.h - (np.asarray(v, dtype=float) - lo) / (hi - lo) * self.h


class Svg:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, size=12, anchor="middle", rotate=None, color=INK):
        rot = f" transform='rotate({rotate} {_n(x)} {_n(y)})'" if rotate is not None else ""
        s = s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self.add(f"<text x='{_n(x)}' y='{_n(y)}' font-size='{size}' text-anchor='{anchor}' fill='{color}' {FONT}{rot}>{s}</text>")

    def line(self, x1, y1, x2, y2, color=INK, width=1.0, dash=None):
        d = f" stroke-dasharray='{dash}'" if dash else ""
        self.add(f"<line x1='{_n(x1)}' y1='{_n(y1)}' x2='{_n(x2)}' y2='{_n(y2)}' stroke='{color}' stroke-width='{width}'{d}/>")

    def polyline(self, xs, ys, color=INK, width=1.2, dash=None):
        pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in zip(xs, ys))
        d = f" stroke-dasharray='{dash}'" if dash else ""
        self.add(f"<polyline points='{pts}' fill='none' stroke='{color}' stroke-width='{width}'{d}/>")

    def polygon(self, xs, ys, color, opacity=0.75):
        pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in zip(xs, ys))
        self.add(f"<polygon points='{pts}' fill='{color}' fill-opacity='{opacity}' stroke='none'/>")

    def circle(self, x, y, r, color):
        self.add(f"<circle cx='{_n(x)}' cy='{_n(y)}' r='{r}' fill='{color}'/>")

    def render(self) -> str:
        head = (
            "<?xml version='1.0' encoding='UTF-8'?>\n"
            f"<svg xmlns='http://www.w3.org/2000/svg' width='{self.width}' height='{self.height}' "
            f"viewBox='0 0 {self.width} {self.height}'>\n"
            f"<rect x='0' y='0' width='{self.width}' height='{self.height}' fill='white'/>\n"
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def axes(svg: Svg, p: Panel, xlabel: str | None, ylabel: str, zero_line: bool = True) -> None:
    svg.add(f"<rect x='{_n(p.x)}' y='{_n(p.y)}' width='{_n(p.w)}' height='{_n(p.h)}' fill='none' stroke='{INK}' stroke-width='1'/>")
    for t in nice_ticks(*p.xlim):
        x = float(p.px(t))
        svg.line(x, p.y + p.h, x, p.y + p.h - 4)
        if xlabel is not None:
            svg.text(x, p.y + p.h + 14, _label(t), size=10)
    for t in nice_ticks(*p.ylim, target=4):
        y = float(p.py(t))
        svg.line(p.x, y, p.x + 4, y)
        svg.text(p.x - 5, y + 3.5, _label(t), size=10, anchor="end")
    if zero_line and p.ylim[0] < 0 < p.ylim[1]:
        y0 = float(p.py(0.0))
        svg.line(p.x, y0, p.x + p.w, y0, color=GREY, width=0.6)
    if xlabel:
        svg.text(p.x + p.w / 2, p.y + p.h + 30, xlabel, size=12)
    svg.text(p.x - 48, p.y + p.h / 2, ylabel, size=12, rotate=-90)


def _clip(xs, ys, xlim):
    m = (xs >= xlim[0]) & (xs <= xlim[1])
    return xs[m], ys[m]


def signed_fill(svg: Svg, p: Panel, xs, ys) -> None:
    """Blue polygon for the part below zero, red for the part above."""
    xs, ys = _clip(np.asarray(xs, float), np.asarray(ys, float), p.xlim)
    if xs.size < 2:
        return
    y0 = float(p.py(0.0)) if p.ylim[0] < 0 < p.ylim[1] else float(p.py(p.ylim[0] if p.ylim[0] >= 0 else p.ylim[1]))
    px = p.px(xs)
    for color, part in ((BLUE, np.minimum(ys, 0.0)), (RED, np.maximum(ys, 0.0))):
        if not np.any(part != 0):
            continue
        py = p.py(part)
        svg.polygon(np.concatenate([[px[0]], px, [px[-1]]]), np.concatenate([[y0], py, [y0]]), color)
    svg.polyline(px, p.py(ys), color=INK, width=0.6)


def plot_line(svg: Svg, p: Panel, xs, ys, color=INK, width=1.2, dash=None, ylim=None) -> None:
    xs, ys = _clip(np.asarray(xs, float), np.asarray(ys, float), p.xlim)
    svg.polyline(p.px(xs), p.py(ys, ylim), color=color, width=width, dash=dash)


# --------------------------------------------------------------------------
# data access


def _numeric_table(path: Path) -> dict[str, np.ndarray]:
    header, rows = read_table(path.read_text(encoding="utf-8"))
    cols: dict[str, list] = {h: [] for h in header}
    for r in rows:
        for h, v in zip(header, r):
            cols[h].append(v)
    out = {}
    for h, vals in cols.items():
        try:
            out[h] = np.array([float(v) for v in vals])
        except ValueError:
            out[h] = np.array(vals, dtype=object)
    return out


def _support(t, e, frac=0.01, pad=0.25):
    idx = np.flatnonzero(np.abs(e) >= frac * np.max(np.abs(e))) if np.any(e != 0) else np.arange(t.size)
    lo, hi = t[idx[0]], t[idx[-1]]
    span = (hi - lo) or (t[-1] - t[0])
    return max(t[0], lo - pad * span), min(t[-1], hi + pad * span)


class _Data:
    def __init__(self, manifest: "RunManifest", root: Path):
        self.root = root
        self.entries = [f for f in manifest.files if f.get("kind") != "figure"]
        if not self.entries:
            raise ValueError("manifest lists no data files")
        import hashlib

        for f in self.entries:
            path = root / f["path"]
            if not path.is_file():
                raise FileNotFoundError(f"data file {path} listed in the manifest is missing")
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != f["sha256"]:
                raise ValueError(f"data file {path} does not match its manifest checksum")

    def of(self, kind: str) -> list[dict]:
        return [f for f in self.entries if f.get("kind") == kind]

    def table(self, entry: dict) -> dict[str, np.ndarray]:
        return _numeric_table(self.root / entry["path"])

    def rdn_entry(self, tag: str) -> dict:
        for kind in ("rdn_mc", "rdn_analytic"):
            for f in self.of(kind):
                if f["tag"] == tag:
                    return f
        raise FileNotFoundError(f"no RDN trace for {tag}")


# --------------------------------------------------------------------------
# figures


def _slope_guides(t, e, d_sign):
    slope = d_sign * np.gradient(e, t)
    return float(t[int(np.argmax(slope))]), float(t[int(np.argmin(slope))])


def fig2(data: _Data, d_sign: float) -> str:
    coh = data.of("coherent")
    top = max(f["pump_energy_nJ"] for f in coh)
    variants = sorted((f for f in coh if f["pump_energy_nJ"] == top), key=lambda f: f["cep_flipped"])
    left, width, ph, gap = 80, 560, 120, 28
    height = 50 + len(variants) * (2 * ph + gap + 30) + 20
    svg = Svg(left + width + 30, height)
    svg.text(left + width / 2, 24, f"Coherent readout and relative differential noise, {top:g} nJ", size=14)
    y = 44
    tables = [(f, data.table(f), data.table(data.rdn_entry(f["tag"]))) for f in variants]
    t_all = tables[0][1]["t_D_fs"]
    xlim = _support(t_all, tables[0][1]["E_Vcm"])
    rdn_abs = max(float(np.max(np.abs(_clip(r["t_D_fs"], r["RDN"], xlim)[1]))) for _, _, r in tables) or 1e-3
    for f, c, r in tables:
        e_abs = float(np.max(np.abs(c["E_Vcm"]))) or 1.0
        pc = Panel(left, y, width, ph, xlim, (-1.1 * e_abs, 1.1 * e_abs))
        pr = Panel(left, y + ph + 6, width, ph, xlim, (-1.15 * rdn_abs, 1.15 * rdn_abs))
        axes(svg, pc, None, "E (V/cm)")
        plot_line(svg, pc, c["t_D_fs"], c["E_Vcm"], color=INK)
        signed_fill(svg, pr, r["t_D_fs"], r["RDN"])
        axes(svg, pr, "delay t_D (fs)", "RDN")
        label = "CEP + pi" if f["cep_flipped"] else "CEP 0"
        svg.text(left + width - 6, y + 16, label, size=11, anchor="end")
        if float(np.max(np.abs(c["E_Vcm"]))) > 0:
            for tg in _slope_guides(c["t_D_fs"], c["E_Vcm"], d_sign):
                x = float(pc.px(tg))
                svg.line(x, pc.y, x, pr.y + pr.h, color=GREY, width=0.8, dash="4,3")
        y += 2 * ph + gap + 30
    return svg.render()


def fig3(data: _Data, tags: Sequence[tuple[float, str]]) -> str:
    left, width, ph, gap = 80, 560, 100, 14
    height = 50 + len(tags) * (ph + gap) + 40
    svg = Svg(left + width + 30, height)
    svg.text(left + width / 2, 24, "Relative differential noise versus pump energy", size=14)
    tabs = [(e, data.table(data.rdn_entry(tag))) for e, tag in tags]
    coh = {f["tag"]: f for f in data.of("coherent")}
    e_top, tag_top = max(tags)
    t = tabs[0][1]["t_D_fs"]
    xlim = _support(t, data.table(coh[tag_top])["E_Vcm"]) if tag_top in coh else (t[0], t[-1])
    rdn_abs = max(float(np.max(np.abs(_clip(r["t_D_fs"], r["RDN"], xlim)[1]))) for _, r in tabs) or 1e-3
    y = 44
    for i, (e, r) in enumerate(tabs):
        p = Panel(left, y, width, ph, xlim, (-1.15 * rdn_abs, 1.15 * rdn_abs))
        signed_fill(svg, p, r["t_D_fs"], r["RDN"])
        axes(svg, p, "delay t_D (fs)" if i == len(tabs) - 1 else None, "RDN")
        svg.text(left + width - 6, y + 16, f"{e:g} nJ", size=11, anchor="end")
        y += ph + gap
    return svg.render()


def fig4(data: _Data) -> str:
    tab = data.table(data.of("fit_branches")[0])
    kind = tab["kind"]
    model = kind == "model"
    pts = kind == "data"
    e = tab["pump_energy_nJ"]
    sweep = data.table(data.of("sweep")[0]) if data.of("sweep") else None
    left, width, ph = 80, 520, 320
    svg = Svg(left + width + 90, ph + 110)
    svg.text(left + width / 2, 24, "Extremal relative differential noise and fitted squeezing", size=14)
    ys = np.concatenate([tab["rdn_max"], tab["rdn_min"]])
    ylim = _pad(float(min(ys.min(), 0.0)), float(max(ys.max(), 0.0)))
    p = Panel(left, 44, width, ph, (0.0, float(e.max())), ylim)
    axes(svg, p, "pump energy (nJ)", "extremal RDN")
    plot_line(svg, p, e[model], tab["rdn_max"][model], color=GREEN, width=1.6)
    plot_line(svg, p, e[model], tab["rdn_min"][model], color=GREEN, width=1.6)
    for branch, color, err in (("rdn_max", RED, "stderr_max"), ("rdn_min", BLUE, "stderr_min")):
        xs, vals = e[pts], tab[branch][pts]
        errs = sweep[err] if sweep is not None and err in sweep and sweep[err].size == xs.size else np.zeros(xs.size)
        for x, v, s in zip(xs, vals, errs):
            px, py = float(p.px(x)), float(p.py(v))
            if s > 0:
                svg.line(px, float(p.py(v - s)), px, float(p.py(v + s)), color=color, width=1.0)
            svg.circle(px, py, 3.5, color)
    # right axis: in-crystal squeezing in percent
    sq = 100.0 * tab["squeezing"][model]
    slim = (0.0, max(10.0, float(np.ceil(sq.max() / 10.0) * 10.0)))
    plot_line(svg, p, e[model], sq, color=GREEN, width=1.2, dash="6,4", ylim=slim)
    xr = p.x + p.w
    for t in nice_ticks(*slim, target=5):
        yy = float(p.py(t, slim))
        svg.line(xr, yy, xr - 4, yy)
        svg.text(xr + 6, yy + 3.5, f"{t:g}", size=10, anchor="start")
    svg.text(xr + 48, p.y + p.h / 2, "squeezing (%)", size=12, rotate=90)
    lx, ly = p.x + 14, p.y + 18
    for i, (label, color, mark) in enumerate((
        ("maximal RDN", RED, "dot"), ("minimal RDN", BLUE, "dot"),
        ("model fit", GREEN, "line"), ("in-crystal squeezing (right axis)", GREEN, "dash"),
    )):
        yy = ly + 16 * i
        if mark == "dot":
            svg.circle(lx + 8, yy - 4, 3.5, color)
        else:
            svg.line(lx, yy - 4, lx + 16, yy - 4, color=color, width=1.6, dash="6,4" if mark == "dash" else None)
        svg.text(lx + 22, yy, label, size=10, anchor="start")
    return svg.render()


def emit_figures(manifest: "RunManifest", root: str | Path | None = None) -> list[dict]:
    """Write the figures a manifest's data supports; append their entries to
    ``manifest.files`` and return them."""
    import hashlib

    root = Path(root if root is not None else manifest.output_dir)
    data = _Data(manifest, root)
    d_eff = manifest.scenario.get("crystal", {}).get("d_eff_pm_per_V", -1.0)
    d_sign = 1.0 if d_eff > 0 else -1.0
    figs: list[tuple[str, str]] = []
    if data.of("coherent") and manifest.command == "run":
        figs.append(("fig2.svg", fig2(data, d_sign)))
    unflipped = sorted({(f["pump_energy_nJ"], f["tag"]) for f in data.of("profile") if not f["cep_flipped"]})
    if len(unflipped) >= 2:
        figs.append(("fig3.svg", fig3(data, unflipped)))
    if data.of("fit_branches"):
        figs.append(("fig4.svg", fig4(data)))
    if not figs:
        raise ValueError("manifest data supports no figure")
    manifest.files = [f for f in manifest.files if f.get("kind") != "figure"]
    out = []
    for name, text in figs:
        path = root / name
        path.write_text(text, encoding="utf-8", newline="\n")
        entry = {"path": name, "sha256": hashlib.sha256(path.read_bytes()).hexdigest(), "kind": "figure"}
        out.append(entry)
    manifest.files.extend(out)
    return out
