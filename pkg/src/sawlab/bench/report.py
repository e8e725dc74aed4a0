"""Benchmark report: JSON (lossless, versioned), CSV rows, and an SVG figure."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from sawlab.bench.disturbance import DIRECTIONS, CellResult
from sawlab.errors import InvalidArgument, SchemaError

SCHEMA = "sawlab.bench_report"
SCHEMA_VERSION = 1

CSV_COLUMNS = ["section", "direction", "force_n", "duration_s", "impulse_ns", "trial",
               "recovered", "metric", "value", "successes", "attempts", "success_pct"]


@dataclass
class RotationRow:
    """Rotation results for one commanded duration over several trials."""

    omega: float
    duration: float
    angular_errors: list
    lateral_drifts: list
    logs: list = field(default_factory=list)

    @property
    def theta_c(self) -> float:
        return self.omega * self.duration

    @staticmethod
    def _ms(xs):
        if not xs:
            return float("nan"), float("nan")
        m = sum(xs) / len(xs)
        return m, math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    @property
    def angular_error(self):
        return self._ms(self.angular_errors)

    @property
    def lateral_drift(self):
        return self._ms(self.lateral_drifts)

    def to_dict(self) -> dict:
        return {"omega": self.omega, "duration": self.duration,
                "angular_errors": list(self.angular_errors),
                "lateral_drifts": list(self.lateral_drifts), "logs": list(self.logs)}


@dataclass
class BenchReport:
    disturbance: list = field(default_factory=list)      # CellResult
    rotation: list = field(default_factory=list)         # RotationRow
    velocity: dict | None = None     # v, duration, d_c, d_r, mean_velocity, log
    energy: dict | None = None       # positive_work, distance, energy_per_meter, log
    meta: dict = field(default_factory=dict)

    def directions(self) -> list[str]:
        present = {c.direction for c in self.disturbance}
        return [d for d in DIRECTIONS if d in present]

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "version": SCHEMA_VERSION, "meta": self.meta,
                "disturbance": [c.to_dict() for c in self.disturbance],
                "rotation": [r.to_dict() for r in self.rotation],
                "velocity": self.velocity, "energy": self.energy}

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        if d.get("schema") != SCHEMA:
            raise SchemaError(f"not a bench report (schema={d.get('schema')!r})")
        if d.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported bench report version {d.get('version')!r}")
        try:
            return cls(disturbance=[CellResult.from_dict(c) for c in d["disturbance"]],
                       rotation=[RotationRow(**r) for r in d["rotation"]],
                       velocity=d["velocity"], energy=d["energy"], meta=d["meta"])
        except (KeyError, TypeError) as e:
            raise SchemaError(f"malformed bench report: {e}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> BenchReport:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"report is not valid JSON: {e}") from None
        return cls.from_dict(d)

    def merge(self, other: BenchReport) -> BenchReport:
        """Sections present in ``other`` replace ours."""
        return BenchReport(other.disturbance or self.disturbance, other.rotation or self.rotation,
                           other.velocity or self.velocity, other.energy or self.energy,
                           {**self.meta, **other.meta})


# --- CSV ---------------------------------------------------------------------

def _f(x):
    if x is None or x == "":
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_rows(report: BenchReport) -> list[list[str]]:
    rows = []
    for c in report.disturbance:
        rows.append(["disturbance", c.direction, c.force, c.duration, c.impulse, "", "", "", "",
                     c.successes, c.attempts, c.success_pct])
        for t in c.trials:
            rows.append(["disturbance", c.direction, c.force, c.duration, c.impulse, t.trial,
                         t.recovered, "", "", "", "", ""])
    for r in report.rotation:
        (em, es), (dm, ds) = r.angular_error, r.lateral_drift
        for name, val in (("theta_c", r.theta_c), ("angular_error_mean", em),
                          ("angular_error_std", es), ("lateral_drift_mean", dm),
                          ("lateral_drift_std", ds)):
            rows.append(["rotation", "", "", r.duration, "", "", "", name, val, "", "", ""])
    if report.velocity:
        v = report.velocity
        for name in ("d_c", "d_r", "mean_velocity"):
            rows.append(["velocity", "", "", v["duration"], "", "", "", name, v[name], "", "", ""])
    if report.energy:
        e = report.energy
        for name in ("positive_work", "distance", "energy_per_meter"):
            rows.append(["energy", "", "", "", "", "", "", name, e[name], "", "", ""])
    return [[_f(x) for x in row] for row in rows]


def to_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(csv_rows(report))
    return buf.getvalue()


# --- SVG ---------------------------------------------------------------------

def _color(pct: float) -> str:
    # red (0 %) to green (100 %)
    t = max(0.0, min(1.0, pct / 100.0))
    r = int(round(220 * (1 - t) + 40 * t))
    g = int(round(60 * (1 - t) + 170 * t))
    b = int(round(60 * (1 - t) + 80 * t))
    return f"#{r:02x}{g:02x}{b:02x}"


def _text(x, y, s, size=12, anchor="middle", extra=""):
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}" '
            f'font-family="sans-serif"{extra}>{escape(str(s))}</text>')


def _heatmap(cells: list[CellResult], direction: str, x0: float, y0: float):
    forces = sorted({c.force for c in cells})
    durs = sorted({c.duration for c in cells})
    cw, ch = 90, 44
    out = [f'<g class="heatmap" data-direction="{escape(direction)}">',
           _text(x0 + 70 + cw * len(forces) / 2, y0 + 16, f"Push direction {direction}", 14,
                 extra=' font-weight="bold"')]
    gx, gy = x0 + 70, y0 + 30
    by = {(c.force, c.duration): c for c in cells}
    for j, d in enumerate(reversed(durs)):
        out.append(_text(gx - 8, gy + j * ch + ch / 2 + 4, f"{d * 1000:g} ms", 11, "end"))
        for i, f in enumerate(forces):
            x, y = gx + i * cw, gy + j * ch
            c = by.get((f, d))
            if c is None or c.attempts == 0:
                out.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="#dddddd" '
                           f'stroke="white"/>')
                out.append(_text(x + cw / 2, y + ch / 2 + 4, "n/a", 11))
                continue
            out.append(f'<rect class="cell" x="{x}" y="{y}" width="{cw}" height="{ch}" '
                       f'fill="{_color(c.success_pct)}" stroke="white"/>')
            out.append(_text(x + cw / 2, y + ch / 2, f"{c.success_pct:.0f}%", 13,
                             extra=' fill="white"'))
            out.append(_text(x + cw / 2, y + ch / 2 + 15, f"{c.successes}/{c.attempts}", 10,
                             extra=' fill="white"'))
    for i, f in enumerate(forces):
        out.append(_text(gx + i * cw + cw / 2, gy + len(durs) * ch + 16, f"{f:g} N", 11))
    out.append(_text(gx + cw * len(forces) / 2, gy + len(durs) * ch + 34, "force", 11))
    out.append("</g>")
    return out, 70 + cw * len(forces) + 20, 30 + ch * len(durs) + 44


def _bars(title, labels, means, stds, unit, x0, y0, cls):
    w, h = 60, 140
    finite = [m + (s if math.isfinite(s) else 0) for m, s in zip(means, stds) if math.isfinite(m)]
    top = max(finite + [1e-12])
    out = [f'<g class="{cls}">', _text(x0 + (len(labels) * w) / 2 + 40, y0 + 16, title, 14,
                                        extra=' font-weight="bold"')]
    base = y0 + 30 + h
    out.append(f'<line x1="{x0 + 40}" y1="{base}" x2="{x0 + 40 + len(labels) * w}" y2="{base}" '
               f'stroke="black"/>')
    for i, (lab, m, s) in enumerate(zip(labels, means, stds)):
        x = x0 + 40 + i * w + 12
        if math.isfinite(m):
            bh = h * m / top
            out.append(f'<rect class="bar" x="{x}" y="{base - bh:.1f}" width="{w - 24}" '
                       f'height="{bh:.1f}" fill="#4a78b5"/>')
            if math.isfinite(s) and s > 0:
                cx = x + (w - 24) / 2
                y1, y2 = base - h * (m + s) / top, base - h * max(m - s, 0) / top
                out.append(f'<line class="whisker" x1="{cx}" y1="{y1:.1f}" x2="{cx}" '
                           f'y2="{y2:.1f}" stroke="black"/>')
            out.append(_text(x + (w - 24) / 2, base - bh - 4, f"{m:.3g}", 10))
        out.append(_text(x + (w - 24) / 2, base + 14, lab, 10))
    out.append(_text(x0 + 14, y0 + 30 + h / 2, unit, 10))
    out.append("</g>")
    return out, 40 + len(labels) * w + 20, 30 + h + 24


def to_svg(report: BenchReport) -> str:
    parts, y, width = [], 10, 300
    for d in report.directions():
        g, w, h = _heatmap([c for c in report.disturbance if c.direction == d], d, 10, y)
        parts += g
        y += h + 10
        width = max(width, w + 20)
    if report.rotation:
        rows = sorted(report.rotation, key=lambda r: r.duration)
        labels = [f"{r.duration:g} s" for r in rows]
        x = 10
        for title, key, unit, cls in (("Angular error", "angular_error", "rad", "rotation-error"),
                                       ("Lateral drift", "lateral_drift", "m", "rotation-drift")):
            ms = [getattr(r, key) for r in rows]
            g, w, h = _bars(title, labels, [m for m, _ in ms], [s for _, s in ms], unit, x, y, cls)
            parts += g
            x += w
        width = max(width, x + 10)
        y += h + 10
    if report.energy and report.energy.get("energy_per_meter") is not None:
        g, w, h = _bars("Positive work per metre", [report.meta.get("label", "policy")],
                        [report.energy["energy_per_meter"]], [float("nan")], "J/m", 10, y, "energy")
        parts += g
        width = max(width, w + 20)
        y += h + 10
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{y + 10:.0f}" '
            f'viewBox="0 0 {width:.0f} {y + 10:.0f}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>'] + parts
                     + ["</svg>"]) + "\n"


# --- files -------------------------------------------------------------------

FORMATS = ("json", "csv", "svg")


def emit_report(report: BenchReport, out_dir, formats=FORMATS, stem: str = "report") -> list[Path]:
    """Write the requested formats into ``out_dir``; returns the paths."""
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise InvalidArgument(f"unknown report formats {bad}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for fmt in formats:
            text = {"json": report.to_json, "csv": lambda: to_csv(report),
                    "svg": lambda: to_svg(report)}[fmt]()
            p = out / f"{stem}.{fmt}"
            p.write_text(text)
            paths.append(p)
    except OSError as e:
        raise InvalidArgument(f"cannot write report to {out}: {e}") from None
    return paths


def read_report(path) -> BenchReport:
    return BenchReport.from_json(Path(path).read_text())
