"""Report assembly and file emission.

All artifacts are deterministic for a fixed config and seed: floats are
written with shortest-roundtrip repr, keys are sorted, and nothing
time-of-day dependent enters the files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .analyze import DecayReport, NormSeries
from .spectral import GridConfig, SpectralField


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_series_csv(path: str | Path, series_list: list[NormSeries]) -> Path:
    """Norm time series as CSV with columns t, norm_name, value."""
    path = Path(path)
    lines = ["t,norm_name,value"]
    for s in series_list:
        for t, v in zip(s.times, s.values):
            lines.append(f"{_fmt(t)},{s.label},{_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_series_csv(path: str | Path) -> list[NormSeries]:
    rows = Path(path).read_text().strip().splitlines()
    header, rows = rows[0], rows[1:]
    if header.split(",") != ["t", "norm_name", "value"]:
        raise ValueError(f"unexpected series CSV header: {header}")
    data: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        t, name, v = row.split(",")
        data.setdefault(name, []).append((float(t), float(v)))
    return [NormSeries.make(name, [t for t, _ in pts], [v for _, v in pts])
            for name, pts in data.items()]


def write_block_norms_csv(path: str | Path, js, block_norms, s: float) -> Path:
    """Per-block norms: columns j, block_norm, 2^{s j} * block_norm."""
    path = Path(path)
    lines = ["j,block_norm,weighted"]
    for j, bn in zip(js, block_norms):
        lines.append(f"{j},{_fmt(float(bn))},{_fmt(float(2.0 ** (s * j) * bn))}")
    path.write_text("\n".join(lines) + "\n")
    return path


def assemble_report(experiment: str, system: dict | None, grid: dict | None,
                    ladder: dict | None, predictions: dict | None,
                    reports: list[DecayReport], extra: dict | None = None) -> dict:
    doc = {
        "experiment": experiment,
        "system": system,
        "grid": grid,
        "ladder": ladder,
        "predictions": predictions,
        "reports": [r.as_dict() for r in reports],
        "passed": all(r.passed for r in reports) if reports else True,
    }
    if extra:
        doc.update(extra)
    return doc


def _jsonable(obj):
    """Coerce numpy scalars/arrays so reports serialize losslessly."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_report_json(path: str | Path, doc: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def read_report_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def report_round_trip(doc: dict) -> bool:
    """Lossless JSON round trip (the schema holds only JSON-native values)."""
    return json.loads(json.dumps(doc, sort_keys=True)) == json.loads(
        json.dumps(json.loads(json.dumps(doc, sort_keys=True)), sort_keys=True))


# ---------------------------------------------------------------------------
# field snapshots


def save_field(path: str | Path, fld: SpectralField, meta: dict | None = None) -> Path:
    """Snapshot container: grid metadata header + complex coefficient array."""
    path = Path(path)
    header = {"d": fld.grid.d, "N": fld.grid.N, "box_scale": fld.grid.box_scale,
              "n_comp": fld.n_comp}
    if meta:
        header["meta"] = meta
    np.savez_compressed(path, header=json.dumps(header, sort_keys=True),
                        coeffs=fld.coeffs)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_field(path: str | Path) -> tuple[SpectralField, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        coeffs = data["coeffs"]
    grid = GridConfig(d=header["d"], N=header["N"], box_scale=header["box_scale"])
    return SpectralField(grid, coeffs), header.get("meta", {})


# ---------------------------------------------------------------------------
# plot emission (gnuplot text format, no GUI)


def write_gnuplot_script(path: str | Path, csv_name: str, series_labels: list[str],
                         title: str, logscale: bool = True) -> Path:
    """A plot.gp driving the emitted CSV; run with `gnuplot plot.gp`."""
    path = Path(path)
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        "set key left bottom",
        "set xlabel 't'",
        "set ylabel 'norm'",
        "set term pngcairo size 900,600",
        f"set output '{Path(csv_name).stem}.png'",
    ]
    if logscale:
        lines.append("set logscale xy")
    plots = [
        f"'{csv_name}' using 1:(stringcolumn(2) eq '{label}' ? $3 : NaN) "
        f"with linespoints title '{label}'"
        for label in series_labels
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.write_text("\n".join(lines) + "\n")
    return path
