"""Static SVG plots, pure functions of the workflow CSV files.

Every figure reads only CSV cells (no in-memory state), and rendering is
deterministic: fixed hash salt, no timestamps, so reruns are byte-identical.
"""

import csv
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .machine import MachineModel

PLOT_KINDS = ("ecm_stacked", "roofline", "volumes", "threads", "blocking")

_STACK_COLUMNS = ("ECM LC Tnol", "ECM LC Tl1l2", "ECM LC Tl2l3", "ECM LC Tl3mem")
_STACK_COLORS = ("#6688cc", "#aac4e8", "#e08020", "#f0bf80")


def _read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def _column(rows, name):
    out = []
    for row in rows:
        cell = row.get(name, "")
        out.append(float(cell) if cell not in ("", None) else None)
    return out


def _mlup_label(cycles, machine, element_size):
    lups = machine.clock_hz * (machine.line_bytes / element_size) / cycles / 1e6
    rounded = float(f"{lups:.3g}")
    return str(int(rounded)) if rounded >= 10 else f"{rounded:g}"


def _new_figure():
    plt.rcParams["svg.hashsalt"] = "stencilkit"
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.grid(True, alpha=0.4)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path


def _plot_ecm_stacked(rows, machine, path, element_size, break_marks=None):
    sizes = [int(r["N^3"]) for r in rows]
    stacks = [_column(rows, c) for c in _STACK_COLUMNS]
    if any(all(v is None for v in col) for col in stacks):
        raise KeyError("ECM LC transfer terms")
    width = (sizes[1] - sizes[0]) * 0.6 if len(sizes) > 1 else 4
    fig, ax = _new_figure()
    for mark, label in break_marks or ():
        if sizes[0] <= mark <= sizes[-1]:
            ax.axvline(mark, color="#888888", lw=0.8, ls="--")
            ax.annotate(label, (mark, 0), xytext=(2, 2),
                        textcoords="offset points", fontsize=7, color="#555555",
                        rotation=90, va="bottom")
    bottom = [0.0] * len(sizes)
    for col, name, color in zip(stacks, _STACK_COLUMNS, _STACK_COLORS):
        vals = [v or 0.0 for v in col]
        ax.bar(sizes, vals, width=width, bottom=bottom, color=color,
               label=name.removeprefix("ECM LC "))
        bottom = [b + v for b, v in zip(bottom, vals)]
    t_comp = _column(rows, "ECM LC Tol")
    ax.plot(sizes, t_comp, color="#cc2222", lw=2, label="Tol (compute)")
    roof = _column(rows, "Roofline LC cycl")
    ax.plot(sizes, roof, color="#2244cc", marker="o", ms=3, lw=1, label="Roofline")
    bench = _column(rows, "Benchmark cycl")
    if any(v is not None for v in bench):
        ax.plot(sizes, bench, color="black", marker="x", ms=4, lw=1, label="Benchmark")
    top = max(max(bottom), max(v or 0 for v in t_comp), max(v or 0 for v in roof))
    ymax = (int(top * 1.15) // 10 + 1) * 10
    ax.set_ylim(0, ymax)
    ax.set_yticks(range(0, ymax + 1, 10))
    ax.set_xlabel("Grid size (N, cubic)")
    ax.set_ylabel("Inverse throughput [cy/CL]")
    ax.legend(loc="upper left", fontsize=8)

    twin = ax.twinx()
    twin.set_ylim(0, ymax)
    ticks = [t for t in range(10, ymax + 1, 10)]
    twin.set_yticks(ticks)
    twin.set_yticklabels([_mlup_label(t, machine, element_size) for t in ticks])
    twin.set_ylabel("Performance [MLUP/s]")
    return _save(fig, path)


def _plot_roofline(rows, machine, path, element_size):
    sizes = [int(r["N^3"]) for r in rows]
    fig, ax = _new_figure()
    plotted = False
    for name, style in (
        ("Roofline LC cycl", {"color": "#2244cc", "marker": "o", "ms": 3}),
        ("Roofline CS cycl", {"color": "#22aa66", "marker": "s", "ms": 3}),
        ("Benchmark cycl", {"color": "black", "marker": "x", "ms": 4}),
    ):
        col = _column(rows, name)
        if any(v is not None for v in col):
            ax.plot(sizes, col, lw=1, label=name, **style)
            plotted = True
    if not plotted:
        raise KeyError("Roofline columns")
    ax.set_xlabel("Grid size (N, cubic)")
    ax.set_ylabel("Inverse throughput [cy/CL]")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    return _save(fig, path)


def _plot_volumes(volume_rows, path):
    series = {}
    for row in volume_rows:
        key = (row["predictor"], row["transition"])
        total = float(row["load B/CL"]) + float(row["store B/CL"])
        series.setdefault(key, []).append((int(row["N^3"]), total))
    if not series:
        raise KeyError("volume rows")
    fig, ax = _new_figure()
    colors = {"L1L2": "#6688cc", "L2L3": "#e08020", "L3MEM": "#cc2222"}
    for (predictor, transition), points in sorted(series.items()):
        xs, ys = zip(*points)
        ax.plot(
            xs, ys,
            color=colors.get(transition, "gray"),
            linestyle="-" if predictor == "LC" else "--",
            label=f"{predictor} {transition}",
            lw=1.4,
        )
    ax.set_xlabel("Grid size (N, cubic)")
    ax.set_ylabel("Traffic [B/CL]")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8, ncol=2)
    return _save(fig, path)


def _plot_threads(rows, path):
    threads = [int(r["threads"]) for r in rows]
    ecm = _column(rows, "ECM mlups")
    fig, ax = _new_figure()
    ax.plot(threads, ecm, color="#2244cc", marker="o", ms=4, label="ECM")
    bench = _column(rows, "Benchmark mlups")
    if any(v is not None for v in bench):
        ax.plot(threads, bench, color="black", marker="x", ms=5, label="Benchmark")
    ax.set_xlabel("Threads (compact pinning)")
    ax.set_ylabel("Performance [MLUP/s]")
    ax.set_ylim(bottom=0)
    ax.set_xticks(threads)
    ax.legend(fontsize=8)
    return _save(fig, path)


def _plot_blocking(rows, path):
    sizes = [int(r["N^3"]) for r in rows]
    blocked = _column(rows, "ECM blocked cycl")
    plain = _column(rows, "ECM cycl")
    fig, ax = _new_figure()
    ax.plot(sizes, plain, color="#cc2222", marker="o", ms=3, label="ECM")
    ax.plot(sizes, blocked, color="#22aa66", marker="s", ms=3, label="ECM, middle loop blocked")
    for name, style in (
        ("Benchmark cycl", {"color": "black", "marker": "x"}),
        ("Benchmark blocked cycl", {"color": "#116633", "marker": "+"}),
    ):
        col = _column(rows, name)
        if any(v is not None for v in col):
            ax.plot(sizes, col, lw=1, ms=4, label=name, **style)
    ax.set_xlabel("Grid size (N, cubic)")
    ax.set_ylabel("Inverse throughput [cy/CL]")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    return _save(fig, path)


def _plot_pheno(rows, machine, path, element_size):
    sizes = [int(r["N^3"]) for r in rows]
    columns = ("Pheno Tnol", "Pheno Tl1l2", "Pheno Tl2l3", "Pheno Tl3mem")
    stacks = [_column(rows, c) for c in columns]
    if all(all(v is None for v in col) for col in stacks):
        raise KeyError("phenomenological terms")
    width = (sizes[1] - sizes[0]) * 0.6 if len(sizes) > 1 else 4
    fig, ax = _new_figure()
    bottom = [0.0] * len(sizes)
    for col, name, color in zip(stacks, columns, _STACK_COLORS):
        vals = [v or 0.0 for v in col]  # absent terms render as gaps
        ax.bar(sizes, vals, width=width, bottom=bottom, color=color, label=name)
        bottom = [b + v for b, v in zip(bottom, vals)]
    t_comp = _column(rows, "Pheno Tol")
    if any(v is not None for v in t_comp):
        ax.plot(sizes, t_comp, color="#cc2222", lw=2, label="Pheno Tol")
    ax.set_xlabel("Grid size (N, cubic)")
    ax.set_ylabel("Inverse throughput [cy/CL]")
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path)


def render_plots(
    csv_path,
    machine: MachineModel,
    out_dir,
    volumes_csv=None,
    threads_csv=None,
    blocking_csv=None,
    pheno_csv=None,
    element_size: int = 8,
    break_marks=None,
) -> dict:
    """Render the five report plots (plus the phenomenological stack when
    measured counter records are supplied); a plot whose columns are missing
    is skipped with a notice.  ``break_marks`` annotates analytic
    layer-condition break sizes on the stacked plot.  Returns {kind: svg path}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _read_rows(csv_path)
    produced = {}

    jobs = [
        ("ecm_stacked",
         lambda p: _plot_ecm_stacked(rows, machine, p, element_size, break_marks)),
        ("roofline", lambda p: _plot_roofline(rows, machine, p, element_size)),
    ]
    if volumes_csv is not None:
        volume_rows = _read_rows(volumes_csv)
        jobs.append(("volumes", lambda p: _plot_volumes(volume_rows, p)))
    if threads_csv is not None:
        thread_rows = _read_rows(threads_csv)
        jobs.append(("threads", lambda p: _plot_threads(thread_rows, p)))
    if blocking_csv is not None:
        blocking_rows = _read_rows(blocking_csv)
        jobs.append(("blocking", lambda p: _plot_blocking(blocking_rows, p)))
    if pheno_csv is not None:
        pheno_rows = _read_rows(pheno_csv)
        jobs.append(("ecm_pheno", lambda p: _plot_pheno(pheno_rows, machine, p, element_size)))

    for kind, job in jobs:
        path = out_dir / f"{kind}.svg"
        try:
            produced[kind] = job(path)
        except KeyError as exc:
            warnings.warn(f"plot {kind} skipped: missing column {exc}")
    return produced
