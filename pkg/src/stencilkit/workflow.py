"""End-to-end data collection: size planning, model and benchmark sweeps,
thread scaling, blocking runs, and report emission.

The workflow plans cubic grid sizes from 10 up to 1.5x the last-level 3D
layer-condition break (so the steady memory-bound state is reached), trims
the top until the working set fits the memory budget, then collects per
size: layer-condition and cache-simulation traffic, ECM and Roofline models
for both predictors, and optional benchmark measurements.  Everything lands
in CSV files first; plots and the HTML page are pure functions of those
files, so a benchmark-free run is byte-reproducible.
"""

import shlex
from dataclasses import dataclass, field
from pathlib import Path

from . import plots as plots_mod
from .bench import bench_kernel, grid_sweep, ingest_counter_table, scaling_shape_flags, thread_sweep
from .cachesim import SimulationBudgetError, simulate_cache
from .codegen import BlockSpec, kernel_loop_nest
from .htmlreport import render_html
from .layercond import layer_conditions, lc_break_size
from .machine import MachineModel, effective_size
from .perfmodels import ecm_model, phenomenological_ecm, roofline, scale_cores
from .stencil import GridDims, KernelIR, StencilError, StencilSpec, build_kernel

CSV_HEADER = (
    "N^3",
    "Benchmark cycl",
    "ECM LC Tol",
    "ECM LC Tnol",
    "ECM LC Tl1l2",
    "ECM LC Tl2l3",
    "ECM LC Tl3mem",
    "Roofline LC cycl",
    "ECM CS Tol",
    "ECM CS Tnol",
    "ECM CS Tl1l2",
    "ECM CS Tl2l3",
    "ECM CS Tl3mem",
    "Roofline CS cycl",
)

STATUSES = ("green", "yellow", "red")


class WorkflowError(StencilError):
    """Planning or collection cannot proceed."""


@dataclass(frozen=True)
class WorkflowPlan:
    spec: StencilSpec
    machine: MachineModel
    sizes: tuple
    thread_counts: tuple
    block_level: str
    memory_budget: int
    safety: float = 0.5

    @property
    def n_max(self) -> int:
        return self.sizes[-1]


@dataclass
class ReportBundle:
    out_dir: Path
    csv_path: Path
    volumes_csv: Path
    threads_csv: Path
    blocking_csv: Path
    svg_paths: dict
    html_path: Path
    status: str
    comment: str
    annotations: list = field(default_factory=list)
    pheno_csv: Path | None = None


def _working_set_bytes(kernel: KernelIR, n: int) -> int:
    arrays = 2 + kernel.weight_components
    return arrays * n**kernel.spec.dimensions * kernel.spec.element_size


def plan(
    spec: StencilSpec,
    machine: MachineModel,
    memory_budget: int,
    step: int = 10,
    max_threads: int | None = None,
    block_level: str = "L3",
    safety: float = 0.5,
) -> WorkflowPlan:
    """Plan sweep sizes: 10, 10+step, ... up to min(1.5x last-level 3D
    layer-condition break, memory fit)."""
    kernel = build_kernel(spec)
    dim_class = f"{spec.dimensions}D"
    last_level = machine.cache_levels[-1].name
    break_n = lc_break_size(kernel, machine, last_level, dim_class, safety)
    if break_n is None:
        raise WorkflowError(
            f"the {last_level} {dim_class} condition never breaks; no "
            "memory-bound regime exists for this kernel"
        )
    cap = int(1.5 * break_n)
    sizes = list(range(10, cap + 1, step))
    while sizes and _working_set_bytes(kernel, sizes[-1]) > memory_budget:
        sizes.pop()
    if not sizes:
        raise WorkflowError(
            f"memory budget of {memory_budget} bytes cannot hold even the "
            f"smallest grid (10^{spec.dimensions})"
        )
    sizes = tuple(sizes)
    threads = max_threads if max_threads is not None else machine.cores_per_socket
    return WorkflowPlan(
        spec=spec,
        machine=machine,
        sizes=sizes,
        thread_counts=tuple(range(1, threads + 1)),
        block_level=block_level,
        memory_budget=memory_budget,
        safety=safety,
    )


def break_annotations(kernel: KernelIR, machine: MachineModel, safety: float = 0.5):
    """Analytic layer-condition break sizes as (N, label) plot annotations.

    Exact plateau detection on measured data is out of reach; marks sit at
    the closed-form break sizes only.
    """
    marks = []
    for level in machine.cache_levels:
        for dim_class in ("2D", "3D")[: kernel.spec.dimensions - 1]:
            n = lc_break_size(kernel, machine, level, dim_class, safety)
            if n is not None:
                marks.append((n, f"{level.name}-{dim_class}"))
    return sorted(marks)


def good_block_factor(
    kernel: KernelIR,
    machine: MachineModel,
    level_name: str,
    dims: GridDims,
    safety: float = 0.5,
) -> int:
    """Largest middle-loop tile whose plane condition fits the target level.

    Solved from the blocked closed form: plane reuse spans the tile instead
    of the whole middle axis, so the requirement is linear in the tile size.
    """
    from .layercond import requirement_bytes

    spec = kernel.spec
    budget = effective_size(machine.level(level_name), safety)
    dim_class = f"{spec.dimensions}D"
    lo, hi = 1, dims.N - 2 * spec.radius
    if requirement_bytes(kernel, dims, dim_class, block_middle=hi) <= budget:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if requirement_bytes(kernel, dims, dim_class, block_middle=mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(round(float(value), 6))


def write_csv(rows, path) -> Path:
    """Write grid-scaling rows in the documented schema (RFC-4180).

    Every row must carry exactly the documented columns; absent values are
    empty cells.  The header is byte-stable.
    """
    path = Path(path)
    lines = [",".join(CSV_HEADER)]
    for row in rows:
        if set(row) != set(CSV_HEADER):
            missing = sorted(set(CSV_HEADER) - set(row))
            extra = sorted(set(row) - set(CSV_HEADER))
            raise WorkflowError(
                f"row schema mismatch; missing {missing}, unexpected {extra}"
            )
        lines.append(",".join(_fmt(row[col]) if col != "N^3" else str(row[col])
                              for col in CSV_HEADER))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_table(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (int, str)) else _fmt(c) for c in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _suggest_status(rows, ecm_totals, annotations) -> tuple:
    """Traffic-light suggestion: benchmark within 20% of ECM over the
    memory-bound plateau is green, within 50% yellow, otherwise red."""
    if all(row["Benchmark cycl"] is None for row in rows):
        return "yellow", "model-only run: no benchmark evidence collected"
    tail = rows[-max(3, len(rows) // 4):]
    devs = []
    for row in tail:
        bench = row["Benchmark cycl"]
        ecm_total = ecm_totals.get(row["N^3"])
        if bench is None or ecm_total in (None, 0):
            continue
        devs.append(abs(bench - ecm_total) / ecm_total)
    if not devs:
        return "yellow", "benchmarks present but no memory-bound overlap with the model"
    worst = max(devs)
    if annotations:
        return ("yellow" if worst <= 0.5 else "red"), (
            f"partial collection ({len(annotations)} issue(s)); worst plateau deviation {worst:.0%}"
        )
    if worst <= 0.2:
        return "green", f"benchmark within {worst:.0%} of ECM across the plateau"
    if worst <= 0.5:
        return "yellow", f"benchmark deviates up to {worst:.0%} from ECM across the plateau"
    return "red", f"benchmark deviates up to {worst:.0%} from ECM across the plateau"


def run_workflow(
    workflow_plan: WorkflowPlan,
    out_dir,
    benchmarks: bool = False,
    seed: int = 0,
    min_runtime_s: float = 1.0,
    sim_max_events: int = 500_000_000,
    cli_command: str | None = None,
    status_override: str | None = None,
    comment_override: str | None = None,
    counters_csv=None,
    counters_mapping=None,
) -> ReportBundle:
    """Collect all rows, write CSVs, render plots and the HTML page.

    ``counters_csv`` supplies externally measured counter data (one row per
    grid size); the phenomenological model and its plot are produced only
    when such records exist.
    """
    if status_override is not None and status_override not in STATUSES:
        raise WorkflowError(f"status must be one of {STATUSES}")
    machine = workflow_plan.machine
    spec = workflow_plan.spec
    kernel = build_kernel(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    annotations = []

    bench_by_size = {}
    if benchmarks:
        for entry in grid_sweep(
            kernel, machine, list(workflow_plan.sizes),
            min_runtime_s=min_runtime_s, seed=seed,
        ):
            if entry.result is None:
                annotations.append(f"benchmark at N={entry.key} failed: {entry.error}")
            else:
                bench_by_size[entry.key] = entry.result

    rows = []
    volume_rows = []
    ecm_totals = {}
    es = spec.element_size
    for n in workflow_plan.sizes:
        dims = GridDims.cubic(n, spec.dimensions, es)
        _, lc_traffic = layer_conditions(kernel, machine, dims, workflow_plan.safety)
        ecm_lc = ecm_model(kernel, machine, lc_traffic)
        roof_lc = roofline(lc_traffic, machine, ecm_lc.T_comp, es)

        cs_traffic = None
        ecm_cs = roof_cs = None
        try:
            cs_traffic = simulate_cache(
                kernel, machine, dims, max_events=sim_max_events
            ).traffic
            ecm_cs = ecm_model(kernel, machine, cs_traffic)
            roof_cs = roofline(cs_traffic, machine, ecm_cs.T_comp, es)
        except SimulationBudgetError as exc:
            annotations.append(f"cache simulation skipped at N={n}: {exc}")

        bench = bench_by_size.get(n)
        row = {
            "N^3": n,
            "Benchmark cycl": bench.cycles_per_cl if bench else None,
            "ECM LC Tol": ecm_lc.T_comp,
            "ECM LC Tnol": ecm_lc.T_RegL1,
            "ECM LC Tl1l2": ecm_lc.T_L1L2,
            "ECM LC Tl2l3": ecm_lc.T_L2L3,
            "ECM LC Tl3mem": ecm_lc.T_L3MEM,
            "Roofline LC cycl": roof_lc.cycles_per_cl,
            "ECM CS Tol": ecm_cs.T_comp if ecm_cs else None,
            "ECM CS Tnol": ecm_cs.T_RegL1 if ecm_cs else None,
            "ECM CS Tl1l2": ecm_cs.T_L1L2 if ecm_cs else None,
            "ECM CS Tl2l3": ecm_cs.T_L2L3 if ecm_cs else None,
            "ECM CS Tl3mem": ecm_cs.T_L3MEM if ecm_cs else None,
            "Roofline CS cycl": roof_cs.cycles_per_cl if roof_cs else None,
        }
        rows.append(row)
        ecm_totals[n] = ecm_lc.T_total

        for predictor, traffic in (("LC", lc_traffic), ("CS", cs_traffic)):
            if traffic is None:
                continue
            for i, transition in enumerate(traffic.transitions):
                volume_rows.append(
                    (n, predictor, transition,
                     traffic.load_bytes_per_cl[i], traffic.store_bytes_per_cl[i])
                )

    csv_path = write_csv(rows, out_dir / "data.csv")
    volumes_csv = _write_table(
        out_dir / "volumes.csv",
        ("N^3", "predictor", "transition", "load B/CL", "store B/CL"),
        volume_rows,
    )

    pheno_csv = None
    if counters_csv is not None:
        records = dict(ingest_counter_table(counters_csv, counters_mapping))
        pheno_rows = []
        for n in workflow_plan.sizes:
            if n not in records:
                continue
            pheno = phenomenological_ecm(records[n], machine)
            pheno_rows.append(
                (n, *(("" if t is None else t) for t in pheno.terms().values()))
            )
            if not pheno.complete:
                annotations.append(
                    f"phenomenological model at N={n} is incomplete "
                    "(missing counters render as gaps)"
                )
        if pheno_rows:
            pheno_csv = _write_table(
                out_dir / "pheno.csv",
                ("N^3", "Pheno Tol", "Pheno Tnol", "Pheno Tl1l2",
                 "Pheno Tl2l3", "Pheno Tl3mem"),
                pheno_rows,
            )

    # thread scaling at the largest (memory-bound) size
    n_top = workflow_plan.n_max
    dims_top = GridDims.cubic(n_top, spec.dimensions, es)
    _, lc_top = layer_conditions(kernel, machine, dims_top, workflow_plan.safety)
    ecm_top = ecm_model(kernel, machine, lc_top)
    scaling = scale_cores(ecm_top, machine, workflow_plan.thread_counts[-1], es)
    bench_threads = {}
    if benchmarks:
        thread_entries = thread_sweep(
            kernel, machine, dims_top, workflow_plan.thread_counts[-1],
            min_runtime_s=min_runtime_s, seed=seed,
        )
        for entry in thread_entries:
            if entry.result is None:
                annotations.append(f"thread sweep at t={entry.key} failed: {entry.error}")
            else:
                bench_threads[entry.key] = entry.result
        annotations.extend(scaling_shape_flags(thread_entries, scaling))
    threads_csv = _write_table(
        out_dir / "threads.csv",
        ("threads", "ECM cycl", "ECM mlups", "Benchmark cycl", "Benchmark mlups"),
        [
            (
                cores,
                cycles,
                perf / 1e6,
                bench_threads[cores].cycles_per_cl if cores in bench_threads else "",
                bench_threads[cores].mlups if cores in bench_threads else "",
            )
            for cores, cycles, perf in scaling.rows
        ],
    )

    # blocking: per size, the largest middle-loop tile that satisfies the
    # target level's plane condition, and the blocked model prediction
    blocking_rows = []
    for n in workflow_plan.sizes:
        dims = GridDims.cubic(n, spec.dimensions, es)
        factor = good_block_factor(
            kernel, machine, workflow_plan.block_level, dims, workflow_plan.safety
        )
        _, blocked_traffic = layer_conditions(
            kernel, machine, dims, workflow_plan.safety, block_middle=factor
        )
        ecm_blocked = ecm_model(kernel, machine, blocked_traffic)
        bench_blocked = None
        if benchmarks and factor < n - 2 * spec.radius:
            try:
                bench_blocked = bench_kernel(
                    kernel, dims, machine, blocking=BlockSpec(factor),
                    min_runtime_s=min_runtime_s, seed=seed,
                )
            except StencilError as exc:
                annotations.append(f"blocked benchmark at N={n} failed: {exc}")
        row_for_n = next(r for r in rows if r["N^3"] == n)
        blocking_rows.append(
            (
                n,
                factor,
                ecm_blocked.T_total,
                ecm_totals[n],
                bench_blocked.cycles_per_cl if bench_blocked else "",
                row_for_n["Benchmark cycl"] if row_for_n["Benchmark cycl"] is not None else "",
            )
        )
    blocking_csv = _write_table(
        out_dir / "blocking.csv",
        ("N^3", "block", "ECM blocked cycl", "ECM cycl",
         "Benchmark blocked cycl", "Benchmark cycl"),
        blocking_rows,
    )

    status, comment = _suggest_status(rows, ecm_totals, annotations)
    if status_override is not None:
        status = status_override
    if comment_override is not None:
        comment = comment_override

    plot_dir = out_dir / "plots"
    svg_paths = plots_mod.render_plots(
        csv_path, machine, plot_dir,
        volumes_csv=volumes_csv, threads_csv=threads_csv, blocking_csv=blocking_csv,
        pheno_csv=pheno_csv, element_size=es,
        break_marks=break_annotations(kernel, machine, workflow_plan.safety),
    )

    command = cli_command if cli_command is not None else _reconstruct_command(
        workflow_plan, benchmarks, out_dir
    )
    conditions, _ = layer_conditions(
        kernel, machine, dims_top, workflow_plan.safety
    )
    html_path = render_html(
        out_dir / "report.html",
        spec=spec,
        kernel_source=kernel_loop_nest(kernel),
        machine=machine,
        conditions=conditions,
        svg_paths=svg_paths,
        csv_path=csv_path,
        status=status,
        comment=comment,
        command=command,
        annotations=annotations,
        sizes=workflow_plan.sizes,
    )

    return ReportBundle(
        out_dir=out_dir,
        csv_path=csv_path,
        volumes_csv=volumes_csv,
        threads_csv=threads_csv,
        blocking_csv=blocking_csv,
        svg_paths=svg_paths,
        html_path=html_path,
        status=status,
        comment=comment,
        annotations=annotations,
        pheno_csv=pheno_csv,
    )


def _reconstruct_command(workflow_plan: WorkflowPlan, benchmarks: bool, out_dir) -> str:
    spec = workflow_plan.spec
    step = workflow_plan.sizes[1] - workflow_plan.sizes[0] if len(workflow_plan.sizes) > 1 else 10
    parts = [
        "stencilkit", "workflow",
        "--dim", str(spec.dimensions),
        "--radius", str(spec.radius),
        "--kind", spec.kind,
        "--weighting", spec.weighting,
        "--coeff", spec.coefficient_storage,
        "--dtype", spec.element_type,
        "--machine", shlex.quote(workflow_plan.machine.name),
        "--step", str(step),
        "--threads", str(workflow_plan.thread_counts[-1]),
        "--block-level", workflow_plan.block_level,
        "--memory-budget", str(workflow_plan.memory_budget),
        "--out-dir", shlex.quote(str(out_dir)),
    ]
    if benchmarks:
        parts.append("--with-benchmarks")
    return " ".join(parts)
