"""Benchmark orchestration: compile, run, parse, verify, sweep, ingest.

Measurements are strictly sequential (a benchmark must not share the
machine); model sweeps elsewhere may be parallel, benchmark sweeps never
are.  Pinning is best effort: the run environment gets compact OpenMP
placement, and a missing pinning facility downgrades to a warning because
model validation, not measurement fidelity, is the desk-scale goal.
"""

import csv
import os
import shlex
import shutil
import subprocess
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import yaml
from stencil_bench_harness import parse_output

from .codegen import BlockSpec, emit_c
from .interpret import reference_checksum
from .machine import MachineModel
from .perfmodels import MeasurementRecord
from .stencil import GridDims, KernelIR, StencilError

ENV_COMPILE_TEMPLATE = "STENCILKIT_CC_TEMPLATE"
DEFAULT_COMPILE_TEMPLATE = "{cc} {flags}{openmp} -o {out} {src} -lm"


class BenchmarkError(StencilError):
    """Compilation, execution, parsing, or verification failure."""


@dataclass(frozen=True)
class BenchmarkResult:
    dims: tuple
    threads: int
    block: int | None
    sweeps: int
    wall_s: float
    cycles_per_cl: float
    mlups: float
    checksum: float
    verified: bool


@dataclass(frozen=True)
class SweepEntry:
    """One sweep point; failures are recorded without aborting the sweep."""

    key: int
    result: BenchmarkResult | None
    error: str | None


def compile_command(machine: MachineModel, src: str, out: str, openmp: bool) -> list:
    """Compiler invocation from the machine's suggested flags.

    The template (overridable via the STENCILKIT_CC_TEMPLATE environment
    variable) carries {cc}, {flags}, {openmp}, {src}, {out} placeholders.
    """
    template = os.environ.get(ENV_COMPILE_TEMPLATE, DEFAULT_COMPILE_TEMPLATE)
    rendered = template.format(
        cc=machine.compiler,
        flags=machine.compiler_flags,
        openmp=" -fopenmp" if openmp else "",
        src=src,
        out=out,
    )
    return shlex.split(rendered)


def _run_env(threads: int) -> dict:
    env = dict(os.environ)
    env["OMP_NUM_THREADS"] = str(threads)
    env["OMP_PROC_BIND"] = "close"
    env["OMP_PLACES"] = "cores"
    return env


def run_benchmark(
    source: str,
    machine: MachineModel,
    threads: int = 1,
    workdir=None,
    run_env: dict | None = None,
) -> dict:
    """Compile and execute one rendered benchmark; return its parsed output.

    Raises BenchmarkError with the compiler diagnostics, the nonzero exit
    status, or the offending stdout line.
    """
    if shutil.which(machine.compiler) is None:
        raise BenchmarkError(
            f"compiler {machine.compiler!r} not found on PATH; configure the "
            f"machine file or set {ENV_COMPILE_TEMPLATE}"
        )
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        src = Path(tmp) / "bench.c"
        out = Path(tmp) / "bench"
        src.write_text(source)
        cmd = compile_command(machine, str(src), str(out), openmp=threads > 1)
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise BenchmarkError(
                f"compilation failed ({' '.join(cmd)}):\n{proc.stderr.strip()}"
            )
        env = dict(run_env) if run_env is not None else _run_env(threads)
        runner = [str(out)]
        if threads == 1 and shutil.which("taskset"):
            runner = ["taskset", "-c", "0"] + runner
        elif threads > 1 and not shutil.which("taskset"):
            warnings.warn("no pinning facility available; thread placement is best effort")
        run = subprocess.run(runner, capture_output=True, text=True, env=env)
        if run.returncode != 0:
            raise BenchmarkError(
                f"benchmark exited with status {run.returncode}:\n{run.stderr.strip()}"
            )
        try:
            return parse_output(run.stdout)
        except ValueError as exc:
            raise BenchmarkError(f"malformed benchmark output: {exc}") from None


def bench_kernel(
    kernel: KernelIR,
    dims: GridDims,
    machine: MachineModel,
    threads: int = 1,
    blocking: BlockSpec | None = None,
    min_runtime_s: float = 1.0,
    seed: int = 0,
    verify: bool = True,
    workdir=None,
) -> BenchmarkResult:
    """Emit, compile, run, and (by default) verify one benchmark point.

    Verification compares the reported checksum against the reference
    interpreter for the same seed and size; a mismatch is a codegen or
    compiler fault and raises.
    """
    source = emit_c(
        kernel,
        dims,
        openmp=threads > 1,
        blocking=blocking,
        seed=seed,
        clock_hz=machine.clock_hz,
        min_runtime_s=min_runtime_s,
        line_bytes=machine.line_bytes,
    )
    values = run_benchmark(source, machine, threads=threads, workdir=workdir)
    verified = False
    if verify:
        expected = reference_checksum(kernel, dims, seed)
        got = values["checksum"]
        if got != expected and abs(got - expected) > 1e-9 * max(1.0, abs(expected)):
            raise BenchmarkError(
                f"checksum mismatch: benchmark {got!r} vs interpreter {expected!r} "
                f"(size {dims.shape}, seed {seed})"
            )
        verified = True
    return BenchmarkResult(
        dims=dims.shape,
        threads=threads,
        block=blocking.size if blocking else None,
        sweeps=values["sweeps"],
        wall_s=values["wall_s"],
        cycles_per_cl=values["cycles_per_cl"],
        mlups=values["mlups"],
        checksum=values["checksum"],
        verified=verified,
    )


def grid_sweep(
    kernel: KernelIR,
    machine: MachineModel,
    sizes,
    threads: int = 1,
    blocking: BlockSpec | None = None,
    min_runtime_s: float = 1.0,
    seed: int = 0,
    workdir=None,
):
    """One benchmark per cubic size; per-size failures do not abort the sweep."""
    sizes = list(sizes)
    if not sizes:
        raise BenchmarkError("grid sweep needs at least one size")
    if sorted(sizes) != sizes:
        raise BenchmarkError("grid sweep sizes must be ascending")
    deduped = sorted(set(sizes))
    if deduped != sizes:
        warnings.warn("duplicate sweep sizes removed")
    entries = []
    for n in deduped:
        dims = GridDims.cubic(n, kernel.spec.dimensions, kernel.spec.element_size)
        try:
            result = bench_kernel(
                kernel, dims, machine,
                threads=threads, blocking=blocking,
                min_runtime_s=min_runtime_s, seed=seed, workdir=workdir,
            )
            entries.append(SweepEntry(key=n, result=result, error=None))
        except StencilError as exc:
            entries.append(SweepEntry(key=n, result=None, error=str(exc)))
    if all(e.result is None for e in entries):
        raise BenchmarkError(
            "every size in the sweep failed; first error: " + (entries[0].error or "")
        )
    return entries


def thread_sweep(
    kernel: KernelIR,
    machine: MachineModel,
    dims: GridDims,
    max_threads: int,
    min_runtime_s: float = 1.0,
    seed: int = 0,
    workdir=None,
):
    """Benchmark 1..max_threads threads at one grid size (compact pinning)."""
    if max_threads < 1 or max_threads > machine.cores_per_socket:
        raise BenchmarkError(
            f"thread count must be in 1..{machine.cores_per_socket}, got {max_threads}"
        )
    entries = []
    for threads in range(1, max_threads + 1):
        try:
            result = bench_kernel(
                kernel, dims, machine,
                threads=threads, min_runtime_s=min_runtime_s, seed=seed, workdir=workdir,
            )
            entries.append(SweepEntry(key=threads, result=result, error=None))
        except StencilError as exc:
            entries.append(SweepEntry(key=threads, result=None, error=str(exc)))
    if all(e.result is None for e in entries):
        raise BenchmarkError("every thread count failed")
    return entries


def scaling_shape_flags(entries, prediction=None) -> list:
    """Non-fatal shape review of a thread sweep.

    Measured throughput should be non-decreasing up to its own saturation
    point; deviations are reported as flags (strings), never as errors,
    because they usually point at host configuration rather than at the
    kernel.  With a ScalingPrediction the measured saturation point is also
    compared against the model's.
    """
    flags = []
    results = [e.result for e in entries if e.result is not None]
    if not results:
        return flags
    mlups = [r.mlups for r in results]
    peak = mlups.index(max(mlups))
    for i in range(1, peak + 1):
        if mlups[i] < mlups[i - 1] * 0.98:  # 2% jitter allowance
            flags.append(
                f"thread scaling dips at {results[i].threads} threads "
                f"({mlups[i]:.1f} after {mlups[i - 1]:.1f} MLUP/s)"
            )
    if prediction is not None and prediction.saturation_cores is not None:
        if peak + 1 < prediction.saturation_cores:
            flags.append(
                f"measured saturation at {results[peak].threads} threads, "
                f"model predicts {prediction.saturation_cores}"
            )
    return flags


def _load_mapping(mapping) -> dict:
    if mapping is None:
        # documented default layout: columns carry the record field names
        return {field: field for field in MeasurementRecord.FIELDS}
    if isinstance(mapping, (str, Path)):
        text = Path(mapping).read_text()
        mapping = yaml.safe_load(text)
    if not isinstance(mapping, dict):
        raise BenchmarkError("counter mapping must be a column->field dictionary")
    for column, field in mapping.items():
        if field not in MeasurementRecord.FIELDS:
            raise BenchmarkError(
                f"mapping for column {column!r} names unknown field {field!r}; "
                f"valid fields: {', '.join(MeasurementRecord.FIELDS)}"
            )
    return mapping


def ingest_counters(path, mapping=None) -> MeasurementRecord:
    """Build one MeasurementRecord from an external counter CSV.

    ``mapping`` is {column name: record field} (dict or YAML/JSON file);
    without one, columns must carry the record field names directly.
    Columns without a mapping entry are an error that lists what was found
    (a grid-size column named "N" is tolerated); unmapped record fields stay
    explicitly absent.  Multi-row files yield the first row; use
    ingest_counter_table for per-size records.
    """
    records = ingest_counter_table(path, mapping)
    return records[0][1]


def ingest_counter_table(path, mapping=None, size_column: str | None = "N"):
    """Counter CSV with one row per grid size -> [(size, MeasurementRecord)]."""
    path = Path(path)
    mapping = _load_mapping(mapping)
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise BenchmarkError(f"counter file {path} is empty")
        unknown = [
            c for c in reader.fieldnames if c not in mapping and c != size_column
        ]
        if unknown:
            raise BenchmarkError(
                f"unmapped column(s) {unknown} in {path}; "
                f"columns present: {reader.fieldnames}"
            )
        rows = list(reader)
    if not rows:
        raise BenchmarkError(f"counter file {path} has a header but no data rows")
    out = []
    for index, row in enumerate(rows):
        fields = {}
        for column, field in mapping.items():
            raw = row.get(column, "")
            if raw is None or raw.strip() == "":
                continue  # explicitly absent
            try:
                fields[field] = float(raw)
            except ValueError:
                raise BenchmarkError(
                    f"column {column!r} row {index}: unparseable value {raw!r}"
                ) from None
        record = MeasurementRecord(provenance=str(path), **fields)
        if record.is_empty():
            raise BenchmarkError(f"row {index} of {path} maps to an empty record")
        key = int(row[size_column]) if size_column in row else index
        out.append((key, record))
    return out
