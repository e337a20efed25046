"""Command line interface.

Subcommands mirror the workflow stages: `generate` emits benchmark C,
`analyze` prints layer-condition / ECM / Roofline results, `simulate` runs
the cache simulator, `bench` compiles and runs one benchmark, `workflow`
collects a full report bundle, and `report` re-renders plots and HTML from
an existing bundle's CSV files.
"""

import argparse
import shlex
import sys
from pathlib import Path

from .bench import bench_kernel
from .cachesim import dump_trace, simulate_cache
from .codegen import BlockSpec, emit_c, kernel_loop_nest
from .layercond import layer_conditions
from .machine import (
    MachineModel,
    builtin_machine_path,
    list_builtin_machines,
    load_machine,
)
from .perfmodels import ecm_model, roofline
from .stencil import (
    ELEMENT_SIZES,
    KINDS,
    STORAGES,
    WEIGHTINGS,
    GridDims,
    StencilError,
    StencilSpec,
    build_kernel,
)
from .workflow import STATUSES, plan, run_workflow


def _add_stencil_args(parser):
    parser.add_argument("--dim", type=int, default=3, choices=(2, 3), help="dimensions")
    parser.add_argument("--radius", type=int, default=1, help="stencil radius (>= 1)")
    parser.add_argument("--kind", default="star", choices=KINDS)
    parser.add_argument("--weighting", default="homogeneous", choices=WEIGHTINGS)
    parser.add_argument("--coeff", default="constant", choices=STORAGES,
                        help="coefficient storage")
    parser.add_argument("--dtype", default="float64", choices=tuple(ELEMENT_SIZES))


def _add_machine_arg(parser):
    parser.add_argument(
        "--machine",
        required=True,
        help="machine file path or a bundled name "
             f"({', '.join(list_builtin_machines())})",
    )


def _spec_from(args) -> StencilSpec:
    return StencilSpec(
        dimensions=args.dim,
        radius=args.radius,
        kind=args.kind,
        weighting=args.weighting,
        coefficient_storage=args.coeff,
        element_type=args.dtype,
    )


def _machine_from(args) -> MachineModel:
    candidate = Path(args.machine)
    if candidate.is_file():
        return load_machine(candidate)
    if args.machine in list_builtin_machines():
        return load_machine(builtin_machine_path(args.machine))
    raise StencilError(
        f"machine {args.machine!r} is neither a file nor a bundled name "
        f"({', '.join(list_builtin_machines())})"
    )


def _dims_from(args, spec) -> GridDims:
    return GridDims.cubic(args.n, spec.dimensions, spec.element_size)


def _blocking_from(args) -> BlockSpec | None:
    return BlockSpec(args.block) if args.block else None


def _cmd_generate(args):
    spec = _spec_from(args)
    kernel = build_kernel(spec)
    clock = _machine_from(args).clock_hz if args.machine else 0.0
    source = emit_c(
        kernel,
        _dims_from(args, spec),
        openmp=args.openmp,
        markers=args.markers,
        blocking=_blocking_from(args),
        seed=args.seed,
        clock_hz=clock,
        min_runtime_s=args.min_runtime,
    )
    if args.output:
        Path(args.output).write_text(source)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(source)
    return 0


def _cmd_analyze(args):
    spec = _spec_from(args)
    kernel = build_kernel(spec)
    machine = _machine_from(args)
    dims = _dims_from(args, spec)
    conditions, lc_traffic = layer_conditions(kernel, machine, dims, args.safety)

    if args.model == "lc":
        print(f"{'level':<6}{'cond':<6}{'requirement [B]':>16}{'holds':>7}{'breaks at':>11}")
        for c in conditions:
            breaks = c.break_size if c.break_size is not None else "never"
            print(f"{c.level:<6}{c.dimensionality:<6}{c.requirement_bytes:>16}"
                  f"{('yes' if c.holds else 'no'):>7}{breaks!s:>11}")
        print()
        for i, name in enumerate(lc_traffic.transitions):
            print(f"{name}: load {lc_traffic.load_bytes_per_cl[i]:g} B/CL, "
                  f"store {lc_traffic.store_bytes_per_cl[i]:g} B/CL")
        return 0

    traffic = lc_traffic
    if args.predictor == "sim":
        traffic = simulate_cache(kernel, machine, dims).traffic
    ecm = ecm_model(kernel, machine, traffic)
    if args.model == "ecm":
        for name, value in ecm.terms().items():
            print(f"{name:<8} = {value:.2f} cy/CL")
        print(f"T_total  = {ecm.T_total:.2f} cy/CL  ({ecm.policy}, {traffic.predictor})")
    else:
        roof = roofline(traffic, machine, ecm.T_comp, spec.element_size)
        print(f"bottleneck = {roof.bottleneck}")
        print(f"cycles     = {roof.cycles_per_cl:.2f} cy/CL")
        print(f"perf       = {roof.performance / 1e6:.1f} MLUP/s")
    return 0


def _cmd_simulate(args):
    spec = _spec_from(args)
    kernel = build_kernel(spec)
    machine = _machine_from(args)
    dims = _dims_from(args, spec)
    if args.trace:
        with open(args.trace, "w") as handle:
            events = dump_trace(kernel, dims, handle, machine.line_bytes)
        print(f"wrote {events} events to {args.trace}")
        return 0
    result = simulate_cache(kernel, machine, dims, warmup_sweeps=args.warmup)
    print(f"engine: {result.engine}, work: {result.work_cachelines:g} CLs/sweep")
    for level in result.stats:
        print(f"{level['name']}: hits {level['HIT_count']}, misses {level['MISS_count']}, "
              f"evicts {level['EVICT_count']}")
    for i, name in enumerate(result.traffic.transitions):
        print(f"{name}: load {result.traffic.load_bytes_per_cl[i]:.2f} B/CL, "
              f"store {result.traffic.store_bytes_per_cl[i]:.2f} B/CL")
    return 0


def _cmd_bench(args):
    spec = _spec_from(args)
    kernel = build_kernel(spec)
    machine = _machine_from(args)
    dims = _dims_from(args, spec)
    result = bench_kernel(
        kernel, dims, machine,
        threads=args.threads,
        blocking=_blocking_from(args),
        min_runtime_s=args.min_runtime,
        seed=args.seed,
        verify=not args.no_verify,
    )
    print(f"sweeps={result.sweeps}")
    print(f"wall_s={result.wall_s:.9g}")
    print(f"cycles_per_cl={result.cycles_per_cl:.9g}")
    print(f"mlups={result.mlups:.9g}")
    print(f"checksum={result.checksum!r}")
    print(f"verified={'yes' if result.verified else 'skipped'}")
    return 0


def _cmd_workflow(args):
    spec = _spec_from(args)
    machine = _machine_from(args)
    workflow_plan = plan(
        spec,
        machine,
        memory_budget=args.memory_budget,
        step=args.step,
        max_threads=args.threads,
        block_level=args.block_level,
        safety=args.safety,
    )
    if args.sizes:
        sizes = tuple(sorted({int(s) for s in args.sizes.split(",")}))
        if not sizes or sizes[0] < 4:
            raise StencilError(f"unusable size override {args.sizes!r}")
        workflow_plan = type(workflow_plan)(
            spec=spec, machine=machine, sizes=sizes,
            thread_counts=workflow_plan.thread_counts,
            block_level=args.block_level,
            memory_budget=args.memory_budget, safety=args.safety,
        )
    bundle = run_workflow(
        workflow_plan,
        out_dir=args.out_dir,
        benchmarks=args.with_benchmarks,
        seed=args.seed,
        min_runtime_s=args.min_runtime,
        cli_command=" ".join(shlex.quote(a) for a in sys.argv),
        status_override=args.status,
        comment_override=args.comment,
        counters_csv=args.counters or None,
        counters_mapping=args.counters_mapping or None,
    )
    print(f"sizes: {workflow_plan.sizes[0]}..{workflow_plan.sizes[-1]} "
          f"step {args.step} ({len(workflow_plan.sizes)} points)")
    print(f"status: {bundle.status} - {bundle.comment}")
    for note in bundle.annotations:
        print(f"note: {note}")
    print(f"report: {bundle.html_path}")
    return 0


def _cmd_report(args):
    from . import plots as plots_mod
    from .htmlreport import render_html

    spec = _spec_from(args)
    kernel = build_kernel(spec)
    machine = _machine_from(args)
    out_dir = Path(args.out_dir)
    csv_path = out_dir / "data.csv"
    if not csv_path.is_file():
        raise StencilError(f"no data.csv under {out_dir}; run `stencilkit workflow` first")

    def maybe(name):
        p = out_dir / name
        return p if p.is_file() else None

    from .workflow import break_annotations

    svg_paths = plots_mod.render_plots(
        csv_path, machine, out_dir / "plots",
        volumes_csv=maybe("volumes.csv"),
        threads_csv=maybe("threads.csv"),
        blocking_csv=maybe("blocking.csv"),
        pheno_csv=maybe("pheno.csv"),
        element_size=spec.element_size,
        break_marks=break_annotations(kernel, machine, args.safety),
    )
    import csv as csv_mod

    with open(csv_path, newline="") as handle:
        sizes = tuple(int(row["N^3"]) for row in csv_mod.DictReader(handle))
    dims = GridDims.cubic(sizes[-1], spec.dimensions, spec.element_size)
    conditions, _ = layer_conditions(kernel, machine, dims, args.safety)
    html_path = render_html(
        out_dir / "report.html",
        spec=spec,
        kernel_source=kernel_loop_nest(kernel),
        machine=machine,
        conditions=conditions,
        svg_paths=svg_paths,
        csv_path=csv_path,
        status=args.status or "yellow",
        comment=args.comment or "re-rendered from existing CSV data",
        command=" ".join(shlex.quote(a) for a in sys.argv),
        annotations=[],
        sizes=sizes,
    )
    print(f"report: {html_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stencilkit",
        description="stencil kernel generation, traffic prediction, ECM/Roofline "
                    "modeling, benchmarking, and report generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a benchmark C translation unit")
    _add_stencil_args(p)
    p.add_argument("--machine", default="", help="machine file for clock/flags (optional)")
    p.add_argument("--n", type=int, default=100, help="cubic grid size")
    p.add_argument("--openmp", action="store_true")
    p.add_argument("--markers", action="store_true",
                   help="render instrumentation marker hooks")
    p.add_argument("--block", type=int, default=0, help="middle-loop tile length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-runtime", type=float, default=1.0)
    p.add_argument("-o", "--output", default="")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("analyze", help="layer-condition / ECM / Roofline analysis")
    p.add_argument("model", choices=("lc", "ecm", "roofline"))
    _add_stencil_args(p)
    _add_machine_arg(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--safety", type=float, default=0.5)
    p.add_argument("--predictor", choices=("lc", "sim"), default="lc")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="run the cache simulator")
    _add_stencil_args(p)
    _add_machine_arg(p)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--trace", default="", help="dump the address stream instead")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bench", help="compile, run, and verify one benchmark")
    _add_stencil_args(p)
    _add_machine_arg(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-runtime", type=float, default=1.0)
    p.add_argument("--no-verify", action="store_true",
                   help="skip the interpreter checksum check")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("workflow", help="full data collection and report bundle")
    _add_stencil_args(p)
    _add_machine_arg(p)
    p.add_argument("--sizes", default="", help="comma list overriding the planned sizes")
    p.add_argument("--step", type=int, default=10)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--block-level", default="L3")
    p.add_argument("--memory-budget", type=int, default=8 * 1024**3)
    p.add_argument("--safety", type=float, default=0.5)
    p.add_argument("--with-benchmarks", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-runtime", type=float, default=1.0)
    p.add_argument("--status", choices=STATUSES, default=None,
                   help="override the suggested traffic-light status")
    p.add_argument("--comment", default=None)
    p.add_argument("--counters", default="",
                   help="per-size counter CSV for the phenomenological model")
    p.add_argument("--counters-mapping", default="",
                   help="column->field mapping file for --counters")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_workflow)

    p = sub.add_parser("report", help="re-render plots and HTML from CSV data")
    _add_stencil_args(p)
    _add_machine_arg(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--safety", type=float, default=0.5)
    p.add_argument("--status", choices=STATUSES, default=None)
    p.add_argument("--comment", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StencilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
