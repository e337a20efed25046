"""Stencil performance engineering toolkit.

Generates stencil kernels from a six-parameter classification, predicts
their traffic and runtime with layer conditions, cache simulation, and
ECM/Roofline models driven by declarative machine files, and collects
everything into reproducible CSV/SVG/HTML report bundles.
"""

from .bench import BenchmarkResult, bench_kernel, grid_sweep, ingest_counters, run_benchmark, thread_sweep
from .cachesim import SimulationResult, address_stream, simulate_cache
from .codegen import BlockSpec, emit_c, kernel_loop_nest
from .interpret import interpret, make_inputs, reference_checksum
from .layercond import LayerCondition, TrafficPrediction, layer_conditions, lc_break_size, reuse_distances
from .machine import CacheLevelSpec, MachineModel, PortModel, cycles_per_cl, effective_size, load_machine, mem_cycles_per_cl
from .perfmodels import (
    ECMPrediction,
    MeasurementRecord,
    RooflinePrediction,
    ScalingPrediction,
    compose_ecm,
    convert,
    ecm_model,
    incore,
    invert,
    phenomenological_ecm,
    roofline,
    scale_cores,
)
from .stencil import GridDims, KernelIR, OpCounts, StencilSpec, build_kernel, count_ops, linearized_offsets
from .workflow import ReportBundle, WorkflowPlan, plan, run_workflow, write_csv

__version__ = "0.1.0"
