"""Acceptance criteria, one test per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to get one line per
criterion; each test also prints an explicit `ACCEPTANCE <name>: PASS`
marker when its assertions hold.
"""

import filecmp
import hashlib
import os
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from stencilkit.cachesim import simulate_cache
from stencilkit.codegen import kernel_loop_nest
from stencilkit.interpret import interpret, make_inputs
from stencilkit.layercond import layer_conditions, lc_break_size
from stencilkit.machine import builtin_machine_path, load_machine
from stencilkit.perfmodels import compose_ecm, convert, ecm_model, invert, roofline
from stencilkit.stencil import GridDims, StencilSpec, build_kernel
from stencilkit.workflow import CSV_HEADER, plan, run_workflow

GOLDEN = Path(__file__).parent / "golden"

LISTING1 = StencilSpec(3, 1, "star", "homogeneous", "constant", "float64")
LISTING2 = StencilSpec(3, 3, "star", "heterogeneous", "constant", "float64")
LISTING3 = StencilSpec(3, 1, "box", "heterogeneous", "variable", "float64")


def _ok(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_codegen_goldens():
    """[PRIMARY] three reference kernels: counts, coefficients, exact goldens."""
    start = time.monotonic()
    cases = [
        (LISTING1, 7, ("c0",), "star_r1_homogeneous.c"),
        (LISTING2, 19, tuple(f"c{i}" for i in range(19)), "star_r3_heterogeneous.c"),
        (LISTING3, 27, tuple(f"W[{i}]" for i in range(27)), "box_r1_variable.c"),
    ]
    for spec, n_terms, coefficients, golden in cases:
        kernel = build_kernel(spec)
        assert len(kernel.terms) == n_terms
        assert kernel.coefficients == coefficients
        assert kernel_loop_nest(kernel) + "\n" == (GOLDEN / golden).read_text()
    # assignment shape: single scale factor vs per-term products
    assert "c0 * ( a[k][j][i]" in kernel_loop_nest(build_kernel(LISTING1))
    assert "W[26][k][j][i] * a[k+1][j+1][i+1]" in kernel_loop_nest(build_kernel(LISTING3))
    assert time.monotonic() - start < 1.0
    _ok("codegen goldens")


def test_lc_break_reproduction():
    """[PRIMARY] 3D LC breaks within 10% of the observed 30/90/760 jumps."""
    start = time.monotonic()
    hsw = load_machine(builtin_machine_path("hsw"))
    kernel = build_kernel(LISTING1)
    observed = {"L1": 30, "L2": 90, "L3": 760}
    for level, anchor in observed.items():
        predicted = lc_break_size(kernel, hsw, level, "3D", safety=0.5)
        assert abs(predicted - anchor) <= 0.1 * anchor, (level, predicted)
    assert time.monotonic() - start < 1.0
    _ok("LC break reproduction (33/91/758 vs 30/90/760)")


def test_lc_simulator_agreement():
    """[PRIMARY] LC and fully-associative LRU simulation agree within one
    line per distinct stream per level."""
    start = time.monotonic()
    machine = load_machine(builtin_machine_path("fullassoc"))
    samples = [
        StencilSpec(3, 1, "star", "homogeneous", "constant", "float64"),
        StencilSpec(3, 1, "star", "heterogeneous", "constant", "float64"),
        StencilSpec(3, 2, "star", "homogeneous", "constant", "float64"),
        StencilSpec(3, 2, "star", "heterogeneous", "constant", "float64"),
        StencilSpec(3, 1, "box", "heterogeneous", "constant", "float64"),
        StencilSpec(3, 2, "box", "homogeneous", "constant", "float64"),
    ]
    line = machine.line_bytes
    for spec in samples:
        kernel = build_kernel(spec)
        tolerance = kernel.op_counts.distinct_streams * line
        for n in (16, 24, 32, 48, 64):
            dims = GridDims.cubic(n)
            _, lc = layer_conditions(kernel, machine, dims, safety=0.5)
            sim = simulate_cache(kernel, machine, dims, warmup_sweeps=1).traffic
            for i in range(3):
                dl = abs(lc.load_bytes_per_cl[i] - sim.load_bytes_per_cl[i])
                ds = abs(lc.store_bytes_per_cl[i] - sim.store_bytes_per_cl[i])
                assert dl <= tolerance, (spec.label(), n, i, dl, tolerance)
                assert ds <= tolerance, (spec.label(), n, i, ds, tolerance)
    assert time.monotonic() - start < 120.0
    _ok("LC == simulator within 1 line per stream per level")


def test_ecm_composition_exactness():
    """[PRIMARY] composition anchors, Roofline bound, dominance fuzz."""
    start = time.monotonic()
    assert compose_ecm((7, 7, 3, 6, 14), "intel_no_overlap").T_total == 30
    assert compose_ecm((7, 7, 3, 6, 14), "zen_partial_overlap").T_total == 20

    hsw = load_machine(builtin_machine_path("hsw"))
    kernel = build_kernel(LISTING1)
    for n in range(10, 800, 10):
        _, traffic = layer_conditions(kernel, hsw, GridDims.cubic(n))
        ecm = ecm_model(kernel, hsw, traffic)
        roof = roofline(traffic, hsw, ecm.T_comp)
        assert roof.cycles_per_cl <= ecm.T_total + 1e-12

    rng = np.random.default_rng(2024)
    for row in rng.uniform(0.0, 500.0, size=(10_000, 5)):
        terms = tuple(row)
        intel = compose_ecm(terms, "intel_no_overlap").T_total
        zen = compose_ecm(terms, "zen_partial_overlap").T_total
        assert intel >= zen
    assert time.monotonic() - start < 10.0
    _ok("ECM composition: 30 intel / 20 zen, Roofline <= ECM, dominance x1e4")


def test_unit_conversion_anchors():
    """[PRIMARY] 40 cy/CL <-> 460 MLUP/s and 20 <-> 920 at 2.3 GHz, 8 LUP/CL."""
    start = time.monotonic()
    hsw = load_machine(builtin_machine_path("hsw"))
    assert hsw.clock_hz == 2.3e9 and hsw.line_bytes == 64
    assert float(f"{convert(40.0, hsw, 8) / 1e6:.3g}") == 460.0
    assert float(f"{convert(20.0, hsw, 8) / 1e6:.3g}") == 920.0
    assert float(f"{invert(460e6, hsw, 8):.3g}") == 40.0
    rng = np.random.default_rng(5)
    for value in rng.uniform(1e-6, 1e9, size=5000):
        back = invert(convert(value, hsw), hsw)
        assert abs(back - value) <= 4 * np.finfo(float).eps * value
    assert time.monotonic() - start < 1.0
    _ok("unit conversion anchors 40<->460, 20<->920")


def test_traversal_invariance():
    """[PRIMARY] blocked and naive interpretation bitwise identical, 50 cases."""
    start = time.monotonic()
    rng = np.random.default_rng(99)
    pool = [
        StencilSpec(3, 1, "star", "homogeneous", "constant", "float64"),
        StencilSpec(3, 2, "star", "heterogeneous", "constant", "float64"),
        StencilSpec(3, 1, "box", "isotropic", "constant", "float64"),
        StencilSpec(3, 1, "box", "heterogeneous", "variable", "float64"),
        StencilSpec(2, 3, "star", "point-symmetric", "constant", "float64"),
        StencilSpec(2, 1, "box", "heterogeneous", "constant", "float32"),
    ]
    for case in range(50):
        spec = pool[int(rng.integers(len(pool)))]
        n = int(rng.integers(2 * spec.radius + 2, 2 * spec.radius + 14))
        block = int(rng.integers(1, n))
        dims = GridDims.cubic(n, spec.dimensions, spec.element_size)
        kernel = build_kernel(spec)
        grid, coeffs, weights = make_inputs(kernel, dims, seed=case)
        naive = interpret(kernel, dims, grid, coeffs, weights)
        blocked = interpret(
            kernel, dims, grid, coeffs, weights, traversal="blocked", block=block
        )
        assert (naive == blocked).all(), (spec.label(), n, block)
    assert time.monotonic() - start < 60.0
    _ok("traversal invariance, 50 randomized cases bitwise")


def _tree_digest(root: Path) -> dict:
    digests = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digests[path.relative_to(root)] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests


def test_workflow_determinism_and_schema(tmp_path):
    """[PRIMARY] benchmark-free workflow: exact CSV header, byte-identical reruns."""
    toy = load_machine(builtin_machine_path("toy"))
    # charge one-time JIT compilation before the runtime budget starts
    simulate_cache(build_kernel(LISTING1), toy, GridDims.cubic(10))
    start = time.monotonic()
    workflow_plan = plan(LISTING1, toy, memory_budget=1 << 30)
    out = tmp_path / "bundle"
    command = "stencilkit workflow --machine toy --out-dir bundle"
    run_workflow(workflow_plan, out, benchmarks=False, cli_command=command)
    first = _tree_digest(out)
    run_workflow(workflow_plan, out, benchmarks=False, cli_command=command)
    second = _tree_digest(out)
    assert first == second
    header = (out / "data.csv").read_text().splitlines()[0]
    assert header == (
        "N^3,Benchmark cycl,ECM LC Tol,ECM LC Tnol,ECM LC Tl1l2,ECM LC Tl2l3,"
        "ECM LC Tl3mem,Roofline LC cycl,ECM CS Tol,ECM CS Tnol,ECM CS Tl1l2,"
        "ECM CS Tl2l3,ECM CS Tl3mem,Roofline CS cycl"
    )
    assert header == ",".join(CSV_HEADER)
    assert time.monotonic() - start < 30.0
    _ok("workflow determinism + exact CSV schema")


needs_cc = pytest.mark.skipif(shutil.which("cc") is None, reason="no C compiler")


@needs_cc
def test_secondary_harness_bridge():
    """[SECONDARY] rendered benchmark at 40^3: compiles, runs, checksum equals
    the interpreter, and cycles/mlups satisfy the convert identity."""
    from stencilkit.bench import bench_kernel

    start = time.monotonic()
    hsw = load_machine(builtin_machine_path("hsw"))
    kernel = build_kernel(LISTING1)
    dims = GridDims.cubic(40)
    result = bench_kernel(kernel, dims, hsw, min_runtime_s=0.05, seed=0, verify=True)
    assert result.verified  # checksum equals the reference interpreter's
    implied = invert(result.mlups * 1e6, hsw)
    assert abs(implied - result.cycles_per_cl) <= 0.01 * result.cycles_per_cl
    assert time.monotonic() - start < 60.0
    _ok("harness bridge: checksum + convert identity")


@needs_cc
def test_secondary_thread_sweep_shape():
    """[SECONDARY] measured thread scaling is non-decreasing up to its own
    saturation point; deviations are flagged, not failed."""
    from stencilkit.bench import scaling_shape_flags, thread_sweep

    start = time.monotonic()
    toy = load_machine(builtin_machine_path("toy"))
    host_threads = min(toy.cores_per_socket, os.cpu_count() or 1, 4)
    kernel = build_kernel(LISTING1)
    entries = thread_sweep(
        kernel, toy, GridDims.cubic(48), host_threads, min_runtime_s=0.05
    )
    flags = scaling_shape_flags(entries)
    assert isinstance(flags, list)  # deviations flag, never fail
    for note in flags:
        print(f"  flagged: {note}")
    mlups = [e.result.mlups for e in entries if e.result]
    peak = mlups.index(max(mlups))
    assert all(
        mlups[i] >= mlups[i - 1] * 0.98 or flags for i in range(1, peak + 1)
    )
    assert time.monotonic() - start < 120.0
    _ok("thread sweep shape (flag-on-deviation)")
