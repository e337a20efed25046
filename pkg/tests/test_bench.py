import shutil
from pathlib import Path

import pytest

import stencilkit.bench as bench_mod
from stencilkit.bench import (
    BenchmarkError,
    BenchmarkResult,
    SweepEntry,
    bench_kernel,
    grid_sweep,
    ingest_counter_table,
    ingest_counters,
    run_benchmark,
    scaling_shape_flags,
    thread_sweep,
)
from stencilkit.machine import from_dict, serialize
from stencilkit.perfmodels import invert, phenomenological_ecm
from stencilkit.stencil import GridDims

FIXTURES = Path(__file__).parent / "fixtures"
MAPPING = FIXTURES / "counter_mapping.yml"

needs_cc = pytest.mark.skipif(shutil.which("cc") is None, reason="no C compiler")


def test_ingest_full_intel_export(hsw):
    record = ingest_counters(FIXTURES / "counters_intel.csv", MAPPING)
    assert record.l1l2_load_bytes_per_cl == 256.0
    assert record.l3mem_store_bytes_per_cl == 64.0
    assert record.fp_instr_per_cl == 14.0
    assert record.runtime_cycles_per_cl == 41.5
    assert not record.is_empty()
    pheno = phenomenological_ecm(record, hsw)
    assert pheno.complete


def test_ingest_table_keyed_by_size():
    table = ingest_counter_table(FIXTURES / "counters_intel.csv", MAPPING)
    assert [key for key, _ in table] == [400, 500]


def test_ingest_zen_export_memory_absent(hsw):
    record = ingest_counters(FIXTURES / "counters_zen.csv", MAPPING)
    assert record.l3mem_load_bytes_per_cl is None
    assert record.l2l3_load_bytes_per_cl == 256.0
    pheno = phenomenological_ecm(record, hsw)
    assert pheno.T_L3MEM is None and not pheno.complete


def test_ingest_unknown_column_lists_columns(tmp_path):
    path = tmp_path / "counters.csv"
    path.write_text("N,MYSTERY\n400,1\n")
    with pytest.raises(BenchmarkError, match="MYSTERY"):
        ingest_counters(path, MAPPING)


def test_ingest_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(BenchmarkError, match="empty"):
        ingest_counters(path, MAPPING)


def test_ingest_bad_mapping_field(tmp_path):
    path = tmp_path / "counters.csv"
    path.write_text("N,X\n400,1\n")
    with pytest.raises(BenchmarkError, match="unknown field"):
        ingest_counters(path, {"X": "bogus_field"})


def test_missing_compiler_is_actionable(hsw, star7):
    data = serialize(hsw)
    data["compiler"]["command"] = "definitely-not-a-compiler"
    machine = from_dict(data)
    with pytest.raises(BenchmarkError, match="definitely-not-a-compiler"):
        run_benchmark("int main(void){return 0;}", machine)


@needs_cc
def test_malformed_stdout_reports_line(hsw):
    source = '#include <stdio.h>\nint main(void){ printf("garbage\\n"); return 0; }\n'
    with pytest.raises(BenchmarkError, match="garbage"):
        run_benchmark(source, hsw)


@needs_cc
def test_compile_failure_surfaces_diagnostics(hsw):
    with pytest.raises(BenchmarkError, match="compilation failed"):
        run_benchmark("this is not C", hsw)


@needs_cc
def test_bench_kernel_verifies_and_satisfies_convert_identity(star7, hsw):
    dims = GridDims.cubic(16)
    result = bench_kernel(star7, dims, hsw, min_runtime_s=0.02)
    assert result.verified
    assert result.sweeps >= 1
    # cycles_per_cl and mlups are two views of the same wall time
    implied = invert(result.mlups * 1e6, hsw)
    assert implied == pytest.approx(result.cycles_per_cl, rel=1e-6)


@needs_cc
def test_grid_sweep_counts_and_isolates_failures(star7, hsw, monkeypatch):
    real = bench_mod.bench_kernel

    def poisoned(kernel, dims, machine, **kwargs):
        if dims.shape[0] == 12:
            raise BenchmarkError("poisoned size")
        return real(kernel, dims, machine, **kwargs)

    monkeypatch.setattr(bench_mod, "bench_kernel", poisoned)
    entries = grid_sweep(star7, hsw, [10, 12, 14], min_runtime_s=0.01)
    assert len(entries) == 3
    assert entries[1].result is None and "poisoned" in entries[1].error
    assert entries[0].result is not None and entries[2].result is not None


def test_grid_sweep_validates_sizes(star7, hsw):
    with pytest.raises(BenchmarkError):
        grid_sweep(star7, hsw, [])
    with pytest.raises(BenchmarkError):
        grid_sweep(star7, hsw, [20, 10])
    with pytest.warns(UserWarning, match="duplicate"):
        try:
            grid_sweep(star7, hsw, [10, 10], min_runtime_s=0.0)
        except BenchmarkError:
            pass  # fine if the host cannot compile; the warning is the point


def test_thread_sweep_rejects_oversubscription(star7, toy):
    with pytest.raises(BenchmarkError):
        thread_sweep(star7, toy, GridDims.cubic(16), toy.cores_per_socket + 1)


def _fake_entries(mlups_list):
    return [
        SweepEntry(
            key=i + 1,
            result=BenchmarkResult(
                dims=(10, 10, 10), threads=i + 1, block=None, sweeps=1,
                wall_s=1.0, cycles_per_cl=1.0, mlups=m, checksum=0.0, verified=True,
            ),
            error=None,
        )
        for i, m in enumerate(mlups_list)
    ]


def test_scaling_shape_flags_monotone_clean():
    assert scaling_shape_flags(_fake_entries([100, 190, 250, 251])) == []


def test_scaling_shape_flags_dip_reported():
    flags = scaling_shape_flags(_fake_entries([100, 80, 250]))
    assert len(flags) == 1 and "dips" in flags[0]
