import pytest

from stencilkit.cli import main


def test_generate_to_file(tmp_path, capsys):
    out = tmp_path / "bench.c"
    rc = main([
        "generate", "--dim", "3", "--radius", "1", "--n", "16",
        "--openmp", "-o", str(out),
    ])
    assert rc == 0
    text = out.read_text()
    assert "b[k][j][i] = c0 * ( a[k][j][i]" in text
    assert '_Pragma("omp parallel for' in text


def test_generate_stdout(capsys):
    assert main(["generate", "--n", "12"]) == 0
    assert "int main(void)" in capsys.readouterr().out


def test_analyze_lc(capsys):
    rc = main(["analyze", "lc", "--machine", "hsw", "--n", "100"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "L1" in out and "breaks at" in out


def test_analyze_ecm_and_roofline(capsys):
    assert main(["analyze", "ecm", "--machine", "hsw", "--n", "400"]) == 0
    out = capsys.readouterr().out
    assert "T_total" in out
    assert main(["analyze", "roofline", "--machine", "hsw", "--n", "400"]) == 0
    assert "bottleneck" in capsys.readouterr().out


def test_simulate_and_trace(tmp_path, capsys):
    assert main(["simulate", "--machine", "fullassoc", "--n", "16"]) == 0
    out = capsys.readouterr().out
    assert "fullassoc" in out and "L1L2" in out
    trace = tmp_path / "trace.txt"
    assert main(["simulate", "--machine", "toy", "--n", "8",
                 "--trace", str(trace)]) == 0
    assert trace.read_text().startswith("L 0x")


def test_unknown_machine_is_error(capsys):
    rc = main(["analyze", "lc", "--machine", "nonexistent"])
    assert rc == 2
    assert "neither a file nor a bundled name" in capsys.readouterr().err


def test_workflow_and_report(tmp_path, capsys):
    out_dir = tmp_path / "bundle"
    rc = main([
        "workflow", "--machine", "toy", "--memory-budget", str(1 << 30),
        "--sizes", "10,20,30", "--out-dir", str(out_dir),
    ])
    assert rc == 0
    assert (out_dir / "data.csv").exists()
    rc = main(["report", "--machine", "toy", "--out-dir", str(out_dir)])
    assert rc == 0
    assert (out_dir / "report.html").exists()
