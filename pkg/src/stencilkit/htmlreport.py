"""Single-file static HTML report.

Embeds the stencil parameters, the generated kernel source, the
layer-condition table, all rendered plots (inline SVG), a machine summary
with the machine-file digest, and the exact command line that reproduces
the data.  No timestamps: the page is a pure function of its inputs.
"""

import html
from pathlib import Path
from string import Template

from .machine import MachineModel

_PAGE = Template("""\
<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>$title</title>
<style>
body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 72rem; color: #202020; }
h1 { margin-bottom: 0.2rem; }
h2 { margin-top: 2rem; border-bottom: 1px solid #ddd; padding-bottom: 0.2rem; }
table { border-collapse: collapse; font-size: 0.9rem; }
th, td { border: 1px solid #ccc; padding: 0.3rem 0.6rem; text-align: left; }
th { background: #f0f0f0; }
pre { background: #f6f6f6; padding: 0.8rem; overflow-x: auto; font-size: 0.85rem; }
.badge { display: inline-block; padding: 0.25rem 0.8rem; border-radius: 1rem; color: white; font-weight: 600; }
.badge.green { background: #2e8b57; }
.badge.yellow { background: #d4a017; }
.badge.red { background: #c0392b; }
.plot { margin: 1rem 0; }
.note { color: #8a6d3b; background: #fcf8e3; padding: 0.4rem 0.8rem; margin: 0.3rem 0; }
</style>
</head>
<body>
<h1>$title</h1>
<p><span class="badge $status">$status</span> &mdash; $comment</p>

<h2>Stencil</h2>
$spec_table

<h2>Kernel source</h2>
<pre>$kernel_source</pre>

<h2>Layer conditions at N = $n_top</h2>
$lc_table

<h2>Plots</h2>
$plots

<h2>Machine</h2>
$machine_table

<h2>Reproduction</h2>
<p>Exact command used to collect the data behind this page:</p>
<pre>$command</pre>
<p>Machine file SHA-256: <code>$machine_digest</code></p>
<p>Data table: <code>$csv_name</code> (sizes $size_range)</p>
$annotations
</body>
</html>
""")


def _table(headers, rows) -> str:
    head = "".join(f"<th>{html.escape(str(h))}</th>" for h in headers)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in row) + "</tr>"
        for row in rows
    )
    return f"<table><tr>{head}</tr>{body}</table>"


def render_html(
    path,
    spec,
    kernel_source: str,
    machine: MachineModel,
    conditions,
    svg_paths: dict,
    csv_path,
    status: str,
    comment: str,
    command: str,
    annotations,
    sizes,
) -> Path:
    path = Path(path)

    spec_table = _table(
        ("parameter", "value"),
        [
            ("dimensions", spec.dimensions),
            ("radius", spec.radius),
            ("kind", spec.kind),
            ("weighting", spec.weighting),
            ("coefficient storage", spec.coefficient_storage),
            ("element type", spec.element_type),
            ("points", spec.point_count),
        ],
    )

    lc_table = _table(
        ("level", "condition", "requirement [B]", "holds", "breaks at N"),
        [
            (c.level, c.dimensionality, c.requirement_bytes,
             "yes" if c.holds else "no",
             c.break_size if c.break_size is not None else "never")
            for c in conditions
        ],
    )

    machine_rows = [
        ("name", machine.name),
        ("clock", f"{machine.clock_hz / 1e9:g} GHz"),
        ("cores", f"{machine.cores_per_socket} "
                  f"({machine.cores_per_numa_domain} per NUMA domain)"),
        ("memory bandwidth", f"{machine.mem_bandwidth_domain / 1e9:g} GB/s per domain, "
                             f"{machine.mem_bandwidth_socket / 1e9:g} GB/s socket"),
        ("overlap policy", machine.overlap_policy),
    ]
    for lvl in machine.cache_levels:
        machine_rows.append(
            (lvl.name,
             f"{lvl.size_bytes} B, {lvl.ways}-way, {lvl.line_bytes} B lines, "
             f"{lvl.upstream_bandwidth_bytes_per_cycle:g} B/cy {lvl.duplex} duplex"
             + (", victim" if lvl.victim else ""))
        )
    machine_table = _table(("property", "value"), machine_rows)

    plot_parts = []
    for kind, svg in sorted(svg_paths.items()):
        plot_parts.append(f'<div class="plot"><h3>{html.escape(kind)}</h3>')
        plot_parts.append(Path(svg).read_text())
        plot_parts.append("</div>")

    note_parts = []
    if annotations:
        note_parts.append("<h2>Collection notes</h2>")
        for note in annotations:
            note_parts.append(f'<div class="note">{html.escape(note)}</div>')

    page = _PAGE.substitute(
        title=f"{spec.label()} on {html.escape(machine.name)}",
        status=html.escape(status),
        comment=html.escape(comment),
        spec_table=spec_table,
        kernel_source=html.escape(kernel_source),
        n_top=sizes[-1],
        lc_table=lc_table,
        plots="\n".join(plot_parts),
        machine_table=machine_table,
        command=html.escape(command),
        machine_digest=html.escape(machine.source_digest or "(constructed in memory)"),
        csv_name=html.escape(Path(csv_path).name),
        size_range=f"{sizes[0]}..{sizes[-1]}",
        annotations="\n".join(note_parts),
    )
    path.write_text(page)
    return path
