"""C source emission for kernel IR.

Produces a self-contained C99 benchmark translation unit by filling the
skeleton from ``stencil_bench_harness``.  Emission is deterministic: the
same kernel and options yield byte-identical source.
"""

from dataclasses import dataclass

import numpy as np
from stencil_bench_harness import render

from .interpret import coefficient_values
from .stencil import GridDims, KernelIR, StencilError

_AXES_3D = ("k", "j", "i")
_AXES_2D = ("j", "i")
_INDENT = "    "


class CodegenError(StencilError):
    """Invalid emission request (degenerate tile, mismatched grid, ...)."""


@dataclass(frozen=True)
class BlockSpec:
    """Spatial blocking of the middle loop (the only axis that is tiled)."""

    size: int

    def __post_init__(self):
        if self.size < 1:
            raise CodegenError(f"block length must be >= 1, got {self.size}")


def check_dims(kernel: KernelIR, dims: GridDims) -> None:
    spec = kernel.spec
    if dims.dimensions != spec.dimensions:
        raise CodegenError(
            f"grid is {dims.dimensions}D but kernel is {spec.dimensions}D"
        )
    if dims.element_size != spec.element_size:
        raise CodegenError(
            f"grid element size {dims.element_size} does not match "
            f"{spec.element_type}"
        )
    for axis in dims.shape:
        if axis < 2 * spec.radius + 2:
            raise CodegenError(
                f"axis of {axis} leaves no interior for radius {spec.radius}"
            )


def _index(axis: str, off: int) -> str:
    return axis if off == 0 else f"{axis}{off:+d}"


def _read_expr(term, axes) -> str:
    return term.array + "".join(f"[{_index(ax, o)}]" for ax, o in zip(axes, term.offset))


def _coeff_expr(kernel, term, axes) -> str:
    name = kernel.coefficients[term.coefficient]
    if kernel.weight_array:
        return name + "".join(f"[{ax}]" for ax in axes)
    return name


def _assignment(kernel: KernelIR, axes, indent: str):
    lhs = kernel.write_array + "".join(f"[{ax}]" for ax in axes)
    terms = kernel.terms
    lines = []
    if kernel.spec.weighting == "homogeneous":
        head = f"{lhs} = {_coeff_expr(kernel, terms[0], axes)} * ( "
        pad = " " * (len(head) - 2)
        lines.append(indent + head + _read_expr(terms[0], axes))
        for term in terms[1:]:
            lines.append(f"{indent}{pad}+ {_read_expr(term, axes)}")
        lines[-1] += " );"
    else:
        pad = " " * len(lhs)
        first = terms[0]
        lines.append(
            f"{indent}{lhs} = {_coeff_expr(kernel, first, axes)} * {_read_expr(first, axes)}"
        )
        for term in terms[1:]:
            lines.append(
                f"{indent}{pad} + {_coeff_expr(kernel, term, axes)} * {_read_expr(term, axes)}"
            )
        lines[-1] += ";"
    return lines


def kernel_loop_nest(kernel: KernelIR, blocking: BlockSpec | None = None) -> str:
    """The loop nest plus assignment, one loop per dimension (plus the tile
    loop when blocking), inner loop over the unit-stride axis."""
    spec = kernel.spec
    r = spec.radius
    axes = _AXES_3D if spec.dimensions == 3 else _AXES_2D
    extents = ("M", "N", "P") if spec.dimensions == 3 else ("N", "P")
    mid = 1 if spec.dimensions == 3 else 0

    lines = []
    depth = 0

    def open_loop(var, start, stop):
        nonlocal depth
        lines.append(f"{_INDENT * (depth + 1)}for (long {var} = {start}; {var} < {stop}; ++{var}) {{")
        depth += 1

    if blocking is None:
        for ax, ext in zip(axes, extents):
            open_loop(ax, r, f"{ext} - {r}")
    else:
        mid_ext = extents[mid]
        open_loop("jb", r, f"{mid_ext} - {r}")
        lines[-1] = lines[-1].replace("++jb", "jb += BLOCK_J")
        lines.append(
            f"{_INDENT * (depth + 1)}const long jend = "
            f"jb + BLOCK_J < {mid_ext} - {r} ? jb + BLOCK_J : {mid_ext} - {r};"
        )
        for pos, (ax, ext) in enumerate(zip(axes, extents)):
            if pos == mid:
                open_loop(ax, "jb", "jend")
            else:
                open_loop(ax, r, f"{ext} - {r}")

    lines.extend(_assignment(kernel, axes, _INDENT * (depth + 1)))
    for level in range(depth, 0, -1):
        lines.append(_INDENT * level + "}")
    return "\n".join(lines)


def _c_literal(value, element_type: str) -> str:
    if element_type == "float32":
        return float(np.float32(value)).hex() + "f"
    return float(value).hex()


def _dims_block(kernel: KernelIR, dims: GridDims, seed, clock_hz, min_runtime_s, line_bytes):
    spec = kernel.spec
    total = dims.total_elements
    weight_total = kernel.weight_components * total
    inner_stride = dims.strides[0] if spec.dimensions == 2 else dims.N * dims.P
    lines = []
    if spec.dimensions == 3:
        lines.append(f"static const long M = {dims.M};")
    lines.append(f"static const long N = {dims.N};")
    lines.append(f"static const long P = {dims.P};")
    lines.append(f"static const long ARRAY_ELEMENTS = {total};")
    lines.append(f"static const long WEIGHT_ELEMENTS = {weight_total};")
    lines.append(f"static const long INNER_STRIDE = {inner_stride};")
    lines.append(f"static const long INTERIOR_POINTS = {dims.interior_points(spec.radius)};")
    lines.append(f"static const long LINE_BYTES = {line_bytes};")
    lines.append(f"static const uint64_t SEED = UINT64_C({seed});")
    lines.append(f"static const double CLOCK_HZ = {float(clock_hz)!r};")
    lines.append(f"static const double MIN_RUNTIME_S = {float(min_runtime_s)!r};")
    return "\n".join(lines)


_MARKER_DECLS = """\
#ifdef BENCH_MARKER_LIB
void bench_marker_start(const char *region);
void bench_marker_stop(const char *region);
#else
static void bench_marker_start(const char *region) { (void)region; }
static void bench_marker_stop(const char *region) { (void)region; }
#endif"""


def _declarations(kernel: KernelIR, seed: int, markers: bool) -> str:
    parts = []
    if not kernel.weight_array:
        values = coefficient_values(kernel, seed)
        parts.extend(
            f"static const elem_t {name} = {_c_literal(value, kernel.spec.element_type)};"
            for name, value in zip(kernel.coefficients, values)
        )
    else:
        parts.append("/* coefficients are read from the weight grid W */")
    if markers:
        parts.append(_MARKER_DECLS)
    return "\n".join(parts)


def _casts(kernel: KernelIR, dims: GridDims) -> list:
    spec = kernel.spec
    if spec.dimensions == 3:
        arr, warr = "[N][P]", "[M][N][P]"
    else:
        arr, warr = "[P]", "[N][P]"
    lines = [
        f"{_INDENT}elem_t (*restrict {kernel.read_array}){arr} = (elem_t (*restrict){arr})in_base;",
        f"{_INDENT}elem_t (*restrict {kernel.write_array}){arr} = (elem_t (*restrict){arr})out_base;",
    ]
    if kernel.weight_array:
        lines.append(
            f"{_INDENT}const elem_t (*restrict {kernel.weight_array}){warr} = "
            f"(const elem_t (*restrict){warr})w_base;"
        )
    else:
        lines.append(f"{_INDENT}(void)w_base;")
    return lines


def emit_c(
    kernel: KernelIR,
    dims: GridDims,
    openmp: bool = False,
    markers: bool = False,
    blocking: BlockSpec | None = None,
    seed: int = 0,
    clock_hz: float = 0.0,
    min_runtime_s: float = 1.0,
    line_bytes: int = 64,
) -> str:
    """Emit the complete benchmark translation unit for one kernel and grid."""
    check_dims(kernel, dims)
    if blocking is not None:
        if kernel.spec.dimensions == 2 and blocking.size >= dims.N:
            raise CodegenError(
                f"degenerate tile: block {blocking.size} covers the whole "
                f"middle loop (N = {dims.N})"
            )

    body = _casts(kernel, dims)
    body.append(f"{_INDENT}SWEEP_PRAGMA")
    body.append(kernel_loop_nest(kernel, blocking))

    substitutions = {
        "DTYPE": "float" if kernel.spec.element_type == "float32" else "double",
        "DIMS": _dims_block(kernel, dims, seed, clock_hz, min_runtime_s, line_bytes),
        "DECLARATIONS": _declarations(kernel, seed, markers),
        "BLOCK_LOOPS": (
            f"static const long BLOCK_J = {blocking.size};"
            if blocking
            else "/* no spatial blocking */"
        ),
        "KERNEL_BODY": "\n".join(body),
        "OMP_PRAGMA": '_Pragma("omp parallel for schedule(static)")' if openmp else "",
        "MARKER_BEGIN": 'bench_marker_start("sweep");' if markers else "",
        "MARKER_END": 'bench_marker_stop("sweep");' if markers else "",
    }
    return render(substitutions)
