"""Reference interpreter for kernel IR.

Performs one Jacobi sweep exactly as the emitted C does: same term order,
same left-to-right floating point association, same deterministic input
values.  Compiled benchmarks are validated against it by checksum, and the
blocked traversal must reproduce the naive one bit for bit (updates are
independent and the per-point evaluation order is fixed).
"""

import numpy as np
from numba import njit

from .stencil import GridDims, KernelIR, StencilError

GRID_SALT = 0
WEIGHT_SALT = 1
COEFF_SALT = 2

_INV_2_53 = 1.0 / 9007199254740992.0


def hash_values(indices, seed: int, salt: int):
    """splitmix-style hash of flat indices to float64 in [0, 1).

    Mirrors the benchmark harness ``init_value`` bit for bit.
    """
    offset = ((seed + salt) * 0x9E3779B97F4A7C15) % (1 << 64)
    h = indices.astype(np.uint64) * np.uint64(2654435761) + np.uint64(offset)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def _np_dtype(kernel: KernelIR):
    return np.float32 if kernel.spec.element_type == "float32" else np.float64


def make_inputs(kernel: KernelIR, dims: GridDims, seed: int = 0):
    """Deterministic (grid, coefficients, weights) matching the C harness."""
    dtype = _np_dtype(kernel)
    flat = np.arange(dims.total_elements, dtype=np.uint64)
    grid = hash_values(flat, seed, GRID_SALT).astype(dtype).reshape(dims.shape)
    coeffs = coefficient_values(kernel, seed)
    weights = None
    if kernel.weight_array:
        n = kernel.weight_components * dims.total_elements
        flat_w = np.arange(n, dtype=np.uint64)
        weights = (
            hash_values(flat_w, seed, WEIGHT_SALT)
            .astype(dtype)
            .reshape((kernel.weight_components,) + dims.shape)
        )
    return grid, coeffs, weights


def coefficient_values(kernel: KernelIR, seed: int = 0):
    """Scalar coefficient values (hash of the coefficient index)."""
    dtype = _np_dtype(kernel)
    idx = np.arange(len(kernel.coefficients), dtype=np.uint64)
    return hash_values(idx, seed, COEFF_SALT).astype(dtype)


def _interior(dims: GridDims, radius: int):
    for axis in dims.shape:
        if axis < 2 * radius + 2:
            raise StencilError(f"axis {axis} leaves no interior for radius {radius}")
    return tuple(slice(radius, axis - radius) for axis in dims.shape)


def _apply_region(kernel, grid, coeffs, weights, out, region):
    """Evaluate all points of one region with the fixed term order."""
    spec = kernel.spec

    def shifted(term):
        return grid[tuple(slice(s.start + o, s.stop + o) for s, o in zip(region, term.offset))]

    def factor(term):
        if weights is None:
            return coeffs[term.coefficient]
        return weights[(term.coefficient,) + region]

    terms = kernel.terms
    if spec.weighting == "homogeneous":
        acc = shifted(terms[0]).copy()
        for term in terms[1:]:
            acc = acc + shifted(term)
        acc = factor(terms[0]) * acc
    else:
        acc = factor(terms[0]) * shifted(terms[0])
        for term in terms[1:]:
            acc = acc + factor(term) * shifted(term)
    out[region] = acc


def interpret(
    kernel: KernelIR,
    dims: GridDims,
    grid,
    coefficients=None,
    weights=None,
    traversal: str = "naive",
    block: int | None = None,
):
    """One Jacobi sweep; the boundary ring of width radius is copied through.

    ``traversal`` is "naive" or "blocked"; blocked tiles the middle loop with
    tile length ``block`` and must produce a bitwise-identical result.
    """
    spec = kernel.spec
    if tuple(grid.shape) != dims.shape:
        raise StencilError(f"grid shape {grid.shape} does not match dims {dims.shape}")
    if kernel.weight_array:
        expected = (kernel.weight_components,) + dims.shape
        if weights is None or tuple(weights.shape) != expected:
            raise StencilError(f"weight grid of shape {expected} required")
    elif coefficients is None or len(coefficients) != len(kernel.coefficients):
        raise StencilError(f"{len(kernel.coefficients)} coefficients required")

    radius = spec.radius
    region = _interior(dims, radius)
    out = grid.copy()

    if traversal == "naive":
        _apply_region(kernel, grid, coefficients, weights, out, region)
    elif traversal == "blocked":
        if block is None or block < 1:
            raise StencilError("blocked traversal needs a block length >= 1")
        # Middle loop only: axis 1 of a 3D grid, the outer axis of a 2D grid.
        axis = 1 if dims.dimensions == 3 else 0
        mid = region[axis]
        for start in range(mid.start, mid.stop, block):
            tile = list(region)
            tile[axis] = slice(start, min(start + block, mid.stop))
            _apply_region(kernel, grid, coefficients, weights, out, tuple(tile))
    else:
        raise StencilError(f"unknown traversal {traversal!r}")
    return out


@njit(cache=True)
def _left_fold(flat):
    acc = 0.0
    for i in range(flat.size):
        acc += flat[i]
    return acc


def checksum(grid) -> float:
    """Strict left-to-right float64 sum in C order (the harness contract)."""
    return float(_left_fold(np.ascontiguousarray(grid).ravel()))


def reference_checksum(kernel: KernelIR, dims: GridDims, seed: int = 0) -> float:
    """Checksum of one sweep from the deterministic initial state."""
    grid, coeffs, weights = make_inputs(kernel, dims, seed)
    out = interpret(kernel, dims, grid, coeffs, weights)
    return checksum(out)
