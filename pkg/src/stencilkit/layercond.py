"""Layer-condition traffic prediction.

The layer condition is a closed-form criterion for which stencil reuse
distances fit in a given cache.  Reuse distances are the gaps between
consecutive linearized access offsets of one array; grouping them by how
they scale with the grid (constant, one row, one plane) gives the 1D/2D/3D
conditions.  A condition holds at a level when the summed reuse window fits
the usable fraction of that cache (`safety`, default one half of nominal
size — the fraction absorbs the concurrent stream tails an LRU cache must
also keep).

Traffic follows from the conditions: every read stream touches one new line
per cacheline of work (the compulsory head); each reuse whose condition
holds is served at that level, each one that fails pulls another line from
the next level.  Stores add a write-allocate line on the way in and a
write-back line on the way out.
"""

from dataclasses import dataclass

from .codegen import check_dims
from .machine import MachineModel, effective_size
from .stencil import GridDims, KernelIR

DIMENSIONALITIES = ("1D", "2D", "3D")


@dataclass(frozen=True)
class LayerCondition:
    """One (cache level, dimensionality) condition at a concrete grid."""

    level: str
    dimensionality: str
    requirement_bytes: int
    holds: bool
    break_size: int | None  # smallest cubic N where the condition fails


@dataclass(frozen=True)
class TrafficPrediction:
    """Per-transition load/store volumes, in bytes per cacheline of work."""

    predictor: str
    level_names: tuple
    load_bytes_per_cl: tuple
    store_bytes_per_cl: tuple
    reg_loads_per_cl: float
    reg_stores_per_cl: float

    @property
    def transitions(self) -> tuple:
        names = list(self.level_names) + ["MEM"]
        return tuple(f"{a}{b}" for a, b in zip(names, names[1:]))


def reuse_distances(offsets) -> tuple:
    """Consecutive differences of a descending linearized offset list."""
    offsets = list(offsets)
    if not offsets:
        raise ValueError("need at least one offset")
    if any(a <= b for a, b in zip(offsets, offsets[1:])):
        raise ValueError("offsets must be strictly descending")
    return tuple(a - b for a, b in zip(offsets, offsets[1:]))


def symbolic_distances(kernel: KernelIR):
    """Read-array reuse distances as per-axis deltas, largest first.

    Each distance is a (dk, dj, di) delta against the strides (N*P, P, 1),
    so its linear value and scaling order follow for any grid.  Weight-grid
    components are singleton streams and contribute no distances.
    """
    offsets = sorted((t.offset for t in kernel.terms), reverse=True)
    return tuple(
        tuple(a - b for a, b in zip(hi, lo)) for hi, lo in zip(offsets, offsets[1:])
    )


def _distance_order(delta) -> int:
    """Scaling order of a distance: 3 = plane (O(N·P)), 2 = row (O(P)), 1 = O(1)."""
    if len(delta) == 3 and delta[0] != 0:
        return 3
    if delta[-2] != 0:
        return 2
    return 1


def _linear(delta, n_mid: int, p: int) -> int:
    if len(delta) == 3:
        return delta[0] * n_mid * p + delta[1] * p + delta[2]
    return delta[0] * p + delta[1]


def requirement_bytes(
    kernel: KernelIR,
    dims: GridDims,
    dimensionality: str,
    block_middle: int | None = None,
) -> int:
    """Closed-form cache requirement of one condition at a concrete grid.

    ``block_middle`` evaluates the requirement as if the middle loop were
    tiled to that length (plane reuse then spans the tile, not the grid).
    """
    order = DIMENSIONALITIES.index(dimensionality) + 1
    if order > dims.dimensions:
        raise ValueError(f"{dimensionality} condition undefined on a {dims.dimensions}D grid")
    n_mid = block_middle if block_middle is not None else dims.N
    total = 0
    for delta in symbolic_distances(kernel):
        if _distance_order(delta) <= order:
            total += _linear(delta, n_mid, dims.P)
    return total * dims.element_size


def lc_break_size(
    kernel: KernelIR,
    machine: MachineModel,
    level,
    dimensionality: str,
    safety: float = 0.5,
) -> int | None:
    """Smallest cubic grid edge N at which the condition fails.

    Solved from the closed form (quadratic in N for the 3D condition,
    linear for 2D); None when the requirement does not grow with N, i.e.
    the condition never fails within address-space bounds.
    """
    if isinstance(level, str):
        level = machine.level(level)
    order = DIMENSIONALITIES.index(dimensionality) + 1
    if order > kernel.spec.dimensions:
        raise ValueError(
            f"{dimensionality} condition undefined for a {kernel.spec.dimensions}D kernel"
        )
    es = kernel.spec.element_size
    quad = lin = const = 0
    for delta in symbolic_distances(kernel):
        if _distance_order(delta) > order:
            continue
        if len(delta) == 3:
            quad += delta[0]
            lin += delta[1]
            const += delta[2]
        else:
            lin += delta[0]
            const += delta[1]
    quad, lin, const = quad * es, lin * es, const * es
    budget = effective_size(level, safety)
    if quad == 0 and lin == 0:
        return None

    def requirement(n):
        return quad * n * n + lin * n + const

    if quad:
        disc = lin * lin - 4.0 * quad * (const - budget)
        guess = int((-lin + disc**0.5) / (2.0 * quad)) if disc > 0 else 0
    else:
        guess = int((budget - const) / lin)
    smallest = max(guess - 2, 2 * kernel.spec.radius + 2)
    while requirement(smallest) > budget and smallest > 2 * kernel.spec.radius + 2:
        smallest -= 1
    while requirement(smallest) <= budget:
        smallest += 1
    return smallest


def layer_conditions(
    kernel: KernelIR,
    machine: MachineModel,
    dims: GridDims,
    safety: float = 0.5,
    block_middle: int | None = None,
):
    """Evaluate all conditions and derive the traffic prediction.

    Returns (conditions, traffic): one LayerCondition per cache level and
    dimensionality class, and the per-transition volumes implied by them.
    """
    check_dims(kernel, dims)
    spec = kernel.spec
    es = spec.element_size
    line = machine.line_bytes
    distances = symbolic_distances(kernel)
    orders = [_distance_order(d) for d in distances]
    n_mid = block_middle if block_middle is not None else dims.N
    linear = [_linear(d, n_mid, dims.P) for d in distances]

    requirement = {}
    for order in range(1, dims.dimensions + 1):
        requirement[order] = (
            sum(v for v, o in zip(linear, orders) if o <= order) * es
        )

    conditions = []
    holds_at = {}
    for level in machine.cache_levels:
        budget = effective_size(level, safety)
        for order in range(1, dims.dimensions + 1):
            name = DIMENSIONALITIES[order - 1]
            holds = requirement[order] <= budget
            holds_at[(level.name, order)] = holds
            conditions.append(
                LayerCondition(
                    level=level.name,
                    dimensionality=name,
                    requirement_bytes=requirement[order],
                    holds=holds,
                    break_size=lc_break_size(kernel, machine, level, name, safety),
                )
            )

    write_allocate = machine.cache_levels[0].write_allocate
    loads = []
    stores = []
    for level in machine.cache_levels:
        misses = 1 + sum(
            1 for order in orders if not holds_at[(level.name, order)]
        )
        load_lines = misses + kernel.weight_components
        if write_allocate:
            load_lines += 1
        loads.append(float(load_lines * line))
        stores.append(float(line if level.write_back else 0))

    lups_per_cl = line // es
    traffic = TrafficPrediction(
        predictor="layer_condition",
        level_names=tuple(l.name for l in machine.cache_levels),
        load_bytes_per_cl=tuple(loads),
        store_bytes_per_cl=tuple(stores),
        reg_loads_per_cl=float(kernel.op_counts.loads * lups_per_cl),
        reg_stores_per_cl=float(kernel.op_counts.stores * lups_per_cl),
    )
    return conditions, traffic
