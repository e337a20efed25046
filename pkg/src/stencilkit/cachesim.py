"""Multi-level cache simulation fed by the kernel's address stream.

Two engines share one address stream (term loads in IR order, then the
store, per interior point, loop-nest order):

* fully associative hierarchies run every level as an independent LRU over
  the full stream.  The LRU stack property then makes the hierarchy exactly
  inclusive (a bigger LRU cache always holds a superset), which is the
  idealized configuration the layer-condition model assumes, and it keeps a
  cost of O(1) per access per level regardless of capacity;
* set-associative hierarchies run strict per-set LRU with filtered streams
  (a level sees only the misses and write-backs of the level above),
  including victim last levels that fill on eviction and not on load.

Volumes between level l and l+1 are MISS (lines in) and EVICT (lines out)
counts of level l times the line size, normalized to bytes per cacheline of
work.  There is no prefetcher and no back-invalidation on lower-level
eviction; both are known sources of divergence from real hardware around
layer-condition breaks.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .codegen import check_dims
from .layercond import TrafficPrediction
from .machine import FULL_ASSOCIATIVE, MachineModel
from .stencil import GridDims, KernelIR, StencilError

_HIT, _MISS, _EVICT, _LOAD, _STORE, _FETCH = 0, 1, 2, 3, 4, 5
_N_COUNTERS = 6


class SimulationBudgetError(StencilError):
    """Requested grid would exceed the configured event budget."""


@dataclass(frozen=True)
class SimulationResult:
    traffic: TrafficPrediction
    stats: tuple
    engine: str
    work_cachelines: float


def _align_up(value: int, quantum: int) -> int:
    return (value + quantum - 1) // quantum * quantum


def _layout(kernel: KernelIR, dims: GridDims, line_bytes: int):
    """Element-index bases of a, b, W in one line-aligned address space."""
    es = dims.element_size
    elems_per_line = line_bytes // es
    total = dims.total_elements
    a_base = 0
    b_base = _align_up(total, elems_per_line)
    w_base = _align_up(b_base + total, elems_per_line)
    w_total = kernel.weight_components * total
    span_elems = w_base + w_total if w_total else w_base
    return a_base, b_base, w_base, span_elems


def _event_offsets(kernel: KernelIR, dims: GridDims, line_bytes: int):
    """Per-point load offsets (elements, relative to the point index)."""
    a_base, b_base, w_base, span = _layout(kernel, dims, line_bytes)
    strides = dims.strides
    total = dims.total_elements
    loads = []
    for term in kernel.terms:
        if kernel.weight_array:
            loads.append(w_base + term.coefficient * total)
        loads.append(a_base + sum(o * s for o, s in zip(term.offset, strides)))
    return np.asarray(loads, dtype=np.int64), np.int64(b_base), span


def _bounds(kernel: KernelIR, dims: GridDims):
    """3D loop bounds; 2D grids run as a single outer slab."""
    r = kernel.spec.radius
    if dims.dimensions == 3:
        return (r, dims.M - r, r, dims.N - r, r, dims.P - r, dims.N * dims.P, dims.P)
    return (0, 1, r, dims.N - r, r, dims.P - r, dims.N * dims.P, dims.P)


def address_stream(kernel: KernelIR, dims: GridDims, line_bytes: int = 64):
    """Yield ("L"|"S", byte address) events in simulation order."""
    check_dims(kernel, dims)
    es = dims.element_size
    load_rel, store_rel, _ = _event_offsets(kernel, dims, line_bytes)
    k_lo, k_hi, j_lo, j_hi, i_lo, i_hi, np_, p_ = _bounds(kernel, dims)
    for k in range(k_lo, k_hi):
        for j in range(j_lo, j_hi):
            base = k * np_ + j * p_
            for i in range(i_lo, i_hi):
                pos = base + i
                for rel in load_rel:
                    yield "L", int((pos + rel) * es)
                yield "S", int((pos + store_rel) * es)


def dump_trace(kernel: KernelIR, dims: GridDims, fileobj, line_bytes: int = 64) -> int:
    """Write the address stream as one `<L|S> <hex address>` line per event."""
    count = 0
    for kind, addr in address_stream(kernel, dims, line_bytes):
        fileobj.write(f"{kind} 0x{addr:x}\n")
        count += 1
    return count


def read_trace(fileobj):
    """Inverse of dump_trace: yield ("L"|"S", byte address) events."""
    for lineno, raw in enumerate(fileobj, 1):
        text = raw.strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2 or parts[0] not in ("L", "S"):
            raise StencilError(f"bad trace line {lineno}: {raw!r}")
        yield parts[0], int(parts[1], 16)


@njit(cache=True)
def _lru_touch(lev, line, is_store, caps, nxt, prv, in_cache, dirty, htc, counters):
    """One access against one full-stream LRU level."""
    if in_cache[lev, line]:
        counters[lev, _HIT] += 1
        if is_store:
            dirty[lev, line] = 1
        head = htc[lev, 0]
        if head != line:
            # unlink
            p = prv[lev, line]
            n = nxt[lev, line]
            nxt[lev, p] = n
            if n >= 0:
                prv[lev, n] = p
            else:
                htc[lev, 1] = p
            # push front
            prv[lev, line] = -1
            nxt[lev, line] = head
            prv[lev, head] = line
            htc[lev, 0] = line
        return
    counters[lev, _MISS] += 1
    counters[lev, _FETCH] += 1  # full-stream LRU always refetches on miss
    dirty[lev, line] = 1 if is_store else 0
    in_cache[lev, line] = 1
    head = htc[lev, 0]
    prv[lev, line] = -1
    nxt[lev, line] = head
    if head >= 0:
        prv[lev, head] = line
    else:
        htc[lev, 1] = line
    htc[lev, 0] = line
    htc[lev, 2] += 1
    if htc[lev, 2] > caps[lev]:
        tail = htc[lev, 1]
        p = prv[lev, tail]
        htc[lev, 1] = p
        if p >= 0:
            nxt[lev, p] = -1
        else:
            htc[lev, 0] = -1
        in_cache[lev, tail] = 0
        if dirty[lev, tail]:
            counters[lev, _EVICT] += 1
            dirty[lev, tail] = 0
        htc[lev, 2] -= 1


@njit(cache=True)
def _sweep_fullassoc(
    k_lo, k_hi, j_lo, j_hi, i_lo, i_hi, np_, p_, es, lg_line,
    load_rel, store_rel,
    caps, nxt, prv, in_cache, dirty, htc, counters,
):
    n_lev = caps.shape[0]
    n_loads = load_rel.shape[0]
    for k in range(k_lo, k_hi):
        for j in range(j_lo, j_hi):
            base = k * np_ + j * p_
            for i in range(i_lo, i_hi):
                pos = base + i
                for t in range(n_loads):
                    line = ((pos + load_rel[t]) * es) >> lg_line
                    for lev in range(n_lev):
                        counters[lev, _LOAD] += 1
                        _lru_touch(lev, line, 0, caps, nxt, prv, in_cache, dirty, htc, counters)
                line = ((pos + store_rel) * es) >> lg_line
                for lev in range(n_lev):
                    counters[lev, _STORE] += 1
                    _lru_touch(lev, line, 1, caps, nxt, prv, in_cache, dirty, htc, counters)


@njit(cache=True)
def _sa_probe(lev, line, promote, n_sets, n_ways, tags, stamps, clock):
    s = line % n_sets[lev]
    for w in range(n_ways[lev]):
        if tags[lev, s, w] == line:
            if promote:
                clock[0] += 1
                stamps[lev, s, w] = clock[0]
            return w
    return -1


@njit(cache=True)
def _sa_insert(lev, line, make_dirty, n_sets, n_ways, tags, stamps, dirty, clock):
    """Insert a line, returning (evicted line, evicted dirty) or (-1, 0)."""
    s = line % n_sets[lev]
    victim_w = 0
    oldest = stamps[lev, s, 0]
    for w in range(n_ways[lev]):
        if tags[lev, s, w] == -1:
            victim_w = w
            oldest = -1
            break
        if stamps[lev, s, w] < oldest:
            oldest = stamps[lev, s, w]
            victim_w = w
    evicted = tags[lev, s, victim_w]
    evicted_dirty = dirty[lev, s, victim_w]
    tags[lev, s, victim_w] = line
    clock[0] += 1
    stamps[lev, s, victim_w] = clock[0]
    dirty[lev, s, victim_w] = make_dirty
    return evicted, evicted_dirty


@njit(cache=True)
def _sa_cascade(lev_from, line, line_dirty, n_lev,
                n_sets, n_ways, victim, wback, tags, stamps, dirty, clock, counters):
    """Push an eviction from lev_from downwards until it settles."""
    cl = line
    cd = line_dirty
    src = lev_from
    while cl >= 0:
        nl = src + 1
        if nl >= n_lev:
            if cd and wback[src]:
                counters[src, _EVICT] += 1
            return
        if victim[nl]:
            # victim level receives every eviction, clean or dirty
            counters[src, _EVICT] += 1
            counters[nl, _STORE] += 1
            w = _sa_probe(nl, cl, True, n_sets, n_ways, tags, stamps, clock)
            if w >= 0:
                counters[nl, _HIT] += 1
                if cd:
                    dirty[nl, cl % n_sets[nl], w] = 1
                return
            counters[nl, _MISS] += 1
            cl, cd = _sa_insert(nl, cl, cd, n_sets, n_ways, tags, stamps, dirty, clock)
            src = nl
            continue
        if cd and wback[src]:
            counters[src, _EVICT] += 1
            counters[nl, _STORE] += 1
            w = _sa_probe(nl, cl, True, n_sets, n_ways, tags, stamps, clock)
            if w >= 0:
                counters[nl, _HIT] += 1
                dirty[nl, cl % n_sets[nl], w] = 1
                return
            # write-back to a line the next level dropped: allocate it there
            counters[nl, _MISS] += 1
            cl, cd = _sa_insert(nl, cl, 1, n_sets, n_ways, tags, stamps, dirty, clock)
            src = nl
            continue
        return


@njit(cache=True)
def _sa_access(line, is_store, n_lev,
               n_sets, n_ways, victim, walloc, wback,
               tags, stamps, dirty, clock, counters):
    counters[0, _STORE if is_store else _LOAD] += 1
    w = _sa_probe(0, line, True, n_sets, n_ways, tags, stamps, clock)
    if w >= 0:
        counters[0, _HIT] += 1
        if is_store:
            dirty[0, line % n_sets[0], w] = 1
        return
    counters[0, _MISS] += 1
    if not is_store or walloc[0]:
        counters[0, _FETCH] += 1  # demand fill requested from below

    if is_store and not walloc[0]:
        # no write-allocate: forward the store until some level holds the line
        for lev in range(1, n_lev):
            counters[lev, _STORE] += 1
            w = _sa_probe(lev, line, True, n_sets, n_ways, tags, stamps, clock)
            if w >= 0:
                counters[lev, _HIT] += 1
                dirty[lev, line % n_sets[lev], w] = 1
                return
            counters[lev, _MISS] += 1
        return

    # locate the closest level holding the line
    src = n_lev
    for lev in range(1, n_lev):
        counters[lev, _LOAD] += 1
        w = _sa_probe(lev, line, True, n_sets, n_ways, tags, stamps, clock)
        if w >= 0:
            counters[lev, _HIT] += 1
            src = lev
            if victim[lev]:
                tags[lev, line % n_sets[lev], w] = -1  # victim hit moves the line out
            break
        counters[lev, _MISS] += 1
        counters[lev, _FETCH] += 1

    # fill every level between the source and the core (victim levels fill
    # only through evictions)
    top = src if src < n_lev else n_lev
    for lev in range(top - 1, -1, -1):
        if victim[lev] and lev > 0:
            continue
        make_dirty = 1 if (is_store and lev == 0) else 0
        ev, evd = _sa_insert(lev, line, make_dirty, n_sets, n_ways, tags, stamps, dirty, clock)
        if ev >= 0:
            _sa_cascade(lev, ev, evd, n_lev, n_sets, n_ways, victim, wback,
                        tags, stamps, dirty, clock, counters)


@njit(cache=True)
def _sweep_setassoc(
    k_lo, k_hi, j_lo, j_hi, i_lo, i_hi, np_, p_, es, lg_line,
    load_rel, store_rel,
    n_sets, n_ways, victim, walloc, wback,
    tags, stamps, dirty, clock, counters,
):
    n_lev = n_sets.shape[0]
    n_loads = load_rel.shape[0]
    for k in range(k_lo, k_hi):
        for j in range(j_lo, j_hi):
            base = k * np_ + j * p_
            for i in range(i_lo, i_hi):
                pos = base + i
                for t in range(n_loads):
                    line = ((pos + load_rel[t]) * es) >> lg_line
                    _sa_access(line, 0, n_lev, n_sets, n_ways, victim, walloc, wback,
                               tags, stamps, dirty, clock, counters)
                line = ((pos + store_rel) * es) >> lg_line
                _sa_access(line, 1, n_lev, n_sets, n_ways, victim, walloc, wback,
                           tags, stamps, dirty, clock, counters)


@njit(cache=True)
def _trace_fullassoc(is_store, lines, caps, nxt, prv, in_cache, dirty, htc, counters):
    n_lev = caps.shape[0]
    for e in range(lines.shape[0]):
        for lev in range(n_lev):
            counters[lev, _STORE if is_store[e] else _LOAD] += 1
            _lru_touch(lev, lines[e], is_store[e], caps, nxt, prv, in_cache, dirty,
                       htc, counters)


@njit(cache=True)
def _trace_setassoc(is_store, lines, n_sets, n_ways, victim, walloc, wback,
                    tags, stamps, dirty, clock, counters):
    n_lev = n_sets.shape[0]
    for e in range(lines.shape[0]):
        _sa_access(lines[e], is_store[e], n_lev, n_sets, n_ways, victim, walloc,
                   wback, tags, stamps, dirty, clock, counters)


def simulate_trace(machine: MachineModel, events):
    """Run raw (kind, byte address) events through the hierarchy.

    Accepts the same event tuples address_stream yields (and read_trace
    parses); returns per-level counter dicts.  Meant for debugging and for
    validating the engines against hand-run replacement tables.
    """
    events = list(events)
    if not events:
        raise StencilError("empty event trace")
    levels = machine.cache_levels
    line_bytes = machine.line_bytes
    is_store = np.asarray([1 if kind == "S" else 0 for kind, _ in events], dtype=np.uint8)
    lines = np.asarray([addr // line_bytes for _, addr in events], dtype=np.int64)
    n_lines = int(lines.max()) + 1
    n_lev = len(levels)
    counters = np.zeros((n_lev, _N_COUNTERS), dtype=np.int64)
    if all(l.ways == FULL_ASSOCIATIVE for l in levels):
        caps = np.asarray([l.lines for l in levels], dtype=np.int64)
        nxt = np.full((n_lev, n_lines), -1, dtype=np.int32)
        prv = np.full((n_lev, n_lines), -1, dtype=np.int32)
        in_cache = np.zeros((n_lev, n_lines), dtype=np.uint8)
        dirty = np.zeros((n_lev, n_lines), dtype=np.uint8)
        htc = np.full((n_lev, 3), -1, dtype=np.int64)
        htc[:, 2] = 0
        _trace_fullassoc(is_store, lines, caps, nxt, prv, in_cache, dirty, htc, counters)
    else:
        n_sets = np.asarray([l.sets for l in levels], dtype=np.int64)
        n_ways = np.asarray([l.ways for l in levels], dtype=np.int64)
        victim = np.asarray([1 if l.victim else 0 for l in levels], dtype=np.uint8)
        walloc = np.asarray([1 if l.write_allocate else 0 for l in levels], dtype=np.uint8)
        wback = np.asarray([1 if l.write_back else 0 for l in levels], dtype=np.uint8)
        tags = np.full((n_lev, int(n_sets.max()), int(n_ways.max())), -1, dtype=np.int64)
        stamps = np.zeros_like(tags)
        dirty = np.zeros(tags.shape, dtype=np.uint8)
        clock = np.zeros(1, dtype=np.int64)
        _trace_setassoc(is_store, lines, n_sets, n_ways, victim, walloc, wback,
                        tags, stamps, dirty, clock, counters)
    return _stats_dicts(levels, counters)


def _stats_dicts(levels, counters):
    return tuple(
        {
            "name": levels[i].name,
            "HIT_count": int(counters[i, _HIT]),
            "MISS_count": int(counters[i, _MISS]),
            "EVICT_count": int(counters[i, _EVICT]),
            "LOAD_count": int(counters[i, _LOAD]),
            "STORE_count": int(counters[i, _STORE]),
            "FETCH_count": int(counters[i, _FETCH]),
        }
        for i in range(len(levels))
    )


def simulate_cache(
    kernel: KernelIR,
    machine: MachineModel,
    dims: GridDims,
    warmup_sweeps: int = 1,
    max_events: int = 500_000_000,
) -> SimulationResult:
    """Simulate warm-up plus one measured sweep and report traffic.

    Volumes are line-granular event counts times the line size, normalized
    to bytes per cacheline of work.  Refuses grids whose total access count
    exceeds ``max_events``.
    """
    check_dims(kernel, dims)
    line_bytes = machine.line_bytes
    es = dims.element_size
    levels = machine.cache_levels

    load_rel, store_rel, span_elems = _event_offsets(kernel, dims, line_bytes)
    interior = dims.interior_points(kernel.spec.radius)
    events = (warmup_sweeps + 1) * interior * (len(load_rel) + 1)
    if events > max_events:
        raise SimulationBudgetError(
            f"simulation of {dims.shape} needs {events} accesses, over the "
            f"budget of {max_events}; raise max_events or shrink the grid"
        )

    k_lo, k_hi, j_lo, j_hi, i_lo, i_hi, np_, p_ = _bounds(kernel, dims)
    lg_line = line_bytes.bit_length() - 1
    n_lines = (span_elems * es) // line_bytes + 1
    n_lev = len(levels)
    counters = np.zeros((n_lev, _N_COUNTERS), dtype=np.int64)
    args = (k_lo, k_hi, j_lo, j_hi, i_lo, i_hi, np_, p_, es, lg_line,
            load_rel, store_rel)

    fully = all(l.ways == FULL_ASSOCIATIVE for l in levels)
    if fully:
        if any(l.victim for l in levels):
            raise StencilError("victim levels need a set-associative hierarchy")
        caps = np.asarray([l.lines for l in levels], dtype=np.int64)
        nxt = np.full((n_lev, n_lines), -1, dtype=np.int32)
        prv = np.full((n_lev, n_lines), -1, dtype=np.int32)
        in_cache = np.zeros((n_lev, n_lines), dtype=np.uint8)
        dirty = np.zeros((n_lev, n_lines), dtype=np.uint8)
        htc = np.full((n_lev, 3), -1, dtype=np.int64)
        htc[:, 2] = 0
        engine = "fullassoc"
        for sweep in range(warmup_sweeps + 1):
            counters[:] = 0
            _sweep_fullassoc(*args, caps, nxt, prv, in_cache, dirty, htc, counters)
    else:
        if any(l.ways == FULL_ASSOCIATIVE for l in levels):
            raise StencilError(
                "mixed fully-associative and set-associative levels are not supported"
            )
        n_sets = np.asarray([l.sets for l in levels], dtype=np.int64)
        n_ways = np.asarray([l.ways for l in levels], dtype=np.int64)
        victim = np.asarray([1 if l.victim else 0 for l in levels], dtype=np.uint8)
        walloc = np.asarray([1 if l.write_allocate else 0 for l in levels], dtype=np.uint8)
        wback = np.asarray([1 if l.write_back else 0 for l in levels], dtype=np.uint8)
        max_sets = int(n_sets.max())
        max_ways = int(n_ways.max())
        tags = np.full((n_lev, max_sets, max_ways), -1, dtype=np.int64)
        stamps = np.zeros((n_lev, max_sets, max_ways), dtype=np.int64)
        dirty = np.zeros((n_lev, max_sets, max_ways), dtype=np.uint8)
        clock = np.zeros(1, dtype=np.int64)
        engine = "setassoc"
        for sweep in range(warmup_sweeps + 1):
            counters[:] = 0
            _sweep_setassoc(*args, n_sets, n_ways, victim, walloc, wback,
                            tags, stamps, dirty, clock, counters)

    work_cls = interior * es / line_bytes
    lups_per_cl = line_bytes // es
    traffic = TrafficPrediction(
        predictor="simulation",
        level_names=tuple(l.name for l in levels),
        load_bytes_per_cl=tuple(
            float(counters[i, _FETCH]) * line_bytes / work_cls for i in range(n_lev)
        ),
        store_bytes_per_cl=tuple(
            float(counters[i, _EVICT]) * line_bytes / work_cls for i in range(n_lev)
        ),
        reg_loads_per_cl=kernel.op_counts.loads * lups_per_cl,
        reg_stores_per_cl=kernel.op_counts.stores * lups_per_cl,
    )
    stats = _stats_dicts(levels, counters)
    return SimulationResult(
        traffic=traffic, stats=stats, engine=engine, work_cachelines=work_cls
    )
