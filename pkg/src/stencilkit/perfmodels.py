"""ECM and Roofline performance models.

The in-core part is an analytic port-count model assuming ideal
vectorization and no loop-carried dependencies (a deliberate, transparent
replacement for binary analysis tools, which are known to misattribute
cycles on exactly these kernels; see README limitations).  Transfer terms
come from a traffic prediction and the machine's per-level transfer paths.
Composition follows the machine's overlap policy: no overlap between any
terms on Intel cores, or compute/register/L1L2 overlapping with serialized
L2L3+L3MEM on Zen cores.
"""

import math
from dataclasses import dataclass

from .layercond import TrafficPrediction
from .machine import MachineModel, cycles_per_cl, mem_cycles_per_cl
from .stencil import KernelIR, StencilError

TERM_NAMES = ("T_comp", "T_RegL1", "T_L1L2", "T_L2L3", "T_L3MEM")


@dataclass(frozen=True)
class ECMPrediction:
    """ECM terms and their composed total, in cycles per cacheline.

    A term is None when it cannot be computed (phenomenological records with
    missing counters); the composed total is then a lower bound and
    ``complete`` is False.
    """

    T_comp: float | None
    T_RegL1: float | None
    T_L1L2: float | None
    T_L2L3: float | None
    T_L3MEM: float | None
    T_total: float
    policy: str
    complete: bool = True

    def terms(self) -> dict:
        return {name: getattr(self, name) for name in TERM_NAMES}


@dataclass(frozen=True)
class RooflinePrediction:
    bottleneck: str
    cycles_per_cl: float
    performance: float  # lattice updates per second


@dataclass(frozen=True)
class ScalingPrediction:
    """Predicted multi-core scaling under compact (domain-filling) pinning."""

    rows: tuple  # (cores, cycles_per_cl, performance)
    saturation_cores: int | None


@dataclass(frozen=True)
class MeasurementRecord:
    """Measured per-CL volumes and per-port operation counts.

    Missing quantities are explicitly None (not zero): some machines cannot
    expose them, and the models must render gaps rather than invent zeros.
    """

    l1l2_load_bytes_per_cl: float | None = None
    l1l2_store_bytes_per_cl: float | None = None
    l2l3_load_bytes_per_cl: float | None = None
    l2l3_store_bytes_per_cl: float | None = None
    l3mem_load_bytes_per_cl: float | None = None
    l3mem_store_bytes_per_cl: float | None = None
    fp_instr_per_cl: float | None = None
    load_instr_per_cl: float | None = None
    store_instr_per_cl: float | None = None
    runtime_cycles_per_cl: float | None = None
    provenance: str = ""

    FIELDS = (
        "l1l2_load_bytes_per_cl",
        "l1l2_store_bytes_per_cl",
        "l2l3_load_bytes_per_cl",
        "l2l3_store_bytes_per_cl",
        "l3mem_load_bytes_per_cl",
        "l3mem_store_bytes_per_cl",
        "fp_instr_per_cl",
        "load_instr_per_cl",
        "store_instr_per_cl",
        "runtime_cycles_per_cl",
    )

    def is_empty(self) -> bool:
        return all(getattr(self, f) is None for f in self.FIELDS)


def incore(kernel: KernelIR, machine: MachineModel):
    """(T_comp, T_RegL1) from the port model, in cycles per cacheline.

    Multiply-accumulate terms fuse one mul with one add when the machine has
    FMA units; the homogeneous sum-then-scale form has nothing to fuse.
    """
    ports = machine.ports
    spec = kernel.spec
    element_bits = spec.element_size * 8
    if ports.vector_bits < element_bits:
        raise StencilError(
            f"vector width {ports.vector_bits} below element width {element_bits}"
        )
    lanes = ports.vector_bits // element_bits
    elements_per_cl = machine.line_bytes // spec.element_size
    vec_iters_per_cl = max(1, math.ceil(elements_per_cl / lanes))

    ops = kernel.op_counts
    fusable = 0
    if ports.fma and spec.weighting != "homogeneous":
        fusable = min(ops.adds, ops.muls)
    fp_instr = ops.adds + ops.muls - fusable
    if fp_instr and ports.fp_ports < 1:
        raise StencilError("kernel has FP work but the machine has no FP ports")
    t_comp = vec_iters_per_cl * math.ceil(fp_instr / ports.fp_ports) if fp_instr else 0.0

    load_instr = ops.loads * math.ceil(ports.vector_bits / ports.load_width_bits)
    store_instr = ops.stores * math.ceil(ports.vector_bits / ports.store_width_bits)
    load_cycles = math.ceil(load_instr / ports.load_ports)
    store_cycles = math.ceil(store_instr / ports.store_ports)
    if ports.serialize_load_store:
        t_reg = vec_iters_per_cl * (load_cycles + store_cycles)
    else:
        t_reg = vec_iters_per_cl * max(load_cycles, store_cycles)
    return float(t_comp), float(t_reg)


def transfer_terms(machine: MachineModel, traffic: TrafficPrediction):
    """(T_L1L2, T_L2L3, T_L3MEM) for a three-level hierarchy.

    The transition between level l and l+1 is clocked by level l+1's
    upstream path; the memory transition uses the measured bandwidth.
    """
    if len(machine.cache_levels) != 3:
        raise StencilError("named ECM terms need a three-level cache hierarchy")
    loads = traffic.load_bytes_per_cl
    stores = traffic.store_bytes_per_cl
    t_l1l2 = cycles_per_cl(machine.cache_levels[1], loads[0], stores[0])
    t_l2l3 = cycles_per_cl(machine.cache_levels[2], loads[1], stores[1])
    t_l3mem = mem_cycles_per_cl(machine, loads[2] + stores[2])
    return t_l1l2, t_l2l3, t_l3mem


def compose_ecm(terms, policy: str) -> ECMPrediction:
    """Compose (T_comp, T_RegL1, T_L1L2, T_L2L3, T_L3MEM) under a policy.

    intel_no_overlap:    max(T_comp, T_RegL1 + T_L1L2 + T_L2L3 + T_L3MEM)
    zen_partial_overlap: max(T_comp, T_RegL1, T_L1L2, T_L2L3 + T_L3MEM)
    None terms are treated as absent; the total is then a lower bound.
    """
    t_comp, t_reg, t_l1l2, t_l2l3, t_l3mem = terms
    present = [t for t in terms if t is not None]
    if not present:
        raise StencilError("cannot compose an ECM prediction from no terms")
    if any(t < 0 for t in present):
        raise StencilError("ECM terms must be >= 0")

    def val(term):
        return 0.0 if term is None else term

    if policy == "intel_no_overlap":
        total = max(val(t_comp), val(t_reg) + val(t_l1l2) + val(t_l2l3) + val(t_l3mem))
    elif policy == "zen_partial_overlap":
        total = max(val(t_comp), val(t_reg), val(t_l1l2), val(t_l2l3) + val(t_l3mem))
    else:
        raise StencilError(f"unknown overlap policy {policy!r}")
    return ECMPrediction(
        T_comp=t_comp,
        T_RegL1=t_reg,
        T_L1L2=t_l1l2,
        T_L2L3=t_l2l3,
        T_L3MEM=t_l3mem,
        T_total=float(total),
        policy=policy,
        complete=all(t is not None for t in terms),
    )


def ecm_model(kernel: KernelIR, machine: MachineModel, traffic: TrafficPrediction) -> ECMPrediction:
    """Full analytic ECM for one kernel, machine, and traffic prediction."""
    t_comp, t_reg = incore(kernel, machine)
    return compose_ecm((t_comp, t_reg) + transfer_terms(machine, traffic), machine.overlap_policy)


def roofline(traffic: TrafficPrediction, machine: MachineModel, t_comp: float,
             element_size: int = 8) -> RooflinePrediction:
    """Slowest of the compute ceiling and each transfer path; ties go deep."""
    t_l1l2, t_l2l3, t_l3mem = transfer_terms(machine, traffic)
    candidates = [("compute", t_comp), ("L1L2", t_l1l2), ("L2L3", t_l2l3), ("MEM", t_l3mem)]
    bottleneck, cycles = candidates[0]
    for name, value in candidates[1:]:
        if value >= cycles:
            bottleneck, cycles = name, value
    return RooflinePrediction(
        bottleneck=bottleneck,
        cycles_per_cl=cycles,
        performance=convert(cycles, machine, element_size) if cycles > 0 else float("inf"),
    )


def convert(cycles_per_cl_value: float, machine: MachineModel, element_size: int = 8) -> float:
    """Inverse throughput (cy/CL) to performance (lattice updates per second)."""
    if cycles_per_cl_value <= 0:
        raise StencilError("cycles per cacheline must be positive to convert")
    lups_per_cl = machine.line_bytes / element_size
    return machine.clock_hz * lups_per_cl / cycles_per_cl_value


def invert(performance: float, machine: MachineModel, element_size: int = 8) -> float:
    """Performance (lattice updates per second) to inverse throughput (cy/CL)."""
    if performance <= 0:
        raise StencilError("performance must be positive to convert")
    lups_per_cl = machine.line_bytes / element_size
    return machine.clock_hz * lups_per_cl / performance


def scale_cores(
    ecm: ECMPrediction,
    machine: MachineModel,
    max_cores: int,
    element_size: int = 8,
) -> ScalingPrediction:
    """Linear-until-saturation scaling within a NUMA domain, compact pinning.

    Performance grows linearly with cores until the domain's memory term
    saturates (n_sat = ceil(T_total / T_L3MEM)); each further domain adds
    its bandwidth on top.  A kernel with no memory term never saturates.
    """
    if max_cores < 1 or max_cores > machine.cores_per_socket:
        raise StencilError(
            f"core count must be in 1..{machine.cores_per_socket}, got {max_cores}"
        )
    if ecm.T_total <= 0:
        raise StencilError("scaling needs a positive single-core prediction")
    p1 = convert(ecm.T_total, machine, element_size)
    t_mem = ecm.T_L3MEM or 0.0
    p_sat = convert(t_mem, machine, element_size) if t_mem > 0 else None
    per_domain = machine.cores_per_numa_domain

    rows = []
    for n in range(1, max_cores + 1):
        perf = 0.0
        remaining = n
        while remaining > 0:
            in_domain = min(remaining, per_domain)
            domain_perf = in_domain * p1
            if p_sat is not None:
                domain_perf = min(domain_perf, p_sat)
            perf += domain_perf
            remaining -= in_domain
        rows.append((n, invert(perf, machine, element_size), perf))

    saturation = math.ceil(ecm.T_total / t_mem) if t_mem > 0 else None
    return ScalingPrediction(rows=tuple(rows), saturation_cores=saturation)


def phenomenological_ecm(record: MeasurementRecord, machine: MachineModel) -> ECMPrediction:
    """ECM terms recomputed from measured volumes and port counts.

    Uses the same transfer formulas as the analytic model; absent fields
    yield absent terms (rendered as gaps) and a lower-bound total.
    """
    if record.is_empty():
        raise StencilError("measurement record carries no usable fields")
    if len(machine.cache_levels) != 3:
        raise StencilError("named ECM terms need a three-level cache hierarchy")

    ports = machine.ports
    t_comp = None
    if record.fp_instr_per_cl is not None:
        if ports.fp_ports < 1:
            raise StencilError("machine has no FP ports to attribute FP counts to")
        t_comp = record.fp_instr_per_cl / ports.fp_ports
    t_reg = None
    if record.load_instr_per_cl is not None or record.store_instr_per_cl is not None:
        load_part = (record.load_instr_per_cl or 0.0) / ports.load_ports
        store_part = (record.store_instr_per_cl or 0.0) / ports.store_ports
        t_reg = max(load_part, store_part)

    def volume_term(load, store, level_index):
        if load is None and store is None:
            return None
        if level_index == 3:
            return mem_cycles_per_cl(machine, (load or 0.0) + (store or 0.0))
        return cycles_per_cl(machine.cache_levels[level_index], load or 0.0, store or 0.0)

    t_l1l2 = volume_term(record.l1l2_load_bytes_per_cl, record.l1l2_store_bytes_per_cl, 1)
    t_l2l3 = volume_term(record.l2l3_load_bytes_per_cl, record.l2l3_store_bytes_per_cl, 2)
    t_l3mem = volume_term(record.l3mem_load_bytes_per_cl, record.l3mem_store_bytes_per_cl, 3)
    return compose_ecm((t_comp, t_reg, t_l1l2, t_l2l3, t_l3mem), machine.overlap_policy)
