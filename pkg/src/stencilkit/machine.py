"""Declarative machine descriptions.

Machine files are YAML with a closed schema and explicit units in every key
name (sizes in bytes, transfer rates in bytes per cycle, memory bandwidth in
bytes per second) so nothing is left to convention.  A loaded model is
immutable and carries everything the traffic predictors and performance
models need: clock, topology, cache hierarchy, port model, measured memory
bandwidth, and the overlap policy used to compose ECM terms.
"""

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

OVERLAP_POLICIES = ("intel_no_overlap", "zen_partial_overlap")
DUPLEX_MODES = ("full", "half")
FULL_ASSOCIATIVE = "full"


class MachineFileError(ValueError):
    """Machine description missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class CacheLevelSpec:
    name: str
    size_bytes: int
    ways: object  # associativity count, or "full"
    line_bytes: int
    write_allocate: bool
    write_back: bool
    victim: bool
    upstream_bandwidth_bytes_per_cycle: float
    duplex: str

    @property
    def lines(self) -> int:
        return self.size_bytes // self.line_bytes

    @property
    def sets(self) -> int:
        if self.ways == FULL_ASSOCIATIVE:
            return 1
        return self.size_bytes // (self.ways * self.line_bytes)


@dataclass(frozen=True)
class PortModel:
    vector_bits: int
    fma: bool
    fp_ports: int
    load_ports: int
    store_ports: int
    load_width_bits: int
    store_width_bits: int
    # some cores cannot overlap load and store issue; the register/L1 term
    # then adds the two port pressures instead of taking their maximum
    serialize_load_store: bool = False


@dataclass(frozen=True)
class MachineModel:
    name: str
    clock_hz: float
    cores_per_socket: int
    cores_per_numa_domain: int
    mem_bandwidth_domain: float
    mem_bandwidth_socket: float
    cache_levels: tuple
    ports: PortModel
    overlap_policy: str
    compiler: str = "cc"
    compiler_flags: str = "-O3 -std=c99 -ffp-contract=off"
    source_digest: str = ""

    @property
    def line_bytes(self) -> int:
        return self.cache_levels[0].line_bytes

    @property
    def numa_domains(self) -> int:
        return self.cores_per_socket // self.cores_per_numa_domain

    def level(self, name: str) -> CacheLevelSpec:
        for lvl in self.cache_levels:
            if lvl.name == name:
                return lvl
        raise MachineFileError(
            f"no cache level {name!r}; have {[l.name for l in self.cache_levels]}"
        )


def _require(mapping, key, kind, where):
    if key not in mapping:
        raise MachineFileError(f"missing mandatory field {where}.{key}")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise MachineFileError(f"field {where}.{key} must be a number")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise MachineFileError(f"field {where}.{key} must be an integer")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise MachineFileError(f"field {where}.{key} must be a boolean")
        return value
    if not isinstance(value, str):
        raise MachineFileError(f"field {where}.{key} must be a string")
    return value


def _reject_unknown(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise MachineFileError(f"unknown field(s) in {where}: {', '.join(unknown)}")


def _positive(value, key):
    if value <= 0:
        raise MachineFileError(f"field {key} must be positive, got {value}")
    return value


_CACHE_KEYS = (
    "name",
    "size_bytes",
    "ways",
    "line_bytes",
    "write_allocate",
    "write_back",
    "victim",
    "upstream_bandwidth_bytes_per_cycle",
    "duplex",
)


def _parse_cache_level(entry, index) -> CacheLevelSpec:
    where = f"caches[{index}]"
    if not isinstance(entry, dict):
        raise MachineFileError(f"{where} must be a mapping")
    _reject_unknown(entry, _CACHE_KEYS, where)
    name = _require(entry, "name", str, where)
    size = _positive(_require(entry, "size_bytes", int, where), f"{where}.size_bytes")
    line = _positive(_require(entry, "line_bytes", int, where), f"{where}.line_bytes")
    if line & (line - 1):
        raise MachineFileError(f"{where}.line_bytes must be a power of two, got {line}")
    ways = entry.get("ways")
    if ways != FULL_ASSOCIATIVE:
        ways = _positive(_require(entry, "ways", int, where), f"{where}.ways")
        if size % (ways * line):
            raise MachineFileError(
                f"{where}.size_bytes ({size}) not divisible by ways*line_bytes "
                f"({ways}*{line})"
            )
    elif size % line:
        raise MachineFileError(f"{where}.size_bytes not divisible by line_bytes")
    bw = _positive(
        _require(entry, "upstream_bandwidth_bytes_per_cycle", float, where),
        f"{where}.upstream_bandwidth_bytes_per_cycle",
    )
    duplex = _require(entry, "duplex", str, where)
    if duplex not in DUPLEX_MODES:
        raise MachineFileError(f"{where}.duplex must be one of {DUPLEX_MODES}")
    return CacheLevelSpec(
        name=name,
        size_bytes=size,
        ways=ways,
        line_bytes=line,
        write_allocate=_require(entry, "write_allocate", bool, where),
        write_back=_require(entry, "write_back", bool, where),
        victim=_require(entry, "victim", bool, where),
        upstream_bandwidth_bytes_per_cycle=bw,
        duplex=duplex,
    )


_TOP_KEYS = (
    "name",
    "clock_hz",
    "cores_per_socket",
    "cores_per_numa_domain",
    "overlap_policy",
    "memory",
    "ports",
    "caches",
    "compiler",
)
_MEMORY_KEYS = (
    "bandwidth_bytes_per_second_numa_domain",
    "bandwidth_bytes_per_second_socket",
)
_PORT_KEYS = (
    "vector_bits",
    "fma",
    "fp_ports",
    "load_ports",
    "store_ports",
    "load_width_bits",
    "store_width_bits",
    "serialize_load_store",
)
_COMPILER_KEYS = ("command", "flags")


def from_dict(data: dict, source_digest: str = "") -> MachineModel:
    """Validate a parsed machine description (closed schema) into a model."""
    if not isinstance(data, dict):
        raise MachineFileError("machine file must be a mapping at top level")
    _reject_unknown(data, _TOP_KEYS, "machine")

    name = _require(data, "name", str, "machine")
    clock = _positive(_require(data, "clock_hz", float, "machine"), "clock_hz")
    cores = _positive(_require(data, "cores_per_socket", int, "machine"), "cores_per_socket")
    cores_domain = _positive(
        _require(data, "cores_per_numa_domain", int, "machine"), "cores_per_numa_domain"
    )
    if cores % cores_domain:
        raise MachineFileError(
            f"cores_per_numa_domain ({cores_domain}) must divide "
            f"cores_per_socket ({cores})"
        )
    policy = _require(data, "overlap_policy", str, "machine")
    if policy not in OVERLAP_POLICIES:
        raise MachineFileError(f"overlap_policy must be one of {OVERLAP_POLICIES}")

    memory = data.get("memory")
    if not isinstance(memory, dict):
        raise MachineFileError("missing mandatory field machine.memory")
    _reject_unknown(memory, _MEMORY_KEYS, "memory")
    bw_domain = _positive(
        _require(memory, "bandwidth_bytes_per_second_numa_domain", float, "memory"),
        "memory.bandwidth_bytes_per_second_numa_domain",
    )
    bw_socket = _positive(
        _require(memory, "bandwidth_bytes_per_second_socket", float, "memory"),
        "memory.bandwidth_bytes_per_second_socket",
    )
    if bw_socket < bw_domain:
        raise MachineFileError("socket memory bandwidth below NUMA-domain bandwidth")

    ports = data.get("ports")
    if not isinstance(ports, dict):
        raise MachineFileError("missing mandatory field machine.ports")
    _reject_unknown(ports, _PORT_KEYS, "ports")
    port_model = PortModel(
        vector_bits=_positive(_require(ports, "vector_bits", int, "ports"), "ports.vector_bits"),
        fma=_require(ports, "fma", bool, "ports"),
        fp_ports=_require(ports, "fp_ports", int, "ports"),
        load_ports=_positive(_require(ports, "load_ports", int, "ports"), "ports.load_ports"),
        store_ports=_positive(_require(ports, "store_ports", int, "ports"), "ports.store_ports"),
        load_width_bits=_positive(
            _require(ports, "load_width_bits", int, "ports"), "ports.load_width_bits"
        ),
        store_width_bits=_positive(
            _require(ports, "store_width_bits", int, "ports"), "ports.store_width_bits"
        ),
        serialize_load_store=(
            _require(ports, "serialize_load_store", bool, "ports")
            if "serialize_load_store" in ports
            else False
        ),
    )
    if port_model.fp_ports < 0:
        raise MachineFileError("ports.fp_ports must be >= 0")

    caches = data.get("caches")
    if not isinstance(caches, list) or not caches:
        raise MachineFileError("machine.caches must be a non-empty list")
    levels = tuple(_parse_cache_level(entry, i) for i, entry in enumerate(caches))
    for shallow, deep in zip(levels, levels[1:]):
        if deep.size_bytes <= shallow.size_bytes:
            raise MachineFileError(
                f"inconsistent hierarchy: {deep.name} size ({deep.size_bytes}) "
                f"not larger than {shallow.name} ({shallow.size_bytes})"
            )
        if deep.line_bytes != shallow.line_bytes:
            raise MachineFileError("all cache levels must share one line size")

    compiler = data.get("compiler", {})
    if not isinstance(compiler, dict):
        raise MachineFileError("machine.compiler must be a mapping")
    _reject_unknown(compiler, _COMPILER_KEYS, "compiler")

    return MachineModel(
        name=name,
        clock_hz=clock,
        cores_per_socket=cores,
        cores_per_numa_domain=cores_domain,
        mem_bandwidth_domain=bw_domain,
        mem_bandwidth_socket=bw_socket,
        cache_levels=levels,
        ports=port_model,
        overlap_policy=policy,
        compiler=compiler.get("command", "cc"),
        compiler_flags=compiler.get("flags", "-O3 -std=c99 -ffp-contract=off"),
        source_digest=source_digest,
    )


def serialize(machine: MachineModel) -> dict:
    """Inverse of from_dict; load_machine(serialize(m)) reproduces m."""
    return {
        "name": machine.name,
        "clock_hz": machine.clock_hz,
        "cores_per_socket": machine.cores_per_socket,
        "cores_per_numa_domain": machine.cores_per_numa_domain,
        "overlap_policy": machine.overlap_policy,
        "memory": {
            "bandwidth_bytes_per_second_numa_domain": machine.mem_bandwidth_domain,
            "bandwidth_bytes_per_second_socket": machine.mem_bandwidth_socket,
        },
        "ports": {
            "vector_bits": machine.ports.vector_bits,
            "fma": machine.ports.fma,
            "fp_ports": machine.ports.fp_ports,
            "load_ports": machine.ports.load_ports,
            "store_ports": machine.ports.store_ports,
            "load_width_bits": machine.ports.load_width_bits,
            "store_width_bits": machine.ports.store_width_bits,
            "serialize_load_store": machine.ports.serialize_load_store,
        },
        "caches": [
            {
                "name": lvl.name,
                "size_bytes": lvl.size_bytes,
                "ways": lvl.ways,
                "line_bytes": lvl.line_bytes,
                "write_allocate": lvl.write_allocate,
                "write_back": lvl.write_back,
                "victim": lvl.victim,
                "upstream_bandwidth_bytes_per_cycle": lvl.upstream_bandwidth_bytes_per_cycle,
                "duplex": lvl.duplex,
            }
            for lvl in machine.cache_levels
        ],
        "compiler": {"command": machine.compiler, "flags": machine.compiler_flags},
    }


def load_machine(path) -> MachineModel:
    """Load and validate a machine file; rejects any schema deviation."""
    path = Path(path)
    if not path.is_file():
        raise MachineFileError(f"machine file not found: {path}")
    raw = path.read_bytes()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise MachineFileError(f"cannot parse {path}: {exc}") from None
    return from_dict(data, source_digest=hashlib.sha256(raw).hexdigest())


def save_machine(machine: MachineModel, path) -> None:
    Path(path).write_text(yaml.safe_dump(serialize(machine), sort_keys=False))


def builtin_machine_path(name: str):
    """Path of a machine file shipped with the package (hsw, bdw, skx, zen, ...)."""
    ref = resources.files(__package__).joinpath(f"data/machines/{name}.yml")
    with resources.as_file(ref) as concrete:
        return Path(concrete)


def list_builtin_machines():
    ref = resources.files(__package__).joinpath("data/machines")
    return sorted(p.name.removesuffix(".yml") for p in ref.iterdir() if p.name.endswith(".yml"))


def effective_size(level: CacheLevelSpec, safety: float = 0.5) -> float:
    """Usable fraction of a cache for reuse-distance budgeting."""
    if not 0.0 < safety <= 1.0:
        raise MachineFileError(f"safety must be in (0, 1], got {safety}")
    return level.size_bytes * safety


def cycles_per_cl(level: CacheLevelSpec, load_bytes: float, store_bytes: float) -> float:
    """Transfer cycles for the given volumes over this level's upstream path."""
    if load_bytes < 0 or store_bytes < 0:
        raise MachineFileError("transfer volumes must be >= 0")
    if level.duplex == "full":
        volume = max(load_bytes, store_bytes)
    else:
        volume = load_bytes + store_bytes
    return volume / level.upstream_bandwidth_bytes_per_cycle


def mem_cycles_per_cl(machine: MachineModel, total_bytes: float) -> float:
    """Transfer cycles for main-memory volume at the measured NUMA-domain bandwidth."""
    if total_bytes < 0:
        raise MachineFileError("transfer volume must be >= 0")
    bytes_per_cycle = machine.mem_bandwidth_domain / machine.clock_hz
    return total_bytes / bytes_per_cycle
