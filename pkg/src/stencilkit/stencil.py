"""Stencil classification, kernel IR, and operation/access counting.

A stencil family is described by six parameters (dimensions, radius, kind,
coefficient weighting, coefficient storage, element type).  ``build_kernel``
expands a :class:`StencilSpec` into a :class:`KernelIR`: the ordered list of
array accesses with relative offsets and coefficient bindings that every
other part of the toolkit (code emission, interpretation, access counting,
traffic prediction) derives from.
"""

from dataclasses import dataclass

KINDS = ("star", "box")
WEIGHTINGS = ("homogeneous", "heterogeneous", "isotropic", "point-symmetric")
STORAGES = ("constant", "variable")
ELEMENT_SIZES = {"float32": 4, "float64": 8}

READ_ARRAY = "a"
WRITE_ARRAY = "b"
WEIGHT_ARRAY = "W"


class StencilError(ValueError):
    """Invalid stencil specification or incompatible grid."""


@dataclass(frozen=True)
class StencilSpec:
    """The six classification parameters defining a stencil family."""

    dimensions: int
    radius: int
    kind: str
    weighting: str
    coefficient_storage: str
    element_type: str

    def __post_init__(self):
        if self.dimensions not in (2, 3):
            raise StencilError(f"dimensions must be 2 or 3, got {self.dimensions}")
        if self.radius < 1:
            raise StencilError(f"radius must be >= 1, got {self.radius}")
        if self.kind not in KINDS:
            raise StencilError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.weighting not in WEIGHTINGS:
            raise StencilError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )
        if self.coefficient_storage not in STORAGES:
            raise StencilError(
                f"coefficient_storage must be one of {STORAGES}, "
                f"got {self.coefficient_storage!r}"
            )
        if self.element_type not in ELEMENT_SIZES:
            raise StencilError(
                f"element_type must be one of {tuple(ELEMENT_SIZES)}, "
                f"got {self.element_type!r}"
            )

    @property
    def element_size(self) -> int:
        return ELEMENT_SIZES[self.element_type]

    @property
    def point_count(self) -> int:
        """2*d*r + 1 for star stencils, (2*r+1)**d for box stencils."""
        if self.kind == "star":
            return 2 * self.dimensions * self.radius + 1
        return (2 * self.radius + 1) ** self.dimensions

    def label(self) -> str:
        return "{}D-{}r-{}-{}-{}-{}".format(
            self.dimensions,
            self.radius,
            self.weighting,
            self.kind,
            self.coefficient_storage,
            self.element_type,
        )


@dataclass(frozen=True)
class GridDims:
    """Grid extents per axis, outer to inner (M only for 3D grids)."""

    N: int
    P: int
    M: int | None = None
    element_size: int = 8

    def __post_init__(self):
        for name, value in (("N", self.N), ("P", self.P)):
            if value < 2:
                raise StencilError(f"axis {name} must be >= 2, got {value}")
        if self.M is not None and self.M < 2:
            raise StencilError(f"axis M must be >= 2, got {self.M}")
        if self.element_size not in (4, 8):
            raise StencilError(f"element_size must be 4 or 8, got {self.element_size}")

    @classmethod
    def cubic(cls, n: int, dimensions: int = 3, element_size: int = 8) -> "GridDims":
        if dimensions == 3:
            return cls(M=n, N=n, P=n, element_size=element_size)
        return cls(N=n, P=n, element_size=element_size)

    @property
    def dimensions(self) -> int:
        return 2 if self.M is None else 3

    @property
    def shape(self) -> tuple:
        return (self.N, self.P) if self.M is None else (self.M, self.N, self.P)

    @property
    def strides(self) -> tuple:
        """Linear strides in elements, outer to inner."""
        if self.M is None:
            return (self.P, 1)
        return (self.N * self.P, self.P, 1)

    @property
    def total_elements(self) -> int:
        n = 1
        for axis in self.shape:
            n *= axis
        return n

    def interior_points(self, radius: int) -> int:
        n = 1
        for axis in self.shape:
            if axis < 2 * radius + 2:
                raise StencilError(
                    f"axis of {axis} leaves no interior for radius {radius}"
                )
            n *= axis - 2 * radius
        return n


@dataclass(frozen=True)
class OffsetTerm:
    """One array read with a relative offset and its coefficient binding.

    ``coefficient`` indexes KernelIR.coefficients (a scalar name for constant
    storage, a weight-grid component otherwise).
    """

    array: str
    offset: tuple
    coefficient: int


@dataclass(frozen=True)
class OpCounts:
    """Per-iteration floating point and access counts."""

    adds: int
    muls: int
    loads: int
    stores: int
    distinct_streams: int


@dataclass(frozen=True)
class KernelIR:
    spec: StencilSpec
    read_array: str
    write_array: str
    terms: tuple
    coefficients: tuple
    op_counts: OpCounts

    @property
    def weight_array(self) -> str | None:
        if self.spec.coefficient_storage == "variable":
            return WEIGHT_ARRAY
        return None

    @property
    def weight_components(self) -> int:
        return len(self.coefficients) if self.weight_array else 0

    def coefficient_name(self, index: int) -> str:
        return self.coefficients[index]


def _offsets(spec: StencilSpec):
    """All relative offsets, center first, then ascending inner-axis-major."""
    d, r = spec.dimensions, spec.radius
    center = (0,) * d
    points = []
    if spec.kind == "star":
        for axis in range(d):
            for step in range(-r, r + 1):
                if step == 0:
                    continue
                off = [0] * d
                off[axis] = step
                points.append(tuple(off))
    else:
        ranges = [range(-r, r + 1)] * d
        stack = [()]
        for axis_range in ranges:
            stack = [prefix + (step,) for prefix in stack for step in axis_range]
        points = [p for p in stack if p != center]
    # Inner-axis-major ascending order: sort by the reversed offset vector so
    # the unit-stride axis varies slowest in the emitted coefficient labels.
    points.sort(key=lambda off: tuple(reversed(off)))
    return [center] + points


def _coefficient_classes(spec: StencilSpec, offsets):
    """Map each offset to a coefficient class per the weighting mode."""
    if spec.weighting == "homogeneous":
        return [0] * len(offsets), 1

    if spec.weighting == "heterogeneous":
        return list(range(len(offsets))), len(offsets)

    classes = []
    seen = {}
    if spec.weighting == "isotropic":
        # Same squared Euclidean distance from the center, same coefficient.
        keyfn = lambda off: sum(c * c for c in off)
    else:  # point-symmetric: {o, -o} share one coefficient
        keyfn = lambda off: max(off, tuple(-c for c in off))
    for off in offsets:
        key = keyfn(off)
        if key not in seen:
            seen[key] = len(seen)
        classes.append(seen[key])
    return classes, len(seen)


def build_kernel(spec: StencilSpec) -> KernelIR:
    """Expand a stencil specification into its kernel IR.

    Terms are ordered deterministically (center first, then ascending with
    the inner axis most significant); coefficients are numbered by first
    appearance in that order, so c0 always binds the center point.
    """
    offsets = _offsets(spec)
    classes, n_coeff = _coefficient_classes(spec, offsets)

    if spec.coefficient_storage == "constant":
        names = tuple(f"c{i}" for i in range(n_coeff))
    else:
        names = tuple(f"{WEIGHT_ARRAY}[{i}]" for i in range(n_coeff))

    terms = tuple(
        OffsetTerm(array=READ_ARRAY, offset=off, coefficient=cls)
        for off, cls in zip(offsets, classes)
    )

    kernel = KernelIR(
        spec=spec,
        read_array=READ_ARRAY,
        write_array=WRITE_ARRAY,
        terms=terms,
        coefficients=names,
        op_counts=_count_ops(spec, terms, n_coeff),
    )
    assert len(terms) == spec.point_count
    return kernel


def _count_ops(spec: StencilSpec, terms, n_coeff: int) -> OpCounts:
    n = len(terms)
    adds = n - 1
    muls = 1 if spec.weighting == "homogeneous" else n
    loads = n
    if spec.coefficient_storage == "variable":
        # The homogeneous form factors its single weight out of the sum.
        loads += 1 if spec.weighting == "homogeneous" else n
    read_streams = len({t.offset[:-1] for t in terms})
    weight_streams = n_coeff if spec.coefficient_storage == "variable" else 0
    return OpCounts(
        adds=adds,
        muls=muls,
        loads=loads,
        stores=1,
        distinct_streams=read_streams + weight_streams + 1,
    )


def count_ops(kernel: KernelIR) -> OpCounts:
    """Per-iteration op counts (cached on the kernel at build time)."""
    return kernel.op_counts


def linearized_offsets(kernel: KernelIR, dims: GridDims) -> dict:
    """Per-stream linearized element offsets, sorted descending.

    The read and write arrays appear under their own names.  Weight-grid
    components are independent streams with no reuse between them, so each
    appears as its own singleton entry (``W[0]``, ``W[1]``, ...).
    """
    if dims.dimensions != kernel.spec.dimensions:
        raise StencilError(
            f"grid is {dims.dimensions}D but kernel is {kernel.spec.dimensions}D"
        )
    dims.interior_points(kernel.spec.radius)  # axes must leave an interior
    strides = dims.strides
    linear = sorted(
        (sum(o * s for o, s in zip(t.offset, strides)) for t in kernel.terms),
        reverse=True,
    )
    if len(set(linear)) != len(linear):
        raise StencilError("duplicate linearized offsets; grid axes too small")
    streams = {kernel.read_array: tuple(linear), kernel.write_array: (0,)}
    for i in range(kernel.weight_components):
        streams[f"{WEIGHT_ARRAY}[{i}]"] = (0,)
    return streams
