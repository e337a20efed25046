"""C benchmark skeleton for generated stencil kernels.

The skeleton is a single C99 translation unit with named placeholders.  A
code generator fills every placeholder exactly once via :func:`render`; the
resulting source compiles stand-alone (``cc -std=c99 -O3 bench.c -lm``) and
prints one ``key=value`` line per metric on stdout (see ``OUTPUT_KEYS``).

Contract highlights:

* arrays are heap allocated, cacheline aligned, and first-touch initialized
  in the same slab order the sweep uses;
* the timing loop repeats full sweeps (doubling batches) until the measured
  wall time reaches the configured minimum, and reports per-sweep time;
* the checksum is taken after exactly one sweep from the initial state and
  is a pure function of (grid size, seed), so an independent interpreter can
  reproduce it bit for bit;
* instrumentation markers are rendered only on request and call no-op stubs
  unless an external marker library is linked (``-DBENCH_MARKER_LIB``).
"""

from importlib import resources
from string import Template

PLACEHOLDERS = (
    "KERNEL_BODY",
    "DECLARATIONS",
    "DIMS",
    "DTYPE",
    "BLOCK_LOOPS",
    "MARKER_BEGIN",
    "MARKER_END",
    "OMP_PRAGMA",
)

#: stdout contract: one ``key=value`` line per entry, exit code 0 on success.
OUTPUT_KEYS = ("sweeps", "wall_s", "cycles_per_cl", "mlups", "checksum")

#: Salts used by the in-harness init_value() hash, by array role.
GRID_SALT = 0
WEIGHT_SALT = 1


class RenderError(ValueError):
    """A placeholder is missing, unknown, or not used exactly once."""


class OutputFormatError(ValueError):
    """Benchmark stdout did not match the key=value contract."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


def default_template() -> str:
    """Return the benchmark skeleton shipped with this package."""
    ref = resources.files(__package__).joinpath("templates/benchmark.c.in")
    return ref.read_text(encoding="utf-8")


def render(substitutions: dict, template: str | None = None) -> str:
    """Fill the skeleton's placeholders and return the C translation unit.

    Every name in ``PLACEHOLDERS`` must be provided and must occur exactly
    once in the template; anything else is a RenderError.
    """
    text = default_template() if template is None else template
    provided = set(substitutions)
    expected = set(PLACEHOLDERS)
    if provided != expected:
        missing = sorted(expected - provided)
        unknown = sorted(provided - expected)
        parts = []
        if missing:
            parts.append(f"missing placeholders: {', '.join(missing)}")
        if unknown:
            parts.append(f"unknown placeholders: {', '.join(unknown)}")
        raise RenderError("; ".join(parts))
    for name in PLACEHOLDERS:
        count = text.count("${%s}" % name)
        if count != 1:
            raise RenderError(
                f"placeholder {name} occurs {count} times in template, expected exactly once"
            )
    return Template(text).substitute(substitutions)


def parse_output(text: str) -> dict:
    """Parse benchmark stdout into a dict keyed by ``OUTPUT_KEYS``.

    Unknown lines are rejected so harness regressions surface immediately.
    """
    values = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or key not in OUTPUT_KEYS:
            raise OutputFormatError("unexpected benchmark output line", raw)
        try:
            values[key] = int(value) if key == "sweeps" else float(value)
        except ValueError:
            raise OutputFormatError(f"unparseable value for {key}", raw) from None
    missing = [k for k in OUTPUT_KEYS if k not in values]
    if missing:
        raise OutputFormatError(f"missing output keys: {', '.join(missing)}")
    return values
