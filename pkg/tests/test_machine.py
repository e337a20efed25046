import copy

import pytest
from hypothesis import given, settings, strategies as st

from stencilkit.machine import (
    MachineFileError,
    builtin_machine_path,
    cycles_per_cl,
    effective_size,
    from_dict,
    list_builtin_machines,
    load_machine,
    mem_cycles_per_cl,
    save_machine,
    serialize,
)


@pytest.fixture()
def zen_dict(zen):
    return serialize(zen)


def test_builtin_machines_load_and_roundtrip(tmp_path):
    for name in list_builtin_machines():
        machine = load_machine(builtin_machine_path(name))
        path = tmp_path / f"{name}.yml"
        save_machine(machine, path)
        reloaded = load_machine(path)
        assert serialize(reloaded) == serialize(machine)


def test_zen_file_matches_published_shape(zen):
    l2 = zen.level("L2")
    assert l2.size_bytes == 512 * 1024
    assert l2.upstream_bandwidth_bytes_per_cycle == 32.0
    assert l2.duplex == "full"
    assert zen.level("L3").duplex == "half"
    assert zen.cores_per_socket == 24
    assert zen.cores_per_numa_domain == 6
    assert zen.mem_bandwidth_socket == pytest.approx(160e9)
    assert zen.overlap_policy == "zen_partial_overlap"


def test_hsw_l1l2_is_documented_optimistic(hsw):
    # theoretical 64 B/cy; the machine file notes measured reality can halve it
    assert hsw.level("L2").upstream_bandwidth_bytes_per_cycle == 64.0
    assert "32 B/cy" in builtin_machine_path("hsw").read_text()


def test_hierarchy_must_grow(zen_dict):
    bad = copy.deepcopy(zen_dict)
    bad["caches"][1]["size_bytes"] = 16384  # L2 smaller than L1
    with pytest.raises(MachineFileError, match="inconsistent hierarchy"):
        from_dict(bad)


def test_unknown_keys_rejected(zen_dict):
    bad = copy.deepcopy(zen_dict)
    bad["turbo"] = True
    with pytest.raises(MachineFileError, match="unknown field"):
        from_dict(bad)
    bad = copy.deepcopy(zen_dict)
    bad["caches"][0]["latency"] = 4
    with pytest.raises(MachineFileError, match="unknown field"):
        from_dict(bad)


def test_missing_field_named(zen_dict):
    bad = copy.deepcopy(zen_dict)
    del bad["clock_hz"]
    with pytest.raises(MachineFileError, match="clock_hz"):
        from_dict(bad)


def test_nonpositive_bandwidth_rejected(zen_dict):
    bad = copy.deepcopy(zen_dict)
    bad["memory"]["bandwidth_bytes_per_second_numa_domain"] = 0
    with pytest.raises(MachineFileError, match="bandwidth"):
        from_dict(bad)


_CORRUPTIONS = []
for key in ("clock_hz", "cores_per_socket", "cores_per_numa_domain"):
    _CORRUPTIONS.append(("top", key))
for key in ("vector_bits", "load_ports", "store_ports", "load_width_bits"):
    _CORRUPTIONS.append(("ports", key))
for key in ("size_bytes", "ways", "line_bytes", "upstream_bandwidth_bytes_per_cycle", "duplex"):
    _CORRUPTIONS.append(("cache", key))


@settings(max_examples=120, deadline=None)
@given(
    corruption=st.sampled_from(_CORRUPTIONS),
    value=st.sampled_from([-1, 0, "junk", None]),
)
def test_single_field_corruption_rejected(zen, corruption, value):
    data = serialize(zen)
    section, key = corruption
    target = {"top": data, "ports": data["ports"], "cache": data["caches"][1]}[section]
    if target[key] == value:
        return
    target[key] = value
    with pytest.raises(MachineFileError):
        from_dict(data)


def test_cycles_per_cl_duplex_semantics(zen):
    l2 = zen.level("L2")  # 32 B/cy full duplex
    assert cycles_per_cl(l2, 64.0, 64.0) == pytest.approx(2.0)
    l3 = zen.level("L3")  # 32 B/cy half duplex
    assert cycles_per_cl(l3, 64.0, 64.0) == pytest.approx(4.0)
    assert cycles_per_cl(l2, 0.0, 0.0) == 0.0


@given(
    load=st.floats(0, 1e6),
    store=st.floats(0, 1e6),
    delta=st.floats(0, 1e5),
)
def test_cycles_per_cl_monotone_and_duplex_ordering(zen, load, store, delta):
    l2, l3 = zen.level("L2"), zen.level("L3")
    assert cycles_per_cl(l2, load + delta, store) >= cycles_per_cl(l2, load, store)
    assert cycles_per_cl(l2, load, store + delta) >= cycles_per_cl(l2, load, store)
    # half duplex is never faster than full duplex at equal volumes and rate
    assert cycles_per_cl(l3, load, store) >= cycles_per_cl(l2, load, store)


def test_effective_size_examples(hsw):
    assert effective_size(hsw.level("L1"), 0.5) == 16384
    assert effective_size(hsw.level("L2"), 0.5) == 131072
    assert effective_size(hsw.level("L1"), 1.0) == 32768
    with pytest.raises(MachineFileError):
        effective_size(hsw.level("L1"), 0.0)


def test_mem_cycles_per_cl_examples(hsw):
    machine = from_dict({**serialize(hsw), "memory": {
        "bandwidth_bytes_per_second_numa_domain": 27.6e9,
        "bandwidth_bytes_per_second_socket": 55.2e9,
    }})
    assert mem_cycles_per_cl(machine, 192.0) == pytest.approx(16.0)
    assert mem_cycles_per_cl(machine, 0.0) == 0.0
    assert mem_cycles_per_cl(machine, 64.0) == pytest.approx(64.0 / 12.0)


def test_negative_volume_rejected(hsw):
    with pytest.raises(MachineFileError):
        cycles_per_cl(hsw.level("L2"), -1.0, 0.0)
    with pytest.raises(MachineFileError):
        mem_cycles_per_cl(hsw, -5.0)


def test_missing_file_error():
    with pytest.raises(MachineFileError, match="not found"):
        load_machine("/nonexistent/machine.yml")
