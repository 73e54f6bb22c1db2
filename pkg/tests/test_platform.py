import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from etsim.app import aes_preset, make_app, ModuleSpec
from etsim.platform import (
    BatterySpec,
    BatteryState,
    LinkEnergyModel,
    Mapping,
    PlatformError,
    battery_consume,
    battery_level,
    build_platform,
    load_platform,
    mesh,
    optimal_counts,
    packet_energy,
    parity_map,
    parse_mesh,
)


def test_mesh_sizes():
    assert len(mesh(4, 4, 1.0).edges) == 48
    one = mesh(1, 1, 1.0)
    assert one.node_count == 1 and not one.edges
    pair = mesh(2, 1, 1.0)
    assert set(pair.edges) == {(0, 1), (1, 0)}
    with pytest.raises(PlatformError):
        mesh(0, 4)
    with pytest.raises(PlatformError, match="mesh"):
        parse_mesh("0x4")


@given(st.integers(1, 9), st.integers(1, 9))
def test_mesh_edge_count_and_symmetry(w, h):
    topo = mesh(w, h, 1.0)
    assert len(topo.edges) == 2 * (2 * w * h - w - h)
    assert all((j, i) in topo.edges for i, j in topo.edges)


def test_parity_map_examples():
    app = aes_preset()
    m = parity_map(mesh(4, 4), app)
    assert m.assignment[0] == 2  # (0, 0)
    assert m.assignment[1] == 3  # (1, 0)
    assert m.assignment[5] == 1  # (1, 1)
    assert m.counts.tolist() == [4, 4, 8]
    two = make_app([ModuleSpec(1, "a", 1.0), ModuleSpec(2, "b", 1.0)], [1, 2])
    with pytest.raises(PlatformError, match="AES-specific"):
        parity_map(mesh(4, 4), two)


@given(st.integers(1, 6), st.integers(1, 6))
def test_parity_map_even_meshes(a, b):
    w, h = 2 * a, 2 * b
    counts = parity_map(mesh(w, h), aes_preset()).counts
    K = w * h
    assert counts.tolist() == [K // 4, K // 4, K // 2]


def test_optimal_counts_examples():
    n = optimal_counts([1201, 660.06, 1942.05], 16)
    assert np.allclose(n, [5.0527, 2.7769, 8.1704], atol=5e-5)
    assert optimal_counts([1, 1], 2).tolist() == [1, 1]
    assert optimal_counts([1, 3], 4).tolist() == [1, 3]
    with pytest.raises(ValueError):
        optimal_counts([1, 0], 4)


@given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=6), st.integers(1, 500),
       st.floats(1e-3, 1e3))
def test_optimal_counts_sum_and_scale(eps, K, lam):
    n = optimal_counts(eps, K)
    assert abs(n.sum() - K) <= 1e-9 * K
    assert np.allclose(optimal_counts(np.multiply(eps, lam), K), n, rtol=1e-9)


def test_packet_energy_examples():
    model = LinkEnergyModel()
    assert packet_energy(model, 1.0, 128) == pytest.approx(57.2416, abs=1e-12)
    assert packet_energy(model, 100.0, 1) == pytest.approx(53.082, abs=1e-12)
    with pytest.raises(ValueError):
        packet_energy(model, 20.0, 0)
    with pytest.raises(ValueError):
        packet_energy(model, 0.0, 8)
    with pytest.raises(ValueError):
        model.pj_per_bit(150.0)
    assert LinkEnergyModel(extrapolate=True).pj_per_bit(150.0) > 53.082


@given(st.floats(1.0, 99.0), st.floats(0.01, 1.0), st.integers(1, 512))
def test_packet_energy_increasing(length, extra, bits):
    model = LinkEnergyModel()
    e = packet_energy(model, length, bits)
    assert packet_energy(model, min(100.0, length + extra), bits) > e
    assert packet_energy(model, length, bits + 1) > e


def test_ideal_battery_examples():
    b = BatteryState(60000.0, model="ideal")
    after = battery_consume(b, 59999.0)
    assert after.alive and after.residual_pj == pytest.approx(1.0)
    assert b.consumed_pj == 0.0  # functional form leaves the input untouched
    assert battery_consume(b, 60000.0).dead
    with pytest.raises(ValueError):
        b.consume(-1.0)


def test_thin_film_cutoff_wastes_residual():
    b = BatterySpec().new()
    usable = b.usable_pj()
    # cutoff sits between the 0.05 and 0.0 table points
    assert 0.95 * 60000 < usable < 60000
    b.consume(usable - 1.0)
    assert b.alive and b.voltage() > 3.0
    b.consume(2.0)
    assert b.dead and b.residual_pj > 0
    assert b.consume(10.0) == 0.0


def test_battery_levels():
    b = BatteryState(60000.0, model="ideal")
    assert battery_level(b, 8) == 7
    b.consume(30000.0)
    assert battery_level(b, 8) == 4
    b.consume(30000.0)
    assert battery_level(b, 8) == 0


@given(st.lists(st.floats(0, 5000), max_size=40), st.sampled_from(["ideal", "thin-film"]))
def test_battery_monotone_and_closed(draws, model):
    b = BatterySpec(model=model).new()
    seen_dead = False
    last = 0.0
    for d in draws:
        b.consume(d)
        assert b.consumed_pj >= last
        assert b.consumed_pj + b.residual_pj == pytest.approx(b.initial_pj, rel=1e-12)
        if seen_dead:
            assert b.dead
        seen_dead = b.dead
        last = b.consumed_pj


def test_platform_from_json(tmp_path):
    app = aes_preset()
    path = tmp_path / "platform.json"
    path.write_text(json.dumps({
        "topology": {"mesh": "3x2", "link_length_cm": 10.0},
        "battery": {"model": "ideal", "initial_pj": 1000.0},
        "levels": 4,
        "mapping": [3, 1, 2, 3, 1, 2],
    }))
    p = load_platform(path, app)
    assert p.K == 6 and p.levels == 4
    assert p.battery.model == "ideal"
    assert p.mapping.counts.tolist() == [2, 2, 2]
    assert p.hop_energy_matrix(128)[0, 1] == pytest.approx(4.4472 * 128)
    with pytest.raises(PlatformError, match="mapping"):
        build_platform(app, 2, 2, mapping=[1, 2])
