from types import SimpleNamespace

import pytest

from etsim.app import aes_preset
from etsim.control import (
    ControlConfig,
    ControlPlane,
    ControllerState,
    RoutingContext,
    StatusReport,
    collect_reports,
    controller_tick,
    detect_deadlock,
    pj_per_cycle,
    plan_frame,
    report_energy,
    report_key,
)
from etsim.platform import BatterySpec, build_platform
from etsim.routing import compute_routes


def test_frame_examples():
    assert plan_frame(16, ControlConfig(slot_cycles=8, download_cycles=64)).frame_length == 192
    assert plan_frame(1, ControlConfig(slot_cycles=1, download_cycles=1)).frame_length == 2
    assert ControlConfig().medium_width_bits == 2


@pytest.mark.parametrize("K", [16, 25, 36, 49, 64])
def test_fixed_period_frames(K):
    cfg = ControlConfig()
    f = plan_frame(K, cfg)
    assert f.frame_length == K * f.slot_cycles + f.download_cycles
    assert cfg.frame_cycles - K < f.frame_length <= cfg.frame_cycles
    assert f.slot_cycles * cfg.medium_width_bits >= cfg.report_bits


def test_frame_too_short_for_reports():
    with pytest.raises(ValueError):
        plan_frame(64, ControlConfig(frame_cycles=800))


def test_download_sizing():
    cfg = ControlConfig()
    assert cfg.download_bits(16, 3) == 16  # 3 entries x 4 bits, byte-rounded
    assert cfg.download_bits(64, 3) == 24
    assert plan_frame(16, cfg).download_cycles == 16 * 16 // 2


def test_controller_power():
    dyn, leak = ControlConfig().power_mw(16)
    assert pj_per_cycle(dyn + leak) == pytest.approx(75.1)
    assert ControlConfig().power_mw(64) == pytest.approx((6.94 * 4, 0.57 * 4))
    custom = ControlConfig(controller_power_by_k={25: (9.0, 1.0)})
    assert custom.power_mw(25) == (9.0, 1.0)


def test_detect_deadlock():
    frame = plan_frame(4, ControlConfig(slot_cycles=10, download_cycles=10))
    assert not detect_deadlock(None, 4, frame)
    assert not detect_deadlock(0, 4, frame)
    assert not detect_deadlock(4 * frame.frame_length, 4, frame)
    assert detect_deadlock(4 * frame.frame_length + 1, 4, frame)


def _nodes(K, model="ideal"):
    return [SimpleNamespace(id=j, battery=BatterySpec(model=model).new(), OH=0.0,
                            stall_cycles=lambda now: None) for j in range(K)]


def test_collect_reports_charges_live_nodes_only():
    cfg = ControlConfig()
    frame = plan_frame(16, cfg)
    nodes = _nodes(16)
    reports = collect_reports(nodes, 0, frame, cfg, 8)
    assert len(reports) == 16
    assert all(n.OH == pytest.approx(8 * 4.4472) for n in nodes)
    nodes[3].battery.consume(60000.0)
    before = nodes[3].OH
    reports = collect_reports(nodes, 1, frame, cfg, 8)
    assert len(reports) == 15 and nodes[3].OH == before
    assert report_key(reports, 16)[3] is None
    assert report_energy(cfg) == pytest.approx(8 * 4.4472)


def _ctx(width=4):
    app = aes_preset()
    platform = build_platform(app, width, width)
    ctx = RoutingContext(platform.topology, platform.mapping, "ear", 1.0, 8)
    _, _, rt = compute_routes(platform.topology, platform.mapping, "ear")
    return ctx, rt


def test_tick_recomputes_only_on_change():
    ctx, rt = _ctx()
    cfg = ControlConfig()
    frame = plan_frame(16, cfg)
    full = [StatusReport(j, 7, False) for j in range(16)]
    ctrl = ControllerState(0, True, None, 6.94, 0.57, last_reports=report_key(full, 16))
    assert not controller_tick(ctrl, full, frame, ctx, rt, cfg).recomputed
    drained = [StatusReport(j, 0 if j == 5 else 7, False) for j in range(16)]
    out = controller_tick(ctrl, drained, frame, ctx, rt, cfg)
    assert out.recomputed and out.deliver
    assert out.changed_rows > 0
    assert out.download_pj == pytest.approx(out.changed_rows * 16 * 4.4472)
    assert not controller_tick(ctrl, drained, frame, ctx, out.tables, cfg).recomputed


def test_failover_and_extinction():
    ctx, rt = _ctx()
    tiny = BatterySpec(model="ideal", initial_pj=20000.0)
    cfg = ControlConfig(controller_count=3, controller_battery=tiny)
    frame = plan_frame(16, cfg)
    full = [StatusReport(j, 7, False) for j in range(16)]
    plane = ControlPlane(ctx, cfg, report_key(full, 16))
    now, dead_at = frame.upload_cycles, None
    actives = []
    for _ in range(20):
        actives.append(plane.active.id if plane.active else None)
        assert sum(c.active and c.alive for c in plane.controllers) <= 1
        _, dead_at = plane.tick(now, full, frame, rt)
        if dead_at is not None:
            break
        now += frame.frame_length
    assert dead_at is not None and not plane.alive
    # leakage alone: each controller lasts 20000 / 5.7 cycles, all drain at once
    assert dead_at == pytest.approx(frame.upload_cycles + 20000 / pj_per_cycle(0.57), rel=1e-9)


def test_cold_standby_extends_lifetime():
    ctx, rt = _ctx()
    tiny = BatterySpec(model="ideal", initial_pj=50000.0)
    lifetimes = []
    for count in (1, 2, 3):
        cfg = ControlConfig(controller_count=count, controller_battery=tiny, idle_leakage=False)
        frame = plan_frame(16, cfg)
        full = [StatusReport(j, 7, False) for j in range(16)]
        plane = ControlPlane(ctx, cfg, report_key(full, 16))
        now, dead_at = 0, None
        while dead_at is None:
            _, dead_at = plane.tick(now, full, frame, rt)
            now += frame.frame_length
        lifetimes.append(dead_at)
    assert lifetimes[0] < lifetimes[1] < lifetimes[2]
