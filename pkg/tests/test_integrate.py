import json
import math

import pytest

from filippov.errors import IntegrationError
from filippov.integrate import (
    BranchPolicy,
    IntegratorOptions,
    enumerate_branches,
    handle_sigma_event,
    integrate_filippov,
    integrate_regular,
    integrate_sliding,
)
from filippov.integrate import PolicyCursor, _EnterRegion, _EnterSliding
from filippov.sigma import PointClass, classify_point

from conftest import build_plane_system


def test_regular_event_location():
    s = build_plane_system(("0", "-1"), ("1", "1"))
    seg, hit = integrate_regular(s, (0.0, 1.0), 1, 5.0)
    assert hit[0] == "curve" and hit[1] == 0
    assert seg.t_end == pytest.approx(1.0, abs=1e-9)
    assert abs(seg.end_point[1]) <= 1e-10


def test_regular_runs_to_horizon():
    s = build_plane_system(("1", "0"), ("1", "1"), bounds=(-1, 3, -1, 1))
    seg, hit = integrate_regular(s, (0.0, 0.5), 1, 2.0)
    assert hit[0] == "t_max"
    assert seg.end_point == pytest.approx((2.0, 0.5), abs=1e-9)


def test_circular_field_closed_form(circle_system):
    orbit = integrate_filippov(circle_system, (1.0, 0.0), 2 * math.pi)
    end = orbit.end_point()
    assert math.hypot(end[0] - 1.0, end[1]) <= 1e-7
    assert len(orbit.segments) == 1


def test_event_endpoints_have_tiny_h(fold_system):
    h = fold_system.curve(0).h.raw()
    for x0 in (-1.5, -0.7, 0.4, 1.2):
        orbit = integrate_filippov(fold_system, (x0, 0.8), 4.0)
        for seg, nxt in zip(orbit.segments, orbit.segments[1:]):
            if seg.kind == "regular_arc" and nxt.kind in ("crossing_event", "sliding_arc"):
                assert abs(h(*seg.end_point)) <= 1e-10


def test_handle_crossing_continues_to_other_side():
    s = build_plane_system(("1", "-1"), ("1", "-1"))
    action = handle_sigma_event(s, 0, (1.0, 0.0), 1, PolicyCursor())
    assert isinstance(action, _EnterRegion)
    assert action.region_id == 2


def test_handle_sliding_entry(flat_system):
    action = handle_sigma_event(flat_system, 0, (1.0, 0.0), 1, PolicyCursor())
    assert isinstance(action, _EnterSliding)


def test_handle_visible_fold_ejects_tangent_side(fold_system):
    # oracle: a small step along Y1 from the fold raises h quadratically
    p = (0.0, 0.0)
    y1 = fold_system.region(1).field
    x, y = p
    dt = 1e-3
    for _ in range(10):
        vx, vy = y1(x, y)
        x += dt * vx
        y += dt * vy
    assert y > 0  # moves off into the h > 0 side
    action = handle_sigma_event(fold_system, 0, p, None, PolicyCursor())
    assert isinstance(action, _EnterRegion)
    assert action.region_id == 1


def test_sliding_to_horizon():
    s = build_plane_system(("1", "-1"), ("1", "1"), bounds=(-1, 4, -1, 1))
    seg, exit_info = integrate_sliding(s, 0, (0.0, 0.0), 3.0)
    assert exit_info[0] == "t_max"
    assert seg.end_point == pytest.approx((3.0, 0.0), abs=1e-8)
    assert max(abs(p[1]) for p in seg.points) <= 1e-8


def test_sliding_exits_at_fold(fold_system):
    seg, exit_info = integrate_sliding(fold_system, 0, (-1.0, 0.0), 5.0)
    assert exit_info[0] == "tangency"
    assert exit_info[1] == pytest.approx((0.0, 0.0), abs=1e-8)
    assert seg.t_end == pytest.approx(1.0, abs=1e-6)


def test_sliding_reaches_pseudo_equilibrium(pe_system):
    seg, exit_info = integrate_sliding(pe_system, 0, (1.0, 0.0), 60.0)
    assert exit_info[0] == "pseudo_eq"
    assert abs(exit_info[1][0]) <= 1e-6


def test_filippov_piecewise_closed_form():
    s = build_plane_system(("1", "-1"), ("1", "1"), bounds=(-1, 4, -1, 2))
    orbit = integrate_filippov(s, (0.0, 1.0), 3.0)
    kinds = [g.kind for g in orbit.segments]
    assert kinds == ["regular_arc", "sliding_arc"]
    assert orbit.segments[0].t_end == pytest.approx(1.0, abs=1e-9)
    assert orbit.segments[0].end_point == pytest.approx((1.0, 0.0), abs=1e-9)
    assert orbit.end_point() == pytest.approx((3.0, 0.0), abs=1e-8)
    # closed-form trace: (t, 1-t) then (t, 0)
    for t, p, kind, _ in orbit.samples():
        if kind == "regular_arc":
            assert p == pytest.approx((t, 1.0 - t), abs=1e-8)
        else:
            assert p == pytest.approx((t, 0.0), abs=1e-8)


def test_filippov_straight_crossing():
    s = build_plane_system(("1", "-1"), ("1", "-1"), bounds=(-1, 4, -2, 2))
    orbit = integrate_filippov(s, (0.0, 1.0), 2.0)
    kinds = [g.kind for g in orbit.segments]
    assert kinds == ["regular_arc", "crossing_event", "regular_arc"]
    assert orbit.segments[1].start_point == pytest.approx((1.0, 0.0), abs=1e-9)
    assert orbit.end_point() == pytest.approx((2.0, -1.0), abs=1e-8)


def test_filippov_torus_wrap(belt_system):
    orbit = integrate_filippov(belt_system, (0.0, 0.0), 2.5)
    assert orbit.end_point() == pytest.approx((0.5, 0.0), abs=1e-8)
    assert all(0 <= p[0] < 1 for _, p, _, _ in orbit.samples())


def test_backward_consistency_on_regular_arc(circle_system):
    forward = integrate_filippov(circle_system, (1.0, 0.0), 1.5)
    end = forward.end_point()
    back = integrate_filippov(circle_system, end, 1.5, direction="backward")
    ret = back.end_point()
    assert math.hypot(ret[0] - 1.0, ret[1]) <= 1e-7


def test_backward_swaps_sliding_and_escaping(belt_system):
    # forward from the escaping belt needs a policy; backward slides
    orbit = integrate_filippov(belt_system, (0.3, 0.5), 1.0, direction="backward")
    assert orbit.segments[0].kind == "sliding_arc"


def test_determinism_bit_identical(fold_system):
    a = integrate_filippov(fold_system, (-1.2, 0.7), 5.0)
    b = integrate_filippov(fold_system, (-1.2, 0.7), 5.0)
    assert a.serialize() == b.serialize()


def test_left_domain_terminal(fold_system):
    orbit = integrate_filippov(fold_system, (1.5, 0.5), 10.0)
    assert orbit.terminal == "left_domain"
    assert orbit.segments[-1].kind == "terminal"


def test_double_tangency_stops():
    s = build_plane_system(("1", "x"), ("1", "x"))
    orbit = integrate_filippov(s, (0.0, 0.0), 1.0)
    assert orbit.terminal == "double_tangency"


def test_no_tunneling_interior_samples(fold_system):
    h = fold_system.curve(0).h.raw()
    for x0, y0 in [(-1.8, 0.9), (-1.1, -0.6), (0.3, 0.9)]:
        orbit = integrate_filippov(fold_system, (x0, y0), 6.0)
        for seg in orbit.segments:
            if seg.kind != "regular_arc":
                continue
            interior = seg.points[1:-1]
            signs = {1 if h(*p) > 0 else -1 for p in interior if abs(h(*p)) > 1e-9}
            assert len(signs) <= 1


def test_step_tightening_changes_little(circle_system):
    base = IntegratorOptions()
    tight = base.tightened(0.1)
    a = integrate_filippov(circle_system, (1.0, 0.0), 2 * math.pi, opts=base)
    b = integrate_filippov(circle_system, (1.0, 0.0), 2 * math.pi, opts=tight)
    ea, eb = a.end_point(), b.end_point()
    assert math.hypot(ea[0] - eb[0], ea[1] - eb[1]) <= 1e-6


def test_enumerate_three_branches_on_escaping_start(belt_system):
    orbits = enumerate_branches(belt_system, (0.3, 0.5), 2.0, budget=5, dwell_grid=(0.0,))
    assert len(orbits) == 3
    labels = [o.policy["script"] for o in orbits]
    assert labels == [
        ["exit_immediately_up"],
        ["exit_immediately_down"],
        ["slide_until_tangency"],
    ]


def test_enumerate_budget_truncates(belt_system):
    orbits = enumerate_branches(belt_system, (0.3, 0.5), 2.0, budget=2, dwell_grid=(0.0,))
    assert len(orbits) == 2


def test_enumerate_single_orbit_without_escaping(fold_system):
    orbits = enumerate_branches(fold_system, (-1.5, 0.5), 3.0, budget=7, dwell_grid=(0.0,))
    assert len(orbits) == 1


def test_enumerate_fork_tree_with_dwell_grid(belt_system):
    # fork set: |dwell grid| x {up, down} plus slide-on = 2*2 + 1
    orbits = enumerate_branches(belt_system, (0.3, 0.5), 2.0, budget=100, dwell_grid=(0.0, 0.1))
    assert len(orbits) == 5
    dwell_ends = [o.end_point() for o in orbits if "dwell" in str(o.policy["script"])]
    assert len(dwell_ends) == 2


def test_policy_dwell_then_exit(belt_system):
    policy = BranchPolicy.dwell_exit(0.25, "negative")
    orbit = integrate_filippov(belt_system, (0.3, 0.5), 2.0, policy=policy)
    kinds = [g.kind for g in orbit.segments]
    assert kinds[0] == "sliding_arc"  # the dwell ride along the escaping belt
    assert "escape_departure" in kinds
    assert orbit.choices[0].dwell == 0.25
    # dwell advances along the belt at unit speed before leaving
    dep = next(g for g in orbit.segments if g.kind == "escape_departure")
    assert dep.start_point == pytest.approx((0.55, 0.5), abs=1e-8)


def test_orbit_csv_and_json(fold_system, tmp_path):
    orbit = integrate_filippov(fold_system, (-1.2, 0.7), 3.0)
    csv_path = tmp_path / "orbit.csv"
    with open(csv_path, "w") as fh:
        orbit.write_csv(fh)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x,y,segment_kind,segment_index"
    assert len(lines) > 10
    payload = orbit.to_json_dict()
    assert payload["schema"] == "filippov.orbit/1"
    json.dumps(payload)  # serializable


def test_segments_are_time_contiguous(fold_system):
    orbit = integrate_filippov(fold_system, (-1.6, 0.9), 5.0)
    for a, b in zip(orbit.segments, orbit.segments[1:]):
        assert b.t_start == pytest.approx(a.t_end, abs=1e-12)
        da = a.end_point
        db = b.start_point
        assert math.hypot(da[0] - db[0], da[1] - db[1]) <= 1e-9


def test_position_at_interpolates(flat_system):
    orbit = integrate_filippov(flat_system, (0.0, 1.0), 3.0)
    assert orbit.position_at(0.5) == pytest.approx((0.5, 0.5), abs=1e-7)
    assert orbit.position_at(2.0) == pytest.approx((2.0, 0.0), abs=1e-7)


def test_horizon_must_be_positive(flat_system):
    with pytest.raises(IntegrationError):
        integrate_filippov(flat_system, (0.0, 1.0), 0.0)
