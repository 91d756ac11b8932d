"""Event-driven integration of Filippov orbits.

The regular stepper is a hand-rolled Dormand-Prince 5(4) pair with the
classical quartic dense output; events (sign changes of any h_i, domain
exit, graze captures) are located on the dense output by a guarded
bisection/secant hybrid and polished onto the curve with Newton steps.
Sliding arcs integrate the Filippov convex combination constrained to the
curve by per-step Newton projection.

One orbit is computed sequentially; distinct orbits may be computed
concurrently against the shared immutable system.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import IntegrationError, UndefinedSlidingError
from .sigma import (
    PE_NORM_TOL,
    PointClass,
    TAU_CLASS,
    classify_point,
    second_lie_value,
)
from .system import EPS_SIGMA, FilippovSystem, OnSigma

EVENT_H_TOL = 1e-10  # |h| at located non-sliding event endpoints
SLIDE_H_TOL = 1e-8  # max |h| along sliding arcs
ESCAPE_BAND = 1e-8  # hysteresis band: a curve re-arms once |h| leaves it
MATCH_TOL = 1e-9  # adjacent segment endpoints must agree to this


# --------------------------------------------------------------------------- #
# Dormand-Prince 5(4) with dense output
# --------------------------------------------------------------------------- #

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


@dataclass
class IntegratorOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float | None = None  # default: min domain extent / 16
    sample_spacing: float | None = None  # default: min domain extent / 64
    capture_radius: float = 1e-6
    max_segments: int = 200_000

    def resolved(self, domain):
        extent = min(domain.width, domain.height)
        max_step = self.max_step if self.max_step is not None else extent / 16.0
        spacing = self.sample_spacing if self.sample_spacing is not None else extent / 64.0
        return max_step, spacing

    def tightened(self, factor=0.1):
        return IntegratorOptions(
            rtol=self.rtol * factor, atol=self.atol * factor,
            max_step=self.max_step, sample_spacing=self.sample_spacing,
            capture_radius=self.capture_radius, max_segments=self.max_segments,
        )


class _DenseStep:
    """One accepted RK step with its quartic interpolant."""

    __slots__ = ("t0", "dt", "x0", "y0", "ks")

    def __init__(self, t0, dt, x0, y0, ks):
        self.t0 = t0
        self.dt = dt
        self.x0 = x0
        self.y0 = y0
        self.ks = ks

    def at(self, theta):
        x = 0.0
        y = 0.0
        for k, p in zip(self.ks, _P):
            q = theta * (p[0] + theta * (p[1] + theta * (p[2] + theta * p[3])))
            x += k[0] * q
            y += k[1] * q
        return (self.x0 + self.dt * x, self.y0 + self.dt * y)


def _rk_step(f, t, x, y, k1, dt):
    ks = [k1]
    for i in range(1, 7):
        ax = x
        ay = y
        row = _A[i]
        for a, k in zip(row, ks):
            ax += dt * a * k[0]
            ay += dt * a * k[1]
        ks.append(f(ax, ay))
    x1 = ax  # stage 7 uses the 5th-order solution weights
    y1 = ay
    ex = 0.0
    ey = 0.0
    for e, k in zip(_E, ks):
        ex += e * k[0]
        ey += e * k[1]
    return x1, y1, ks, ex * dt, ey * dt


class _Stepper:
    def __init__(self, f, p0, opts, max_step):
        self.f = f
        self.t = 0.0
        self.x, self.y = p0
        self.k1 = f(self.x, self.y)
        self.rtol = opts.rtol
        self.atol = opts.atol
        self.max_step = max_step
        self.dt = min(max_step, 1e-3)

    def propose(self, dt_cap):
        """Advance one accepted step of size <= dt_cap; returns a _DenseStep."""
        dt = min(self.dt, dt_cap, self.max_step)
        for _ in range(60):
            x1, y1, ks, ex, ey = _rk_step(self.f, self.t, self.x, self.y, self.k1, dt)
            if not (math.isfinite(x1) and math.isfinite(y1)):
                dt *= 0.25
                continue
            sx = self.atol + self.rtol * max(abs(self.x), abs(x1))
            sy = self.atol + self.rtol * max(abs(self.y), abs(y1))
            err = math.sqrt(0.5 * ((ex / sx) ** 2 + (ey / sy) ** 2))
            if err <= 1.0:
                step = _DenseStep(self.t, dt, self.x, self.y, ks)
                self.t += dt
                self.x, self.y = x1, y1
                self.k1 = ks[6]  # FSAL
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                self.dt = min(self.max_step, dt * factor)
                return step
            dt *= max(0.2, 0.9 * err ** -0.2)
            if dt < 1e-15:
                break
        raise IntegrationError("step size underflow (degenerate point?)")

    def restart_from(self, t, p):
        self.t = t
        self.x, self.y = p
        self.k1 = self.f(self.x, self.y)


# --------------------------------------------------------------------------- #
# orbit data model
# --------------------------------------------------------------------------- #


@dataclass
class OrbitSegment:
    kind: str  # regular_arc | sliding_arc | crossing_event | escape_departure | terminal
    t_start: float
    t_end: float
    times: list = field(default_factory=list)
    points: list = field(default_factory=list)
    region_id: int | None = None
    curve_id: int | None = None
    detail: dict = field(default_factory=dict)

    @property
    def start_point(self):
        return self.points[0]

    @property
    def end_point(self):
        return self.points[-1]

    def to_dict(self):
        return {
            "kind": self.kind,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "region": self.region_id,
            "curve": self.curve_id,
            "start": list(self.points[0]),
            "end": list(self.points[-1]),
            "n_samples": len(self.points),
            "detail": self.detail,
        }


@dataclass
class BranchChoice:
    t: float
    point: tuple[float, float]
    kind: str  # escape_exit | sliding_exit_at_tangency | double_tangency_stop | enter_escaping
    side: str | None = None
    dwell: float | None = None

    def to_dict(self):
        d = {"t": self.t, "point": list(self.point), "kind": self.kind}
        if self.side is not None:
            d["side"] = self.side
        if self.dwell is not None:
            d["dwell"] = self.dwell
        return d


@dataclass(frozen=True)
class BranchPolicy:
    """Deterministic resolution of the escaping-region freedom."""

    kind: str  # exit_immediately_up | exit_immediately_down | slide_until_tangency | dwell_then_exit
    dwell: float = 0.0
    side: str = "positive"
    seed: int = 0

    @staticmethod
    def exit_up():
        return BranchPolicy("exit_immediately_up")

    @staticmethod
    def exit_down():
        return BranchPolicy("exit_immediately_down")

    @staticmethod
    def slide_on():
        return BranchPolicy("slide_until_tangency")

    @staticmethod
    def dwell_exit(dwell, side):
        return BranchPolicy("dwell_then_exit", dwell=dwell, side=side)

    def describe(self):
        if self.kind == "dwell_then_exit":
            return f"dwell_then_exit({self.dwell!r},{self.side})"
        return self.kind


class PolicyCursor:
    """Feeds scripted choices to the driver; flags unscripted choice points.

    ``script`` entries are BranchPolicy objects (escaping encounters) or the
    strings 'ride'/'pass' (graze capture opportunities).  When the script is
    exhausted the default policy applies and ``overflow`` records where the
    first unscripted decision happened.
    """

    def __init__(self, policy=None, script=None):
        self.default = policy if policy is not None else BranchPolicy.slide_on()
        self.script = list(script or [])
        self.index = 0
        self.overflow = None  # ('escape' | 'ride', choice index)

    def next_escape(self):
        if self.index < len(self.script):
            entry = self.script[self.index]
            self.index += 1
            if not isinstance(entry, BranchPolicy):
                raise IntegrationError("policy script mismatch: expected a BranchPolicy")
            return entry
        if self.overflow is None:
            self.overflow = ("escape", self.index)
        self.index += 1
        return self.default

    def next_ride(self):
        if self.index < len(self.script):
            entry = self.script[self.index]
            self.index += 1
            if entry not in ("ride", "pass"):
                raise IntegrationError("policy script mismatch: expected 'ride' or 'pass'")
            return entry
        if self.overflow is None:
            self.overflow = ("ride", self.index)
        self.index += 1
        return "pass"

    def describe(self):
        parts = [e.describe() if isinstance(e, BranchPolicy) else e for e in self.script]
        return {"default": self.default.describe(), "script": parts}


@dataclass
class Orbit:
    initial_point: tuple[float, float]
    direction: str
    horizon: float
    segments: list
    choices: list
    terminal: str | None
    policy: dict
    script: list = field(default_factory=list)  # consumed policy entries, re-runnable

    def duration(self):
        return self.segments[-1].t_end if self.segments else 0.0

    def end_point(self):
        for seg in reversed(self.segments):
            if seg.points:
                return seg.points[-1]
        return self.initial_point

    def samples(self):
        """Yield (t, point, kind, segment index) over all stored samples."""
        for i, seg in enumerate(self.segments):
            for t, p in zip(seg.times, seg.points):
                yield t, p, seg.kind, i

    def position_at(self, t, domain=None):
        """Linear interpolation of the stored trace at time t."""
        for seg in self.segments:
            if seg.times and seg.t_start - 1e-12 <= t <= seg.t_end + 1e-12:
                times = seg.times
                i = max(1, min(len(times) - 1, bisect_right(times, t)))
                t0, t1 = times[i - 1], times[i]
                a, b = seg.points[i - 1], seg.points[i]
                w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                if domain is not None:
                    dx, dy = domain.displacement(a, b)
                    return domain.canonical((a[0] + w * dx, a[1] + w * dy))
                return (a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]))
        return self.end_point()

    def to_json_dict(self):
        return {
            "schema": "filippov.orbit/1",
            "initial": list(self.initial_point),
            "direction": self.direction,
            "horizon": self.horizon,
            "duration": self.duration(),
            "terminal": self.terminal,
            "policy": self.policy,
            "segments": [s.to_dict() for s in self.segments],
            "branch_record": [c.to_dict() for c in self.choices],
        }

    def serialize(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def write_csv(self, fh):
        fh.write("t,x,y,segment_kind,segment_index\n")
        for t, p, kind, i in self.samples():
            fh.write(f"{t!r},{p[0]!r},{p[1]!r},{kind},{i}\n")


# --------------------------------------------------------------------------- #
# regular arcs
# --------------------------------------------------------------------------- #

_THETAS = (0.25, 0.5, 0.75)


@dataclass
class CaptureTarget:
    point: tuple[float, float]
    radius: float
    tag: object = None


def _make_rhs(sys, planar):
    fx, fy = planar.raw_pair()
    scale = sys.velocity_scale
    if scale is None:
        return lambda x, y: (fx(x, y), fy(x, y))
    canonical = sys.domain.canonical

    def rhs(x, y):
        g = scale(canonical((x, y)))
        return (g * fx(x, y), g * fy(x, y))

    return rhs


def _refine_sign_change(h, step, th_a, th_b, v_a, v_b):
    """Bisection/secant hybrid on the dense output; guaranteed bracket."""
    for _ in range(80):
        if v_a != v_b:
            th_m = th_a - v_a * (th_b - th_a) / (v_b - v_a)
            if not (th_a < th_m < th_b):
                th_m = 0.5 * (th_a + th_b)
        else:
            th_m = 0.5 * (th_a + th_b)
        p = step.at(th_m)
        v_m = h(p[0], p[1])
        if abs(v_m) <= EVENT_H_TOL * 0.5 or (th_b - th_a) < 1e-16:
            return th_m
        if v_a * v_m <= 0:
            th_b, v_b = th_m, v_m
        else:
            th_a, v_a = th_m, v_m
    return 0.5 * (th_a + th_b)


def _polish_onto_curve(sys, curve, p):
    h = curve.h.raw()
    gxf, gyf = curve.grad[0].raw(), curve.grad[1].raw()
    x, y = p
    for _ in range(3):
        hv = h(x, y)
        if abs(hv) <= EVENT_H_TOL * 1e-3:
            break
        gx, gy = gxf(x, y), gyf(x, y)
        g2 = gx * gx + gy * gy
        x -= hv * gx / g2
        y -= hv * gy / g2
    return (x, y)


def integrate_regular(sys, p, region_id, t_max, opts=None, entry_curve=None, captures=()):
    """Integrate the region's smooth field until an event.

    Returns (OrbitSegment, hit) with hit one of
    ('curve', id, point) | ('t_max', point) | ('left_domain', point) |
    ('capture', target, point).
    """
    opts = opts or IntegratorOptions()
    max_step, spacing = opts.resolved(sys.domain)
    domain = sys.domain
    p = domain.canonical(p)
    rhs = _make_rhs(sys, sys.region(region_id).field)
    stepper = _Stepper(rhs, p, opts, max_step)
    h_fns = [(c.id, c.h.raw()) for c in sys.curves]
    armed = {}
    sign = {}
    for cid, h in h_fns:
        v = h(p[0], p[1])
        armed[cid] = abs(v) >= ESCAPE_BAND and cid != entry_curve
        sign[cid] = 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)
    live_captures = list(captures)
    times = [0.0]
    pts = [p]
    samples_h = [None] * len(_THETAS)

    def emit(step, th_end, t_end, end_point=None):
        # subdivide [previous sample, step end] so spacing stays bounded
        t0 = times[-1]
        t1 = step.t0 + th_end * step.dt
        a = pts[-1]
        b = end_point if end_point is not None else domain.canonical(step.at(th_end))
        dist = domain.distance(a, b)
        n = max(1, int(math.ceil(dist / spacing)))
        for j in range(1, n):
            th = ((t0 + (t1 - t0) * j / n) - step.t0) / step.dt
            if th <= 0:
                continue
            times.append(t0 + (t1 - t0) * j / n)
            pts.append(domain.canonical(step.at(th)))
        times.append(t_end)
        pts.append(b)

    while True:
        if stepper.t >= t_max - 1e-14:
            seg = OrbitSegment("regular_arc", 0.0, times[-1], times, pts, region_id=region_id)
            return seg, ("t_max", pts[-1])
        step = stepper.propose(t_max - stepper.t)
        # sample h on the dense grid, look for the earliest event
        theta_grid = (0.0,) + _THETAS + (1.0,)
        grid_pts = [step.at(th) for th in theta_grid]
        best = None  # (theta, kind, payload)

        for cid, h in h_fns:
            vals = [h(q[0], q[1]) for q in grid_pts]
            arm_index = 0
            if not armed[cid]:
                arm_index = None
                for i, v in enumerate(vals):
                    if abs(v) >= ESCAPE_BAND:
                        armed[cid] = True
                        sign[cid] = 1.0 if v > 0 else -1.0
                        arm_index = i
                        break
                if arm_index is None:
                    continue
            s0 = sign[cid]
            for i in range(arm_index, len(vals) - 1):
                va = vals[i] if vals[i] != 0 else s0 * 1e-300
                vb = vals[i + 1]
                if va * vb < 0:
                    th = _refine_sign_change(h, step, theta_grid[i], theta_grid[i + 1], va, vb)
                    if best is None or th < best[0]:
                        best = (th, "curve", cid)
                    break

        if domain.kind == "plane_rect":
            for th, q in zip(theta_grid, grid_pts):
                if not domain.contains(q):
                    th_exit = _refine_exit(domain, step, th)
                    if best is None or th_exit < best[0]:
                        best = (th_exit, "left_domain", None)
                    break

        for target in list(live_captures):
            hit_th = _capture_theta(domain, step, theta_grid, grid_pts, target)
            if hit_th is not None and (best is None or hit_th < best[0]):
                best = (hit_th, "capture", target)

        if best is None:
            emit(step, 1.0, step.t0 + step.dt)
            continue

        th, kind, payload = best
        t_event = step.t0 + th * step.dt
        if kind == "curve":
            point = domain.canonical(_polish_onto_curve(sys, sys.curve(payload), step.at(th)))
            emit(step, th, t_event, point)
            seg = OrbitSegment("regular_arc", 0.0, t_event, times, pts, region_id=region_id)
            return seg, ("curve", payload, point)
        if kind == "left_domain":
            point = domain.canonical(step.at(th))
            emit(step, th, t_event, point)
            seg = OrbitSegment("regular_arc", 0.0, t_event, times, pts, region_id=region_id)
            return seg, ("left_domain", point)
        point = domain.canonical(step.at(th))
        emit(step, th, t_event, point)
        seg = OrbitSegment("regular_arc", 0.0, t_event, times, pts, region_id=region_id)
        return seg, ("capture", payload, point)


def _refine_exit(domain, step, th_hint):
    lo, hi = 0.0, th_hint if th_hint > 0 else 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if domain.contains(step.at(mid)):
            lo = mid
        else:
            hi = mid
    return lo


def _capture_theta(domain, step, theta_grid, grid_pts, target):
    dists = [domain.distance(q, target.point) for q in grid_pts]
    best_i = min(range(len(dists)), key=lambda i: dists[i])
    # coarse gate: the dense grid spacing bounds how far the true minimum
    # can hide between grid points
    spacing = domain.distance(grid_pts[0], grid_pts[-1]) / max(1, len(grid_pts) - 1)
    if dists[best_i] > max(target.radius * 4.0, spacing, 1e-3):
        return None
    lo = theta_grid[max(0, best_i - 1)]
    hi = theta_grid[min(len(theta_grid) - 1, best_i + 1)]
    for _ in range(70):  # golden-section on the (locally convex) distance
        m1 = lo + 0.381966 * (hi - lo)
        m2 = hi - 0.381966 * (hi - lo)
        if domain.distance(step.at(m1), target.point) <= domain.distance(step.at(m2), target.point):
            hi = m2
        else:
            lo = m1
    th = 0.5 * (lo + hi)
    if domain.distance(step.at(th), target.point) <= target.radius:
        return th
    return None


# --------------------------------------------------------------------------- #
# sliding arcs
# --------------------------------------------------------------------------- #


def _make_sliding_rhs(sys, curve_id):
    curve = sys.curve(curve_id)
    y1, y2 = sys.side_fields(curve_id)
    f1x, f1y = y1.raw_pair()
    f2x, f2y = y2.raw_pair()
    gxf, gyf = curve.grad[0].raw(), curve.grad[1].raw()
    scale = sys.velocity_scale
    canonical = sys.domain.canonical

    def rhs(x, y):
        gx, gy = gxf(x, y), gyf(x, y)
        v1x, v1y = f1x(x, y), f1y(x, y)
        v2x, v2y = f2x(x, y), f2y(x, y)
        l1 = gx * v1x + gy * v1y
        l2 = gx * v2x + gy * v2y
        den = l2 - l1
        zx = (l2 * v1x - l1 * v2x) / den
        zy = (l2 * v1y - l1 * v2y) / den
        if scale is not None:
            g = scale(canonical((x, y)))
            zx *= g
            zy *= g
        return (zx, zy)

    return rhs


def integrate_sliding(sys, curve_id, p, t_max, opts=None, allow_escaping=False):
    """Slide along the Filippov field constrained to the curve.

    Returns (OrbitSegment, exit) with exit one of
    ('tangency', point, side) | ('pseudo_eq', point) | ('t_max', point) |
    ('left_domain', point).
    """
    opts = opts or IntegratorOptions()
    max_step, spacing = opts.resolved(sys.domain)
    domain = sys.domain
    curve = sys.curve(curve_id)
    h = curve.h.raw()
    gxf, gyf = curve.grad[0].raw(), curve.grad[1].raw()
    y1, y2 = sys.side_fields(curve_id)
    p = domain.canonical(_polish_onto_curve(sys, curve, domain.canonical(p)))

    cls = classify_point(sys, curve_id, p)
    if cls.point_class is PointClass.TANGENCY_REGULAR:
        # arc boundary: step along the sliding flow into the arc proper
        p = _nudge_into_arc(sys, curve_id, p)
        cls = classify_point(sys, curve_id, p)
    if cls.point_class not in (
        PointClass.SLIDING, PointClass.ESCAPING, PointClass.PSEUDO_EQUILIBRIUM,
    ):
        raise UndefinedSlidingError(f"cannot slide from a {cls.point_class.value} point")
    if cls.point_class is PointClass.ESCAPING and not allow_escaping:
        raise UndefinedSlidingError("escaping point reached integrate_sliding without policy")

    rhs = _make_sliding_rhs(sys, curve_id)
    stepper = _Stepper(rhs, p, opts, max_step)

    def project(q):
        x, y = q
        for _ in range(2):
            hv = h(x, y)
            gx, gy = gxf(x, y), gyf(x, y)
            g2 = gx * gx + gy * gy
            x -= hv * gx / g2
            y -= hv * gy / g2
        return (x, y)

    def lies(q):
        gx, gy = gxf(q[0], q[1]), gyf(q[0], q[1])
        v1 = y1.raw_pair()
        v2 = y2.raw_pair()
        l1 = gx * v1[0](q[0], q[1]) + gy * v1[1](q[0], q[1])
        l2 = gx * v2[0](q[0], q[1]) + gy * v2[1](q[0], q[1])
        if sys.velocity_scale is not None:
            g = sys.velocity_scale(domain.canonical(q))
            l1 *= g
            l2 *= g
        return l1, l2

    l1_0, l2_0 = lies(p)
    s1_0 = 1.0 if l1_0 > 0 else -1.0
    s2_0 = 1.0 if l2_0 > 0 else -1.0
    times = [0.0]
    pts = [p]
    raw = p  # un-canonicalized running point for stepping continuity

    def emit_to(q, t):
        a = pts[-1]
        b = domain.canonical(q)
        dist = domain.distance(a, b)
        n = max(1, int(math.ceil(dist / spacing)))
        t0 = times[-1]
        for j in range(1, n):
            w = j / n
            dx, dy = domain.displacement(a, b)
            times.append(t0 + (t - t0) * w)
            pts.append(domain.canonical((a[0] + w * dx, a[1] + w * dy)))
        times.append(t)
        pts.append(b)

    while True:
        if stepper.t >= t_max - 1e-14:
            seg = OrbitSegment("sliding_arc", 0.0, times[-1], times, pts, curve_id=curve_id)
            return seg, ("t_max", pts[-1])
        step = stepper.propose(t_max - stepper.t)
        q = project((stepper.x, stepper.y))
        stepper.restart_from(stepper.t, q)

        if domain.kind == "plane_rect" and not domain.contains(q):
            emit_to(q, stepper.t)
            seg = OrbitSegment("sliding_arc", 0.0, times[-1], times, pts, curve_id=curve_id)
            return seg, ("left_domain", pts[-1])

        l1, l2 = lies(q)
        if l1 * s1_0 < 0 or l2 * s2_0 < 0 or abs(l1) <= TAU_CLASS or abs(l2) <= TAU_CLASS:
            flipped = "positive" if (l1 * s1_0 < 0 or abs(l1) <= TAU_CLASS) else "negative"
            th, point = _locate_slide_tangency(
                domain, step, project, lies, flipped, s1_0, s2_0)
            t_ev = step.t0 + th * step.dt
            emit_to(point, t_ev)
            seg = OrbitSegment("sliding_arc", 0.0, times[-1], times, pts, curve_id=curve_id)
            return seg, ("tangency", pts[-1], flipped)

        zx, zy = rhs(q[0], q[1])
        znorm = math.hypot(zx, zy)
        if znorm <= PE_NORM_TOL or znorm * stepper.dt < 1e-14:
            emit_to(q, stepper.t)
            seg = OrbitSegment("sliding_arc", 0.0, times[-1], times, pts, curve_id=curve_id)
            return seg, ("pseudo_eq", pts[-1])

        emit_to(q, stepper.t)


def _locate_slide_tangency(domain, step, project, lies, flipped, s1_0, s2_0):
    idx = 0 if flipped == "positive" else 1
    ref = s1_0 if flipped == "positive" else s2_0

    def value(th):
        return lies(project(step.at(th)))[idx] * ref

    lo, hi = 0.0, 1.0
    v_lo = value(lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        v_mid = value(mid)
        if abs(v_mid) <= 1e-12:
            lo = hi = mid
            break
        if v_lo * v_mid <= 0:
            hi = mid
        else:
            lo, v_lo = mid, v_mid
        if hi - lo < 1e-16:
            break
    th = 0.5 * (lo + hi)
    return th, project(step.at(th))


# --------------------------------------------------------------------------- #
# sigma-event handling and the orbit driver
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class _EnterRegion:
    region_id: int
    marker: str | None = None  # crossing_event | escape_departure | None
    side: str | None = None
    choice: BranchChoice | None = None


@dataclass(frozen=True)
class _EnterSliding:
    curve_id: int
    allow_escaping: bool = False
    dwell: float | None = None
    exit_side: str | None = None
    choice: BranchChoice | None = None


@dataclass(frozen=True)
class _Stop:
    reason: str
    choice: BranchChoice | None = None


def _side_region(curve, side):
    return curve.positive_region if side == "positive" else curve.negative_region


def _off_sigma(side, lie):
    """Does a field on the given side move linearly off the manifold?"""
    return lie > TAU_CLASS if side == "positive" else lie < -TAU_CLASS


def _tangency_action(sys, curve_id, cls, p, t):
    """Continuation at a regular tangency.

    Preference order: the non-tangent field if it departs linearly; else the
    tangent field if its fold is visible (quadratic departure); else the
    point bounds a sliding arc and the orbit continues along the manifold.
    """
    curve = sys.curve(curve_id)
    tangent_side = cls.tangent_side
    other_side = "negative" if tangent_side == "positive" else "positive"
    lie_other = cls.lie_negative if tangent_side == "positive" else cls.lie_positive
    if _off_sigma(other_side, lie_other):
        return _EnterRegion(_side_region(curve, other_side))
    second = second_lie_value(sys, curve_id, tangent_side, p)
    visible = second > TAU_CLASS if tangent_side == "positive" else second < -TAU_CLASS
    if visible:
        return _EnterRegion(_side_region(curve, tangent_side))
    if abs(second) <= TAU_CLASS:
        return _Stop("degenerate_tangency")
    return _EnterSliding(curve_id)


def _escape_action(sys, curve_id, p, t, cursor):
    policy = cursor.next_escape()
    if policy.kind == "exit_immediately_up":
        choice = BranchChoice(t, p, "escape_exit", side="positive", dwell=0.0)
        return _EnterRegion(
            _side_region(sys.curve(curve_id), "positive"),
            marker="escape_departure", side="positive", choice=choice,
        )
    if policy.kind == "exit_immediately_down":
        choice = BranchChoice(t, p, "escape_exit", side="negative", dwell=0.0)
        return _EnterRegion(
            _side_region(sys.curve(curve_id), "negative"),
            marker="escape_departure", side="negative", choice=choice,
        )
    if policy.kind == "dwell_then_exit":
        choice = BranchChoice(t, p, "escape_exit", side=policy.side, dwell=policy.dwell)
        return _EnterSliding(
            curve_id, allow_escaping=True, dwell=policy.dwell,
            exit_side=policy.side, choice=choice,
        )
    choice = BranchChoice(t, p, "escape_exit", side=None, dwell=None)
    return _EnterSliding(curve_id, allow_escaping=True, choice=choice)


def handle_sigma_event(sys, curve_id, p, incoming_region, cursor, t=0.0):
    """Decide the continuation after the orbit touches a switching curve."""
    cls = classify_point(sys, curve_id, p)
    curve = sys.curve(curve_id)
    if cls.point_class is PointClass.CROSSING:
        side = "positive" if cls.lie_positive > 0 else "negative"
        return _EnterRegion(_side_region(curve, side), marker="crossing_event")
    if cls.point_class is PointClass.SLIDING:
        return _EnterSliding(curve_id)
    if cls.point_class is PointClass.ESCAPING:
        return _escape_action(sys, curve_id, p, t, cursor)
    if cls.point_class is PointClass.PSEUDO_EQUILIBRIUM:
        if cls.lie_positive < 0:  # rest point of the sliding flow
            return _Stop("pseudo_equilibrium")
        return _escape_action(sys, curve_id, p, t, cursor)
    if cls.point_class is PointClass.TANGENCY_DOUBLE:
        choice = BranchChoice(t, p, "double_tangency_stop")
        return _Stop("double_tangency", choice=choice)
    return _tangency_action(sys, curve_id, cls, p, t)


def _nudge_into_arc(sys, curve_id, p, step=1e-5):
    """Displace a tangency point slightly along Z_s so it classifies cleanly."""
    from .sigma import sliding_vector_field

    zx, zy = sliding_vector_field(sys, curve_id, p)
    norm = math.hypot(zx, zy)
    if norm == 0.0:
        return p
    q = (p[0] + step * zx / norm, p[1] + step * zy / norm)
    return sys.domain.canonical(_polish_onto_curve(sys, sys.curve(curve_id), q))


def _escaping_adjacent_tangencies(sys, resolution=512):
    """Escape-entry tangencies: the sliding flow points into an escaping arc.

    Only these can serve as graze-capture (ride) targets; at the other end of
    an arc the sliding flow immediately leaves it again.
    """
    from .sigma import find_tangency_points

    targets = []
    for curve in sys.curves:
        for tp in find_tangency_points(sys, curve.id, resolution):
            if tp.kind != "regular":
                continue
            try:
                probe = _nudge_into_arc(sys, curve.id, tp.position, step=1e-4)
                pcls = classify_point(sys, curve.id, probe)
            except FilippovError:
                continue
            if pcls.point_class is PointClass.ESCAPING:
                targets.append((tp, curve.id))
    return targets


def integrate_filippov(
    sys: FilippovSystem,
    p0,
    horizon: float,
    direction: str = "forward",
    policy=None,
    opts: IntegratorOptions | None = None,
    script=None,
    ride_targets=(),
    _cursor_out=None,
):
    """Produce one Filippov orbit under a deterministic branch policy.

    ``ride_targets`` is a sequence of (TangencyPoint, curve_id) pairs; when a
    regular arc passes within the capture radius of one of them, the policy
    cursor decides 'pass' (keep flying) or 'ride' (enter the manifold there,
    which is how an orbit enters an escaping region through its tangency).
    """
    if horizon <= 0:
        raise IntegrationError("horizon must be positive")
    opts = opts or IntegratorOptions()
    eff = sys if direction == "forward" else sys.reversed()
    cursor = policy if isinstance(policy, PolicyCursor) else PolicyCursor(policy, script)
    if _cursor_out is not None:
        _cursor_out.append(cursor)
    domain = eff.domain
    p = domain.canonical(p0)
    segments: list[OrbitSegment] = []
    choices: list[BranchChoice] = []
    terminal = None
    t = 0.0

    captures = [
        CaptureTarget(tp.position, opts.capture_radius, tag=(tp, cid))
        for tp, cid in ride_targets
    ]

    def add_marker(kind, point, detail=None):
        segments.append(OrbitSegment(kind, t, t, [t], [point], detail=detail or {}))

    def add_segment(seg):
        nonlocal t
        seg.t_start += t
        seg.t_end += t
        seg.times = [tt + t for tt in seg.times]
        t = seg.t_end
        segments.append(seg)

    # initial location
    where = eff.region_of(p)
    mode = ("sigma", where.curve_id, None) if isinstance(where, OnSigma) else ("region", where, None)
    pending_slide = None  # _EnterSliding currently being executed

    guard = 0
    while t < horizon - 1e-12 and terminal is None:
        guard += 1
        if guard > opts.max_segments:
            terminal = "segment_budget"
            break
        kind = mode[0]
        if kind == "region":
            region_id = mode[1]
            entry_curve = mode[2]
            # a target we are departing from must not instantly re-capture
            arc_captures = [
                c for c in captures if domain.distance(p, c.point) > 4.0 * c.radius
            ]
            seg, hit = integrate_regular(
                eff, p, region_id, horizon - t, opts, entry_curve=entry_curve,
                captures=arc_captures,
            )
            add_segment(seg)
            p = seg.end_point
            if hit[0] == "t_max":
                break
            if hit[0] == "left_domain":
                terminal = "left_domain"
                break
            if hit[0] == "curve":
                mode = ("sigma", hit[1], region_id)
                p = hit[2]
                continue
            # graze capture
            target, point = hit[1], hit[2]
            tp, cid = target.tag
            decision = cursor.next_ride()
            captures = [c for c in captures if c.tag is not target.tag]
            rode = False
            if decision == "ride":
                q = domain.canonical(_polish_onto_curve(eff, eff.curve(cid), point))
                q = _nudge_into_arc(eff, cid, q)
                entered = classify_point(eff, cid, q).point_class
                if entered in (PointClass.ESCAPING, PointClass.PSEUDO_EQUILIBRIUM):
                    p = q
                    choices.append(BranchChoice(t, p, "enter_escaping"))
                    action = _escape_action(eff, cid, p, t, cursor)
                    mode = ("action", action, cid)
                    rode = True
            if not rode:
                p = point
                mode = ("region", region_id, None)
            continue
        if kind == "sigma":
            curve_id, incoming = mode[1], mode[2]
            near = next(
                (c for c in captures if domain.distance(p, c.point) <= c.radius), None
            )
            if near is not None:
                # the point sits on an escape-entry tangency: the policy may
                # route the orbit onto the escaping arc instead of past it
                tp, ride_curve = near.tag
                decision = cursor.next_ride()
                captures = [c for c in captures if c.tag is not near.tag]
                if decision == "ride":
                    q = _nudge_into_arc(eff, ride_curve, p)
                    entered = classify_point(eff, ride_curve, q).point_class
                    if entered in (PointClass.ESCAPING, PointClass.PSEUDO_EQUILIBRIUM):
                        p = q
                        choices.append(BranchChoice(t, p, "enter_escaping"))
                        action = _escape_action(eff, ride_curve, p, t, cursor)
                        mode = ("action", action, ride_curve)
                        continue
            action = handle_sigma_event(eff, curve_id, p, incoming, cursor, t=t)
            mode = ("action", action, curve_id)
            continue
        # kind == "action"
        action, curve_id = mode[1], mode[2]
        if isinstance(action, _Stop):
            if action.choice is not None:
                choices.append(action.choice)
            add_marker("terminal", p, {"reason": action.reason})
            terminal = action.reason
            break
        if isinstance(action, _EnterRegion):
            if action.choice is not None:
                choices.append(action.choice)
            if action.marker:
                detail = {"side": action.side} if action.side else {}
                detail["curve"] = curve_id
                add_marker(action.marker, p, detail)
            mode = ("region", action.region_id, curve_id)
            continue
        # _EnterSliding
        if action.choice is not None:
            choices.append(action.choice)
        dwell_cap = horizon - t if action.dwell is None else min(action.dwell, horizon - t)
        seg, exit_info = integrate_sliding(
            eff, curve_id, p, dwell_cap, opts, allow_escaping=action.allow_escaping,
        )
        seg.detail["escaping"] = action.allow_escaping
        add_segment(seg)
        p = seg.end_point
        if exit_info[0] == "t_max":
            if action.dwell is not None and t < horizon - 1e-12:
                # dwell elapsed: leave to the chosen side
                side = action.exit_side or "positive"
                add_marker("escape_departure", p, {"side": side, "curve": curve_id})
                mode = ("region", _side_region(eff.curve(curve_id), side), curve_id)
                continue
            break
        if exit_info[0] == "pseudo_eq":
            add_marker("terminal", p, {"reason": "pseudo_equilibrium"})
            terminal = "pseudo_equilibrium"
            break
        if exit_info[0] == "left_domain":
            terminal = "left_domain"
            break
        # tangency exit: hand back to the event logic at the fold point
        choices.append(BranchChoice(t, p, "sliding_exit_at_tangency", side=exit_info[2]))
        mode = ("sigma", curve_id, None)
        continue

    if terminal == "left_domain":
        add_marker("terminal", p, {"reason": "left_domain"})

    return Orbit(
        initial_point=domain.canonical(p0),
        direction=direction,
        horizon=horizon,
        segments=segments,
        choices=choices,
        terminal=terminal,
        policy=cursor.describe(),
        script=list(cursor.script),
    )


def enumerate_branches(
    sys,
    p0,
    horizon,
    budget: int,
    dwell_grid=(0.0,),
    direction="forward",
    opts=None,
    ride_targets=(),
):
    """Depth-limited deterministic enumeration of the branch tree.

    At each escaping encounter the orbit forks over (dwell x side) plus
    slide-until-tangency; at each graze capture it forks over pass/ride.
    Returns at most ``budget`` orbits in breadth-first script order.
    """
    if budget < 1:
        raise IntegrationError("budget must be >= 1")
    escape_options = [
        BranchPolicy.dwell_exit(d, side) if d > 0 else (
            BranchPolicy.exit_up() if side == "positive" else BranchPolicy.exit_down()
        )
        for d in dwell_grid
        for side in ("positive", "negative")
    ]
    escape_options.append(BranchPolicy.slide_on())
    orbits = []
    queue = [[]]
    max_depth = 8
    while queue and len(orbits) < budget:
        script = queue.pop(0)
        sink = []
        orbit = integrate_filippov(
            sys, p0, horizon, direction=direction,
            policy=PolicyCursor(BranchPolicy.slide_on(), script),
            opts=opts, ride_targets=ride_targets, _cursor_out=sink,
        )
        cursor = sink[0]
        if cursor.overflow is not None and len(script) < max_depth:
            overflow_kind, _ = cursor.overflow
            if overflow_kind == "escape":
                for option in escape_options:
                    queue.append(script + [option])
            else:
                queue.append(script + ["pass"])
                queue.append(script + ["ride"])
            continue
        orbits.append(orbit)
    return orbits
