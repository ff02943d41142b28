"""Deterministic billiard dynamics inside one microstructure cell.

A cell is one period of the channel-wall relief, normalized to width 1.
A particle enters through the opening (the segment y=0, x in [0,1]) at
position r with direction angle phi measured from the opening, bounces
specularly off the cell boundary, and leaves through the opening with exit
angle psi.  Four parametric families are supported:

* ``Semicircle``    -- focusing half-disk dish (center (1/2,0), radius 1/2),
* ``FlatTop(h)``    -- dish of diameter 1-h next to a flat section of length h,
* ``MiddleWall(h)`` -- semicircle with a vertical wall of height h rising
                       from the bottom of the dish (h <= 1/2),
* ``FlatBottom(h)`` -- split semicircle with a flat floor of length h between
                       two quarter-circle arcs of radius (1-h)/2.

The semicircle map has a closed form: with n the number of bounces,
``psi = 2 n asin((2r-1) sin phi) + n pi - phi`` for r <= 1/2 and
``psi = 2 n asin((2r-1) sin phi) - (n-2) pi - phi`` for r > 1/2.  The bounce
count itself is closed-form here: with ``w = asin(|2r-1| sin phi)``,
``n = ceil((w + phi)/(pi - 2w))`` on the left half and
``n = 1 + floor((w + pi - phi)/(pi - 2w))`` on the right half.
A general ray/segment + ray/arc tracer provides an independent oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CellFamily",
    "CellGeometry",
    "EntryState",
    "ExitRecord",
    "GeometryError",
    "OnDiscontinuityError",
    "TrappedTrajectoryError",
    "GrazingError",
    "semicircle_exit_closed_form",
    "semicircle_discontinuities",
    "semicircle_map",
    "semicircle_bounce_count",
    "semicircle_pieces",
    "cell_symmetry_conjugate",
    "middle_wall_exit",
    "trace_cell",
    "trace_batch",
    "shallow_kernel_density",
    "SHALLOW_THRESHOLD",
    "DISCONTINUITY_TOL",
]

SHALLOW_THRESHOLD = math.pi / 12  # one/two-bounce regime holds with margin
DISCONTINUITY_TOL = 1e-12
GRAZING_TOL = 1e-14
MIN_ANGLE = 1e-9
DEFAULT_MAX_BOUNCES = 10 ** 6


class GeometryError(ValueError):
    """Invalid input to a billiard map."""


class OnDiscontinuityError(GeometryError):
    """Entry point within tolerance of the discontinuity set; caller perturbs."""


class TrappedTrajectoryError(GeometryError):
    """Bounce cap exceeded (near-tangential input)."""


class GrazingError(GeometryError):
    """Tangential ray/arc intersection within tolerance."""


class CellFamily(enum.Enum):
    SEMICIRCLE = "semicircle"
    FLAT_TOP = "flat_top"
    MIDDLE_WALL = "middle_wall"
    FLAT_BOTTOM = "flat_bottom"


@dataclass(frozen=True)
class CellGeometry:
    """One microstructure cell, width normalized to 1."""

    family: CellFamily
    h: float = 0.0

    def __post_init__(self):
        if not isinstance(self.family, CellFamily):
            object.__setattr__(self, "family", CellFamily(self.family))
        h = self.h
        if self.family is CellFamily.SEMICIRCLE:
            if h != 0.0:
                raise GeometryError("semicircle cell has no parameter")
        elif self.family is CellFamily.MIDDLE_WALL:
            if not 0.0 <= h <= 0.5:
                raise GeometryError("middle wall requires h = l/(2r) in [0, 1/2]")
        else:
            if not 0.0 <= h < 1.0:
                raise GeometryError("flat_top/flat_bottom require h in [0, 1)")

    @property
    def arc_radius(self) -> float:
        """Radius of the circular arcs in cell-width units."""
        if self.family is CellFamily.FLAT_BOTTOM:
            return 0.5 * (1.0 - self.h)
        if self.family is CellFamily.FLAT_TOP:
            return 0.5 * (1.0 - self.h)
        return 0.5


@dataclass(frozen=True)
class EntryState:
    """Entry position r in [0,1] and direction angle phi in (0,pi) from the opening."""

    r: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise GeometryError(f"entry position r={self.r} outside [0,1]")
        if not MIN_ANGLE < self.phi < math.pi - MIN_ANGLE:
            raise GeometryError(f"entry angle phi={self.phi} outside (0,pi)")


@dataclass(frozen=True)
class ExitRecord:
    """Exit angle psi in (0,pi), bounce count, optional reflection points."""

    psi: float
    bounces: int
    trace: Optional[list] = field(default=None, compare=False)


# ---------------------------------------------------------------------------
# Closed-form semicircle map


def semicircle_bounce_count(phi, r):
    """Vectorized bounce count for entry (phi, r), phi in (0, pi/2]."""
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    st = np.sin(phi)
    w = np.arcsin(np.abs(2.0 * r - 1.0) * st)
    denom = np.pi - 2.0 * w
    left = r <= 0.5
    n = np.where(
        left,
        np.ceil((w + phi) / denom),
        1.0 + np.floor((w + np.pi - phi) / denom),
    )
    return n.astype(np.int64) if n.ndim else int(n)


def _disc_distance(phi, r, n):
    """Vectorized distance from r to the nearest discontinuity of Psi_phi."""
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    n = np.asarray(n, dtype=float)
    st = np.sin(phi)
    left = r <= 0.5

    def r0(m):
        return 0.5 - np.sin((m * np.pi - phi) / (2 * m + 1)) / (2 * st)

    def r1(m):
        return 0.5 + np.sin(((m - 1) * np.pi + phi) / (2 * m + 1)) / (2 * st)

    # bracketing discontinuities of the piece containing r
    lo = np.where(left, r0(n), np.where(n > 1, r1(n - 1), r0(1)))
    hi = np.where(left, np.where(n > 1, r0(n - 1), r1(1)), r1(n))
    return np.minimum(np.abs(r - lo), np.abs(hi - r))


def semicircle_map(phi, r, check_discontinuity=False):
    """Vectorized exact semicircle exit map psi = Psi_phi(r).

    Accepts phi anywhere in (0,pi) (the phi > pi/2 half is reduced via the
    conjugation Psi_phi(r) = pi - Psi_{pi-phi}(1-r)).  Returns (psi, bounces).
    With ``check_discontinuity`` a boolean mask of inputs within
    ``DISCONTINUITY_TOL`` of the discontinuity set is returned as well.
    """
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    flip = phi > 0.5 * np.pi
    th = np.where(flip, np.pi - phi, phi)
    rr = np.where(flip, 1.0 - r, r)
    st = np.sin(th)
    n = semicircle_bounce_count(th, rr)
    nf = np.asarray(n, dtype=float)
    c = np.where(rr <= 0.5, nf * np.pi - th, -(nf - 2.0) * np.pi - th)
    psi = 2.0 * nf * np.arcsin((2.0 * rr - 1.0) * st) + c
    psi = np.where(flip, np.pi - psi, psi)
    if check_discontinuity:
        near = _disc_distance(th, rr, nf) < DISCONTINUITY_TOL
        return psi, n, near
    return psi, n


def semicircle_exit_closed_form(phi: float, r: float, n_hint: Optional[int] = None) -> ExitRecord:
    """Closed-form exit for the semicircle cell (Prop.-style branch formulas).

    phi must lie in (0, pi/2]; use ``cell_symmetry_conjugate`` for phi > pi/2.
    Raises ``OnDiscontinuityError`` for entries within ``DISCONTINUITY_TOL``
    of the discontinuity set (measure zero; callers resample).
    """
    if not MIN_ANGLE < phi <= 0.5 * math.pi:
        raise GeometryError(f"phi={phi} outside (0, pi/2]; use the symmetry conjugate")
    if not 0.0 <= r <= 1.0:
        raise GeometryError(f"r={r} outside [0,1]")
    psi, n, near = semicircle_map(phi, r, check_discontinuity=True)
    if near:
        raise OnDiscontinuityError(f"(phi={phi}, r={r}) on discontinuity set")
    n = int(n)
    if n_hint is not None and n_hint != n:
        raise GeometryError(f"n_hint={n_hint} inconsistent with computed n={n}")
    return ExitRecord(psi=float(psi), bounces=n)


def semicircle_discontinuities(phi: float, n_cap: int = 64):
    """Discontinuity positions of r -> Psi_phi(r), phi in (0, pi/2).

    For phi in (0, pi/4): the single point r' = 1/2 + sin(phi/3)/(2 sin phi).
    For phi in [pi/4, pi/2): the points r0^(n), r1^(n) up to ``n_cap``,
    intersected with [0,1] and sorted.
    """
    if not 0.0 < phi < 0.5 * math.pi:
        raise GeometryError(f"phi={phi} outside (0, pi/2)")
    st = math.sin(phi)
    if phi < 0.25 * math.pi:
        return [0.5 + math.sin(phi / 3.0) / (2.0 * st)]
    pts = []
    for n in range(1, n_cap + 1):
        lo = 0.5 - math.sin((n * math.pi - phi) / (2 * n + 1)) / (2 * st)
        hi = 0.5 + math.sin(((n - 1) * math.pi + phi) / (2 * n + 1)) / (2 * st)
        if lo > 0.0:
            pts.append(lo)
        if hi < 1.0:
            pts.append(hi)
        if lo <= 0.0 and hi >= 1.0:
            break
    return sorted(pts)


def semicircle_pieces(phi: float, r_eps: float = 1e-11):
    """Monotone pieces (r_lo, r_hi, n, c) of r -> Psi_phi(r) for phi in (0, pi/2).

    On each piece ``Psi = 2 n asin((2r-1) sin phi) + c`` is strictly increasing;
    the pieces partition [0,1] up to a residual of measure < 2*r_eps near the
    corner accumulation points (steep phi only).
    """
    st = math.sin(phi)
    if phi < 0.25 * math.pi:
        rp = 0.5 + math.sin(phi / 3.0) / (2.0 * st)
        return [(0.0, rp, 1, math.pi - phi), (rp, 1.0, 2, -phi)]

    def r0(n):
        return 0.5 - math.sin((n * math.pi - phi) / (2 * n + 1)) / (2 * st)

    def r1(n):
        return 0.5 + math.sin(((n - 1) * math.pi + phi) / (2 * n + 1)) / (2 * st)

    pieces = [(max(r0(1), 0.0), min(r1(1), 1.0), 1, math.pi - phi)]
    n = 2
    while True:
        lo, hi = r0(n), r0(n - 1)
        if hi <= r_eps:
            break
        pieces.append((max(lo, 0.0), hi, n, n * math.pi - phi))
        if lo <= 0.0:
            break
        n += 1
    n = 2
    while True:
        lo, hi = r1(n - 1), r1(n)
        if lo >= 1.0 - r_eps:
            break
        pieces.append((lo, min(hi, 1.0), n, -(n - 2) * math.pi - phi))
        if hi >= 1.0:
            break
        n += 1
    return pieces


def cell_symmetry_conjugate(phi: float, r: float):
    """The involution (phi, r) -> (pi - phi, 1 - r) behind Psi_phi(r) = pi - Psi_{pi-phi}(1-r)."""
    return math.pi - phi, 1.0 - r


# ---------------------------------------------------------------------------
# Closed-form chord path and the middle-wall parity dispatch


def _chord_path(phi: float, r: float):
    """Bounce points of the no-wall semicircle trajectory, in closed form.

    Returns (points, psi, n): points = [entry, P_1, ..., P_n, exit] as (x, y)
    pairs.  The bounce points advance around the circle by the constant angle
    pi + 2*asin((2r-1) sin phi) per bounce.
    """
    psi, n, near = semicircle_map(phi, r, check_discontinuity=True)
    if near:
        raise OnDiscontinuityError(f"(phi={phi}, r={r}) on discontinuity set")
    n = int(n)
    psi = float(psi)
    st, ct = math.sin(phi), math.cos(phi)
    x0 = r - 0.5
    # first circle hit: t = -x0 cos(phi) + sqrt(R^2 - (x0 sin phi)^2)
    disc = 0.25 - (x0 * st) ** 2
    t = -x0 * ct + math.sqrt(max(disc, 0.0))
    p1 = (r + t * ct, -t * st)
    alpha1 = math.atan2(p1[1], p1[0] - 0.5)
    delta = math.pi + 2.0 * math.asin((2.0 * r - 1.0) * st)
    pts = [(r, 0.0)]
    for m in range(n):
        a = alpha1 + m * delta
        pts.append((0.5 + 0.5 * math.cos(a), 0.5 * math.sin(a)))
    xn, yn = pts[-1]
    exit_x = xn - yn / math.tan(psi)
    pts.append((exit_x, 0.0))
    return pts, psi, n


def middle_wall_exit(cell: CellGeometry, entry: EntryState) -> ExitRecord:
    """Exit map for the middle-wall cell via the mirror-parity dispatch.

    The no-wall chord path is computed in closed form; each crossing of the
    wall segment {x=1/2, -1/2 <= y <= -1/2+h} is a specular wall hit, and an
    odd number of hits conjugates the exit angle (psi -> pi - psi, the
    symmetry-conjugated semicircle map).  Even counts return the plain map.
    """
    if cell.family is not CellFamily.MIDDLE_WALL:
        raise GeometryError("middle_wall_exit requires a MiddleWall cell")
    pts, psi, n = _chord_path(entry.phi, entry.r)
    y_top = -0.5 + cell.h
    crossings = 0
    for (x1, y1), (x2, y2) in zip(pts[:-1], pts[1:]):
        if (x1 - 0.5) * (x2 - 0.5) < 0.0:
            yc = y1 + (0.5 - x1) * (y2 - y1) / (x2 - x1)
            if yc <= y_top:
                crossings += 1
    if crossings % 2:
        psi = math.pi - psi
    return ExitRecord(psi=psi, bounces=n + crossings)


# ---------------------------------------------------------------------------
# General ray tracer (independent geometric oracle)


def _cell_elements(cell: CellGeometry):
    """Boundary elements: list of ('arc', cx, cy, R, x_lo, x_hi) and
    ('seg', x1, y1, x2, y2, nx, ny).  The opening y=0 is handled separately."""
    f = cell.family
    if f is CellFamily.SEMICIRCLE:
        return [("arc", 0.5, 0.0, 0.5, 0.0, 1.0)]
    if f is CellFamily.MIDDLE_WALL:
        return [
            ("arc", 0.5, 0.0, 0.5, 0.0, 1.0),
            ("seg", 0.5, -0.5, 0.5, -0.5 + cell.h, 1.0, 0.0),
        ]
    if f is CellFamily.FLAT_BOTTOM:
        b = 0.5 * (1.0 - cell.h)
        a = 0.5 * (1.0 + cell.h)
        return [
            ("arc", b, 0.0, b, 0.0, b),
            ("arc", a, 0.0, b, a, 1.0),
            ("seg", b, -b, a, -b, 0.0, 1.0),
        ]
    # flat top: dish of diameter 1-h on [h, 1]; the flat part is the opening
    # itself and is handled by trace_cell as an instant specular bounce.
    c = 0.5 * (1.0 + cell.h)
    return [("arc", c, 0.0, 0.5 * (1.0 - cell.h), cell.h, 1.0)]


def trace_cell(
    cell: CellGeometry,
    entry: EntryState,
    max_bounces: int = DEFAULT_MAX_BOUNCES,
    record_trace: bool = False,
) -> ExitRecord:
    """Exact specular ray tracing through one cell (reference oracle).

    Raises ``TrappedTrajectoryError`` when the bounce cap is exceeded and
    ``GrazingError`` on a tangential arc intersection.
    """
    if max_bounces < 1:
        raise GeometryError("max_bounces must be >= 1")
    phi, r = entry.phi, entry.r
    if cell.family is CellFamily.FLAT_TOP:
        if r < cell.h:
            # entry on the flat section: instant specular reflection
            return ExitRecord(psi=phi, bounces=1, trace=[(r, 0.0)] if record_trace else None)
        sub = EntryState(r=(r - cell.h) / (1.0 - cell.h), phi=phi)
        rec = trace_cell(CellGeometry(CellFamily.SEMICIRCLE), sub, max_bounces, record_trace)
        if record_trace:
            scaled = [(cell.h + (1.0 - cell.h) * x, (1.0 - cell.h) * y) for x, y in rec.trace]
            return ExitRecord(psi=rec.psi, bounces=rec.bounces, trace=scaled)
        return rec

    elements = _cell_elements(cell)
    px, py = float(r), 0.0
    dx, dy = math.cos(phi), -math.sin(phi)
    pts = [(px, py)] if record_trace else None
    t_eps = 1e-13
    for bounce in range(max_bounces + 1):
        best_t, best_el, best_n = math.inf, None, None
        for el in elements:
            if el[0] == "arc":
                _, cx, cy, R, xlo, xhi = el
                ox, oy = px - cx, py - cy
                beta = ox * dx + oy * dy
                p_imp = ox * dy - oy * dx  # impact parameter (signed)
                disc = R * R - p_imp * p_imp
                if disc < GRAZING_TOL:
                    if -GRAZING_TOL < disc:
                        raise GrazingError(
                            f"tangential arc intersection (|disc|={abs(disc):.2e})")
                    continue
                sq = math.sqrt(disc)
                for t in (-beta - sq, -beta + sq):
                    if t_eps < t < best_t:
                        hx, hy = px + t * dx, py + t * dy
                        if hy <= 1e-15 and xlo - 1e-12 <= hx <= xhi + 1e-12:
                            nx, ny = (hx - cx) / R, (hy - cy) / R
                            best_t, best_el, best_n = t, el, (nx, ny)
            else:
                _, x1, y1, x2, y2, nx, ny = el
                denom = dx * nx + dy * ny
                if abs(denom) < 1e-300:
                    continue
                t = ((x1 - px) * nx + (y1 - py) * ny) / denom
                if t_eps < t < best_t:
                    hx, hy = px + t * dx, py + t * dy
                    # within the segment extent (segments are axis-aligned)
                    if x1 == x2:
                        inside = min(y1, y2) - 1e-12 <= hy <= max(y1, y2) + 1e-12
                    else:
                        inside = min(x1, x2) - 1e-12 <= hx <= max(x1, x2) + 1e-12
                    if inside:
                        best_t, best_el, best_n = t, el, (nx, ny)
        # exit through the opening y=0?
        if dy > 0.0:
            t_exit = -py / dy
            if t_eps < t_exit < best_t:
                psi = math.atan2(dy, dx)
                if record_trace:
                    pts.append((px + t_exit * dx, 0.0))
                return ExitRecord(psi=psi, bounces=bounce, trace=pts)
        if best_el is None:
            raise GeometryError("ray escaped the cell boundary (numerical anomaly)")
        px, py = px + best_t * dx, py + best_t * dy
        nx, ny = best_n
        dn = dx * nx + dy * ny
        dx, dy = dx - 2.0 * dn * nx, dy - 2.0 * dn * ny
        if record_trace:
            pts.append((px, py))
    raise TrappedTrajectoryError(f"bounce cap {max_bounces} exceeded")


def trace_batch(cell: CellGeometry, phi, r, max_bounces: int = 4096):
    """Vectorized tracer: returns (psi, bounces) arrays; NaN marks trapped rays.

    Same geometry as ``trace_cell`` (masked lockstep over all rays).
    """
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    m = phi.shape[0]
    psi = np.full(m, np.nan)
    bounces = np.zeros(m, dtype=np.int64)

    if cell.family is CellFamily.FLAT_TOP:
        flat = r < cell.h
        psi[flat] = phi[flat]
        bounces[flat] = 1
        sub_r = (r[~flat] - cell.h) / (1.0 - cell.h)
        ps, bs = trace_batch(CellGeometry(CellFamily.SEMICIRCLE), phi[~flat], sub_r, max_bounces)
        psi[~flat] = ps
        bounces[~flat] = bs
        return psi, bounces

    elements = _cell_elements(cell)
    px, py = r.copy(), np.zeros(m)
    dx, dy = np.cos(phi), -np.sin(phi)
    active = np.ones(m, dtype=bool)
    t_eps = 1e-13
    for _ in range(max_bounces + 1):
        if not active.any():
            break
        best_t = np.full(m, np.inf)
        best_nx = np.zeros(m)
        best_ny = np.zeros(m)
        for el in elements:
            if el[0] == "arc":
                _, cx, cy, R, xlo, xhi = el
                ox, oy = px - cx, py - cy
                beta = ox * dx + oy * dy
                p_imp = ox * dy - oy * dx
                disc = R * R - p_imp * p_imp
                ok = disc > GRAZING_TOL
                sq = np.sqrt(np.where(ok, disc, 1.0))
                for sgn in (-1.0, 1.0):
                    t = -beta + sgn * sq
                    hx = px + t * dx
                    hy = py + t * dy
                    hit = (
                        ok & active & (t > t_eps) & (t < best_t)
                        & (hy <= 1e-15) & (hx >= xlo - 1e-12) & (hx <= xhi + 1e-12)
                    )
                    best_t = np.where(hit, t, best_t)
                    best_nx = np.where(hit, (hx - cx) / R, best_nx)
                    best_ny = np.where(hit, (hy - cy) / R, best_ny)
            else:
                _, x1, y1, x2, y2, nx, ny = el
                denom = dx * nx + dy * ny
                safe = np.abs(denom) > 1e-300
                t = np.where(safe, ((x1 - px) * nx + (y1 - py) * ny) / np.where(safe, denom, 1.0), np.inf)
                hx = px + t * dx
                hy = py + t * dy
                if x1 == x2:
                    inside = (hy >= min(y1, y2) - 1e-12) & (hy <= max(y1, y2) + 1e-12)
                else:
                    inside = (hx >= min(x1, x2) - 1e-12) & (hx <= max(x1, x2) + 1e-12)
                hit = active & safe & (t > t_eps) & (t < best_t) & inside
                best_t = np.where(hit, t, best_t)
                best_nx = np.where(hit, nx, best_nx)
                best_ny = np.where(hit, ny, best_ny)
        # exit test
        up = dy > 0.0
        t_exit = np.where(up, -py / np.where(up, dy, 1.0), np.inf)
        exiting = active & up & (t_exit > t_eps) & (t_exit < best_t)
        psi[exiting] = np.arctan2(dy[exiting], dx[exiting])
        active &= ~exiting
        mv = active & np.isfinite(best_t)
        px = np.where(mv, px + best_t * dx, px)
        py = np.where(mv, py + best_t * dy, py)
        dn = dx * best_nx + dy * best_ny
        dx = np.where(mv, dx - 2.0 * dn * best_nx, dx)
        dy = np.where(mv, dy - 2.0 * dn * best_ny, dy)
        bounces[mv] += 1
    return psi, bounces


# ---------------------------------------------------------------------------
# Shallow-angle transition density


def shallow_kernel_density(cell: CellGeometry, phi: float, psi, threshold: float = SHALLOW_THRESHOLD):
    """Transition density of Psi_phi(R), R ~ U[0,1], w.r.t. d(psi), shallow phi.

    Two support arcs: the one-bounce arc near pi and the two-bounce arc near 0.
    For the semicircle the pieces are exact for any phi < pi/4:
    ``cos((psi+phi-pi)/2) / (4 sin phi)`` on (pi-3phi, pi-phi/3) and
    ``cos((psi+phi)/4) / (8 sin phi)`` on (phi/3, 3phi).
    For the flat bottom the same pieces scale by (1-h) resp. (1-h)^2/(1+h) and
    the support endpoints become (3+h)/(1-h) and (1-h)/(3+h) times phi
    (asymptotic in phi; the integral is 1 + O(phi^2)).
    """
    if phi >= threshold:
        raise GeometryError(
            f"shallow-angle formula invalid: phi={phi} >= threshold {threshold}")
    if cell.family is CellFamily.SEMICIRCLE:
        h = 0.0
        k1, k2 = 1.0, 1.0
    elif cell.family is CellFamily.FLAT_BOTTOM:
        h = cell.h
        k1 = 1.0 - h
        k2 = (1.0 - h) ** 2 / (1.0 + h)
    else:
        raise GeometryError("shallow density available for Semicircle/FlatBottom only")
    A = (3.0 + h) / (1.0 - h)
    B = (1.0 - h) / (3.0 + h)
    psi = np.asarray(psi, dtype=float)
    st = math.sin(phi)
    out = np.zeros_like(psi)
    arc1 = (psi > math.pi - A * phi) & (psi < math.pi - B * phi)
    arc2 = (psi > B * phi) & (psi < A * phi)
    out = np.where(arc1, out + k1 * np.cos(0.5 * (psi + phi - math.pi)) / (4.0 * st), out)
    out = np.where(arc2, out + k2 * np.cos(0.25 * (psi + phi)) / (8.0 * st), out)
    return out
