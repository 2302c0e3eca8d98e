'''
Ray marching through the distance field: straight sphere tracing, the
farthest crossing of an offset hull, curved rays that bend onto the surface
and the first-order propagation of seed perturbations along curved rays.

Curved rays integrate the phase flow
    dp/dt = phi(p) v/|v|,    dv/dt = -grad phi(p)
with a symplectic Euler step of size h:
    v' = v - h grad phi(p),  p' = p + h phi(p) v'/|v'|
'''
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg

from inversevis.utils.geometry_io import Mesh, interpolate_vertex_values
from inversevis.utils.helpers import normalize_rows
from inversevis.utils.sdf_grid import (HIT_TOLERANCE, SdfGrid, SurfacePoint,
                                       distance_and_gradient, gradient,
                                       hessian, sample_distance,
                                       snap_to_surface)


# terminal state codes
SURFACE_HIT = 0
ESCAPED = 1
MAX_STEPS = 2
STALLED = 3
TERMINAL_STATES = ('surface_hit', 'escaped', 'max_steps', 'stalled')

HULL_PHI0 = 0.4
# seeds whose unscaled direction is shorter than this fall along -grad phi
DEGENERATE_SEED = 1.0e-5
VELOCITY_EPS = 1.0e-8
# eigenvector bases worse conditioned than this use scipy's expm instead
EIG_COND_LIMIT = 1.0e8
HULL_SAMPLES_PER_BLOCK = 64


@dataclass(frozen=True)
class TraceSettings:
    '''
    Tolerances and limits shared by straight and curved rays
    '''
    tolerance: float = HIT_TOLERANCE
    step_size: float = 0.1
    max_steps: int = 2000
    sphere_max_steps: int = 512
    escape_radius: float = 2.4
    stall_window: int = 50
    stall_decrease: float = 1.0e-6
    hull_bisection_steps: int = 20

    def __post_init__(self):
        error_channel = logging.getLogger('ray_engine.TraceSettings')
        positives = {'tolerance': self.tolerance,
                     'step_size': self.step_size,
                     'max_steps': self.max_steps,
                     'sphere_max_steps': self.sphere_max_steps,
                     'escape_radius': self.escape_radius,
                     'stall_window': self.stall_window}
        for key, val in positives.items():
            if not val > 0:
                err_str = f'trace setting {key} must be > 0, got {val}'
                error_channel.error(err_str)
                raise ValueError(err_str)
        if self.stall_decrease < 0 or self.hull_bisection_steps < 0:
            err_str = 'stall_decrease and hull_bisection_steps must be >= 0'
            error_channel.error(err_str)
            raise ValueError(err_str)


@dataclass(frozen=True)
class Hit:
    '''
    Outcome of a single traced ray
    '''
    found: bool
    position: np.ndarray
    ray_length: float
    steps: int
    terminal: str
    # resolved triangle, weights and scalar when a mesh was supplied
    point: SurfacePoint | None = None


@dataclass(frozen=True)
class HitBatch:
    '''
    Outcome of a batch of straight rays, one row per ray
    '''
    found: np.ndarray
    position: np.ndarray
    ray_length: np.ndarray
    steps: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.found)

    def hit(self, i: int, point: SurfacePoint | None = None) -> Hit:
        return Hit(bool(self.found[i]), self.position[i].copy(),
                   float(self.ray_length[i]), int(self.steps[i]),
                   TERMINAL_STATES[self.terminal[i]], point)


@dataclass(frozen=True)
class CurvedTrajectory:
    '''
    Recorded states of one curved ray

    positions and velocities hold k + 1 states for k steps; jacobians and
    step_matrices hold one 6x6 matrix per step.
    '''
    positions: np.ndarray
    velocities: np.ndarray
    step_size: float
    terminal: str
    degenerate: bool
    jacobians: np.ndarray | None = None
    step_matrices: np.ndarray | None = None
    dv0_dalpha: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.positions) - 1

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def found(self) -> bool:
        return self.terminal == 'surface_hit'


@dataclass(frozen=True)
class CurvedBatch:
    '''
    End states of a batch of curved rays

    psi holds the accumulated 6x6 perturbation propagator per ray when
    sensitivities were requested; valid is False where the velocity
    normalization became singular along the way.
    '''
    found: np.ndarray
    position: np.ndarray
    steps: np.ndarray
    terminal: np.ndarray
    psi: np.ndarray | None = None
    valid: np.ndarray | None = None


@dataclass(frozen=True)
class Perturbation:
    '''Propagated phase-space perturbation'''
    psi: np.ndarray
    # change of the end position per unit seed scale, None when unknown
    dp_dalpha: np.ndarray | None = None


def _as_rays(origins, directions):
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = normalize_rows(
        np.asarray(directions, dtype=np.float64).reshape(-1, 3))
    return origins, directions


def _box_interval(origins, directions, extent):
    '''
    Slab test against the cube [-extent, extent]^3

    Returns
    -------
    t_near, t_far: np.ndarray
        Ray parameters of entry and exit; t_far < t_near means a miss
    '''
    inside = np.abs(origins) <= extent
    with np.errstate(divide='ignore', invalid='ignore'):
        t_a = (-extent - origins) / directions
        t_b = (extent - origins) / directions
    t_near = np.minimum(t_a, t_b)
    t_far = np.maximum(t_a, t_b)
    parallel = directions == 0.0
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    return t_near.max(axis=1), t_far.min(axis=1)


def sphere_trace_batch(grid: SdfGrid, origins, directions,
                       settings: TraceSettings | None = None,
                       min_length: float = 0.0) -> HitBatch:
    '''
    March straight rays by |phi| until |phi| <= tolerance

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    origins, directions: array_like
        (n, 3) ray origins and directions (normalized here)
    settings: TraceSettings
        Hit tolerance and step limit
    min_length: float
        Surface hits closer than this to the origin are stepped through

    Returns
    -------
    _: HitBatch
        Raw (unsnapped) hit positions and terminal states
    '''
    settings = settings or TraceSettings()
    tol = settings.tolerance
    origins, directions = _as_rays(origins, directions)
    n_rays = len(origins)

    t_near, t_far = _box_interval(origins, directions, grid.extent)
    start = np.maximum(t_near, 0.0)
    length = start.copy()
    position = origins + np.where(np.isfinite(start), start, 0.0)[:, None] \
        * directions

    found = np.zeros(n_rays, dtype=bool)
    steps = np.zeros(n_rays, dtype=np.int64)
    terminal = np.full(n_rays, ESCAPED, dtype=np.int8)
    last_abs = np.full(n_rays, np.inf)
    prev_abs = np.full(n_rays, np.inf)

    active = np.flatnonzero(t_far > start)
    for _ in range(settings.sphere_max_steps):
        if active.size == 0:
            break
        phi = sample_distance(grid, position[active])
        abs_phi = np.abs(phi)

        bad = ~np.isfinite(phi)
        hit = ~bad & (abs_phi <= tol) & (length[active] >= min_length)
        terminal[active[bad]] = STALLED
        found[active[hit]] = True
        terminal[active[hit]] = SURFACE_HIT

        keep = ~(bad | hit)
        idx = active[keep]
        step = np.maximum(abs_phi[keep], tol)
        position[idx] += step[:, None] * directions[idx]
        length[idx] += step
        steps[idx] += 1
        prev_abs[idx] = last_abs[idx]
        last_abs[idx] = abs_phi[keep]

        out = length[idx] > t_far[idx]
        terminal[idx[out]] = ESCAPED
        active = idx[~out]

    if active.size:
        shrinking = last_abs[active] < prev_abs[active]
        terminal[active] = np.where(shrinking, STALLED, MAX_STEPS)

    return HitBatch(found, position, length, steps, terminal)


def resolve_hits(grid: SdfGrid, mesh: Mesh, positions, found):
    '''
    Snap found hits onto the mesh

    Returns
    -------
    positions, triangles, bary, scalars
        Snapped positions, triangle indices (-1 where not found), weights and
        mesh scalars (NaN where not found)
    '''
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n_rays = len(positions)
    out_pos = np.full((n_rays, 3), np.nan)
    out_tri = np.full(n_rays, -1, dtype=np.int64)
    out_bary = np.full((n_rays, 3), np.nan)
    out_scalar = np.full(n_rays, np.nan)

    rows = np.flatnonzero(found)
    if rows.size:
        snapped, tri, bary = snap_to_surface(grid, mesh, positions[rows])
        out_pos[rows] = snapped
        out_tri[rows] = tri
        out_bary[rows] = bary
        out_scalar[rows] = interpolate_vertex_values(mesh, mesh.scalars,
                                                     tri, bary)
    return out_pos, out_tri, out_bary, out_scalar


def _resolved_point(grid, mesh, batch, i):
    if mesh is None or not batch.found[i]:
        return None
    pos, tri, bary, scalar = resolve_hits(grid, mesh, batch.position[i:i + 1],
                                          batch.found[i:i + 1])
    return SurfacePoint(pos[0], int(tri[0]), bary[0], float(scalar[0]))


def sphere_trace(grid: SdfGrid, origin, direction,
                 settings: TraceSettings | None = None,
                 mesh: Mesh | None = None) -> Hit:
    '''
    Sphere trace a single straight ray

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    origin, direction: array_like
        (3,) ray origin and direction
    settings: TraceSettings
        Hit tolerance and step limit
    mesh: Mesh
        When given, the hit is resolved to a SurfacePoint

    Returns
    -------
    _: Hit
        found is False for escaped, max_steps and stalled rays
    '''
    batch = sphere_trace_batch(grid, origin, direction, settings)
    return batch.hit(0, _resolved_point(grid, mesh, batch, 0))


def farthest_hull_hit_batch(grid: SdfGrid, origins, directions,
                            phi0: float = HULL_PHI0,
                            settings: TraceSettings | None = None):
    '''
    Farthest crossing of the hull phi = phi0 along straight rays

    Every ray is sampled at half-voxel spacing through the grid cube; the
    last sign change of phi - phi0 is refined by bisection.

    Returns
    -------
    points: np.ndarray
        (n, 3) crossing points, NaN where the hull is missed
    found: np.ndarray
        (n,) bool
    '''
    if not phi0 > 0:
        err_str = f'hull offset must be > 0, got {phi0}'
        logging.getLogger('ray_engine.farthest_hull_hit').error(err_str)
        raise ValueError(err_str)

    settings = settings or TraceSettings()
    origins, directions = _as_rays(origins, directions)
    n_rays = len(origins)

    t_near, t_far = _box_interval(origins, directions, grid.extent)
    start = np.maximum(t_near, 0.0)
    idx = np.flatnonzero(t_far > start)
    bracket_lo = np.full(n_rays, np.nan)
    bracket_hi = np.full(n_rays, np.nan)

    def offset_distance(rows, t):
        pts = origins[rows] + t[:, None] * directions[rows]
        return sample_distance(grid, pts) - phi0

    if idx.size:
        dt = 0.5 * grid.voxel_size
        n_samples = int(np.ceil(np.max(t_far[idx] - start[idx]) / dt))
        prev_t = start[idx].copy()
        prev_f = offset_distance(idx, prev_t)

        for k0 in range(1, n_samples + 1, HULL_SAMPLES_PER_BLOCK):
            ks = np.arange(k0, min(k0 + HULL_SAMPLES_PER_BLOCK,
                                   n_samples + 1))
            ts = np.minimum(start[idx, None] + ks[None, :] * dt,
                            t_far[idx, None])
            rows = np.repeat(idx, len(ks))
            f = offset_distance(rows, ts.ravel()).reshape(ts.shape)

            t_all = np.concatenate([prev_t[:, None], ts], axis=1)
            f_all = np.concatenate([prev_f[:, None], f], axis=1)
            change = (f_all[:, :-1] > 0) != (f_all[:, 1:] > 0)
            has_change = change.any(axis=1)
            last = change.shape[1] - 1 - np.argmax(change[:, ::-1], axis=1)

            sel = np.flatnonzero(has_change)
            bracket_lo[idx[sel]] = t_all[sel, last[sel]]
            bracket_hi[idx[sel]] = t_all[sel, last[sel] + 1]
            prev_t = ts[:, -1]
            prev_f = f[:, -1]

    found = np.isfinite(bracket_lo)
    points = np.full((n_rays, 3), np.nan)
    rows = np.flatnonzero(found)
    if rows.size:
        lo = bracket_lo[rows]
        hi = bracket_hi[rows]
        f_lo = offset_distance(rows, lo)
        for _ in range(settings.hull_bisection_steps):
            mid = 0.5 * (lo + hi)
            f_mid = offset_distance(rows, mid)
            same = (f_mid > 0) == (f_lo > 0)
            lo = np.where(same, mid, lo)
            f_lo = np.where(same, f_mid, f_lo)
            hi = np.where(same, hi, mid)
        t_hit = 0.5 * (lo + hi)
        points[rows] = origins[rows] + t_hit[:, None] * directions[rows]
    return points, found


def farthest_hull_hit(grid: SdfGrid, origin, direction,
                      phi0: float = HULL_PHI0,
                      settings: TraceSettings | None = None):
    '''
    Farthest point along a straight ray where phi = phi0

    Returns
    -------
    _: np.ndarray or None
        (3,) crossing point, None when the ray misses the hull
    '''
    points, found = farthest_hull_hit_batch(grid, origin, direction, phi0,
                                            settings)
    return points[0] if found[0] else None


def seed_directions(grads, view_dirs):
    '''
    Unscaled seed velocities g x (r x g) for (n, 3) gradients and view
    directions

    Returns
    -------
    directions: np.ndarray
        (n, 3), zero where degenerate
    degenerate: np.ndarray
        (n,) True where the direction is shorter than DEGENERATE_SEED
    '''
    grads = np.asarray(grads, dtype=np.float64).reshape(-1, 3)
    view_dirs = np.asarray(view_dirs, dtype=np.float64).reshape(-1, 3)
    directions = np.cross(grads, np.cross(view_dirs, grads))
    degenerate = np.linalg.norm(directions, axis=1) < DEGENERATE_SEED
    directions[degenerate] = 0.0
    return directions, degenerate


def seed_velocity(grid: SdfGrid, hull_point, view_dir, alpha: float):
    '''
    Initial velocity of the curved ray leaving a hull point

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    hull_point: array_like
        (3,) point on the hull
    view_dir: array_like
        (3,) unit direction of the incoming pixel ray
    alpha: float
        Seed scale

    Returns
    -------
    v0: np.ndarray
        alpha g x (r x g), zero when degenerate
    degenerate: bool
        True when the ray should fall along -grad phi instead
    '''
    grad = gradient(grid, hull_point)
    directions, degenerate = seed_directions(grad, view_dir)
    return alpha * directions[0], bool(degenerate[0])


def velocity_sensitivity(grid: SdfGrid, hull_point, view_dir) -> np.ndarray:
    '''Derivative of the seed velocity with respect to alpha'''
    directions, _ = seed_directions(gradient(grid, hull_point), view_dir)
    return directions[0]


def _velocity_normalization(vel):
    '''d(v/|v|)/dv for (n, 3) velocities'''
    speed = np.linalg.norm(vel, axis=1)
    eye = np.eye(3)[None, :, :]
    return eye / speed[:, None, None] - \
        vel[:, :, None] * vel[:, None, :] / speed[:, None, None] ** 3


def _flow_jacobians(phi, grad, hess, vel, fall_line):
    '''
    Jacobians of the phase flow for (n,) states; fall-line states use the
    flow -phi grad/|grad| which does not depend on v
    '''
    n_states = len(phi)
    jac = np.zeros((n_states, 6, 6))
    jac[:, 3:, :3] = -hess

    moving = ~fall_line
    if moving.any():
        vel_m = vel[moving]
        v_hat = vel_m / np.linalg.norm(vel_m, axis=1)[:, None]
        jac[moving, :3, :3] = v_hat[:, :, None] * grad[moving][:, None, :]
        jac[moving, :3, 3:] = phi[moving][:, None, None] * \
            _velocity_normalization(vel_m)

    if fall_line.any():
        g = grad[fall_line]
        g_norm = np.linalg.norm(g, axis=1)
        safe = np.where(g_norm > 0, g_norm, 1.0)
        g_hat = g / safe[:, None]
        proj = np.eye(3)[None] - g_hat[:, :, None] * g_hat[:, None, :]
        jac[fall_line, :3, :3] = -(g_hat[:, :, None] * g[:, None, :] +
                                   phi[fall_line][:, None, None] *
                                   proj @ hess[fall_line] /
                                   safe[:, None, None])
    return jac


def _expm_batch(mats):
    '''Matrix exponentials through an eigen-decomposition'''
    vals, vecs = np.linalg.eig(mats)
    with np.errstate(all='ignore'):
        cond = np.linalg.cond(vecs)
    ok = np.isfinite(cond) & (cond < EIG_COND_LIMIT)

    out = np.empty_like(mats)
    if ok.any():
        inv = np.linalg.inv(vecs[ok])
        out[ok] = np.real(vecs[ok] @ (np.exp(vals[ok])[:, :, None] * inv))
    for i in np.flatnonzero(~ok):
        out[i] = scipy.linalg.expm(mats[i])
    return out


def _step_matrices(jac, phi, hess, vel, fall_line, step_size, exact):
    '''
    Linearized symplectic steps: I + h J, with the pp block carrying the
    -h^2 phi N H term that the position update picks up through the
    updated velocity. exact uses exp(h J) instead.
    '''
    if exact:
        return _expm_batch(step_size * jac)

    mats = np.eye(6)[None] + step_size * jac
    moving = ~fall_line
    if moving.any():
        norm_m = _velocity_normalization(vel[moving])
        mats[moving, :3, :3] -= step_size ** 2 * \
            phi[moving][:, None, None] * (norm_m @ hess[moving])
    return mats


def _integrate(grid, p0, v0, fall_line, settings, sensitivity=False,
               exact=False, history=False):
    '''
    Symplectic Euler integration of a batch of curved rays

    Returns
    -------
    batch: CurvedBatch
        End states and, with sensitivity, accumulated propagators
    record: dict or None
        With history (single ray), per-step positions, velocities,
        jacobians and step matrices
    '''
    h = settings.step_size
    tol = settings.tolerance
    p = np.array(p0, dtype=np.float64).reshape(-1, 3)
    v = np.array(v0, dtype=np.float64).reshape(-1, 3)
    fall_line = np.asarray(fall_line, dtype=bool).reshape(-1)
    n_rays = len(p)

    terminal = np.full(n_rays, MAX_STEPS, dtype=np.int8)
    steps = np.zeros(n_rays, dtype=np.int64)
    best = np.full(n_rays, np.inf)
    since = np.zeros(n_rays, dtype=np.int64)
    psi = np.tile(np.eye(6), (n_rays, 1, 1)) if sensitivity else None
    valid = np.ones(n_rays, dtype=bool)
    linearize = sensitivity or history

    record = None
    if history:
        record = {'positions': [p[0].copy()], 'velocities': [v[0].copy()],
                  'jacobians': [], 'step_matrices': []}

    active = np.arange(n_rays)
    for _ in range(settings.max_steps):
        if active.size == 0:
            break
        phi, grad, _ = distance_and_gradient(grid, p[active])

        bad = ~np.isfinite(phi) | ~np.all(np.isfinite(grad), axis=1)
        hit = ~bad & (np.abs(phi) <= tol)
        improved = phi < best[active] - settings.stall_decrease
        best[active] = np.where(improved, phi, best[active])
        since[active] = np.where(improved, 0, since[active] + 1)
        stall = ~(bad | hit) & (since[active] >= settings.stall_window)

        terminal[active[hit]] = SURFACE_HIT
        terminal[active[bad | stall]] = STALLED

        move = ~(bad | hit | stall)
        idx = active[move]
        if idx.size == 0:
            break
        phi = phi[move]
        grad = grad[move]
        p_cur = p[idx]

        v_new = v[idx] - h * grad
        speed = np.linalg.norm(v_new, axis=1)
        singular = ~fall_line[idx] & (speed < VELOCITY_EPS)
        use_fall = fall_line[idx] | singular
        g_norm = np.linalg.norm(grad, axis=1)
        fall_dir = -grad / np.where(g_norm > 0, g_norm, 1.0)[:, None]
        direction = np.where(use_fall[:, None], fall_dir,
                             v_new / np.where(speed > 0, speed, 1.0)[:, None])
        p_new = p_cur + h * phi[:, None] * direction

        if linearize:
            hess = hessian(grid, p_cur)
            jac = _flow_jacobians(phi, grad, hess, v_new, use_fall)
            mats = _step_matrices(jac, phi, hess, v_new, use_fall, h, exact)
            valid[idx[singular]] = False
            if sensitivity:
                psi[idx] = mats @ psi[idx]
            if history:
                record['jacobians'].append(jac[0])
                record['step_matrices'].append(mats[0])

        p[idx] = p_new
        v[idx] = v_new
        steps[idx] += 1
        if history:
            record['positions'].append(p_new[0].copy())
            record['velocities'].append(v_new[0].copy())

        escaped = np.linalg.norm(p_new, axis=1) > settings.escape_radius
        terminal[idx[escaped]] = ESCAPED
        active = idx[~escaped]

    batch = CurvedBatch(terminal == SURFACE_HIT, p, steps, terminal, psi,
                        valid if sensitivity else None)
    return batch, record


def curved_trace(grid: SdfGrid, p0, v0, settings: TraceSettings | None = None,
                 want_jacobians: bool = True, degenerate: bool | None = None,
                 dv0_dalpha=None, exact: bool = False) -> CurvedTrajectory:
    '''
    Integrate a single curved ray until it reaches the surface

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    p0, v0: array_like
        (3,) seed position and velocity
    settings: TraceSettings
        Step size, tolerance and limits
    want_jacobians: bool
        Record per-step flow Jacobians and linearized step matrices
    degenerate: bool
        Fall along -grad phi; defaults to |v0| < 1e-8
    dv0_dalpha: array_like
        Seed velocity derivative kept for propagate_perturbation
    exact: bool
        Record exp(h J) step matrices instead of I + h J

    Returns
    -------
    _: CurvedTrajectory
        All visited states; terminal is one of TERMINAL_STATES
    '''
    settings = settings or TraceSettings()
    v0 = np.asarray(v0, dtype=np.float64)
    if degenerate is None:
        degenerate = bool(np.linalg.norm(v0) < VELOCITY_EPS)

    batch, record = _integrate(grid, p0, v0, [degenerate], settings,
                               exact=exact, history=True)

    jacobians = step_matrices = None
    if want_jacobians:
        jacobians = np.array(record['jacobians']).reshape(-1, 6, 6)
        step_matrices = np.array(record['step_matrices']).reshape(-1, 6, 6)
    if dv0_dalpha is not None:
        dv0_dalpha = np.asarray(dv0_dalpha, dtype=np.float64)

    return CurvedTrajectory(np.array(record['positions']),
                            np.array(record['velocities']),
                            settings.step_size,
                            TERMINAL_STATES[batch.terminal[0]],
                            degenerate, jacobians, step_matrices, dv0_dalpha)


def curved_trace_batch(grid: SdfGrid, p0, v0, degenerate,
                       settings: TraceSettings | None = None,
                       sensitivity: bool = False,
                       exact: bool = False) -> CurvedBatch:
    '''
    Integrate (n,) curved rays together, optionally accumulating the
    perturbation propagator of each ray on the fly
    '''
    settings = settings or TraceSettings()
    batch, _ = _integrate(grid, p0, v0, degenerate, settings,
                          sensitivity=sensitivity, exact=exact)
    return batch


def phase_flow(grid: SdfGrid, p, v) -> np.ndarray:
    '''Right-hand side (phi v/|v|, -grad phi) of the curved-ray flow'''
    phi, grad, _ = distance_and_gradient(grid, np.asarray(p)[None, :])
    v = np.asarray(v, dtype=np.float64)
    return np.concatenate([phi[0] * v / np.linalg.norm(v), -grad[0]])


def jacobian_at(grid: SdfGrid, p, v) -> np.ndarray:
    '''
    Jacobian of the curved-ray flow at the phase-space point (p, v)

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    p, v: array_like
        (3,) position and velocity

    Returns
    -------
    _: np.ndarray
        6x6 matrix [[v_hat grad^T, phi N(v)], [-H, 0]] with
        N(v) = I/|v| - v v^T/|v|^3
    '''
    v = np.asarray(v, dtype=np.float64)
    if np.linalg.norm(v) <= VELOCITY_EPS:
        err_str = f'velocity-normalization singularity: |v| = ' \
                  f'{np.linalg.norm(v):.3g}'
        logging.getLogger('ray_engine.jacobian_at').error(err_str)
        raise ZeroDivisionError(err_str)

    p = np.asarray(p, dtype=np.float64)[None, :]
    phi, grad, _ = distance_and_gradient(grid, p)
    hess = hessian(grid, p)
    return _flow_jacobians(phi, grad, hess, v[None, :],
                           np.zeros(1, dtype=bool))[0]


def propagate_perturbation(trajectory: CurvedTrajectory, start: int = 0,
                           stop: int | None = None,
                           exact: bool = False) -> Perturbation:
    '''
    Propagator psi mapping a perturbation at step start to step stop

    Parameters
    ----------
    trajectory: CurvedTrajectory
        Trajectory recorded with want_jacobians
    start, stop: int
        Step range; stop defaults to the last step
    exact: bool
        Compose exp(h J_i) instead of the recorded linearized steps

    Returns
    -------
    _: Perturbation
        psi and, for start = 0 with a known dv0_dalpha, the end position
        derivative psi_pv dv0/dalpha
    '''
    error_channel = logging.getLogger('ray_engine.propagate_perturbation')
    if trajectory.jacobians is None:
        err_str = 'trajectory was traced without jacobians'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if not trajectory.found:
        err_str = f'no landing to perturb: trajectory ended ' \
                  f'{trajectory.terminal}'
        error_channel.error(err_str)
        raise ValueError(err_str)

    stop = trajectory.steps if stop is None else stop
    if not 0 <= start <= stop <= trajectory.steps:
        err_str = f'invalid step range [{start}, {stop}) for ' \
                  f'{trajectory.steps} steps'
        error_channel.error(err_str)
        raise IndexError(err_str)

    if exact:
        mats = _expm_batch(trajectory.step_size *
                           trajectory.jacobians[start:stop])
    else:
        mats = trajectory.step_matrices[start:stop]

    psi = np.eye(6)
    for mat in mats:
        psi = mat @ psi

    dp_dalpha = None
    if start == 0 and trajectory.dv0_dalpha is not None:
        dp_dalpha = psi[:3, 3:] @ trajectory.dv0_dalpha
    return Perturbation(psi, dp_dalpha)
