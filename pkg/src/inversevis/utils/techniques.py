'''
Mappings from pixels that miss the surface onto hidden surface points:
the ring projection (neugebauer), a quadratic height-field mirror placed
behind the object (mirror) and hull-seeded curved rays (inversevis)
'''
from __future__ import annotations

from dataclasses import dataclass, replace
import logging
from typing import ClassVar, Union

import numpy as np

from inversevis.utils.camera_image import (PIXEL_DIRECT, PIXEL_INDIRECT,
                                           PIXEL_NONE, PIXEL_CLASS_NAMES,
                                           Camera, pixel_ray, project_to_ndc)
from inversevis.utils.geometry_io import Mesh
from inversevis.utils.helpers import normalize_rows
from inversevis.utils.ray_engine import (HULL_PHI0, SURFACE_HIT, Hit,
                                         TraceSettings,
                                         curved_trace, curved_trace_batch,
                                         farthest_hull_hit,
                                         farthest_hull_hit_batch,
                                         resolve_hits, seed_directions,
                                         seed_velocity, sphere_trace,
                                         sphere_trace_batch)
from inversevis.utils.sdf_grid import SdfGrid, SurfacePoint, gradient


TECHNIQUES = ('direct', 'neugebauer', 'mirror', 'inversevis')

MAX_RING_RADIUS = float(np.sqrt(2.0))
# ceiling of the automatic inner ring radius
AUTO_R1_CEILING = 0.95
MIRROR_EXTENT = 2.0
# ray parameter range and spacing when marching onto the height field
MIRROR_MARCH_LENGTH = 12.0
MIRROR_MARCH_STEP = 0.01
MIRROR_BISECTION_STEPS = 30
UNTRACED = -1


@dataclass(frozen=True)
class DirectParams:
    '''Plain rendering, no indirect mapping'''
    technique: ClassVar[str] = 'direct'

    def as_dict(self) -> dict:
        return {}


@dataclass(frozen=True)
class NeugebauerParams:
    '''
    Ring projection around the back-projected object center
    '''
    technique: ClassVar[str] = 'neugebauer'
    center: tuple = (0.0, 0.0, 0.0)
    # inner ring radius in NDC, None picks the silhouette radius
    r1: float | None = None
    r2: float = 1.0

    def __post_init__(self):
        error_channel = logging.getLogger('techniques.NeugebauerParams')
        object.__setattr__(self, 'center',
                           tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            err_str = f'ring center needs 3 coordinates, got {self.center}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        lower = 0.0 if self.r1 is None else self.r1
        if not (0.0 <= lower < self.r2 <= MAX_RING_RADIUS) or \
                (self.r1 is not None and self.r1 <= 0.0):
            err_str = f'ring radii must satisfy 0 < r1 < r2 <= sqrt(2), ' \
                      f'got r1={self.r1} r2={self.r2}'
            error_channel.error(err_str)
            raise ValueError(err_str)

    def as_dict(self) -> dict:
        return {'center': list(self.center), 'r1': self.r1, 'r2': self.r2}


@dataclass(frozen=True)
class MirrorParams:
    '''
    Quadratic height field z = w1 x^2 + w2 y^2 + w3 xy + w4 x + w5 y behind
    the object
    '''
    technique: ClassVar[str] = 'mirror'
    omega: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    # distance behind the bounding sphere
    offset: float = 1.0
    extent: float = MIRROR_EXTENT

    def __post_init__(self):
        error_channel = logging.getLogger('techniques.MirrorParams')
        omega = tuple(float(w) for w in np.ravel(self.omega))
        object.__setattr__(self, 'omega', omega)
        if len(omega) != 5 or not np.all(np.isfinite(omega)):
            err_str = f'mirror needs 5 finite coefficients, got {omega}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if not self.offset > 0 or not self.extent > 0:
            err_str = f'mirror offset and extent must be > 0, got ' \
                      f'{self.offset} and {self.extent}'
            error_channel.error(err_str)
            raise ValueError(err_str)

    def with_omega(self, omega) -> MirrorParams:
        return replace(self, omega=tuple(np.ravel(omega)))

    def as_dict(self) -> dict:
        return {'omega': list(self.omega), 'offset': self.offset}


@dataclass(frozen=True)
class InverseVisParams:
    '''
    Curved rays seeded on the hull phi = phi0
    '''
    technique: ClassVar[str] = 'inversevis'
    alpha: float = 0.5
    phi0: float = HULL_PHI0

    def __post_init__(self):
        error_channel = logging.getLogger('techniques.InverseVisParams')
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            err_str = f'alpha must be > 0, got {self.alpha}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if not self.phi0 > 0:
            err_str = f'hull offset phi0 must be > 0, got {self.phi0}'
            error_channel.error(err_str)
            raise ValueError(err_str)

    def with_alpha(self, alpha: float) -> InverseVisParams:
        return replace(self, alpha=float(alpha))

    def as_dict(self) -> dict:
        return {'alpha': self.alpha, 'phi0': self.phi0}


TechniqueParams = Union[DirectParams, NeugebauerParams, MirrorParams,
                        InverseVisParams]

PARAM_CLASSES = {cls.technique: cls for cls in
                 (DirectParams, NeugebauerParams, MirrorParams,
                  InverseVisParams)}


def make_params(technique: str, **kwargs) -> TechniqueParams:
    '''Build the parameter record of a technique by name'''
    if technique not in PARAM_CLASSES:
        err_str = f'unknown technique {technique}, expected one of ' \
                  f'{TECHNIQUES}'
        logging.getLogger('techniques.make_params').error(err_str)
        raise ValueError(err_str)
    return PARAM_CLASSES[technique](**kwargs)


@dataclass(frozen=True)
class PixelTrace:
    '''
    Per-pixel outcome of one technique over a set of pixels

    pixel_class follows the mapping domain (an indirect pixel may still
    fail to land); found marks pixels that reached the surface.
    '''
    pixel_class: np.ndarray
    found: np.ndarray
    position: np.ndarray
    triangle: np.ndarray
    bary: np.ndarray
    scalar: np.ndarray
    terminal: np.ndarray
    # hull or mirror point an indirect ray started from
    seed: np.ndarray
    # d(landing position)/d(alpha), NaN where unavailable
    dp_dalpha: np.ndarray | None = None

    def __len__(self):
        return len(self.pixel_class)

    @property
    def effective_class(self) -> np.ndarray:
        '''Class of every pixel after dropping indirect pixels that missed'''
        cls = np.full(len(self), PIXEL_NONE, dtype=np.int8)
        cls[(self.pixel_class == PIXEL_DIRECT) & self.found] = PIXEL_DIRECT
        cls[(self.pixel_class == PIXEL_INDIRECT) & self.found] = \
            PIXEL_INDIRECT
        return cls

    def census(self, effective: bool = False) -> dict:
        '''
        Pixel count per class name; effective=True counts indirect pixels
        that never landed as none
        '''
        cls = self.effective_class if effective else self.pixel_class
        counts = np.bincount(cls, minlength=3)
        return {name: int(counts[code])
                for code, name in enumerate(PIXEL_CLASS_NAMES)}

    @classmethod
    def concatenate(cls, parts: list) -> PixelTrace:
        with_sens = all(p.dp_dalpha is not None for p in parts)
        return cls(*(np.concatenate([getattr(p, name) for p in parts])
                     for name in ('pixel_class', 'found', 'position',
                                  'triangle', 'bary', 'scalar', 'terminal',
                                  'seed')),
                   np.concatenate([p.dp_dalpha for p in parts])
                   if with_sens else None)


def resolve_neugebauer(params: NeugebauerParams, mesh: Mesh,
                       camera: Camera) -> NeugebauerParams:
    '''
    Fill an automatic inner radius with the projected silhouette radius of
    the mesh about the ring center
    '''
    if params.r1 is not None:
        return params
    c_ndc = project_to_ndc(camera, np.array(params.center))
    radius = np.max(np.linalg.norm(project_to_ndc(camera, mesh.vertices)
                                   - c_ndc, axis=1))
    r1 = min(radius, AUTO_R1_CEILING, AUTO_R1_CEILING * params.r2)
    return replace(params, r1=float(r1))


def neugebauer_rays(camera: Camera, params: NeugebauerParams, ndc):
    '''
    Rays from the ring center for (n, 2) NDC pixels

    The radial image direction is blended with the near-plane normal (the
    look direction) by 2 r / (r1 + r2) - 1, so the ring midpoint emits purely
    radial rays, the outer rim tilts away from the viewer onto the back of
    the object and the inner rim toward the viewer.

    Returns
    -------
    origins, directions: np.ndarray
        (n, 3) rays
    in_ring: np.ndarray
        (n,) bool ring membership
    '''
    if params.r1 is None:
        err_str = 'inner ring radius unresolved, call resolve_neugebauer'
        logging.getLogger('techniques.neugebauer_rays').error(err_str)
        raise ValueError(err_str)

    ndc = np.asarray(ndc, dtype=np.float64).reshape(-1, 2)
    center = np.array(params.center)
    rel = ndc - project_to_ndc(camera, center)
    radius = np.linalg.norm(rel, axis=1)
    in_ring = (radius >= params.r1) & (radius <= params.r2) & (radius > 0)

    unit = rel / np.where(radius > 0, radius, 1.0)[:, None]
    radial = unit[:, :1] * camera.right + unit[:, 1:] * camera.up
    blend = 2.0 * radius / (params.r1 + params.r2) - 1.0
    directions = normalize_rows(radial + blend[:, None] *
                                camera.near_plane_normal)
    origins = np.broadcast_to(center, directions.shape).copy()
    return origins, directions, in_ring


def neugebauer_map(grid: SdfGrid, mesh: Mesh, camera: Camera, pixel,
                   params: NeugebauerParams,
                   settings: TraceSettings | None = None) -> Hit | None:
    '''
    Trace one ring pixel from the ring center

    Returns
    -------
    _: Hit or None
        None for pixels outside the ring
    '''
    params = resolve_neugebauer(params, mesh, camera)
    origins, directions, in_ring = neugebauer_rays(camera, params, pixel)
    if not in_ring[0]:
        return None
    return sphere_trace(grid, origins[0], directions[0], settings, mesh)


@dataclass(frozen=True)
class MirrorFrame:
    '''Local frame of the mirror height field'''
    origin: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray

    def to_local(self, points) -> np.ndarray:
        rel = np.asarray(points, dtype=np.float64) - self.origin
        return np.stack([rel @ self.x_axis, rel @ self.y_axis,
                         rel @ self.z_axis], axis=-1)

    def to_world_direction(self, local) -> np.ndarray:
        local = np.asarray(local, dtype=np.float64)
        return (local[..., :1] * self.x_axis + local[..., 1:2] * self.y_axis
                + local[..., 2:] * self.z_axis)


def mirror_frame(camera: Camera, params: MirrorParams,
                 center=(0.0, 0.0, 0.0)) -> MirrorFrame:
    '''
    Mirror frame with axes camera right, up and the normal facing back at
    the viewer, centered sqrt(3) + offset behind the object center
    '''
    origin = np.asarray(center, dtype=np.float64) + camera.look * \
        (np.sqrt(3.0) + params.offset)
    return MirrorFrame(origin, camera.right, camera.up, -camera.look)


def mirror_surface(params: MirrorParams, x, y):
    '''
    Height and unit normal of the mirror in its local frame

    Parameters
    ----------
    params: MirrorParams
        Height field coefficients
    x, y: float or np.ndarray
        Local coordinates

    Returns
    -------
    z: float or np.ndarray
        Height
    normal: np.ndarray
        (..., 3) unit normal (-dz/dx, -dz/dy, 1) / norm
    '''
    w1, w2, w3, w4, w5 = params.omega
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = w1 * x ** 2 + w2 * y ** 2 + w3 * x * y + w4 * x + w5 * y
    normal = np.stack([-2.0 * w1 * x - w3 * y - w4,
                       -2.0 * w2 * y - w3 * x - w5,
                       np.ones_like(x)], axis=-1)
    normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
    if z.ndim == 0:
        return float(z), normal
    return z, normal


def _height_gap(params, local_o, local_d, lam):
    '''z - H(x, y) along local rays for (n, k) ray parameters'''
    pts = local_o[:, None, :] + lam[..., None] * local_d[:, None, :]
    height, _ = mirror_surface(params, pts[..., 0], pts[..., 1])
    return pts[..., 2] - height


def mirror_intersections(camera: Camera, params: MirrorParams, origins,
                         directions):
    '''
    First crossing of straight rays through the height field, by marching
    then bisection in the mirror frame

    Returns
    -------
    points, normals: np.ndarray
        (n, 3) world intersection points and unit normals, NaN when missed
    found: np.ndarray
        (n,) bool, False when the crossing lies outside the mirror extent
    '''
    frame = mirror_frame(camera, params)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = normalize_rows(np.asarray(directions,
                                           dtype=np.float64).reshape(-1, 3))
    n_rays = len(origins)
    local_o = frame.to_local(origins)
    local_d = np.stack([directions @ frame.x_axis, directions @ frame.y_axis,
                        directions @ frame.z_axis], axis=-1)

    lam = np.arange(0.0, MIRROR_MARCH_LENGTH + 0.5 * MIRROR_MARCH_STEP,
                    MIRROR_MARCH_STEP)
    gap = _height_gap(params, local_o, local_d,
                      np.broadcast_to(lam, (n_rays, len(lam))))
    crossing = (gap[:, :-1] > 0) & (gap[:, 1:] <= 0)
    has_crossing = crossing.any(axis=1)
    first = np.argmax(crossing, axis=1)

    points = np.full((n_rays, 3), np.nan)
    normals = np.full((n_rays, 3), np.nan)
    rows = np.flatnonzero(has_crossing)
    if rows.size == 0:
        return points, normals, np.zeros(n_rays, dtype=bool)

    lo = lam[first[rows]]
    hi = lam[first[rows] + 1]
    for _ in range(MIRROR_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = _height_gap(params, local_o[rows], local_d[rows],
                            mid[:, None])[:, 0] > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    lam_hit = 0.5 * (lo + hi)

    local_hit = local_o[rows] + lam_hit[:, None] * local_d[rows]
    inside = np.all(np.abs(local_hit[:, :2]) <= params.extent, axis=1)
    _, local_normal = mirror_surface(params, local_hit[:, 0], local_hit[:, 1])

    found = np.zeros(n_rays, dtype=bool)
    found[rows[inside]] = True
    points[rows] = origins[rows] + lam_hit[:, None] * directions[rows]
    normals[rows] = frame.to_world_direction(local_normal)
    points[~found] = np.nan
    normals[~found] = np.nan
    return points, normals, found


def mirror_map(grid: SdfGrid, mesh: Mesh, camera: Camera, pixel,
               params: MirrorParams,
               settings: TraceSettings | None = None) -> Hit | None:
    '''
    Reflect one pixel ray off the mirror and trace along the mirror normal

    Returns
    -------
    _: Hit or None
        None when the pixel ray misses the mirror extent
    '''
    origin, direction = pixel_ray(camera, pixel)
    points, normals, found = mirror_intersections(camera, params, origin,
                                                  direction)
    if not found[0]:
        return None
    return sphere_trace(grid, points[0], normals[0], settings, mesh)


def inversevis_map(grid: SdfGrid, mesh: Mesh, camera: Camera, pixel,
                   params: InverseVisParams,
                   settings: TraceSettings | None = None) -> Hit | None:
    '''
    Seed a curved ray on the far side of the hull and let it bend onto the
    surface

    Returns
    -------
    _: Hit or None
        None when the pixel ray misses the hull
    '''
    settings = settings or TraceSettings()
    origin, direction = pixel_ray(camera, pixel)
    hull_point = farthest_hull_hit(grid, origin, direction, params.phi0,
                                   settings)
    if hull_point is None:
        return None

    v0, degenerate = seed_velocity(grid, hull_point, direction, params.alpha)
    trajectory = curved_trace(grid, hull_point, v0, settings,
                              want_jacobians=False, degenerate=degenerate)
    length = float(np.sum(np.linalg.norm(np.diff(trajectory.positions,
                                                  axis=0), axis=1)))
    point = None
    if trajectory.found:
        pos, tri, bary, scalar = resolve_hits(grid, mesh,
                                              trajectory.end[None, :], [True])
        point = SurfacePoint(pos[0], int(tri[0]), bary[0], float(scalar[0]))
    return Hit(trajectory.found, trajectory.end.copy(), length,
               trajectory.steps, trajectory.terminal, point)


def _indirect_landings(grid, camera, params, ndc, origins, directions,
                       settings, sensitivity, exact):
    '''
    Domain membership, landing positions and terminal codes of the indirect
    mapping for (n,) pixels that missed the surface
    '''
    n_rays = len(origins)
    in_domain = np.zeros(n_rays, dtype=bool)
    found = np.zeros(n_rays, dtype=bool)
    landing = np.full((n_rays, 3), np.nan)
    terminal = np.full(n_rays, UNTRACED, dtype=np.int8)
    seed = np.full((n_rays, 3), np.nan)
    dp_dalpha = np.full((n_rays, 3), np.nan) if sensitivity else None

    if isinstance(params, DirectParams) or n_rays == 0:
        return in_domain, found, landing, terminal, seed, dp_dalpha

    if isinstance(params, NeugebauerParams):
        ring_o, ring_d, in_domain = neugebauer_rays(camera, params, ndc)
        rows = np.flatnonzero(in_domain)
        seed[rows] = ring_o[rows]
        straight = sphere_trace_batch(grid, ring_o[rows], ring_d[rows],
                                      settings)
    elif isinstance(params, MirrorParams):
        points, normals, in_domain = mirror_intersections(
            camera, params, origins, directions)
        rows = np.flatnonzero(in_domain)
        seed[rows] = points[rows]
        straight = sphere_trace_batch(grid, points[rows], normals[rows],
                                      settings)
    else:
        hull_points, in_domain = farthest_hull_hit_batch(
            grid, origins, directions, params.phi0, settings)
        rows = np.flatnonzero(in_domain)
        seed[rows] = hull_points[rows]
        seeds, degenerate = seed_directions(gradient(grid, hull_points[rows]),
                                            directions[rows])
        curved = curved_trace_batch(grid, hull_points[rows],
                                    params.alpha * seeds, degenerate,
                                    settings, sensitivity=sensitivity,
                                    exact=exact)
        found[rows] = curved.found
        landing[rows] = curved.position
        terminal[rows] = curved.terminal
        if sensitivity:
            dp = np.einsum('nij,nj->ni', curved.psi[:, :3, 3:], seeds)
            dp[~curved.valid | ~curved.found] = np.nan
            dp_dalpha[rows] = dp
        return in_domain, found, landing, terminal, seed, dp_dalpha

    found[rows] = straight.found
    landing[rows] = straight.position
    terminal[rows] = straight.terminal
    return in_domain, found, landing, terminal, seed, dp_dalpha


def trace_pixels(grid: SdfGrid, mesh: Mesh, camera: Camera,
                 params: TechniqueParams, ndc,
                 settings: TraceSettings | None = None,
                 sensitivity: bool = False,
                 exact: bool = False) -> PixelTrace:
    '''
    Classify and trace a batch of pixels

    Direct pixels keep their straight-ray hit; the technique only maps the
    pixels whose straight ray missed.

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    mesh: Mesh
        Mesh the grid was built from
    camera: Camera
        Viewing camera
    params: TechniqueParams
        Active technique
    ndc: np.ndarray
        (n, 2) pixel centers
    settings: TraceSettings
        Ray tolerances
    sensitivity: bool
        Accumulate d(landing)/d(alpha) for inversevis pixels
    exact: bool
        Use the matrix-exponential propagator

    Returns
    -------
    _: PixelTrace
        One row per pixel
    '''
    settings = settings or TraceSettings()
    if isinstance(params, NeugebauerParams):
        params = resolve_neugebauer(params, mesh, camera)

    ndc = np.asarray(ndc, dtype=np.float64).reshape(-1, 2)
    origins, directions = pixel_ray(camera, ndc)
    n_pixels = len(origins)
    direct = sphere_trace_batch(grid, origins, directions, settings)

    pixel_class = np.where(direct.found, PIXEL_DIRECT,
                           PIXEL_NONE).astype(np.int8)
    found = direct.found.copy()
    raw = direct.position.copy()
    terminal = direct.terminal.copy()
    seed = np.full((n_pixels, 3), np.nan)
    dp_dalpha = np.full((n_pixels, 3), np.nan) if sensitivity else None

    missed = np.flatnonzero(~direct.found)
    in_domain, hit, landing, term, seeds, dp = _indirect_landings(
        grid, camera, params, ndc[missed], origins[missed],
        directions[missed], settings,
        sensitivity and isinstance(params, InverseVisParams), exact)

    pixel_class[missed[in_domain]] = PIXEL_INDIRECT
    found[missed] = hit
    raw[missed] = landing
    terminal[missed] = np.where(in_domain, term, terminal[missed])
    seed[missed] = seeds
    if sensitivity and dp is not None:
        dp_dalpha[missed] = dp

    position, tri, bary, scalar = resolve_hits(grid, mesh, raw, found)
    return PixelTrace(pixel_class, found, position, tri, bary, scalar,
                      terminal, seed, dp_dalpha)


def landing_fraction(trace: PixelTrace) -> float:
    '''Share of indirect pixels whose ray reached the surface'''
    indirect = trace.pixel_class == PIXEL_INDIRECT
    if not indirect.any():
        return 0.0
    return float(np.mean(trace.terminal[indirect] == SURFACE_HIT))
