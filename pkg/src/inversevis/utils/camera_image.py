'''
Camera on the enclosing sphere, pixel-to-ray generation in normalized device
coordinates (NDC) and the direct/indirect/none image partition
'''
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from inversevis.utils.helpers import normalize_rows


CAMERA_RADIUS = 2.5
# half extent of the orthographic near plane in world units
ORTHO_HALF_EXTENT = 1.25
PERSPECTIVE_FOV_DEG = 45.0
PROJECTIONS = ('orthographic', 'perspective')
PROJECTION_ALIASES = {'ortho': 'orthographic', 'persp': 'perspective'}

# pixel class codes
PIXEL_NONE = 0
PIXEL_DIRECT = 1
PIXEL_INDIRECT = 2
PIXEL_CLASS_NAMES = ('none', 'direct', 'indirect')

_POLE_EPS = 1.0e-9


@dataclass(frozen=True)
class Camera:
    '''
    Camera on a sphere of radius 2.5 looking at the origin
    '''
    # polar angle from +z (radians)
    theta: float
    # azimuth in the xy plane from +x (radians)
    phi_az: float
    projection: str
    position: np.ndarray
    right: np.ndarray
    up: np.ndarray
    look: np.ndarray
    radius: float = CAMERA_RADIUS
    fov_deg: float = PERSPECTIVE_FOV_DEG

    @property
    def near_plane_normal(self) -> np.ndarray:
        return self.look

    def as_dict(self) -> dict:
        return {'theta': float(np.degrees(self.theta)),
                'phi': float(np.degrees(self.phi_az)),
                'projection': self.projection}


def make_camera(theta: float, phi_az: float,
                projection: str = 'orthographic') -> Camera:
    '''
    Place a camera on the enclosing sphere

    Parameters
    ----------
    theta: float
        Polar angle in radians, 0 at +z
    phi_az: float
        Azimuthal angle in radians
    projection: str
        'orthographic' or 'perspective' ('ortho'/'persp' accepted)

    Returns
    -------
    _: Camera
        Camera with orthonormal frame; right = look x z, falling back to +x
        at the poles, and up = right x look
    '''
    projection = PROJECTION_ALIASES.get(projection, projection)
    if projection not in PROJECTIONS:
        err_str = f'unknown projection {projection}'
        logging.getLogger('camera_image.make_camera').error(err_str)
        raise ValueError(err_str)

    sin_t = np.sin(theta)
    position = CAMERA_RADIUS * np.array([sin_t * np.cos(phi_az),
                                         sin_t * np.sin(phi_az),
                                         np.cos(theta)])
    look = -position / np.linalg.norm(position)

    right = np.cross(look, [0.0, 0.0, 1.0])
    right_norm = np.linalg.norm(right)
    if right_norm < _POLE_EPS:
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / right_norm
    up = np.cross(right, look)

    return Camera(float(theta), float(phi_az), projection, position, right,
                  up, look)


def pixel_grid_ndc(width: int, height: int) -> np.ndarray:
    '''
    NDC coordinates of pixel centers, row-major from the top-left pixel

    Returns
    -------
    _: np.ndarray
        (height * width, 2) array of (x, y) in [-1, 1]^2, y up
    '''
    xs = -1.0 + (np.arange(width) + 0.5) * (2.0 / width)
    ys = 1.0 - (np.arange(height) + 0.5) * (2.0 / height)
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])


def pixel_ray(camera: Camera, ndc):
    '''
    Primary ray through NDC point(s)

    Parameters
    ----------
    camera: Camera
        Viewing camera
    ndc: array_like
        (2,) or (n, 2) NDC points

    Returns
    -------
    origin, direction
        Ray origins and unit directions with the shape of the input
    '''
    ndc = np.asarray(ndc, dtype=np.float64)
    single = ndc.ndim == 1
    ndc = ndc.reshape(-1, 2)

    if camera.projection == 'orthographic':
        offsets = ORTHO_HALF_EXTENT * (ndc[:, :1] * camera.right +
                                       ndc[:, 1:] * camera.up)
        origins = camera.position + offsets
        directions = np.broadcast_to(camera.look, origins.shape).copy()
    else:
        half = np.tan(0.5 * np.radians(camera.fov_deg))
        directions = normalize_rows(camera.look + half * (
            ndc[:, :1] * camera.right + ndc[:, 1:] * camera.up))
        origins = np.broadcast_to(camera.position, directions.shape).copy()

    if single:
        return origins[0], directions[0]
    return origins, directions


def project_to_ndc(camera: Camera, points) -> np.ndarray:
    '''
    Back projection of world point(s) to NDC
    '''
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    rel = points.reshape(-1, 3) - camera.position
    x_cam = rel @ camera.right
    y_cam = rel @ camera.up

    if camera.projection == 'orthographic':
        ndc = np.column_stack([x_cam, y_cam]) / ORTHO_HALF_EXTENT
    else:
        depth = rel @ camera.look
        half = np.tan(0.5 * np.radians(camera.fov_deg))
        ndc = np.column_stack([x_cam, y_cam]) / (depth[:, None] * half)
    return ndc[0] if single else ndc


def classify_pixels(grid, mesh, camera: Camera, technique, width: int,
                    height: int, settings=None) -> np.ndarray:
    '''
    Partition the image into direct, indirect and none pixels

    A pixel is direct when its straight ray reaches the surface, indirect
    when it misses but lies in the technique's mapping domain (ring for
    neugebauer, mirror intersection for mirror, hull intersection for
    inversevis), none otherwise.

    Parameters
    ----------
    grid: SdfGrid
        Distance field of the scene
    mesh: Mesh
        Scene mesh
    camera: Camera
        Viewing camera
    technique: TechniqueParams
        Active technique parameters
    width, height: int
        Image size in pixels

    Returns
    -------
    _: np.ndarray
        (height, width) int8 class codes PIXEL_NONE/DIRECT/INDIRECT
    '''
    # techniques depends on this module for camera geometry
    from inversevis.utils import techniques

    ndc = pixel_grid_ndc(width, height)
    trace = techniques.trace_pixels(grid, mesh, camera, technique, ndc,
                                    settings=settings)
    return trace.pixel_class.reshape(height, width)
