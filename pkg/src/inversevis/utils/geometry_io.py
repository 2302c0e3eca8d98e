'''
Triangle mesh ingestion, normalization to the canonical [-1, 1]^3 domain and
indexed-triangle scalar queries
'''
from __future__ import annotations

from dataclasses import dataclass, replace
import hashlib
import logging
import os

import numpy as np
import trimesh

# tolerance on barycentric weights handed to scalar lookups
BARY_SUM_TOL = 1.0e-6
BARY_NEG_TOL = 1.0e-6

# prefix used in runconfigs to request a built-in analytic primitive
PRIMITIVE_PREFIX = 'primitive:'
PRIMITIVE_KINDS = ('sphere', 'box', 'torus', 'plane')

# geometry of the built-in primitives
SPHERE_RADIUS = 0.8
BOX_HALF_EXTENT = 0.7
TORUS_RADII = (0.6, 0.25)
PLANE_HALF_EXTENT = 1.0

IMPORTANCE_MODES = ('scalar', 'visibility', 'mask')


@dataclass(frozen=True)
class Mesh:
    '''
    Indexed triangle mesh with one scalar per vertex
    '''
    # (n, 3) float64 vertex positions in world units
    vertices: np.ndarray
    # (m, 3) int64 vertex indices per triangle
    triangles: np.ndarray
    # (n,) float64 per-vertex scalar
    scalars: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        '''(m, 3, 3) triangle corner positions'''
        return self.vertices[self.triangles]

    def digest(self) -> str:
        '''SHA-256 of the vertex, triangle and scalar buffers'''
        sha = hashlib.sha256()
        for arr, dtype in ((self.vertices, '<f8'), (self.triangles, '<i8'),
                           (self.scalars, '<f8')):
            sha.update(np.ascontiguousarray(arr, dtype=dtype).tobytes())
        return sha.hexdigest()

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.triangles,
                               process=False)


@dataclass(frozen=True)
class ImportanceField:
    '''
    Source of the importance function s(x) over the surface
    '''
    mode: str = 'scalar'
    # optional per-vertex 0/1 flags, required for mode 'mask'
    mask: np.ndarray | None = None

    def __post_init__(self):
        error_channel = logging.getLogger('geometry_io.ImportanceField')
        if self.mode not in IMPORTANCE_MODES:
            err_str = f'unknown importance mode {self.mode}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if self.mode == 'mask' and self.mask is None:
            err_str = 'importance mode mask requires a per-vertex mask'
            error_channel.error(err_str)
            raise ValueError(err_str)

    def vertex_values(self, mesh: Mesh) -> np.ndarray:
        '''
        Per-vertex importance in [0, 1]

        Parameters
        ----------
        mesh: Mesh
            Mesh the importance is attached to

        Returns
        -------
        _: np.ndarray
            (n,) importance per vertex
        '''
        if self.mode == 'scalar':
            return np.clip(mesh.scalars, 0.0, 1.0)
        if self.mode == 'visibility':
            return np.ones(mesh.n_vertices)

        mask = np.asarray(self.mask, dtype=np.float64)
        if mask.shape != (mesh.n_vertices,):
            err_str = (f'importance mask has {mask.size} entries for '
                       f'{mesh.n_vertices} vertices')
            logging.getLogger('geometry_io.ImportanceField').error(err_str)
            raise ValueError(err_str)
        return (mask > 0).astype(np.float64)


def _embedded_scalars(tri_mesh, scalar_property):
    '''
    Extract a per-vertex property stored alongside the vertex positions,
    None when the file carries no such property
    '''
    attributes = getattr(tri_mesh, 'vertex_attributes', None) or {}
    if scalar_property in attributes:
        return np.asarray(attributes[scalar_property], dtype=np.float64)

    raw = tri_mesh.metadata.get('_ply_raw', {})
    vertex_element = raw.get('vertex', {})
    data = vertex_element.get('data')
    if data is None:
        return None
    try:
        return np.asarray(data[scalar_property], dtype=np.float64).ravel()
    except (KeyError, ValueError, IndexError):
        return None


def _has_non_triangle_faces(tri_mesh) -> bool:
    # trimesh triangulates polygons on load; the raw face element count
    # of a PLY file reveals whether any polygon had more than 3 corners
    raw = tri_mesh.metadata.get('_ply_raw', {})
    face_element = raw.get('face')
    if face_element is None:
        return False
    return int(face_element.get('length', len(tri_mesh.faces))) != \
        len(tri_mesh.faces)


def load_mesh(path: str, scalar_file_path: str | None = None,
              scalar_property: str | None = 'quality') -> Mesh:
    '''
    Load a triangle mesh and its per-vertex scalar field

    Parameters
    ----------
    path: str
        Mesh file readable by trimesh (PLY with an optional per-vertex scalar
        property, OBJ, OFF, STL, ...) or 'primitive:<kind>'
    scalar_file_path: str or None
        Sidecar text file with one scalar per line in vertex order. When None
        the scalar is read from the mesh file property `scalar_property`.
    scalar_property: str or None
        Name of the embedded per-vertex property; None loads the geometry
        alone with an all-zero scalar

    Returns
    -------
    _: Mesh
        Mesh with raw (unnormalized) coordinates and scalars
    '''
    error_channel = logging.getLogger('geometry_io.load_mesh')

    if path.startswith(PRIMITIVE_PREFIX):
        mesh = make_primitive(path[len(PRIMITIVE_PREFIX):])
        if scalar_file_path is None:
            return mesh
        return replace(mesh, scalars=_load_sidecar(scalar_file_path,
                                                   mesh.n_vertices))

    if not os.path.isfile(path):
        err_str = f'mesh file {path} not found'
        error_channel.error(err_str)
        raise FileNotFoundError(err_str)

    try:
        tri_mesh = trimesh.load(path, process=False, force='mesh')
    except (IndexError, KeyError, ValueError) as err:
        err_str = f'{path} could not be read as a mesh: {err}'
        error_channel.error(err_str)
        raise ValueError(err_str) from err
    if not isinstance(tri_mesh, trimesh.Trimesh) or len(tri_mesh.faces) == 0:
        err_str = f'{path} does not contain a triangle mesh'
        error_channel.error(err_str)
        raise ValueError(err_str)

    if _has_non_triangle_faces(tri_mesh):
        err_str = f'{path} contains non-triangle faces'
        error_channel.error(err_str)
        raise ValueError(err_str)

    vertices = np.asarray(tri_mesh.vertices, dtype=np.float64)
    triangles = np.asarray(tri_mesh.faces, dtype=np.int64)
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        err_str = (f'{path} has triangle vertex indices outside '
                   f'[0, {len(vertices)})')
        error_channel.error(err_str)
        raise ValueError(err_str)

    if scalar_file_path is not None:
        scalars = _load_sidecar(scalar_file_path, len(vertices))
    elif scalar_property is None:
        scalars = np.zeros(len(vertices))
    else:
        scalars = _embedded_scalars(tri_mesh, scalar_property)
        if scalars is None:
            err_str = (f'{path} has no per-vertex property '
                       f'"{scalar_property}" and no sidecar was given')
            error_channel.error(err_str)
            raise ValueError(err_str)
        _check_scalars(scalars, len(vertices), path)

    return Mesh(vertices, triangles, scalars)


def _check_scalars(scalars, n_vertices, source):
    error_channel = logging.getLogger('geometry_io.load_mesh')
    if scalars.shape != (n_vertices,):
        err_str = (f'scalar count mismatch: {scalars.size} values in '
                   f'{source} for {n_vertices} vertices')
        error_channel.error(err_str)
        raise ValueError(err_str)
    if not np.all(np.isfinite(scalars)):
        err_str = f'non-finite scalar in {source}'
        error_channel.error(err_str)
        raise ValueError(err_str)


def _load_sidecar(scalar_file_path, n_vertices):
    error_channel = logging.getLogger('geometry_io.load_mesh')
    if not os.path.isfile(scalar_file_path):
        err_str = f'scalar file {scalar_file_path} not found'
        error_channel.error(err_str)
        raise FileNotFoundError(err_str)

    scalars = np.loadtxt(scalar_file_path, dtype=np.float64, ndmin=1)
    _check_scalars(scalars.ravel(), n_vertices, scalar_file_path)
    return scalars.ravel()


def load_vertex_mask(mask_path: str, n_vertices: int) -> np.ndarray:
    '''
    Read a per-vertex 0/1 importance mask, one flag per line
    '''
    error_channel = logging.getLogger('geometry_io.load_vertex_mask')
    if not os.path.isfile(mask_path):
        err_str = f'importance mask {mask_path} not found'
        error_channel.error(err_str)
        raise FileNotFoundError(err_str)

    mask = np.loadtxt(mask_path, dtype=np.float64, ndmin=1).ravel()
    if mask.size != n_vertices:
        err_str = (f'importance mask count mismatch: {mask.size} flags for '
                   f'{n_vertices} vertices')
        error_channel.error(err_str)
        raise ValueError(err_str)
    return mask > 0


def normalize(mesh: Mesh) -> Mesh:
    '''
    Uniformly scale and translate a mesh so its bounding box is centered at
    the origin and its longest side spans [-1, 1]; rescale scalars to [0, 1]

    Parameters
    ----------
    mesh: Mesh
        Mesh to normalize

    Returns
    -------
    _: Mesh
        Normalized mesh. A constant scalar field becomes all zero.
    '''
    error_channel = logging.getLogger('geometry_io.normalize')

    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        err_str = 'cannot normalize an empty mesh'
        error_channel.error(err_str)
        raise ValueError(err_str)

    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    longest = float(np.max(hi - lo))
    if not np.isfinite(longest) or longest <= 0.0:
        err_str = 'degenerate mesh: zero bounding-box extent'
        error_channel.error(err_str)
        raise ValueError(err_str)

    center = 0.5 * (lo + hi)
    vertices = (mesh.vertices - center) * (2.0 / longest)

    s_min = float(mesh.scalars.min())
    s_max = float(mesh.scalars.max())
    if s_max > s_min:
        scalars = (mesh.scalars - s_min) / (s_max - s_min)
    else:
        scalars = np.zeros_like(mesh.scalars)

    return Mesh(vertices, mesh.triangles.copy(), scalars)


def _check_triangle_index(mesh, triangle):
    triangle = np.asarray(triangle)
    if np.any(triangle < 0) or np.any(triangle >= mesh.n_triangles):
        err_str = f'triangle index out of range [0, {mesh.n_triangles})'
        logging.getLogger('geometry_io.barycentric_scalar').error(err_str)
        raise IndexError(err_str)


def _check_bary(bary):
    bary = np.asarray(bary, dtype=np.float64)
    if bary.shape[-1] != 3 or np.any(bary < -BARY_NEG_TOL) or \
            np.any(np.abs(bary.sum(axis=-1) - 1.0) > BARY_SUM_TOL):
        err_str = 'barycentric weights must be >= 0 and sum to 1'
        logging.getLogger('geometry_io.barycentric_scalar').error(err_str)
        raise ValueError(err_str)
    return bary


def barycentric_scalar(mesh: Mesh, triangle: int, bary) -> float:
    '''
    Interpolate the scalar field inside one triangle

    Parameters
    ----------
    mesh: Mesh
        Mesh carrying the scalar field
    triangle: int
        Triangle index
    bary: array_like
        Three barycentric weights, non-negative and summing to one

    Returns
    -------
    _: float
        Weighted sum of the triangle's three vertex scalars
    '''
    _check_triangle_index(mesh, triangle)
    bary = _check_bary(bary)
    return float(mesh.scalars[mesh.triangles[int(triangle)]] @ bary)


def interpolate_vertex_values(mesh: Mesh, values: np.ndarray,
                              triangles: np.ndarray,
                              bary: np.ndarray) -> np.ndarray:
    '''
    Vectorized barycentric interpolation of any per-vertex quantity

    Parameters
    ----------
    mesh: Mesh
        Mesh the triangles index into
    values: np.ndarray
        (n,) per-vertex values
    triangles: np.ndarray
        (k,) triangle indices
    bary: np.ndarray
        (k, 3) barycentric weights

    Returns
    -------
    _: np.ndarray
        (k,) interpolated values
    '''
    triangles = np.asarray(triangles, dtype=np.int64)
    if triangles.size == 0:
        return np.zeros(0)
    _check_triangle_index(mesh, triangles)
    bary = _check_bary(bary)
    return np.einsum('kj,kj->k', values[mesh.triangles[triangles]], bary)


def triangle_scalar_gradients(mesh: Mesh,
                              values: np.ndarray | None = None) -> np.ndarray:
    '''
    Gradient of the linear interpolant of a per-vertex quantity inside every
    triangle. The gradient lies in the triangle plane.

    Parameters
    ----------
    mesh: Mesh
        Mesh to differentiate over
    values: np.ndarray or None
        (n,) per-vertex values, defaults to the mesh scalars

    Returns
    -------
    _: np.ndarray
        (m, 3) gradient per triangle, zero for degenerate triangles
    '''
    if values is None:
        values = mesh.scalars

    corners = mesh.corners
    p0, p1, p2 = corners[:, 0], corners[:, 1], corners[:, 2]
    normal = np.cross(p1 - p0, p2 - p0)
    twice_area = np.linalg.norm(normal, axis=1)
    ok = twice_area > 1e-15
    unit_normal = normal / np.where(ok, twice_area, 1.0)[:, None]

    # gradient of the barycentric coordinate of corner k is
    # n x (opposite edge) / (2 A)
    s = values[mesh.triangles]
    grad = (s[:, 0, None] * np.cross(unit_normal, p2 - p1)
            + s[:, 1, None] * np.cross(unit_normal, p0 - p2)
            + s[:, 2, None] * np.cross(unit_normal, p1 - p0))
    grad /= np.where(ok, twice_area, 1.0)[:, None]
    grad[~ok] = 0.0
    return grad


def hotspot_mask(mesh: Mesh, directions, angular_radius_deg: float) -> np.ndarray:
    '''
    Flag vertices whose direction from the origin lies within an angular
    radius of any of the given directions

    Parameters
    ----------
    mesh: Mesh
        Normalized mesh
    directions: array_like
        (k, 3) hotspot center directions
    angular_radius_deg: float
        Angular radius of every hotspot in degrees

    Returns
    -------
    _: np.ndarray
        (n,) bool mask
    '''
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    norms = np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    unit = mesh.vertices / np.where(norms > 0, norms, 1.0)
    cos_radius = np.cos(np.radians(angular_radius_deg))
    return np.any(unit @ directions.T >= cos_radius, axis=1)


def make_primitive(kind: str) -> Mesh:
    '''
    Build an analytic test primitive inside [-1, 1]^3 with the scalar field
    s = (z + 1) / 2

    Parameters
    ----------
    kind: str
        One of 'sphere' (icosphere of radius 0.8), 'box' (cube of half extent
        0.7), 'torus' (radii 0.6 and 0.25 about z) or 'plane' (open wall
        x = 0 spanning [-1, 1]^2 in y and z)

    Returns
    -------
    _: Mesh
        Primitive mesh; coordinates are already canonical and are not
        rescaled
    '''
    if kind == 'sphere':
        tri_mesh = trimesh.creation.icosphere(subdivisions=3,
                                              radius=SPHERE_RADIUS)
    elif kind == 'box':
        tri_mesh = trimesh.creation.box(extents=[2.0 * BOX_HALF_EXTENT] * 3)
    elif kind == 'torus':
        tri_mesh = trimesh.creation.torus(major_radius=TORUS_RADII[0],
                                          minor_radius=TORUS_RADII[1],
                                          major_sections=48,
                                          minor_sections=24)
    elif kind == 'plane':
        half = PLANE_HALF_EXTENT
        vertices = np.array([[0.0, -half, -half], [0.0, half, -half],
                             [0.0, half, half], [0.0, -half, half]])
        triangles = np.array([[0, 1, 2], [0, 2, 3]])
        tri_mesh = trimesh.Trimesh(vertices=vertices, faces=triangles,
                                   process=False)
    else:
        err_str = f'unknown primitive {kind}, expected one of {PRIMITIVE_KINDS}'
        logging.getLogger('geometry_io.make_primitive').error(err_str)
        raise ValueError(err_str)

    vertices = np.asarray(tri_mesh.vertices, dtype=np.float64)
    triangles = np.asarray(tri_mesh.faces, dtype=np.int64)
    return Mesh(vertices, triangles, 0.5 * (vertices[:, 2] + 1.0))
