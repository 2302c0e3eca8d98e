'''
Voxelized signed distance field with a closest-triangle payload per voxel.

Distances are positive outside the surface and negative inside. Every voxel
center stores its exact distance to the mesh, the index of the closest
triangle and the barycentric coordinates of the closest point on it.
'''
from __future__ import annotations

from dataclasses import dataclass
import logging
import os
import time

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
import trimesh

from inversevis.utils.geometry_io import Mesh, interpolate_vertex_values
from inversevis.utils.helpers import get_time_delta_str


SDF_EXTENT = 2.5
DEFAULT_RESOLUTION = 200
MIN_RESOLUTION = 8

# brute-force scan is used up to this resolution when the pair count is small
BRUTE_FORCE_MAX_RESOLUTION = 64
BRUTE_FORCE_MAX_PAIRS = 2 ** 26
# voxel-triangle pairs evaluated per vectorized batch
PAIRS_PER_BATCH = 2 ** 18
KD_NEIGHBORS = 32

# hit tolerance shared with the tracer
HIT_TOLERANCE = 1.0e-3

# barycentric weight treated as zero when classifying closest-point regions
_REGION_EPS = 1.0e-9

CACHE_MAGIC = b'IVSDF001'
_CACHE_HEADER = np.dtype([('magic', 'S8'), ('extent', '<f8'),
                          ('resolution', '<i8'), ('digest', 'S64')])
_CACHE_RECORD = np.dtype([('distance', '<f8'), ('tri_id', '<i8'),
                          ('bary', '<f8', (3,))])


@dataclass(frozen=True)
class SdfGrid:
    '''
    Signed distance samples at voxel centers of the cube [-extent, extent]^3
    '''
    resolution: int
    # (r, r, r) signed distance indexed [ix, iy, iz]
    distance: np.ndarray
    # (r, r, r) closest triangle index
    tri_id: np.ndarray
    # (r, r, r, 3) barycentric coordinates of the closest point
    bary: np.ndarray
    extent: float = SDF_EXTENT

    @property
    def voxel_size(self) -> float:
        return 2.0 * self.extent / self.resolution

    @property
    def voxel_diagonal(self) -> float:
        return float(np.sqrt(3.0) * self.voxel_size)

    @property
    def sample_bounds(self) -> tuple[float, float]:
        '''World coordinates of the first and last voxel centers'''
        half = 0.5 * self.voxel_size
        return -self.extent + half, self.extent - half

    def voxel_centers(self) -> np.ndarray:
        '''(r,) voxel center coordinates along one axis'''
        return -self.extent + (np.arange(self.resolution) + 0.5) * self.voxel_size

    def voxel_index(self, x) -> np.ndarray:
        '''Integer index of the voxel containing each point, clipped'''
        x = np.asarray(x, dtype=np.float64)
        idx = np.floor((x + self.extent) / self.voxel_size).astype(np.int64)
        return np.clip(idx, 0, self.resolution - 1)


@dataclass(frozen=True)
class SurfacePoint:
    '''
    A point on the mesh with its triangle, barycentric weights and scalar
    '''
    position: np.ndarray
    triangle: int
    bary: np.ndarray
    scalar: float


def closest_points_on_triangles(corners: np.ndarray, points: np.ndarray):
    '''
    Closest point on each triangle to the paired query point

    Parameters
    ----------
    corners: np.ndarray
        (k, 3, 3) triangle corners
    points: np.ndarray
        (k, 3) query points

    Returns
    -------
    closest: np.ndarray
        (k, 3) closest points
    bary: np.ndarray
        (k, 3) barycentric coordinates of the closest points, clipped to be
        non-negative and renormalized
    '''
    closest = trimesh.triangles.closest_point(corners, points)
    with np.errstate(invalid='ignore', divide='ignore'):
        bary = trimesh.triangles.points_to_barycentric(corners, closest)

    # degenerate triangles: snap to the nearest corner
    bad = ~np.all(np.isfinite(bary), axis=1)
    if np.any(bad):
        corner_dist = np.linalg.norm(corners[bad] - closest[bad][:, None, :],
                                     axis=2)
        bary[bad] = np.eye(3)[np.argmin(corner_dist, axis=1)]

    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    return closest, bary


@dataclass(frozen=True)
class _PseudoNormals:
    '''Angle-weighted pseudo-normals of faces, edges and vertices'''
    face: np.ndarray
    # per face, normals of its edges (0,1), (1,2), (2,0)
    edge: np.ndarray
    vertex: np.ndarray


def _pseudo_normals(mesh: Mesh) -> _PseudoNormals:
    tri_mesh = mesh.to_trimesh()
    face = np.asarray(tri_mesh.face_normals, dtype=np.float64)
    angles = np.asarray(tri_mesh.face_angles, dtype=np.float64)

    vertex = np.zeros((mesh.n_vertices, 3))
    np.add.at(vertex, mesh.triangles, angles[:, :, None] * face[:, None, :])

    faces_edges = np.asarray(tri_mesh.faces_unique_edges)
    edge_sum = np.zeros((len(tri_mesh.edges_unique), 3))
    np.add.at(edge_sum, faces_edges,
              np.broadcast_to(face[:, None, :], faces_edges.shape + (3,)))
    return _PseudoNormals(face, edge_sum[faces_edges], vertex)


def _pseudo_normal_at(normals: _PseudoNormals, mesh: Mesh, tri: np.ndarray,
                      bary: np.ndarray) -> np.ndarray:
    '''Pseudo-normal of the feature (face, edge or vertex) holding each
    closest point'''
    nonzero = bary > _REGION_EPS
    n_nonzero = nonzero.sum(axis=1)

    result = normals.face[tri].copy()

    on_edge = n_nonzero == 2
    if np.any(on_edge):
        zero_corner = np.argmin(bary[on_edge], axis=1)
        edge_slot = (zero_corner + 1) % 3
        result[on_edge] = normals.edge[tri[on_edge], edge_slot]

    on_vertex = n_nonzero <= 1
    if np.any(on_vertex):
        corner = np.argmax(bary[on_vertex], axis=1)
        result[on_vertex] = normals.vertex[
            mesh.triangles[tri[on_vertex], corner]]
    return result


def _best_of_candidates(mesh, points, candidates):
    '''
    Exact closest triangle among per-point candidate lists

    Parameters
    ----------
    points: np.ndarray
        (p, 3) query points
    candidates: np.ndarray
        (p, k) candidate triangle indices
    '''
    n_points, k = candidates.shape
    flat = candidates.ravel()
    closest, bary = closest_points_on_triangles(
        mesh.corners[flat], np.repeat(points, k, axis=0))
    dist = np.linalg.norm(closest - np.repeat(points, k, axis=0), axis=1)
    dist = dist.reshape(n_points, k)
    best = np.argmin(dist, axis=1)
    rows = np.arange(n_points)
    pick = rows * k + best
    return dist[rows, best], candidates[rows, best], closest[pick], bary[pick]


def _closest_brute_force(mesh, points):
    n_tri = mesh.n_triangles
    out_dist = np.empty(len(points))
    out_tri = np.empty(len(points), dtype=np.int64)
    out_closest = np.empty((len(points), 3))
    out_bary = np.empty((len(points), 3))

    all_tris = np.arange(n_tri)
    chunk = max(1, PAIRS_PER_BATCH // n_tri)
    for start in range(0, len(points), chunk):
        stop = min(start + chunk, len(points))
        candidates = np.broadcast_to(all_tris, (stop - start, n_tri))
        (out_dist[start:stop], out_tri[start:stop],
         out_closest[start:stop], out_bary[start:stop]) = \
            _best_of_candidates(mesh, points[start:stop], candidates)
    return out_dist, out_tri, out_closest, out_bary


def _closest_kdtree(mesh, points):
    '''
    Closest triangle search over the K nearest triangle centroids. A result
    is certified when no triangle outside the candidate set can be closer:
    best <= d_K - R_max with d_K the K-th centroid distance and R_max the
    largest centroid-to-corner radius. Uncertified points retry with a
    larger K and finally fall back to the brute-force scan.
    '''
    corners = mesh.corners
    centroids = corners.mean(axis=1)
    radius = float(np.max(np.linalg.norm(corners - centroids[:, None, :],
                                         axis=2)))
    tree = cKDTree(centroids)

    out_dist = np.empty(len(points))
    out_tri = np.empty(len(points), dtype=np.int64)
    out_closest = np.empty((len(points), 3))
    out_bary = np.empty((len(points), 3))

    pending = np.arange(len(points))
    k = min(KD_NEIGHBORS, mesh.n_triangles)
    while pending.size:
        if k >= mesh.n_triangles:
            res = _closest_brute_force(mesh, points[pending])
            (out_dist[pending], out_tri[pending], out_closest[pending],
             out_bary[pending]) = res
            break

        uncertified = []
        chunk = max(1, PAIRS_PER_BATCH // k)
        for start in range(0, pending.size, chunk):
            sel = pending[start:start + chunk]
            centroid_dist, candidates = tree.query(points[sel], k=k,
                                                   workers=-1)
            dist, tri, closest, bary = _best_of_candidates(
                mesh, points[sel], np.asarray(candidates, dtype=np.int64))
            certified = dist <= centroid_dist[:, -1] - radius
            keep = sel[certified]
            out_dist[keep] = dist[certified]
            out_tri[keep] = tri[certified]
            out_closest[keep] = closest[certified]
            out_bary[keep] = bary[certified]
            uncertified.append(sel[~certified])

        pending = np.concatenate(uncertified) if uncertified else \
            np.zeros(0, dtype=np.int64)
        k = min(4 * k, mesh.n_triangles)
    return out_dist, out_tri, out_closest, out_bary


def closest_on_mesh(mesh: Mesh, points: np.ndarray, method: str = 'auto'):
    '''
    Exact closest point on a mesh for every query point

    Parameters
    ----------
    mesh: Mesh
        Triangle mesh
    points: np.ndarray
        (p, 3) query points
    method: str
        'brute', 'kdtree' or 'auto'

    Returns
    -------
    dist, tri, closest, bary
        Unsigned distances, closest triangle indices, closest points and
        their barycentric coordinates
    '''
    if method == 'auto':
        small = len(points) * mesh.n_triangles <= BRUTE_FORCE_MAX_PAIRS
        method = 'brute' if small else 'kdtree'
    if method == 'brute':
        return _closest_brute_force(mesh, points)
    if method == 'kdtree':
        return _closest_kdtree(mesh, points)

    err_str = f'unknown closest-triangle search {method}'
    logging.getLogger('sdf_grid.closest_on_mesh').error(err_str)
    raise ValueError(err_str)


def signed_distance_to_mesh(mesh: Mesh, points: np.ndarray,
                            method: str = 'auto'):
    '''
    Exact signed distance (positive outside) with closest-triangle payload

    Returns
    -------
    distance, tri, bary
    '''
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dist, tri, closest, bary = closest_on_mesh(mesh, points, method)
    normals = _pseudo_normals(mesh)
    pseudo = _pseudo_normal_at(normals, mesh, tri, bary)
    side = np.einsum('ij,ij->i', points - closest, pseudo)
    sign = np.where(side < 0.0, -1.0, 1.0)
    return sign * dist, tri, bary


def build_grid(mesh: Mesh, resolution: int = DEFAULT_RESOLUTION,
               method: str = 'auto') -> SdfGrid:
    '''
    Voxelize the signed distance field of a normalized mesh

    Parameters
    ----------
    mesh: Mesh
        Mesh normalized into [-1, 1]^3
    resolution: int
        Voxels per axis
    method: str
        Closest-triangle search: 'auto' scans all triangles at small
        resolutions and uses a centroid k-d tree otherwise; 'brute' and
        'kdtree' force one of them

    Returns
    -------
    _: SdfGrid
        Signed distance field over [-2.5, 2.5]^3
    '''
    error_channel = logging.getLogger('sdf_grid.build_grid')
    info_channel = logging.getLogger('sdf_grid.build_grid')

    if resolution < MIN_RESOLUTION:
        err_str = f'SDF resolution {resolution} < {MIN_RESOLUTION}'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        err_str = 'cannot build a distance field for an empty mesh'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if np.any(np.abs(mesh.vertices) > 1.0 + 1e-9):
        err_str = 'mesh must be normalized into [-1, 1]^3 before voxelization'
        error_channel.error(err_str)
        raise ValueError(err_str)

    t_start = time.perf_counter()

    if method == 'auto':
        n_pairs = resolution ** 3 * mesh.n_triangles
        method = 'brute' if (resolution <= BRUTE_FORCE_MAX_RESOLUTION and
                             n_pairs <= BRUTE_FORCE_MAX_PAIRS) else 'kdtree'

    grid_template = SdfGrid(resolution, np.empty(0), np.empty(0), np.empty(0))
    axis = grid_template.voxel_centers()
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing='ij')
    centers = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    distance, tri, bary = signed_distance_to_mesh(mesh, centers, method)
    if not np.all(np.isfinite(distance)):
        err_str = f'{np.count_nonzero(~np.isfinite(distance))} voxels of the ' \
                  'distance field are not finite'
        error_channel.error(err_str)
        raise FloatingPointError(err_str)

    shape = (resolution,) * 3
    grid = SdfGrid(resolution, distance.reshape(shape), tri.reshape(shape),
                   bary.reshape(shape + (3,)))
    info_channel.info(f'built {resolution}^3 SDF over {mesh.n_triangles} '
                      f'triangles ({method}) in {get_time_delta_str(t_start)}')
    return grid


def save_grid(grid: SdfGrid, path: str, digest: str) -> None:
    '''
    Write the grid cache: a little-endian header (magic, extent, resolution,
    mesh SHA-256) followed by one record per voxel (distance, triangle ID,
    three barycentric weights) in [ix, iy, iz] C order

    Parameters
    ----------
    grid: SdfGrid
        Grid to store
    path: str
        Cache file path
    digest: str
        Hex SHA-256 of the mesh the grid was built from
    '''
    header = np.zeros(1, dtype=_CACHE_HEADER)
    header['magic'] = CACHE_MAGIC
    header['extent'] = grid.extent
    header['resolution'] = grid.resolution
    header['digest'] = digest.encode('ascii')

    records = np.empty(grid.distance.size, dtype=_CACHE_RECORD)
    records['distance'] = grid.distance.ravel()
    records['tri_id'] = grid.tri_id.ravel()
    records['bary'] = grid.bary.reshape(-1, 3)

    with open(path, 'wb') as f_cache:
        f_cache.write(header.tobytes())
        f_cache.write(records.tobytes())


def load_grid(path: str, digest: str | None = None,
              resolution: int | None = None) -> SdfGrid | None:
    '''
    Read a grid cache. Returns None when the cache does not match the
    expected mesh digest or resolution.
    '''
    error_channel = logging.getLogger('sdf_grid.load_grid')

    with open(path, 'rb') as f_cache:
        header = np.frombuffer(f_cache.read(_CACHE_HEADER.itemsize),
                               dtype=_CACHE_HEADER)
        if header.size != 1 or header['magic'][0] != CACHE_MAGIC:
            err_str = f'{path} is not a distance field cache'
            error_channel.error(err_str)
            raise ValueError(err_str)

        res = int(header['resolution'][0])
        if digest is not None and \
                header['digest'][0].decode('ascii') != digest:
            return None
        if resolution is not None and res != resolution:
            return None

        records = np.frombuffer(f_cache.read(), dtype=_CACHE_RECORD)

    if records.size != res ** 3:
        err_str = f'{path} truncated: {records.size} of {res ** 3} voxels'
        error_channel.error(err_str)
        raise ValueError(err_str)

    shape = (res,) * 3
    return SdfGrid(res, records['distance'].reshape(shape).copy(),
                   records['tri_id'].reshape(shape).copy(),
                   records['bary'].reshape(shape + (3,)).copy(),
                   float(header['extent'][0]))


def load_or_build_grid(mesh: Mesh, resolution: int,
                       cache_path: str | None = None) -> SdfGrid:
    '''
    Reuse a cached grid built from identical mesh content, otherwise build
    and (when a cache path is given) store it
    '''
    info_channel = logging.getLogger('sdf_grid.load_or_build_grid')
    digest = mesh.digest()

    if cache_path and os.path.isfile(cache_path):
        grid = load_grid(cache_path, digest, resolution)
        if grid is not None:
            info_channel.info(f'reusing distance field cache {cache_path}')
            return grid
        info_channel.info(f'stale distance field cache {cache_path}, '
                          'rebuilding')

    grid = build_grid(mesh, resolution)
    if cache_path:
        save_grid(grid, cache_path, digest)
    return grid


def _as_points(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 3), x.ndim == 1


def _interpolate(grid, points):
    idx = (points + grid.extent) / grid.voxel_size - 0.5
    finite = np.all(np.isfinite(idx), axis=1)
    idx = np.where(finite[:, None], idx, 0.0)
    values = ndimage.map_coordinates(grid.distance, idx.T, order=1,
                                     mode='nearest')
    values[~finite] = np.nan
    outside = np.any((idx < -1e-9) | (idx > grid.resolution - 1 + 1e-9),
                     axis=1)
    return values, outside


def sample_distance(grid: SdfGrid, x, return_flag: bool = False):
    '''
    Trilinear interpolation of the voxel distances

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    x: array_like
        (3,) point or (n, 3) points
    return_flag: bool
        Also return whether each sample was clamped to the boundary

    Returns
    -------
    value: float or np.ndarray
        Interpolated signed distance
    extrapolated: bool or np.ndarray
        Only when return_flag is set
    '''
    points, single = _as_points(x)
    values, outside = _interpolate(grid, points)
    if single:
        values, outside = float(values[0]), bool(outside[0])
    return (values, outside) if return_flag else values


def _difference_stencil(grid, points):
    '''
    Offsets for central differences with one-voxel spacing, switching to a
    one-sided scheme where a neighbor leaves the sampled range.

    Returns
    -------
    plus, minus: np.ndarray
        (n, 3) step taken forward/backward per axis (h or 0)
    '''
    lo, hi = grid.sample_bounds
    h = grid.voxel_size
    fwd_ok = points + h <= hi + 1e-12
    back_ok = points - h >= lo - 1e-12
    plus = np.where(fwd_ok, h, 0.0)
    minus = np.where(back_ok, h, 0.0)
    # both sides unavailable only for degenerate tiny grids
    plus = np.where(~fwd_ok & ~back_ok, h, plus)
    return plus, minus


def _stencil_points(points, plus, minus):
    n = len(points)
    eye = np.eye(3)
    stacked = [points]
    for axis in range(3):
        stacked.append(points + plus[:, axis, None] * eye[axis])
        stacked.append(points - minus[:, axis, None] * eye[axis])
    return np.concatenate(stacked).reshape(7, n, 3)


def distance_and_gradient(grid: SdfGrid, points: np.ndarray):
    '''
    Distance, gradient and one-sided flag for (n, 3) points in a single
    interpolation pass
    '''
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    plus, minus = _difference_stencil(grid, points)
    stencil = _stencil_points(points, plus, minus)
    values, _ = _interpolate(grid, stencil.reshape(-1, 3))
    values = values.reshape(7, -1)

    phi = values[0]
    grad = np.empty_like(points)
    for axis in range(3):
        grad[:, axis] = (values[1 + 2 * axis] - values[2 + 2 * axis]) / \
            (plus[:, axis] + minus[:, axis])
    one_sided = np.any((plus == 0.0) | (minus == 0.0), axis=1)
    return phi, grad, one_sided


def gradient(grid: SdfGrid, x, return_flag: bool = False):
    '''
    Gradient of the interpolated distance by central differences with a
    spacing of one voxel, one-sided near the sampled range boundary

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    x: array_like
        (3,) point or (n, 3) points
    return_flag: bool
        Also return whether a one-sided scheme was used

    Returns
    -------
    grad: np.ndarray
        (3,) or (n, 3) gradient
    one_sided: bool or np.ndarray
        Only when return_flag is set
    '''
    points, single = _as_points(x)
    _, grad, one_sided = distance_and_gradient(grid, points)
    if single:
        grad, one_sided = grad[0], bool(one_sided[0])
    return (grad, one_sided) if return_flag else grad


def hessian(grid: SdfGrid, x, return_flag: bool = False):
    '''
    Symmetrized second derivatives: one-voxel differences of the gradient,
    averaged with their transpose

    Parameters
    ----------
    grid: SdfGrid
        Distance field
    x: array_like
        (3,) point or (n, 3) points
    return_flag: bool
        Also return whether any stencil fell back to one-sided differences

    Returns
    -------
    hess: np.ndarray
        (3, 3) or (n, 3, 3) symmetric matrix
    one_sided: bool or np.ndarray
        Only when return_flag is set
    '''
    points, single = _as_points(x)
    plus, minus = _difference_stencil(grid, points)
    stencil = _stencil_points(points, plus, minus)
    _, grads, inner_flags = distance_and_gradient(grid, stencil.reshape(-1, 3))
    grads = grads.reshape(7, -1, 3)
    inner_flags = inner_flags.reshape(7, -1)

    hess = np.empty((len(points), 3, 3))
    for axis in range(3):
        hess[:, :, axis] = (grads[1 + 2 * axis] - grads[2 + 2 * axis]) / \
            (plus[:, axis] + minus[:, axis])[:, None]
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))

    one_sided = np.any(inner_flags, axis=0) | \
        np.any((plus == 0.0) | (minus == 0.0), axis=1)
    if single:
        hess, one_sided = hess[0], bool(one_sided[0])
    return (hess, one_sided) if return_flag else hess


def snap_to_surface(grid: SdfGrid, mesh: Mesh, points: np.ndarray):
    '''
    Project near-surface points onto the mesh using the triangles stored in
    the eight voxels around each point

    Parameters
    ----------
    grid: SdfGrid
        Distance field built from mesh
    mesh: Mesh
        Mesh the payload indexes into
    points: np.ndarray
        (n, 3) points close to the surface

    Returns
    -------
    positions, triangles, bary
        Snapped points (exact barycentric combinations), triangle indices and
        barycentric weights
    '''
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 3))

    idx = (points + grid.extent) / grid.voxel_size - 0.5
    base = np.clip(np.floor(idx).astype(np.int64), 0, grid.resolution - 2)
    offsets = np.array([[i, j, k] for i in (0, 1) for j in (0, 1)
                        for k in (0, 1)])
    cells = base[:, None, :] + offsets[None, :, :]
    candidates = grid.tri_id[cells[..., 0], cells[..., 1], cells[..., 2]]

    _, tri, _, bary = _best_of_candidates(mesh, points, candidates)
    positions = np.einsum('nk,nkj->nj', bary, mesh.corners[tri])
    return positions, tri, bary


def surface_point_at(grid: SdfGrid, mesh: Mesh, x,
                     tol: float = HIT_TOLERANCE) -> SurfacePoint:
    '''
    Resolve a point on the surface to its triangle, barycentric weights and
    scalar

    Parameters
    ----------
    grid: SdfGrid
        Distance field built from mesh
    mesh: Mesh
        Mesh carrying the scalar field
    x: array_like
        (3,) point with |sample_distance(x)| <= tol
    tol: float
        Distance tolerance for x to count as on the surface

    Returns
    -------
    _: SurfacePoint
        Snapped surface point
    '''
    x = np.asarray(x, dtype=np.float64)
    phi = sample_distance(grid, x)
    if not abs(phi) <= tol:
        err_str = f'not on surface: |phi| = {abs(phi):.3g} > {tol:.3g}'
        logging.getLogger('sdf_grid.surface_point_at').error(err_str)
        raise ValueError(err_str)

    positions, tri, bary = snap_to_surface(grid, mesh, x[None, :])
    scalar = interpolate_vertex_values(mesh, mesh.scalars, tri, bary)[0]
    return SurfacePoint(positions[0], int(tri[0]), bary[0], float(scalar))
