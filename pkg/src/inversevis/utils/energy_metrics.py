'''
Information energy of a rendered view and the voxel visibility measure
'''
from __future__ import annotations

from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy.spatial import cKDTree

from inversevis.utils.camera_image import (PIXEL_DIRECT, PIXEL_INDIRECT,
                                           PIXEL_NONE)
from inversevis.utils.geometry_io import (ImportanceField, Mesh,
                                          interpolate_vertex_values)
from inversevis.utils.sdf_grid import SdfGrid, sample_distance


DEFAULT_VIS_RESOLUTION = 200
NDC_AREA = 4.0


@dataclass(frozen=True)
class EnergyReport:
    '''
    Energy of one render: total = gamma * direct_term + indirect_term
    '''
    direct_term: float
    indirect_term: float
    gamma: float
    total: float
    # pixels per PixelClass as classified
    census: dict
    # sum of s over all hits divided by the hit count
    mean_scalar: float
    hit_count: int
    visibility: float | None = None
    technique: str | None = None
    camera: dict | None = None
    params: dict | None = None
    # pixels per class after indirect misses are demoted to none
    effective_census: dict | None = None

    def to_dict(self) -> dict:
        camera = None
        if self.camera is not None:
            camera = {'theta': self.camera['theta'],
                      'phi': self.camera['phi']}
        return {'technique': self.technique,
                'camera': camera,
                'params': self.params,
                'direct': self.direct_term,
                'indirect': self.indirect_term,
                'gamma': self.gamma,
                'total': self.total,
                'visibility': self.visibility,
                'census': dict(self.census),
                'effective_census': (dict(self.effective_census)
                                     if self.effective_census is not None
                                     else None),
                'mean_scalar': self.mean_scalar,
                'hit_count': self.hit_count}


@dataclass(frozen=True)
class VisibilityGrid:
    '''
    Surface shell voxels (marked) and the ones reached by a render (visited)
    '''
    resolution: int
    extent: float
    marked: np.ndarray
    visited: np.ndarray

    @property
    def voxel_size(self) -> float:
        return 2.0 * self.extent / self.resolution

    @property
    def marked_count(self) -> int:
        return int(np.count_nonzero(self.marked))

    @property
    def visited_count(self) -> int:
        return int(np.count_nonzero(self.visited))

    def fresh(self) -> VisibilityGrid:
        '''Copy with no visited voxels'''
        return replace(self, visited=np.zeros_like(self.marked))

    def voxel_ids(self, positions) -> np.ndarray:
        '''
        Flat voxel index of each position, -1 outside the grid or for
        non-finite positions
        '''
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        finite = np.all(np.isfinite(positions), axis=1)
        idx = np.floor((np.where(finite[:, None], positions, 0.0)
                        + self.extent) / self.voxel_size).astype(np.int64)
        inside = finite & np.all((idx >= 0) & (idx < self.resolution), axis=1)
        ids = np.ravel_multi_index(tuple(np.clip(idx, 0, self.resolution - 1).T),
                                   self.marked.shape)
        return np.where(inside, ids, -1)

    def voxel_centers(self, ids) -> np.ndarray:
        ijk = np.column_stack(np.unravel_index(np.asarray(ids),
                                               self.marked.shape))
        return -self.extent + (ijk + 0.5) * self.voxel_size


def mark_voxels(grid: SdfGrid, resolution: int | None = None) -> VisibilityGrid:
    '''
    Mark the voxels the surface passes through

    A voxel is marked when its center lies within half a voxel edge of the
    surface, so the closest surface point is inside the voxel and a dense
    set of surface hits visits every marked voxel.

    Parameters
    ----------
    grid: SdfGrid
        Distance field of the scene
    resolution: int or None
        Visibility grid resolution; defaults to the SDF resolution, other
        resolutions sample the SDF at their own voxel centers

    Returns
    -------
    _: VisibilityGrid
        Grid with nothing visited yet
    '''
    if resolution is None or resolution == grid.resolution:
        res = grid.resolution
        marked = np.abs(grid.distance) <= 0.5 * grid.voxel_size
    else:
        res = int(resolution)
        if res < 2:
            err_str = f'visibility resolution must be >= 2, got {res}'
            logging.getLogger('energy_metrics.mark_voxels').error(err_str)
            raise ValueError(err_str)
        size = 2.0 * grid.extent / res
        centers = -grid.extent + (np.arange(res) + 0.5) * size
        yy, zz = np.meshgrid(centers, centers, indexing='ij')
        marked = np.empty((res, res, res), dtype=bool)
        for i, x in enumerate(centers):
            slab = np.column_stack([np.full(yy.size, x), yy.ravel(),
                                    zz.ravel()])
            marked[i] = (np.abs(sample_distance(grid, slab)) <=
                         0.5 * size).reshape(res, res)

    return VisibilityGrid(res, grid.extent, marked,
                          np.zeros_like(marked, dtype=bool))


def visit(vis: VisibilityGrid, positions) -> np.ndarray:
    '''
    Mark the voxels containing hit positions as visited, in order

    Parameters
    ----------
    vis: VisibilityGrid
        Grid updated in place
    positions: array_like
        (n, 3) hit positions, NaN rows are ignored

    Returns
    -------
    _: np.ndarray
        (n,) bool, True where the hit is the first to reach a marked voxel
    '''
    ids = vis.voxel_ids(positions)
    valid = ids >= 0
    valid[valid] = vis.marked.flat[ids[valid]]

    first = np.zeros(len(ids), dtype=bool)
    rows = np.flatnonzero(valid)
    if rows.size:
        unique_ids, first_pos = np.unique(ids[rows], return_index=True)
        new = ~vis.visited.flat[unique_ids]
        first[rows[first_pos[new]]] = True
        vis.visited.flat[unique_ids] = True
    return first


def visibility_ratio(vis: VisibilityGrid, positions) -> float:
    '''
    Visit the given hits and return visited / marked

    Parameters
    ----------
    vis: VisibilityGrid
        Grid updated in place
    positions: array_like
        (n, 3) hit positions of one render

    Returns
    -------
    _: float
        Ratio in [0, 1]
    '''
    marked = vis.marked_count
    if marked == 0:
        err_str = 'no surface shell: visibility grid has no marked voxels'
        logging.getLogger('energy_metrics.visibility_ratio').error(err_str)
        raise ValueError(err_str)
    visit(vis, positions)
    return vis.visited_count / marked


def _hit_order(effective_class):
    '''direct hits first, then indirect, each in pixel order'''
    return np.concatenate([np.flatnonzero(effective_class == PIXEL_DIRECT),
                           np.flatnonzero(effective_class == PIXEL_INDIRECT)])


def measure_visibility(vis: VisibilityGrid, trace) -> VisibilityGrid:
    '''Fresh copy of vis with every hit of a render visited'''
    measured = vis.fresh()
    visit(measured, trace.position[_hit_order(trace.effective_class)])
    return measured


def hit_importance(trace, mesh: Mesh, importance: ImportanceField,
                   vis: VisibilityGrid | None = None) -> np.ndarray:
    '''
    Importance s at every pixel's landing point, zero for pixels without a
    hit

    In visibility mode s is 1 only for the first hit reaching a marked
    voxel, taking direct hits before indirect ones; vis is visited in place.
    '''
    cls = trace.effective_class
    s = np.zeros(len(cls))

    if importance.mode == 'visibility':
        if vis is None:
            err_str = 'visibility energy requires a visibility grid'
            logging.getLogger('energy_metrics.hit_importance').error(err_str)
            raise ValueError(err_str)
        order = _hit_order(cls)
        s[order] = visit(vis, trace.position[order])
        return s

    rows = np.flatnonzero(cls != PIXEL_NONE)
    s[rows] = interpolate_vertex_values(mesh, importance.vertex_values(mesh),
                                        trace.triangle[rows],
                                        trace.bary[rows])
    return s


def energy(trace, mesh: Mesh, importance: ImportanceField, gamma: float,
           width: int, height: int, vis: VisibilityGrid | None = None,
           technique: str | None = None, camera: dict | None = None,
           params: dict | None = None) -> EnergyReport:
    '''
    Energy of one render

    Parameters
    ----------
    trace: PixelTrace
        Per-pixel classes and hits of the render, row-major
    mesh: Mesh
        Scene mesh
    importance: ImportanceField
        Source of s
    gamma: float
        Weight of the directly visible term
    width, height: int
        Image size, the pixel area in NDC is 4 / (width * height)
    vis: VisibilityGrid or None
        Marked shell; required in visibility mode, otherwise only used to
        report the visibility ratio. Not modified.
    technique, camera, params:
        Echoed into the report

    Returns
    -------
    _: EnergyReport
        Report with the raw and the effective pixel census
    '''
    error_channel = logging.getLogger('energy_metrics.energy')
    if not gamma >= 0:
        err_str = f'gamma must be >= 0, got {gamma}'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if len(trace) != width * height:
        err_str = f'{len(trace)} traced pixels for a {width}x{height} image'
        error_channel.error(err_str)
        raise ValueError(err_str)

    measured = vis.fresh() if vis is not None else None
    s = hit_importance(trace, mesh, importance, measured)
    if measured is not None and importance.mode != 'visibility':
        visit(measured, trace.position[_hit_order(trace.effective_class)])

    cls = trace.effective_class
    pixel_area = NDC_AREA / (width * height)
    direct_term = float(np.sum(s[cls == PIXEL_DIRECT])) * pixel_area
    indirect_term = float(np.sum(s[cls == PIXEL_INDIRECT])) * pixel_area
    hit_count = int(np.count_nonzero(cls != PIXEL_NONE))
    mean_scalar = float(np.sum(s)) / hit_count if hit_count else 0.0

    visibility = None
    if measured is not None and measured.marked_count:
        visibility = measured.visited_count / measured.marked_count

    return EnergyReport(direct_term, indirect_term, float(gamma),
                        float(gamma) * direct_term + indirect_term,
                        trace.census(), mean_scalar, hit_count, visibility,
                        technique, camera, params,
                        trace.census(effective=True))


def region_visited_fraction(vis: VisibilityGrid, mesh: Mesh,
                            vertex_mask) -> float:
    '''
    Visited share of the marked voxels whose nearest mesh vertex is flagged

    Parameters
    ----------
    vis: VisibilityGrid
        Grid after a measurement pass
    mesh: Mesh
        Mesh the mask refers to
    vertex_mask: array_like
        (n,) bool per vertex

    Returns
    -------
    _: float
        Fraction in [0, 1], 0 for an empty region
    '''
    vertex_mask = np.asarray(vertex_mask, dtype=bool)
    marked_ids = np.flatnonzero(vis.marked)
    _, nearest = cKDTree(mesh.vertices).query(vis.voxel_centers(marked_ids))
    region = marked_ids[vertex_mask[nearest]]
    if region.size == 0:
        return 0.0
    return float(np.mean(vis.visited.flat[region]))
