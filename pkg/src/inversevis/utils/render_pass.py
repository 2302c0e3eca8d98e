'''
Tile-parallel rendering of a scene and the energy objectives the optimizers
climb
'''
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging

import numpy as np

from inversevis.utils.camera_image import (PIXEL_INDIRECT, Camera,
                                           pixel_grid_ndc)
from inversevis.utils.energy_metrics import (NDC_AREA, EnergyReport,
                                             VisibilityGrid, energy,
                                             mark_voxels)
from inversevis.utils.geometry_io import (ImportanceField, Mesh,
                                          triangle_scalar_gradients)
from inversevis.utils.optimizers import (AscentConfig, optimize_alpha,
                                         optimize_mirror)
from inversevis.utils.ray_engine import TraceSettings
from inversevis.utils.sdf_grid import SdfGrid
from inversevis.utils.shading import ShadingConfig, compose_image
from inversevis.utils.techniques import (InverseVisParams, MirrorParams,
                                         PixelTrace, TechniqueParams,
                                         landing_fraction, trace_pixels)


DEFAULT_TILE_ROWS = 16


@dataclass
class Scene:
    '''
    Everything a render needs besides the camera and technique
    '''
    mesh: Mesh
    grid: SdfGrid
    importance: ImportanceField = field(default_factory=ImportanceField)
    settings: TraceSettings = field(default_factory=TraceSettings)
    # visibility grid resolution, None follows the SDF
    vis_resolution: int | None = None
    n_workers: int = 1
    tile_rows: int = DEFAULT_TILE_ROWS
    name: str = 'scene'
    _vis: VisibilityGrid | None = field(default=None, repr=False)

    @property
    def vis(self) -> VisibilityGrid:
        '''Marked surface shell, built on first use'''
        if self._vis is None:
            self._vis = mark_voxels(self.grid, self.vis_resolution)
        return self._vis


def trace_image(scene: Scene, camera: Camera, params: TechniqueParams,
                width: int, height: int, sensitivity: bool = False,
                exact: bool = False) -> PixelTrace:
    '''
    Trace every pixel of a width x height view in row tiles

    Tiles are traced on a thread pool and merged in tile order, so the
    result does not depend on the number of workers.

    Returns
    -------
    _: PixelTrace
        Row-major per-pixel trace
    '''
    ndc = pixel_grid_ndc(width, height)
    tiles = [slice(row * width, min(row + scene.tile_rows, height) * width)
             for row in range(0, height, scene.tile_rows)]

    def trace_tile(tile):
        return trace_pixels(scene.grid, scene.mesh, camera, params, ndc[tile],
                            scene.settings, sensitivity, exact)

    if scene.n_workers > 1:
        with ThreadPoolExecutor(max_workers=scene.n_workers) as pool:
            parts = list(pool.map(trace_tile, tiles))
    else:
        parts = [trace_tile(tile) for tile in tiles]
    return PixelTrace.concatenate(parts)


def evaluate_view(scene: Scene, camera: Camera, params: TechniqueParams,
                  width: int, height: int, gamma: float = 1.0,
                  sensitivity: bool = False, exact: bool = False):
    '''
    Render a view and measure its energy

    Returns
    -------
    report: EnergyReport
        Energy with the visibility ratio of the view
    trace: PixelTrace
        Per-pixel hits
    '''
    trace = trace_image(scene, camera, params, width, height, sensitivity,
                        exact)
    report = energy(trace, scene.mesh, scene.importance, gamma, width, height,
                    vis=scene.vis, technique=params.technique,
                    camera=camera.as_dict(), params=params.as_dict())
    logging.getLogger('render_pass.evaluate_view').debug(
        f'{params.technique} {camera.as_dict()}: energy {report.total:.6g} '
        f'landing {landing_fraction(trace):.3f}')
    return report, trace


def render(scene: Scene, camera: Camera, params: TechniqueParams, width: int,
           height: int, gamma: float = 1.0,
           shading: ShadingConfig | None = None):
    '''
    Render, shade and measure one view

    Returns
    -------
    image: Image
    report: EnergyReport
    trace: PixelTrace
    '''
    report, trace = evaluate_view(scene, camera, params, width, height, gamma)
    image = compose_image(trace, scene.grid, camera, width, height, shading,
                          scene.settings)
    return image, report, trace


def alpha_gradient(scene: Scene, trace: PixelTrace, width: int,
                   height: int) -> float:
    '''
    dE/dalpha: the importance gradient of each landing triangle dotted with
    the landing point's derivative, summed over indirect pixels
    '''
    error_channel = logging.getLogger('render_pass.alpha_gradient')
    if trace.dp_dalpha is None:
        err_str = 'trace carries no alpha sensitivities'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if scene.importance.mode == 'visibility':
        err_str = 'visibility energy has no analytic alpha gradient'
        error_channel.error(err_str)
        raise ValueError(err_str)

    rows = np.flatnonzero((trace.effective_class == PIXEL_INDIRECT) &
                          np.all(np.isfinite(trace.dp_dalpha), axis=1))
    if rows.size == 0:
        return 0.0
    grad_s = triangle_scalar_gradients(
        scene.mesh, scene.importance.vertex_values(scene.mesh))
    contrib = np.einsum('nj,nj->n', grad_s[trace.triangle[rows]],
                        trace.dp_dalpha[rows])
    return float(np.sum(contrib)) * NDC_AREA / (width * height)


@dataclass
class ViewObjective:
    '''
    Energy of one camera as a function of the technique parameters, with
    every evaluated report kept by parameter value
    '''
    scene: Scene
    camera: Camera
    params: TechniqueParams
    width: int
    height: int
    gamma: float = 1.0
    exact: bool = False
    reports: dict = field(default_factory=dict)

    def _remember(self, key, report: EnergyReport) -> float:
        self.reports[key] = report
        return report.total

    def alpha_energy(self, alpha: float) -> float:
        params = self.params.with_alpha(alpha)
        report, _ = evaluate_view(self.scene, self.camera, params, self.width,
                                  self.height, self.gamma)
        return self._remember(round(float(alpha), 12), report)

    def alpha_derivative(self, alpha: float) -> float:
        params = self.params.with_alpha(alpha)
        report, trace = evaluate_view(self.scene, self.camera, params,
                                      self.width, self.height, self.gamma,
                                      sensitivity=True, exact=self.exact)
        self._remember(round(float(alpha), 12), report)
        return alpha_gradient(self.scene, trace, self.width, self.height)

    def mirror_energy(self, omega) -> float:
        params = self.params.with_omega(omega)
        report, _ = evaluate_view(self.scene, self.camera, params, self.width,
                                  self.height, self.gamma)
        return self._remember(tuple(np.round(np.ravel(omega), 12)), report)


def make_objective(scene: Scene, camera: Camera, params: TechniqueParams,
                   width: int, height: int, gamma: float = 1.0,
                   exact: bool = False) -> ViewObjective:
    '''Objective for the alpha or mirror ascent of one view'''
    if not isinstance(params, (InverseVisParams, MirrorParams)):
        err_str = f'{params.technique} has no continuous parameters'
        logging.getLogger('render_pass.make_objective').error(err_str)
        raise ValueError(err_str)
    return ViewObjective(scene, camera, params, width, height, gamma, exact)


def _report_key(params: TechniqueParams):
    if isinstance(params, MirrorParams):
        return tuple(np.round(np.ravel(params.omega), 12))
    return round(float(params.alpha), 12)


def optimize_params(scene: Scene, camera: Camera, params: TechniqueParams,
                    width: int, height: int, gamma: float = 1.0,
                    config: AscentConfig | None = None, analytic: bool = True,
                    exact: bool = False):
    '''
    Ascend the continuous parameters of a technique for one camera

    Parameters
    ----------
    scene: Scene
        Scene to render
    camera: Camera
        Fixed viewpoint
    params: InverseVisParams or MirrorParams
        Starting parameters
    width, height: int
        Image size of every evaluation
    gamma: float
        Weight of the direct term
    config: AscentConfig
        Line search and iteration limits
    analytic: bool
        Use the propagated alpha gradient; visibility energy and mirrors
        always use forward differences
    exact: bool
        Matrix-exponential propagators for the analytic gradient

    Returns
    -------
    params: TechniqueParams
        Best parameters seen
    result: AscentResult
        Ascent log
    report: EnergyReport
        Energy of the best parameters
    '''
    objective = make_objective(scene, camera, params, width, height, gamma,
                               exact)
    if isinstance(params, MirrorParams):
        result = optimize_mirror(objective.mirror_energy, params.omega,
                                 config)
        best = params.with_omega(result.best)
    else:
        gradient_fn = objective.alpha_derivative \
            if analytic and scene.importance.mode != 'visibility' else None
        result = optimize_alpha(objective.alpha_energy, params.alpha,
                                gradient_fn, config)
        best = params.with_alpha(float(result.best[0]))
    return best, result, objective.reports[_report_key(best)]
