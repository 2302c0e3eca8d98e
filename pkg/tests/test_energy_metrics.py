import numpy as np
import pytest

from inversevis.utils.camera_image import (PIXEL_DIRECT, PIXEL_INDIRECT,
                                           PIXEL_NONE, make_camera,
                                           pixel_grid_ndc)
from inversevis.utils.energy_metrics import (VisibilityGrid, energy,
                                             hit_importance, mark_voxels,
                                             measure_visibility,
                                             region_visited_fraction, visit,
                                             visibility_ratio)
from inversevis.utils.geometry_io import (ImportanceField, Mesh, hotspot_mask,
                                          make_primitive)
from inversevis.utils.optimizers import AscentConfig
from inversevis.utils.render_pass import Scene, optimize_params, trace_image
from inversevis.utils.sdf_grid import build_grid
from inversevis.utils.techniques import (DirectParams, InverseVisParams,
                                         MirrorParams, NeugebauerParams,
                                         PixelTrace, trace_pixels)


def _synthetic_trace(classes, positions=None):
    '''
    Trace of pixels all landing on triangle 0 at its first corner
    '''
    classes = np.asarray(classes, dtype=np.int8)
    n_pixels = len(classes)
    found = classes != PIXEL_NONE
    if positions is None:
        positions = np.zeros((n_pixels, 3))
    positions = np.where(found[:, None], positions, np.nan)
    bary = np.tile([1.0, 0.0, 0.0], (n_pixels, 1))
    return PixelTrace(classes, found, positions,
                      np.where(found, 0, -1), bary,
                      np.where(found, 1.0, np.nan),
                      np.zeros(n_pixels, dtype=np.int8),
                      np.full((n_pixels, 3), np.nan))


def _unit_scalar_plane():
    plane = make_primitive('plane')
    return Mesh(plane.vertices, plane.triangles, np.ones(plane.n_vertices))


def test_all_direct_unit_scalar():
    '''
    Every pixel direct with s = 1 integrates to the NDC area 4
    '''
    mesh = _unit_scalar_plane()
    trace = _synthetic_trace([PIXEL_DIRECT] * 64)
    report = energy(trace, mesh, ImportanceField(), 1.0, 8, 8)
    assert report.total == pytest.approx(4.0)
    assert report.direct_term == pytest.approx(4.0)
    assert report.indirect_term == 0.0
    assert report.census == {'none': 0, 'direct': 64, 'indirect': 0}
    assert report.mean_scalar == pytest.approx(1.0)
    assert report.hit_count == 64


def test_gamma_weights_direct_term():
    mesh = _unit_scalar_plane()
    classes = [PIXEL_DIRECT] * 32 + [PIXEL_INDIRECT] * 16 + [PIXEL_NONE] * 16
    trace = _synthetic_trace(classes)

    report = energy(trace, mesh, ImportanceField(), 0.0, 8, 8)
    assert report.total == pytest.approx(report.indirect_term)
    assert report.indirect_term == pytest.approx(1.0)

    report = energy(trace, mesh, ImportanceField(), 0.5, 8, 8)
    assert report.total == pytest.approx(0.5 * 2.0 + 1.0)

    with pytest.raises(ValueError):
        energy(trace, mesh, ImportanceField(), -1.0, 8, 8)
    with pytest.raises(ValueError):
        energy(trace, mesh, ImportanceField(), 1.0, 4, 4)


def test_indirect_miss_counts_as_none():
    mesh = _unit_scalar_plane()
    trace = _synthetic_trace([PIXEL_INDIRECT] * 4)
    missed = PixelTrace(trace.pixel_class, np.array([True, False] * 2),
                        trace.position, trace.triangle, trace.bary,
                        trace.scalar, trace.terminal, trace.seed)
    report = energy(missed, mesh, ImportanceField(), 1.0, 2, 2)
    assert report.census == {'none': 0, 'direct': 0, 'indirect': 4}
    assert report.effective_census == {'none': 2, 'direct': 0, 'indirect': 2}
    assert report.to_dict()['effective_census']['none'] == 2


def test_mark_voxels_shell(sphere_params):
    '''
    Marked voxels sit within half a voxel of the surface
    '''
    vis = mark_voxels(sphere_params.grid)
    assert vis.resolution == sphere_params.grid.resolution
    centers = vis.voxel_centers(np.flatnonzero(vis.marked))
    radii = np.linalg.norm(centers, axis=1)
    assert np.all(np.abs(radii - 0.8) < vis.voxel_size)
    assert vis.visited_count == 0


def test_marked_count_grows_with_resolution():
    '''
    A surface shell holds about four times the voxels per doubling
    '''
    mesh = make_primitive('sphere')
    grid = build_grid(mesh, 32)
    coarse = mark_voxels(grid, 24).marked_count
    fine = mark_voxels(grid, 48).marked_count
    assert 2.5 < fine / coarse < 6.0


def test_visit_first_hits():
    marked = np.ones((4, 4, 4), dtype=bool)
    vis = VisibilityGrid(4, 2.0, marked, np.zeros_like(marked))
    positions = np.array([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2],
                          [-1.5, -1.5, -1.5], [np.nan] * 3,
                          [5.0, 0.0, 0.0]])
    first = visit(vis, positions)
    np.testing.assert_array_equal(first, [True, False, True, False, False])
    assert vis.visited_count == 2
    np.testing.assert_array_equal(visit(vis, positions[:1]), [False])


def test_visibility_ratio():
    marked = np.zeros((4, 4, 4), dtype=bool)
    marked[0, 0, 0] = marked[3, 3, 3] = True
    vis = VisibilityGrid(4, 2.0, marked, np.zeros_like(marked))
    assert visibility_ratio(vis, [[-1.5, -1.5, -1.5], [0.1, 0.1, 0.1]]) == \
        pytest.approx(0.5)

    empty = VisibilityGrid(4, 2.0, np.zeros_like(marked),
                           np.zeros_like(marked))
    with pytest.raises(ValueError, match='no surface shell'):
        visibility_ratio(empty, [[0.0, 0.0, 0.0]])


def test_visibility_energy_counts_new_voxels(sphere_params):
    '''
    Visibility importance is 1 only for the first hit in a shell voxel, and
    the shared grid is left untouched
    '''
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    trace = trace_image(scene, camera, DirectParams(), 24, 24)
    vis = scene.vis

    s = hit_importance(trace, scene.mesh, ImportanceField('visibility'),
                       vis.fresh())
    hits = trace.effective_class != PIXEL_NONE
    assert 0 < s.sum() < hits.sum()
    assert set(np.unique(s)) <= {0.0, 1.0}

    report = energy(trace, scene.mesh, ImportanceField('visibility'), 1.0,
                    24, 24, vis=vis)
    assert vis.visited_count == 0
    measured = measure_visibility(vis, trace)
    assert report.visibility == pytest.approx(measured.visited_count /
                                              measured.marked_count)
    # a single side view covers about half the shell at most
    assert 0.0 < report.visibility < 0.7


def test_inversevis_sees_more_than_direct(sphere_params):
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    plain = measure_visibility(scene.vis, trace_image(
        scene, camera, DirectParams(), 24, 24))
    curved = measure_visibility(scene.vis, trace_image(
        scene, camera, InverseVisParams(), 24, 24))
    assert curved.visited_count > plain.visited_count


def test_region_visited_fraction(sphere_params):
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    measured = measure_visibility(scene.vis, trace_image(
        scene, camera, DirectParams(), 24, 24))

    front = hotspot_mask(scene.mesh, [camera.position], 30.0)
    back = hotspot_mask(scene.mesh, [-camera.position], 30.0)
    assert region_visited_fraction(measured, scene.mesh, front) > 0.2
    assert region_visited_fraction(measured, scene.mesh, back) == 0.0
    assert region_visited_fraction(measured, scene.mesh,
                                   np.zeros(scene.mesh.n_vertices)) == 0.0


def _surface_samples(mesh, n_points, seed):
    '''Uniform random points on the mesh triangles'''
    rng = np.random.default_rng(seed)
    corners = mesh.vertices[mesh.triangles]
    areas = 0.5 * np.linalg.norm(np.cross(corners[:, 1] - corners[:, 0],
                                          corners[:, 2] - corners[:, 0]),
                                 axis=1)
    tri = rng.choice(len(areas), size=n_points, p=areas / areas.sum())
    u, v = rng.random((2, n_points))
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    bary = np.column_stack([1.0 - u - v, u, v])
    return np.einsum('ni,nij->nj', bary, corners[tri])


def test_full_coverage_reaches_one(sphere_params):
    '''
    Hits spread over the whole surface visit every shell voxel
    '''
    vis = mark_voxels(sphere_params.grid)
    points = _surface_samples(sphere_params.mesh, 200000, 31)
    assert visibility_ratio(vis.fresh(), points) >= 0.98

    centers = vis.voxel_centers(np.flatnonzero(vis.marked))
    assert visibility_ratio(vis.fresh(), centers) == pytest.approx(1.0)


def test_direct_view_sees_front_half(sphere_params):
    vis = mark_voxels(sphere_params.grid, 64)
    trace = trace_pixels(sphere_params.grid, sphere_params.mesh,
                         make_camera(np.pi / 2, 0.0), DirectParams(),
                         pixel_grid_ndc(96, 96))
    measured = measure_visibility(vis, trace)
    ratio = measured.visited_count / measured.marked_count
    assert 0.36 <= ratio <= 0.62


@pytest.mark.parametrize('kind', ['sphere', 'torus'])
def test_technique_ordering(kind, sphere_params):
    '''
    Every technique keeps the direct hits, and curved rays see at least as
    much as the mirror
    '''
    if kind == 'sphere':
        scene = sphere_params.scene
    else:
        mesh = make_primitive('torus')
        scene = Scene(mesh, build_grid(mesh, 48), vis_resolution=32,
                      name='torus')
    camera = make_camera(np.pi / 2, 0.0)

    ratio = {}
    for params in (DirectParams(), MirrorParams(), NeugebauerParams(),
                   InverseVisParams()):
        measured = measure_visibility(scene.vis, trace_image(
            scene, camera, params, 32, 32))
        ratio[params.technique] = measured.visited_count / \
            measured.marked_count

    assert ratio['inversevis'] >= ratio['mirror'] - 0.02
    assert ratio['mirror'] >= ratio['direct'] - 0.02
    assert ratio['neugebauer'] >= ratio['direct'] - 0.02
    assert ratio['inversevis'] > ratio['direct']


def test_hotspots_revealed(sphere_params):
    '''
    Two opposite hotspots on the silhouette of a side view are both mostly
    visited once alpha is tuned to them
    '''
    mesh = sphere_params.mesh
    hotspots = [[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]
    mask = hotspot_mask(mesh, hotspots, 30.0)
    scene = Scene(mesh, sphere_params.grid,
                  ImportanceField('mask', mask.astype(np.float64)),
                  vis_resolution=32, name='hotspots')
    camera = make_camera(np.pi / 2, 0.0)

    best, _, _ = optimize_params(scene, camera, InverseVisParams(), 32, 32,
                                 config=AscentConfig(max_iterations=3))
    revealed = measure_visibility(scene.vis, trace_image(
        scene, camera, best, 96, 96))
    plain = measure_visibility(scene.vis, trace_image(
        scene, camera, DirectParams(), 96, 96))

    for center in hotspots:
        region = hotspot_mask(mesh, [center], 30.0)
        fraction = region_visited_fraction(revealed, mesh, region)
        assert fraction >= 0.8
        assert fraction > region_visited_fraction(plain, mesh, region)
