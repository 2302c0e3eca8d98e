import pathlib
import types

import pytest

from inversevis.utils.geometry_io import make_primitive
from inversevis.utils.render_pass import Scene
from inversevis.utils.ray_engine import TraceSettings
from inversevis.utils.sdf_grid import build_grid


def _write_cfg(template_path, cfg_path, test_path, data_path):
    '''
    Read runconfig template, replace path placeholders and write runconfig
    '''
    with open(template_path, 'r') as f_template, \
            open(cfg_path, 'w') as f_cfg:
        cfg = f_template.read().replace('@TEST_PATH@', str(test_path)).\
            replace('@DATA_PATH@', data_path)
        f_cfg.write(cfg)


@pytest.fixture(scope="session")
def sphere_params():
    '''
    Sphere primitive with a coarse distance field shared by the unit tests

    Returns
    -------
    test_params: SimpleNamespace
        SimpleNamespace containing the mesh, grid and scene of the sphere
    '''
    test_params = types.SimpleNamespace()

    test_params.mesh = make_primitive('sphere')
    test_params.resolution = 48
    test_params.grid = build_grid(test_params.mesh, test_params.resolution)
    test_params.settings = TraceSettings()
    test_params.scene = Scene(test_params.mesh, test_params.grid,
                              settings=test_params.settings,
                              vis_resolution=32, name='sphere')

    # analytic answers
    test_params.radius = 0.8
    test_params.tolerance = 2.0 * test_params.grid.voxel_diagonal

    return test_params


@pytest.fixture(scope="session")
def box_params():
    '''
    Box primitive and its distance field

    Returns
    -------
    test_params: SimpleNamespace
        SimpleNamespace containing the mesh and grid of the box
    '''
    test_params = types.SimpleNamespace()
    test_params.mesh = make_primitive('box')
    test_params.grid = build_grid(test_params.mesh, 40)
    test_params.half_extent = 0.7
    return test_params


@pytest.fixture(scope="session")
def inversevis_params():
    '''
    Parameters to be used by the workflow tests

    Returns
    -------
    test_params: SimpleNamespace
        SimpleNamespace containing runconfig and output paths
    '''
    test_params = types.SimpleNamespace()

    # get test working directory
    test_path = pathlib.Path(__file__).parent.resolve()

    # set other paths relative to working directory
    test_params.data_path = f'{test_path}/data'
    test_params.product_path = f'{test_path}/product'

    # paths for template and actual runconfig
    template_path = f'{test_params.data_path}/inversevis_template.yaml'
    test_params.cfg_path = f'{test_params.data_path}/inversevis.yaml'
    _write_cfg(template_path, test_params.cfg_path, test_path,
               test_params.data_path)

    # input files shipped with the tests
    test_params.tetra_path = f'{test_params.data_path}/tetra.ply'
    test_params.quad_path = f'{test_params.data_path}/quad.ply'
    test_params.sidecar_path = f'{test_params.data_path}/tetra_scalars.txt'
    test_params.short_sidecar_path = \
        f'{test_params.data_path}/tetra_scalars_short.txt'
    test_params.mask_path = f'{test_params.data_path}/tetra_mask.txt'

    # outputs named in the template
    product = test_params.product_path
    test_params.image_path = f'{product}/inversevis.ppm'
    test_params.report_path = f'{product}/inversevis.json'
    test_params.trace_path = f'{product}/inversevis_trace.json'
    test_params.samples_path = f'{product}/inversevis_samples.csv'
    test_params.benchmark_path = f'{product}/inversevis_benchmark.csv'
    test_params.sdf_cache_path = f'{product}/sphere.sdf'
    test_params.browse_path = f'{product}/inversevis.png'
    test_params.hdf5_path = f'{product}/inversevis.h5'

    return test_params
