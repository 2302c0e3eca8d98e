import json
import os

import h5py
import numpy as np
import pandas as pd
import pytest

from inversevis import (inversevis_cli, iv_benchmark, iv_build_sdf,
                        iv_optimize_alpha, iv_optimize_mirror,
                        iv_optimize_view, iv_render)
from inversevis.iv_benchmark import BENCHMARK_COLUMNS
from inversevis.iv_optimize_view import SAMPLE_COLUMNS
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.shading import read_ppm
from inversevis.utils.techniques import InverseVisParams, MirrorParams


def _load_cfg(inversevis_params, overrides=None):
    return RunConfig.load_from_yaml(inversevis_params.cfg_path, overrides)


def _read_json(path):
    with open(path, 'r') as f_in:
        return json.load(f_in)


@pytest.mark.order(1)
def test_build_sdf_run(inversevis_params):
    '''
    Run build-sdf twice; the second run reuses the cache untouched
    '''
    cfg = _load_cfg(inversevis_params)
    if os.path.isfile(inversevis_params.sdf_cache_path):
        os.remove(inversevis_params.sdf_cache_path)

    grid = iv_build_sdf.run(cfg)
    assert grid.resolution == 32
    assert os.path.isfile(inversevis_params.sdf_cache_path)
    stamp = os.stat(inversevis_params.sdf_cache_path).st_mtime_ns

    again = iv_build_sdf.run(cfg)
    assert os.stat(inversevis_params.sdf_cache_path).st_mtime_ns == stamp
    np.testing.assert_array_equal(again.distance, grid.distance)


@pytest.mark.order(2)
def test_render_run(inversevis_params):
    cfg = _load_cfg(inversevis_params)
    image, report = iv_render.run(cfg)

    assert (image.width, image.height) == (24, 24)
    ppm = read_ppm(inversevis_params.image_path)
    np.testing.assert_array_equal(ppm.rgb, image.rgb)

    loaded = _read_json(inversevis_params.report_path)
    assert loaded['technique'] == 'inversevis'
    assert loaded['total'] == pytest.approx(report.total)
    assert loaded['census']['indirect'] > 0
    assert sum(loaded['census'].values()) == 24 * 24
    assert sum(loaded['effective_census'].values()) == 24 * 24
    assert loaded['effective_census']['indirect'] <= \
        loaded['census']['indirect']

    assert os.path.isfile(inversevis_params.browse_path)
    with h5py.File(inversevis_params.hdf5_path, 'r') as h5_obj:
        assert h5_obj['/inversevis/data/image'].shape == (24, 24, 3)
        assert b'inversevis_workflow_test' in \
            h5_obj['/inversevis/metadata/runconfig'][()]


@pytest.mark.order(3)
def test_optimize_alpha_run(inversevis_params):
    cfg = _load_cfg(inversevis_params)
    best, report, result = iv_optimize_alpha.run(cfg)

    assert isinstance(best, InverseVisParams)
    assert result.best_energy >= result.trace[0]['energy']
    trace = _read_json(inversevis_params.trace_path)
    assert {'technique', 'camera', 'gradient_mode', 'resolution', 'start',
            'best', 'best_energy', 'evaluations', 'steps'} <= set(trace)
    assert trace['technique'] == 'inversevis'
    assert trace['best']['alpha'] == pytest.approx(best.alpha)
    assert trace['best_energy'] == pytest.approx(result.best_energy)
    assert report.technique == 'inversevis'


@pytest.mark.order(4)
def test_optimize_mirror_run(inversevis_params):
    cfg = _load_cfg(inversevis_params)
    best, report, result = iv_optimize_mirror.run(cfg)

    assert isinstance(best, MirrorParams)
    assert len(best.omega) == 5
    trace = _read_json(inversevis_params.trace_path)
    assert trace['technique'] == 'mirror'
    assert trace['gradient_mode'] == 'analytic'
    assert len(trace['best']['omega']) == 5
    assert report.technique == 'mirror'


@pytest.mark.order(5)
def test_optimize_view_run(inversevis_params):
    '''
    The seeded annealing gives the same sample log on every run
    '''
    cfg = _load_cfg(inversevis_params)
    result, report = iv_optimize_view.run(cfg)

    samples = pd.read_csv(inversevis_params.samples_path)
    assert list(samples.columns) == SAMPLE_COLUMNS
    assert len(samples) == len(result.samples) == 5
    assert samples['best_energy'].iloc[-1] == \
        pytest.approx(result.best_energy, abs=1e-6)

    trace = _read_json(inversevis_params.trace_path)
    assert trace['reoptimize_per_candidate']
    assert 0.0 <= trace['best']['theta'] <= 180.0
    assert report.total == pytest.approx(report.gamma * report.direct_term +
                                         report.indirect_term)

    again, _ = iv_optimize_view.run(cfg)
    assert again.samples == result.samples


@pytest.mark.order(6)
def test_benchmark_run(inversevis_params):
    cfg = _load_cfg(inversevis_params)
    table = iv_benchmark.run(cfg)

    assert list(table.columns) == BENCHMARK_COLUMNS
    assert len(table) == 4
    assert list(table['mesh']) == ['sphere', 'sphere', 'tetra', 'tetra']
    assert table['visibility'].between(0.0, 1.0).all()
    direct = table[table['technique'] == 'direct']
    # direct rendering is its own front face
    np.testing.assert_allclose(direct['visibility'], direct['frontface'])

    loaded = pd.read_csv(inversevis_params.benchmark_path)
    assert list(loaded.columns) == BENCHMARK_COLUMNS
    assert len(loaded) == 4


def _h5_contents(path):
    '''Dataset values and attributes of an HDF5 file keyed by object name'''
    contents = {}

    def collect(name, obj):
        attrs = {key: np.asarray(val).tobytes()
                 for key, val in obj.attrs.items()}
        value = np.asarray(obj[()]).tobytes() \
            if isinstance(obj, h5py.Dataset) else None
        contents[name] = (value, attrs)

    with h5py.File(path, 'r') as h5_obj:
        h5_obj.visititems(collect)
        contents['/'] = (None, {key: np.asarray(val).tobytes()
                                for key, val in h5_obj.attrs.items()})
    return contents


def _snapshot(directory):
    snapshot = {}
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if name.endswith('.h5'):
            snapshot[name] = _h5_contents(path)
        else:
            with open(path, 'rb') as f_in:
                snapshot[name] = f_in.read()
    return snapshot


@pytest.mark.order(7)
@pytest.mark.parametrize('subcommand', sorted(inversevis_cli.WORKFLOWS))
def test_outputs_repeat_exactly(subcommand, inversevis_params, tmp_path):
    '''
    A second run from scratch writes the same bytes as the first
    '''
    out_dir = str(tmp_path / subcommand)
    os.makedirs(out_dir)
    argv = [subcommand, inversevis_params.cfg_path, '--product-path',
            out_dir]

    assert inversevis_cli.main(argv) == 0
    first = _snapshot(out_dir)
    assert first
    for name in os.listdir(out_dir):
        os.remove(os.path.join(out_dir, name))

    assert inversevis_cli.main(argv) == 0
    second = _snapshot(out_dir)
    assert list(second) == list(first)
    for name in first:
        assert second[name] == first[name], name
