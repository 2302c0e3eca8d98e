import json

import h5py
import numpy as np
import pandas as pd
import pytest

from inversevis.utils.camera_image import make_camera
from inversevis.utils.product_io import (write_render_hdf5, write_report,
                                         write_table_csv)
from inversevis.utils.render_pass import render
from inversevis.utils.techniques import InverseVisParams


@pytest.fixture(scope='module')
def rendered(sphere_params):
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    return render(scene, camera, InverseVisParams(), 16, 16)


def test_write_report(tmp_path, rendered):
    _, report, _ = rendered
    path = str(tmp_path / 'report.json')
    write_report(report, path)
    with open(path, 'r') as f_in:
        loaded = json.load(f_in)
    assert loaded['technique'] == 'inversevis'
    assert loaded['total'] == pytest.approx(report.total)
    assert sum(loaded['census'].values()) == 256
    with pytest.raises(FileExistsError):
        write_report(report, path)


def test_write_table_csv(tmp_path):
    rows = [{'mesh': 'sphere', 'technique': 'direct', 'visibility': 0.25},
            {'mesh': 'sphere', 'technique': 'inversevis',
             'visibility': 1.0 / 3.0}]
    path = str(tmp_path / 'table.csv')
    table = write_table_csv(rows, path,
                            ['mesh', 'technique', 'visibility', 'frontface'])
    assert list(table.columns) == ['mesh', 'technique', 'visibility',
                                   'frontface']

    with open(path, 'r') as f_in:
        text = f_in.read()
    assert '0.333333' in text
    loaded = pd.read_csv(path)
    assert loaded['frontface'].isna().all()


def test_write_render_hdf5(tmp_path, sphere_params, rendered):
    image, report, trace = rendered
    vis = sphere_params.scene.vis
    path = str(tmp_path / 'render.h5')
    write_render_hdf5(path, image, trace, report, 'runconfig: {}\n', vis)

    with h5py.File(path, 'r') as h5_obj:
        assert h5_obj.attrs['software'] == b'inversevis'
        data = h5_obj['/inversevis/data']
        np.testing.assert_array_equal(data['image'][()], image.rgb)
        assert data['pixel_class'].shape == (16, 16)
        assert data['hit_position'].shape == (16, 16, 3)
        assert data['voxel_marked'].shape == (32, 32, 32)

        meta = h5_obj['/inversevis/metadata']
        assert meta['report/total'][()] == pytest.approx(report.total)
        np.testing.assert_array_equal(
            meta['report/census'][()],
            [report.census['none'], report.census['direct'],
             report.census['indirect']])
        np.testing.assert_array_equal(
            meta['report/effective_census'][()],
            [report.effective_census[name]
             for name in ('none', 'direct', 'indirect')])
        assert json.loads(meta['report/report_json'][()])['technique'] == \
            'inversevis'
        assert meta['runconfig'][()] == b'runconfig: {}\n'

    # rewriting without the voxel grids
    write_render_hdf5(path, image, trace, report, '', force=True)
    with h5py.File(path, 'r') as h5_obj:
        assert 'voxel_marked' not in h5_obj['/inversevis/data']
