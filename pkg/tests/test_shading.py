import os

import numpy as np
import pytest

from inversevis.utils.camera_image import PIXEL_INDIRECT, make_camera
from inversevis.utils.geometry_io import make_primitive
from inversevis.utils.ray_engine import TraceSettings
from inversevis.utils.render_pass import render, trace_image
from inversevis.utils.sdf_grid import build_grid
from inversevis.utils.shading import (Image, ShadingConfig, colormap,
                                      compose_image, read_ppm, rim_mask,
                                      shade, shade_intensity, write_ppm)
from inversevis.utils.techniques import DirectParams, InverseVisParams


def test_colormap_breakpoints():
    np.testing.assert_allclose(colormap(0.0), [0.0, 0.0, 1.0])
    np.testing.assert_allclose(colormap(0.5), [1.0, 1.0, 1.0])
    np.testing.assert_allclose(colormap(1.0), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(colormap(0.25), [0.5, 0.5, 1.0])
    np.testing.assert_allclose(colormap([-3.0, 7.0]),
                               [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def test_lambert_intensity(sphere_params):
    '''
    Full light facing the light, ambient only facing away
    '''
    grid = sphere_params.grid
    light = np.array([0.0, 0.0, 1.0])
    points = np.array([[0.0, 0.0, 0.8], [0.0, 0.0, -0.8]])
    intensity = shade_intensity(grid, points, light, shadows=False)
    assert intensity[0] == pytest.approx(1.0, abs=0.02)
    assert intensity[1] == pytest.approx(0.2)

    rgb = shade(grid, [0.0, 0.0, 0.8], light, [1.0, 0.0, 0.0],
                shadows=False)
    np.testing.assert_allclose(rgb, [intensity[0], 0.0, 0.0])


def test_hard_shadow():
    '''
    The inner wall of a torus facing across the hole is shadowed by the far
    side of the tube
    '''
    grid = build_grid(make_primitive('torus'), 48)
    light = np.array([1.0, 0.0, 0.0])
    points = np.array([[-0.35, 0.0, 0.0], [0.85, 0.0, 0.0]])

    lit = shade_intensity(grid, points, light, shadows=False)
    assert lit[0] > 0.9 and lit[1] > 0.9

    shaded = shade_intensity(grid, points, light, TraceSettings())
    assert shaded[0] == pytest.approx(0.2)
    assert shaded[1] > 0.9


def test_rim_mask():
    indirect = np.zeros((6, 6), dtype=bool)
    indirect[1:5, 1:5] = True
    rim = rim_mask(indirect)
    assert rim.sum() == 12
    assert not rim[2, 2] and rim[1, 1]


def test_image_validation():
    with pytest.raises(ValueError):
        Image(8, 8, np.zeros((8, 8, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        Image(16, 16, np.zeros((16, 16, 3)))


def test_ppm_format(tmp_path):
    rgb = np.arange(16 * 16 * 3, dtype=np.uint8).reshape(16, 16, 3)
    image = Image(16, 16, rgb)
    path = str(tmp_path / 'tiny.ppm')
    write_ppm(image, path)

    with open(path, 'rb') as f_in:
        data = f_in.read()
    header = b'P6\n16 16\n255\n'
    assert data.startswith(header)
    assert len(data) == len(header) + 768
    np.testing.assert_array_equal(read_ppm(path).rgb, rgb)


def test_ppm_refuses_overwrite(tmp_path):
    image = Image(16, 16, np.zeros((16, 16, 3), dtype=np.uint8))
    path = str(tmp_path / 'twice.ppm')
    write_ppm(image, path)
    with pytest.raises(FileExistsError, match='refusing to overwrite'):
        write_ppm(image, path)
    write_ppm(image, path, force=True)
    assert os.path.isfile(path)


def test_read_ppm_rejects_other_formats(inversevis_params):
    with pytest.raises(ValueError):
        read_ppm(inversevis_params.tetra_path)


def test_compose_image(sphere_params):
    '''
    Background in the corners, the colormapped scalar in the middle
    '''
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    trace = trace_image(scene, camera, DirectParams(), 16, 16)
    config = ShadingConfig(shadows=False)
    image = compose_image(trace, scene.grid, camera, 16, 16, config)

    assert image.rgb.shape == (16, 16, 3)
    np.testing.assert_array_equal(image.rgb[0, 0], [38, 38, 38])
    # top of the sphere is red, bottom is blue
    top, bottom = image.rgb[3, 8].astype(int), image.rgb[12, 8].astype(int)
    assert top[0] > top[2]
    assert bottom[2] > bottom[0]


def test_indirect_pixels_flat(sphere_params):
    '''
    Indirect pixels show the unshaded colormap, darkened on their rim
    '''
    scene = sphere_params.scene
    camera = make_camera(np.pi / 2, 0.0)
    trace = trace_image(scene, camera, InverseVisParams(), 24, 24)
    plain = compose_image(trace, scene.grid, camera, 24, 24,
                          ShadingConfig(rim=False))
    rimmed = compose_image(trace, scene.grid, camera, 24, 24)

    indirect = (trace.effective_class == PIXEL_INDIRECT).reshape(24, 24)
    expected = np.round(colormap(trace.scalar.reshape(24, 24)[indirect]) *
                        255.0).astype(np.uint8)
    np.testing.assert_array_equal(plain.rgb[indirect], expected)

    rim = rim_mask(indirect)
    assert rim.any()
    assert np.all(rimmed.rgb[rim].astype(int) <= plain.rgb[rim].astype(int))


def test_render_deterministic_over_workers(sphere_params):
    '''
    Tile threads do not change the result
    '''
    scene = sphere_params.scene
    camera = make_camera(1.0, 0.5, 'perspective')
    image, report, _ = render(scene, camera, InverseVisParams(), 16, 16)

    saved = scene.n_workers, scene.tile_rows
    scene.n_workers, scene.tile_rows = 3, 5
    try:
        image_mt, report_mt, _ = render(scene, camera, InverseVisParams(),
                                        16, 16)
    finally:
        scene.n_workers, scene.tile_rows = saved
    np.testing.assert_array_equal(image.rgb, image_mt.rgb)
    assert report.to_dict() == report_mt.to_dict()
