import numpy as np
import pytest

from inversevis.utils.camera_image import (PIXEL_DIRECT, PIXEL_INDIRECT,
                                           PIXEL_NONE, classify_pixels,
                                           make_camera, pixel_grid_ndc,
                                           pixel_ray, project_to_ndc)
from inversevis.utils.techniques import DirectParams, InverseVisParams


@pytest.mark.parametrize('theta, phi', [(0.3, 0.0), (np.pi / 2, 1.0),
                                        (2.5, 4.0), (0.0, 0.0), (np.pi, 2.0)])
def test_camera_frame_orthonormal(theta, phi):
    camera = make_camera(theta, phi)
    frame = np.array([camera.right, camera.up, camera.look])
    np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-12)
    assert np.linalg.norm(camera.position) == pytest.approx(2.5)
    np.testing.assert_allclose(camera.look,
                               -camera.position / np.linalg.norm(
                                   camera.position))


def test_pole_fallback():
    camera = make_camera(0.0, 0.0)
    np.testing.assert_allclose(camera.right, [1.0, 0.0, 0.0])


def test_projection_alias():
    assert make_camera(1.0, 0.0, 'persp').projection == 'perspective'
    with pytest.raises(ValueError):
        make_camera(1.0, 0.0, 'fisheye')


def test_pixel_grid_order():
    ndc = pixel_grid_ndc(4, 2)
    assert ndc.shape == (8, 2)
    np.testing.assert_allclose(ndc[0], [-0.75, 0.5])
    np.testing.assert_allclose(ndc[3], [0.75, 0.5])
    np.testing.assert_allclose(ndc[4], [-0.75, -0.5])


@pytest.mark.parametrize('projection', ['orthographic', 'perspective'])
def test_project_round_trip(projection):
    '''
    Points along a pixel ray project back to that pixel
    '''
    camera = make_camera(1.1, 0.7, projection)
    ndc = np.array([[0.3, -0.2], [-0.6, 0.45]])
    origins, directions = pixel_ray(camera, ndc)
    points = origins + 1.7 * directions
    np.testing.assert_allclose(project_to_ndc(camera, points), ndc,
                               atol=1e-12)


def test_orthographic_rays_parallel():
    camera = make_camera(np.pi / 2, 0.0)
    _, directions = pixel_ray(camera, pixel_grid_ndc(3, 3))
    np.testing.assert_allclose(directions, np.tile(camera.look, (9, 1)))


def test_classify_sphere(sphere_params):
    '''
    Center pixel is direct, corners miss the sphere; InverseVis maps the
    ring of pixels that hit the hull but not the surface
    '''
    camera = make_camera(np.pi / 2, 0.0)
    direct = classify_pixels(sphere_params.grid, sphere_params.mesh, camera,
                             DirectParams(), 16, 16)
    assert direct.shape == (16, 16)
    assert direct[8, 8] == PIXEL_DIRECT
    assert direct[0, 0] == PIXEL_NONE
    assert not np.any(direct == PIXEL_INDIRECT)

    curved = classify_pixels(sphere_params.grid, sphere_params.mesh, camera,
                             InverseVisParams(), 16, 16)
    np.testing.assert_array_equal(curved == PIXEL_DIRECT,
                                  direct == PIXEL_DIRECT)
    assert np.any(curved == PIXEL_INDIRECT)
