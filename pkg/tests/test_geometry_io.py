import numpy as np
import pytest

from inversevis.utils.geometry_io import (ImportanceField, Mesh,
                                          barycentric_scalar,
                                          hotspot_mask,
                                          interpolate_vertex_values,
                                          load_mesh, load_vertex_mask,
                                          make_primitive, normalize,
                                          triangle_scalar_gradients)


def test_load_ply_quality(inversevis_params):
    '''
    Embedded per-vertex quality property becomes the scalar field
    '''
    mesh = load_mesh(inversevis_params.tetra_path)
    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 4
    np.testing.assert_allclose(mesh.scalars, [0.0, 1.0, 2.0, 4.0])


def test_load_sidecar(inversevis_params):
    mesh = load_mesh(inversevis_params.tetra_path,
                     inversevis_params.sidecar_path)
    np.testing.assert_allclose(mesh.scalars, [0.0, 0.5, 1.0, 2.0])


def test_sidecar_count_mismatch(inversevis_params):
    with pytest.raises(ValueError, match='count mismatch'):
        load_mesh(inversevis_params.tetra_path,
                  inversevis_params.short_sidecar_path)


def test_non_finite_scalars(inversevis_params, tmp_path):
    for bad in ('inf', '-inf', 'nan'):
        sidecar = tmp_path / f'scalars_{bad}.txt'
        sidecar.write_text(f'0.0\n1.0\n{bad}\n2.0\n')
        with pytest.raises(ValueError, match='non-finite'):
            load_mesh(inversevis_params.tetra_path, str(sidecar))


def test_triangle_index_out_of_range(inversevis_params, tmp_path):
    with open(inversevis_params.tetra_path, 'r') as f_in:
        text = f_in.read()
    bad = tmp_path / 'bad_index.ply'
    bad.write_text(text.replace('3 1 2 3', '3 1 2 7'))
    with pytest.raises(ValueError):
        load_mesh(str(bad))


def test_missing_scalar_property(inversevis_params):
    with pytest.raises(ValueError, match='no per-vertex property'):
        load_mesh(inversevis_params.tetra_path, scalar_property='curvature')


def test_geometry_only(inversevis_params):
    mesh = load_mesh(inversevis_params.tetra_path, scalar_property=None)
    assert not mesh.scalars.any()


def test_non_triangle_faces(inversevis_params):
    with pytest.raises(ValueError, match='non-triangle'):
        load_mesh(inversevis_params.quad_path)


def test_missing_mesh_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(str(tmp_path / 'absent.ply'))


def test_normalize(inversevis_params):
    '''
    Longest bounding-box side spans [-1, 1] and scalars span [0, 1]
    '''
    mesh = normalize(load_mesh(inversevis_params.tetra_path))
    np.testing.assert_allclose(mesh.vertices.min(axis=0), [-1.0] * 3)
    np.testing.assert_allclose(mesh.vertices.max(axis=0), [1.0] * 3)
    np.testing.assert_allclose(mesh.scalars, [0.0, 0.25, 0.5, 1.0])


def test_normalize_constant_scalar():
    mesh = make_primitive('plane')
    flat = normalize(Mesh(mesh.vertices, mesh.triangles,
                          np.full(mesh.n_vertices, 3.0)))
    assert not flat.scalars.any()


def test_barycentric_scalar():
    mesh = make_primitive('plane')
    tri = mesh.triangles[0]
    bary = np.array([0.2, 0.3, 0.5])
    expected = float(mesh.scalars[tri] @ bary)
    assert barycentric_scalar(mesh, 0, bary) == pytest.approx(expected)


def test_barycentric_scalar_errors():
    mesh = make_primitive('plane')
    with pytest.raises(IndexError):
        barycentric_scalar(mesh, mesh.n_triangles, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        barycentric_scalar(mesh, 0, [0.7, 0.7, -0.4])
    with pytest.raises(ValueError):
        barycentric_scalar(mesh, 0, [0.5, 0.5, 0.5])


def test_interpolate_vertex_values():
    mesh = make_primitive('box')
    bary = np.tile([1.0 / 3.0] * 3, (mesh.n_triangles, 1))
    values = interpolate_vertex_values(mesh, mesh.scalars,
                                       np.arange(mesh.n_triangles), bary)
    np.testing.assert_allclose(values,
                               mesh.scalars[mesh.triangles].mean(axis=1))


def test_scalar_gradient_of_linear_field():
    '''
    s = (z + 1) / 2 has gradient (0, 0, 1/2) on the wall x = 0
    '''
    mesh = make_primitive('plane')
    grads = triangle_scalar_gradients(mesh)
    np.testing.assert_allclose(grads, [[0.0, 0.0, 0.5]] * 2, atol=1e-12)


def test_importance_modes():
    mesh = make_primitive('plane')
    scalar = ImportanceField('scalar').vertex_values(mesh)
    np.testing.assert_allclose(scalar, np.clip(mesh.scalars, 0, 1))
    assert ImportanceField('visibility').vertex_values(mesh).sum() == 4

    mask = ImportanceField('mask', np.array([1, 0, 0, 1]))
    np.testing.assert_array_equal(mask.vertex_values(mesh), [1, 0, 0, 1])

    with pytest.raises(ValueError):
        ImportanceField('mask')
    with pytest.raises(ValueError):
        ImportanceField('curvature')


def test_vertex_mask(inversevis_params):
    mask = load_vertex_mask(inversevis_params.mask_path, 4)
    np.testing.assert_array_equal(mask, [False, False, True, True])
    with pytest.raises(ValueError, match='count mismatch'):
        load_vertex_mask(inversevis_params.mask_path, 5)


def test_hotspot_mask():
    mesh = make_primitive('sphere')
    mask = hotspot_mask(mesh, [[0.0, 0.0, 1.0]], 30.0)
    unit = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
    np.testing.assert_array_equal(mask, unit[:, 2] >= np.cos(np.radians(30)))


@pytest.mark.parametrize('kind', ['sphere', 'box', 'torus', 'plane'])
def test_primitives(kind):
    mesh = make_primitive(kind)
    assert np.all(np.abs(mesh.vertices) <= 1.0)
    np.testing.assert_allclose(mesh.scalars, 0.5 * (mesh.vertices[:, 2] + 1))


def test_primitive_loads_by_name():
    mesh = load_mesh('primitive:torus')
    assert mesh.digest() == make_primitive('torus').digest()
    with pytest.raises(ValueError):
        load_mesh('primitive:teapot')
