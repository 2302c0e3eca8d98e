import os

import numpy as np
import pytest

from inversevis import inversevis_cli
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.techniques import InverseVisParams, MirrorParams
from inversevis.utils.yaml_argparse import YamlArgparse


def test_load_runconfig(inversevis_params):
    cfg = RunConfig.load_from_yaml(inversevis_params.cfg_path)

    assert cfg.name == 'inversevis_workflow_test'
    assert cfg.mesh_path == 'primitive:sphere'
    assert cfg.technique == 'inversevis'
    assert cfg.energy_mode == 'scalar'
    assert cfg.render_resolution == 24
    assert cfg.optimization_resolution == 16
    assert cfg.sdf_resolution == 32
    assert cfg.reoptimize_per_candidate
    assert cfg.seed == 7
    assert cfg.benchmark_techniques == ['direct', 'inversevis']
    assert len(cfg.benchmark_meshes) == 2
    assert cfg.n_workers == 2 and cfg.tile_rows == 8

    # side view from +x
    np.testing.assert_allclose(cfg.camera.look, [-1.0, 0.0, 0.0], atol=1e-12)
    assert isinstance(cfg.technique_params(), InverseVisParams)
    assert isinstance(cfg.technique_params('mirror'), MirrorParams)

    assert cfg.output_path('image_file') == inversevis_params.image_path
    assert cfg.output_path('hdf5_file') == inversevis_params.hdf5_path
    with pytest.raises(KeyError):
        cfg.output_path('movie_file')

    # defaults fill what the test runconfig leaves out
    assert cfg.anneal_config.t0 > 0
    assert 'hit_tolerance' in cfg.yaml_string


def test_runconfig_from_string(inversevis_params):
    cfg_str = '''runconfig:
  name: from_string
  groups:
    input_file_group:
      mesh_path: primitive:box
    product_path_group:
      product_path: {0}
'''.format(inversevis_params.product_path)
    cfg = RunConfig.load_from_yaml(cfg_str)
    assert cfg.mesh_path == 'primitive:box'
    assert cfg.technique == 'inversevis'


def test_runconfig_errors(inversevis_params, tmp_path):
    with pytest.raises(FileNotFoundError):
        RunConfig.load_from_yaml(str(tmp_path / 'missing.yaml'))

    bad_technique = {'runconfig': {'groups': {
        'processing': {'technique': 'xray'}}}}
    with pytest.raises(ValueError):
        RunConfig.load_from_yaml(inversevis_params.cfg_path, bad_technique)

    mask_energy = {'runconfig': {'groups': {
        'processing': {'energy': 'mask'}}}}
    with pytest.raises(ValueError, match='importance_mask_path'):
        RunConfig.load_from_yaml(inversevis_params.cfg_path, mask_energy)

    missing_mesh = {'runconfig': {'groups': {
        'input_file_group': {'mesh_path': str(tmp_path / 'gone.ply')}}}}
    with pytest.raises(FileNotFoundError):
        RunConfig.load_from_yaml(inversevis_params.cfg_path, missing_mesh)

    bad_alpha = {'runconfig': {'groups': {
        'processing': {'inversevis': {'alpha': 0.0}}}}}
    with pytest.raises(ValueError):
        RunConfig.load_from_yaml(inversevis_params.cfg_path, bad_alpha)

    broken = tmp_path / 'broken.yaml'
    broken.write_text('runconfig: [unclosed\n')
    with pytest.raises(ValueError):
        RunConfig.load_from_yaml(str(broken))


def test_flag_overrides(inversevis_params):
    parser = YamlArgparse(argv=['render', inversevis_params.cfg_path,
                                '--theta', '45', '--proj', 'persp',
                                '--omega', '0.1', '0', '0', '0', '0',
                                '--no-shadows', '--out', 'view.ppm'])
    groups = parser.overrides['runconfig']['groups']
    assert groups['processing']['camera'] == {'theta': 45.0,
                                              'projection': 'persp'}
    assert groups['processing']['mirror']['omega'] == [0.1, 0, 0, 0, 0]
    assert groups['processing']['shading']['shadows'] is False
    assert groups['product_path_group']['image_file'] == 'view.ppm'

    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    assert cfg.theta_deg == 45.0
    assert cfg.projection == 'persp'
    assert not cfg.shading_config.shadows
    # untouched options keep the runconfig values
    assert cfg.phi_deg == 0.0
    assert cfg.output_path('image_file') == \
        os.path.join(inversevis_params.product_path, 'view.ppm')


@pytest.mark.parametrize('subcommand, key', [
    ('render', 'image_file'),
    ('benchmark', 'benchmark_file'),
    ('build-sdf', 'sdf_cache_file'),
])
def test_out_flag(subcommand, key):
    parser = YamlArgparse(argv=[subcommand, '--out', 'main.out'])
    assert parser.overrides['runconfig']['groups']['product_path_group'] == \
        {key: 'main.out'}
    assert parser.run_config_path is None


def test_no_flags_no_overrides(inversevis_params):
    parser = YamlArgparse('render', argv=[inversevis_params.cfg_path])
    assert parser.subcommand == 'render'
    assert parser.overrides == {}


def test_cli_exit_codes(inversevis_params, tmp_path):
    cfg_path = inversevis_params.cfg_path
    out_dir = str(tmp_path)

    assert inversevis_cli.main(['render', cfg_path, '--product-path',
                                out_dir, '--res', '16']) == 0
    assert os.path.isfile(os.path.join(out_dir, 'inversevis.ppm'))

    assert inversevis_cli.main(['render', cfg_path, '--gamma', '-1']) == 2
    assert inversevis_cli.main(['render', cfg_path, '--res', '8']) == 2
    assert inversevis_cli.main(['render', cfg_path, '--mesh',
                                str(tmp_path / 'gone.ply')]) == 3
    assert inversevis_cli.main(['render', '--product-path', out_dir]) == 2



def test_runconfig_dump(inversevis_params, capsys):
    cfg = RunConfig.load_from_yaml(inversevis_params.cfg_path)
    as_dict = cfg.as_dict()
    assert as_dict['name'] == 'inversevis_workflow_test'
    assert as_dict['groups']['processing']['technique'] == 'inversevis'

    cfg.to_yaml()
    assert 'technique: inversevis' in capsys.readouterr().out
