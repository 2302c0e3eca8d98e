from __future__ import annotations
from dataclasses import dataclass
from functools import singledispatch
import logging
import math
import os
from types import SimpleNamespace
import sys
import yaml

import yamale
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from inversevis.utils import helpers
from inversevis.utils.camera_image import Camera, make_camera
from inversevis.utils.geometry_io import PRIMITIVE_PREFIX
from inversevis.utils.optimizers import (AnnealConfig, AscentConfig,
                                         LineSearchConfig)
from inversevis.utils.ray_engine import TraceSettings
from inversevis.utils.shading import ShadingConfig
from inversevis.utils.techniques import (DirectParams, InverseVisParams,
                                         MirrorParams, NeugebauerParams,
                                         TechniqueParams)


WORKFLOW_NAME = 'inversevis'
MIN_RESOLUTION = 16
OUTPUT_KEYS = ('image_file', 'report_file', 'trace_file', 'samples_file',
               'benchmark_file', 'sdf_cache_file', 'browse_file',
               'hdf5_file')


@singledispatch
def wrap_namespace(ob):
    return ob


@wrap_namespace.register(dict)
def _wrap_dict(ob):
    return SimpleNamespace(**{key: wrap_namespace(val)
                              for key, val in ob.items()})


@wrap_namespace.register(list)
def _wrap_list(ob):
    return [wrap_namespace(val) for val in ob]


def unwrap_to_dict(sns: SimpleNamespace) -> dict:
    '''Nested SimpleNamespace back to nested dict'''
    return {key: unwrap_to_dict(val) if isinstance(val, SimpleNamespace)
            else val for key, val in sns.__dict__.items()}


def load_validate_yaml(yaml_runconfig: str | None = None,
                       overrides: dict | None = None) -> dict:
    """Load a user runconfig, validate it and fill in the defaults.

    Parameters
    ----------
    yaml_runconfig : str or None
        Path to yaml file containing the options to load, string contents of
        a runconfig, or None to run from defaults and overrides only
    overrides: dict or None
        Nested runconfig dict (usually from command line flags) applied on
        top of the user runconfig

    Returns
    -------
    dict
        Validated user runconfig dict with defaults inserted
    """
    error_channel = logging.getLogger('runconfig.load_validate_yaml')

    try:
        schema = yamale.make_schema(
            f'{helpers.WORKFLOW_SCRIPTS_DIR}/schemas/{WORKFLOW_NAME}.yaml',
            parser='ruamel')
    except Exception as err:
        err_str = f'unable to load schema for workflow {WORKFLOW_NAME}.'
        error_channel.error(err_str)
        raise ValueError(err_str) from err

    # load user config based on input type
    parser = YAML(typ='safe')
    user_cfg = None
    what_is_broken = 'from command line'
    if yaml_runconfig is not None:
        # Determine run config type based on existence of newlines
        run_config_is_txt = '\n' in yaml_runconfig
        what_is_broken = 'from runconfig string' if run_config_is_txt \
            else yaml_runconfig

        if not run_config_is_txt and not os.path.isfile(yaml_runconfig):
            err_str = f'Yaml file {yaml_runconfig} not found.'
            error_channel.error(err_str)
            raise FileNotFoundError(err_str)

        try:
            if run_config_is_txt:
                user_cfg = parser.load(yaml_runconfig)
            else:
                with open(yaml_runconfig, 'r') as f_yaml:
                    user_cfg = parser.load(f_yaml)
        except YAMLError as err:
            err_str = f'unable to load {WORKFLOW_NAME} runconfig yaml ' \
                      f'{what_is_broken} for validation.'
            error_channel.error(err_str)
            raise ValueError(err_str) from err

    # command line options take precedence over the runconfig file
    user_cfg = helpers.deep_update(user_cfg or {}, overrides)

    # validate the merged user options
    try:
        yamale.validate(schema, [(user_cfg, what_is_broken)])
    except yamale.YamaleError as yamale_err:
        err_str = f'Validation fail for {WORKFLOW_NAME} runconfig yaml ' \
                  f'{what_is_broken}: {yamale_err}'
        error_channel.error(err_str)
        raise ValueError(err_str) from yamale_err

    # load default runconfig
    default_cfg_path = \
        f'{helpers.WORKFLOW_SCRIPTS_DIR}/defaults/{WORKFLOW_NAME}.yaml'
    with open(default_cfg_path, 'r') as f_default:
        default_cfg = parser.load(f_default)

    # Copy user-supplied configuration options into default runconfig
    helpers.deep_update(default_cfg, user_cfg)

    # Validate YAML values under groups dict
    validate_group_dict(default_cfg['runconfig']['groups'])

    return default_cfg


def validate_group_dict(group_cfg: dict) -> None:
    """Check and validate runconfig entries.

    Parameters
    ----------
    group_cfg : dict
        Dictionary storing runconfig options to validate
    """
    error_channel = logging.getLogger('runconfig.validate_group_dict')

    # Check 'input_file_group' section of runconfig
    input_group = group_cfg['input_file_group']
    mesh_path = input_group['mesh_path']
    if not mesh_path:
        err_str = 'mesh_path is required (runconfig or --mesh)'
        error_channel.error(err_str)
        raise ValueError(err_str)
    if not str(mesh_path).startswith(PRIMITIVE_PREFIX):
        helpers.check_file_path(mesh_path)
    for key in ('scalar_file_path', 'importance_mask_path'):
        if input_group[key]:
            helpers.check_file_path(input_group[key])

    processing = group_cfg['processing']
    if processing['energy'] == 'mask' and \
            not input_group['importance_mask_path']:
        err_str = 'energy mode mask requires importance_mask_path'
        error_channel.error(err_str)
        raise ValueError(err_str)

    for key, res in processing['resolution'].items():
        if res < MIN_RESOLUTION:
            err_str = f'{key} resolution {res} < {MIN_RESOLUTION}'
            error_channel.error(err_str)
            raise ValueError(err_str)

    if not processing['gamma'] >= 0:
        err_str = f'gamma must be >= 0, got {processing["gamma"]}'
        error_channel.error(err_str)
        raise ValueError(err_str)

    # Parameter records check their own ranges and raise ValueError
    groups = wrap_namespace(group_cfg)
    for technique in ('neugebauer', 'mirror', 'inversevis'):
        _technique_params(groups, technique)
    _trace_settings(groups)
    _ascent_config(groups)
    _anneal_config(groups)

    # Check that the product directory is writeable
    helpers.check_write_dir(group_cfg['product_path_group']['product_path'])


def _technique_params(groups: SimpleNamespace,
                      technique: str) -> TechniqueParams:
    processing = groups.processing
    if technique == 'neugebauer':
        ring = processing.neugebauer
        return NeugebauerParams(tuple(ring.center), ring.r1, ring.r2)
    if technique == 'mirror':
        mirror = processing.mirror
        return MirrorParams(tuple(mirror.omega), mirror.offset)
    if technique == 'inversevis':
        curved = processing.inversevis
        return InverseVisParams(curved.alpha, curved.phi0)
    return DirectParams()


def _trace_settings(groups: SimpleNamespace) -> TraceSettings:
    tracing = groups.processing.tracing
    return TraceSettings(tolerance=tracing.hit_tolerance,
                         step_size=tracing.step_size,
                         max_steps=tracing.max_steps,
                         sphere_max_steps=tracing.sphere_max_steps,
                         escape_radius=tracing.escape_radius,
                         stall_window=tracing.stall_window,
                         stall_decrease=tracing.stall_decrease,
                         hull_bisection_steps=tracing.hull_bisection_steps)


def _ascent_config(groups: SimpleNamespace,
                   max_iterations: int | None = None) -> AscentConfig:
    opt = groups.processing.optimization
    line_search = LineSearchConfig(opt.line_search_lower,
                                   opt.line_search_upper, opt.stop_length)
    if max_iterations is None:
        max_iterations = opt.max_iterations
    return AscentConfig(line_search, max_iterations, opt.fd_epsilon,
                        opt.min_alpha)


def _anneal_config(groups: SimpleNamespace) -> AnnealConfig:
    anneal = groups.processing.annealing
    return AnnealConfig(anneal.t0, anneal.cooling, anneal.steps,
                        anneal.neighborhood, anneal.seed,
                        anneal.acceptance_scale)


@dataclass(frozen=True)
class RunConfig:
    '''dataclass containing the InverseVis runconfig'''
    # workflow name
    name: str
    # runconfig options converted from dict
    groups: SimpleNamespace
    # entirety of yaml as string
    yaml_string: str

    @classmethod
    def load_from_yaml(cls, yaml_runconfig: str | None = None,
                       overrides: dict | None = None) -> RunConfig:
        """Initialize RunConfig class with options from given yaml file.

        Parameters
        ----------
        yaml_runconfig : str or None
            Path to yaml file containing the options to load or string
            contents of a runconfig
        overrides: dict or None
            Nested options applied over the runconfig
        """
        cfg = load_validate_yaml(yaml_runconfig, overrides)

        # Convert runconfig dict to SimpleNamespace
        sns = wrap_namespace(cfg['runconfig']['groups'])

        # For saving entire file with defaults filled-in as string to metadata.
        user_plus_default_yaml_str = yaml.dump(cfg)

        return cls(cfg['runconfig']['name'], sns, user_plus_default_yaml_str)

    @property
    def mesh_path(self) -> str:
        return self.groups.input_file_group.mesh_path

    @property
    def scalar_file_path(self) -> str | None:
        return self.groups.input_file_group.scalar_file_path

    @property
    def scalar_property(self) -> str:
        return self.groups.input_file_group.scalar_property

    @property
    def importance_mask_path(self) -> str | None:
        return self.groups.input_file_group.importance_mask_path

    @property
    def normalize_mesh(self) -> bool:
        return self.groups.input_file_group.normalize

    @property
    def technique(self) -> str:
        return self.groups.processing.technique

    @property
    def energy_mode(self) -> str:
        return self.groups.processing.energy

    @property
    def gamma(self) -> float:
        return float(self.groups.processing.gamma)

    @property
    def theta_deg(self) -> float:
        return float(self.groups.processing.camera.theta)

    @property
    def phi_deg(self) -> float:
        return float(self.groups.processing.camera.phi)

    @property
    def projection(self) -> str:
        return self.groups.processing.camera.projection

    @property
    def camera(self) -> Camera:
        return make_camera(math.radians(self.theta_deg),
                           math.radians(self.phi_deg), self.projection)

    @property
    def render_resolution(self) -> int:
        return self.groups.processing.resolution.render

    @property
    def optimization_resolution(self) -> int:
        return self.groups.processing.resolution.optimization

    @property
    def sdf_resolution(self) -> int:
        return self.groups.processing.resolution.sdf

    @property
    def vis_resolution(self) -> int:
        return self.groups.processing.resolution.visibility

    @property
    def trace_settings(self) -> TraceSettings:
        return _trace_settings(self.groups)

    def technique_params(self, technique: str | None = None) \
            -> TechniqueParams:
        '''Parameters of the given technique, the configured one by default'''
        return _technique_params(self.groups, technique or self.technique)

    @property
    def shading_config(self) -> ShadingConfig:
        shading = self.groups.processing.shading
        light = None if shading.light_direction is None else \
            tuple(shading.light_direction)
        return ShadingConfig(shading.ambient, light, shading.shadows,
                             shading.rim, shading.rim_darkening,
                             tuple(shading.background))

    @property
    def gradient_mode(self) -> str:
        return self.groups.processing.optimization.gradient_mode

    @property
    def exact_propagator(self) -> bool:
        return self.groups.processing.optimization.exact_propagator

    @property
    def ascent_config(self) -> AscentConfig:
        return _ascent_config(self.groups)

    @property
    def reoptimize_config(self) -> AscentConfig:
        '''Ascent limits for the per-candidate reoptimization'''
        return _ascent_config(
            self.groups,
            self.groups.processing.annealing.reoptimize_iterations)

    @property
    def anneal_config(self) -> AnnealConfig:
        return _anneal_config(self.groups)

    @property
    def reoptimize_per_candidate(self) -> bool:
        return self.groups.processing.annealing.reoptimize_per_candidate

    @property
    def seed(self) -> int:
        return self.groups.processing.annealing.seed

    @property
    def benchmark_meshes(self) -> list[str]:
        return list(self.groups.benchmark.meshes)

    @property
    def benchmark_techniques(self) -> list[str]:
        return list(self.groups.benchmark.techniques)

    @property
    def product_path(self) -> str:
        return self.groups.product_path_group.product_path

    @property
    def force(self) -> bool:
        return self.groups.product_path_group.force

    def output_path(self, key: str) -> str | None:
        '''
        Output file of the given product_path_group key; relative names are
        placed under product_path, unset outputs give None
        '''
        if key not in OUTPUT_KEYS:
            err_str = f'unknown output {key}'
            logging.getLogger('runconfig.output_path').error(err_str)
            raise KeyError(err_str)
        file_name = getattr(self.groups.product_path_group, key)
        if not file_name:
            return None
        return os.path.join(self.product_path, file_name)

    @property
    def n_workers(self) -> int:
        return self.groups.worker.n_workers

    @property
    def tile_rows(self) -> int:
        return self.groups.worker.tile_rows

    def as_dict(self):
        '''Convert self to dict for write to YAML/JSON'''
        self_as_dict = {}
        for key, val in self.__dict__.items():
            if key == 'groups':
                val = unwrap_to_dict(val)
            self_as_dict[key] = val
        return self_as_dict

    def to_yaml(self):
        '''Dump runconfig as string to sys.stdout
        '''
        self_as_dict = self.as_dict()
        yaml_obj = YAML(typ='safe')
        yaml_obj.dump(self_as_dict, sys.stdout)
