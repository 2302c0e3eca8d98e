from __future__ import annotations

import argparse

from inversevis.utils.camera_image import PROJECTION_ALIASES, PROJECTIONS
from inversevis.utils.geometry_io import IMPORTANCE_MODES
from inversevis.utils.techniques import TECHNIQUES


SUBCOMMANDS = ('render', 'optimize-alpha', 'optimize-mirror',
               'optimize-view', 'benchmark', 'build-sdf')

# flag dest -> location in runconfig groups
FLAG_GROUPS = {
    'mesh': ('input_file_group', 'mesh_path'),
    'scalars': ('input_file_group', 'scalar_file_path'),
    'scalar_property': ('input_file_group', 'scalar_property'),
    'mask': ('input_file_group', 'importance_mask_path'),
    'technique': ('processing', 'technique'),
    'energy': ('processing', 'energy'),
    'gamma': ('processing', 'gamma'),
    'theta': ('processing', 'camera', 'theta'),
    'phi': ('processing', 'camera', 'phi'),
    'proj': ('processing', 'camera', 'projection'),
    'res': ('processing', 'resolution', 'render'),
    'opt_res': ('processing', 'resolution', 'optimization'),
    'sdf_res': ('processing', 'resolution', 'sdf'),
    'vis_res': ('processing', 'resolution', 'visibility'),
    'alpha': ('processing', 'inversevis', 'alpha'),
    'phi0': ('processing', 'inversevis', 'phi0'),
    'omega': ('processing', 'mirror', 'omega'),
    'offset': ('processing', 'mirror', 'offset'),
    'r1': ('processing', 'neugebauer', 'r1'),
    'r2': ('processing', 'neugebauer', 'r2'),
    'gradient': ('processing', 'optimization', 'gradient_mode'),
    'exact': ('processing', 'optimization', 'exact_propagator'),
    'anneal_steps': ('processing', 'annealing', 'steps'),
    'cooling': ('processing', 'annealing', 'cooling'),
    'seed': ('processing', 'annealing', 'seed'),
    'no_reoptimize': ('processing', 'annealing', 'reoptimize_per_candidate'),
    'light': ('processing', 'shading', 'light_direction'),
    'no_shadows': ('processing', 'shading', 'shadows'),
    'no_rim': ('processing', 'shading', 'rim'),
    'meshes': ('benchmark', 'meshes'),
    'techniques': ('benchmark', 'techniques'),
    'product_path': ('product_path_group', 'product_path'),
    'report': ('product_path_group', 'report_file'),
    'trace': ('product_path_group', 'trace_file'),
    'samples': ('product_path_group', 'samples_file'),
    'sdf_cache': ('product_path_group', 'sdf_cache_file'),
    'browse': ('product_path_group', 'browse_file'),
    'hdf5': ('product_path_group', 'hdf5_file'),
    'force': ('product_path_group', 'force'),
    'workers': ('worker', 'n_workers'),
}

# --out names the main product of each subcommand
OUT_KEYS = {'benchmark': 'benchmark_file', 'build-sdf': 'sdf_cache_file'}

# store_true flags that switch an option off
NEGATED_FLAGS = ('no_reoptimize', 'no_shadows', 'no_rim')


class YamlArgparse():
    def __init__(self, subcommand: str | None = None, argv=None):
        '''Initialize YamlArgparse class and parse CLI arguments for
        InverseVis. Without a fixed subcommand the first positional
        argument selects one.'''
        parser = argparse.ArgumentParser(
            description='Render and optimize views revealing hidden '
                        'surface scalars',
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        if subcommand is None:
            parser.add_argument('subcommand', type=str, choices=SUBCOMMANDS,
                                help='Workflow to run')
        parser.add_argument('run_config_path', type=str, nargs='?',
                            default=None, help='Path to run config file')

        inputs = parser.add_argument_group('inputs')
        inputs.add_argument('--mesh', type=str,
                            help='Mesh file or primitive:<kind>')
        inputs.add_argument('--scalars', type=str,
                            help='Per-vertex scalar sidecar')
        inputs.add_argument('--scalar-property', dest='scalar_property',
                            type=str, help='Per-vertex mesh property')
        inputs.add_argument('--mask', type=str,
                            help='Per-vertex 0/1 importance mask')

        view = parser.add_argument_group('view')
        view.add_argument('--technique', type=str, choices=TECHNIQUES)
        view.add_argument('--energy', type=str, choices=IMPORTANCE_MODES)
        view.add_argument('--gamma', type=float,
                          help='Weight of the directly visible term')
        view.add_argument('--theta', type=float,
                          help='Camera polar angle in degrees')
        view.add_argument('--phi', type=float,
                          help='Camera azimuth in degrees')
        view.add_argument('--proj', type=str,
                          choices=PROJECTIONS + tuple(PROJECTION_ALIASES))
        view.add_argument('--res', type=int, help='Render resolution')
        view.add_argument('--opt-res', dest='opt_res', type=int,
                          help='Resolution inside optimizers')
        view.add_argument('--sdf-res', dest='sdf_res', type=int,
                          help='Distance field voxels per axis')
        view.add_argument('--vis-res', dest='vis_res', type=int,
                          help='Visibility grid voxels per axis')

        technique = parser.add_argument_group('technique parameters')
        technique.add_argument('--alpha', type=float,
                               help='Seed velocity scale')
        technique.add_argument('--phi0', type=float, help='Hull isovalue')
        technique.add_argument('--omega', type=float, nargs=5,
                               help='Mirror coefficients')
        technique.add_argument('--offset', type=float,
                               help='Mirror distance behind the object')
        technique.add_argument('--r1', type=float, help='Inner ring radius')
        technique.add_argument('--r2', type=float, help='Outer ring radius')

        search = parser.add_argument_group('optimization')
        search.add_argument('--gradient', type=str, choices=['analytic', 'fd'],
                            help='Alpha gradient source')
        search.add_argument('--exact', action='store_const', const=True,
                            help='Matrix-exponential step propagators')
        search.add_argument('--anneal-steps', dest='anneal_steps', type=int)
        search.add_argument('--cooling', type=float)
        search.add_argument('--seed', type=int)
        search.add_argument('--no-reoptimize', dest='no_reoptimize',
                            action='store_true',
                            help='Keep technique parameters fixed while '
                                 'annealing')
        search.add_argument('--meshes', type=str, nargs='+',
                            help='Benchmark meshes')
        search.add_argument('--techniques', type=str, nargs='+',
                            choices=TECHNIQUES, help='Benchmark techniques')

        shading = parser.add_argument_group('shading')
        shading.add_argument('--light', type=float, nargs=3,
                             help='World direction toward the light')
        shading.add_argument('--no-shadows', dest='no_shadows',
                             action='store_true')
        shading.add_argument('--no-rim', dest='no_rim', action='store_true',
                             help='Do not darken indirect region rims')

        outputs = parser.add_argument_group('outputs')
        outputs.add_argument('--product-path', dest='product_path', type=str)
        outputs.add_argument('--out', type=str,
                             help='Main output file of the subcommand')
        outputs.add_argument('--report', type=str, help='Energy report JSON')
        outputs.add_argument('--trace', type=str,
                             help='Optimizer trace JSON')
        outputs.add_argument('--samples', type=str,
                             help='Annealing sample log CSV')
        outputs.add_argument('--sdf-cache', dest='sdf_cache', type=str)
        outputs.add_argument('--browse', type=str, help='PNG copy of image')
        outputs.add_argument('--hdf5', type=str, help='HDF5 product')
        outputs.add_argument('--force', action='store_const', const=True,
                             help='Replace existing outputs')
        parser.add_argument('--workers', type=int,
                            help='Threads tracing image tiles')
        parser.add_argument('-v', '--verbose', action='store_true')

        # parse arguments
        self.args = parser.parse_args(argv)
        self.subcommand = subcommand or self.args.subcommand

    @property
    def run_config_path(self) -> str:
        return self.args.run_config_path

    @property
    def verbose(self) -> bool:
        return self.args.verbose

    @property
    def overrides(self) -> dict:
        '''Runconfig dict holding only the options given as flags'''
        args = vars(self.args)
        groups = {}

        def put(keys, val):
            node = groups
            for key in keys[:-1]:
                node = node.setdefault(key, {})
            node[keys[-1]] = val

        for dest, keys in FLAG_GROUPS.items():
            val = args.get(dest)
            if dest in NEGATED_FLAGS:
                if val:
                    put(keys, False)
            elif val is not None:
                put(keys, list(val) if isinstance(val, (list, tuple))
                    else val)

        if self.args.out is not None:
            put(('product_path_group',
                 OUT_KEYS.get(self.subcommand, 'image_file')), self.args.out)

        if not groups:
            return {}
        return {'runconfig': {'groups': groups}}
