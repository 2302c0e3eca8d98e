#!/usr/bin/env python

'''wrapper for the visibility benchmark over meshes and techniques'''

import logging
import math
import time

import pandas as pd

from inversevis.iv_build_sdf import load_scene
from inversevis.iv_optimize_view import anneal_scene
from inversevis.utils.camera_image import make_camera
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.product_io import write_table_csv
from inversevis.utils.render_pass import evaluate_view
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.techniques import DirectParams
from inversevis.utils.yaml_argparse import YamlArgparse


BENCHMARK_COLUMNS = ['mesh', 'technique', 'visibility', 'frontface']


def run(cfg: RunConfig) -> pd.DataFrame:
    '''
    Anneal the viewpoint of every (mesh, technique) pair for visibility
    energy and tabulate the visibility of the best view next to the share
    of the shell that plain rendering reaches from the same camera

    Parameters
    ---------
    cfg: RunConfig
        RunConfig object with user runconfig options

    Returns
    -------
    _: pd.DataFrame
        One row per pair with the columns mesh, technique, visibility and
        frontface
    '''
    module_name = get_module_name(__file__)
    info_channel = logging.getLogger(f'{module_name}.run')
    info_channel.info(f'Starting {module_name}')

    # Start tracking processing time
    t_start = time.perf_counter()

    res = cfg.render_resolution
    rows = []
    for mesh_path in cfg.benchmark_meshes:
        scene = load_scene(cfg, mesh_path, energy_mode='visibility')
        info_channel.info(f'{scene.name}: {scene.vis.marked_count} marked '
                          f'voxels, ready in {get_time_delta_str(t_start)}')

        for technique in cfg.benchmark_techniques:
            params = cfg.technique_params(technique)
            result = anneal_scene(cfg, scene, params)
            best_params, _ = result.best_extra
            camera = make_camera(result.theta, result.phi, cfg.projection)

            report, _ = evaluate_view(scene, camera, best_params, res, res,
                                      cfg.gamma)
            direct, _ = evaluate_view(scene, camera, DirectParams(), res,
                                      res, cfg.gamma)
            rows.append({'mesh': scene.name, 'technique': technique,
                         'visibility': report.visibility,
                         'frontface': direct.visibility})
            info_channel.info(
                f'{scene.name} {technique}: visibility '
                f'{report.visibility:.4f} (front face '
                f'{direct.visibility:.4f}) at theta '
                f'{math.degrees(result.theta):.1f} phi '
                f'{math.degrees(result.phi):.1f}')

    table_path = cfg.output_path('benchmark_file')
    if table_path:
        table = write_table_csv(rows, table_path, BENCHMARK_COLUMNS,
                                cfg.force)
    else:
        table = pd.DataFrame(rows, columns=BENCHMARK_COLUMNS)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} successfully ran in {dt} (hr:min:sec)')
    return table


def main():
    '''Run the benchmark from command line'''
    parser = YamlArgparse(subcommand='benchmark')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
