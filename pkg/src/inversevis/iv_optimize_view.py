#!/usr/bin/env python

'''wrapper for the simulated-annealing viewpoint search'''

from __future__ import annotations

import logging
import math
import time

from inversevis.iv_build_sdf import load_scene
from inversevis.iv_render import write_outputs
from inversevis.utils.camera_image import make_camera
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.optimizers import AnnealResult, anneal_viewpoint
from inversevis.utils.product_io import write_json, write_table_csv
from inversevis.utils.render_pass import (Scene, evaluate_view,
                                          optimize_params, render)
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.techniques import (InverseVisParams, MirrorParams,
                                         TechniqueParams)
from inversevis.utils.yaml_argparse import YamlArgparse


SAMPLE_COLUMNS = ['step', 'theta_deg', 'phi_deg', 'energy', 'accepted',
                  'temperature', 'best_energy']


def candidate_energy(cfg: RunConfig, scene: Scene, params: TechniqueParams):
    '''
    Energy of a candidate viewpoint at the optimization resolution

    When reoptimization is enabled the alpha or mirror ascent runs for every
    candidate with the reduced iteration limit.

    Returns
    -------
    _: callable
        (theta, phi) in radians -> (energy, (params, report))
    '''
    res = cfg.optimization_resolution
    reoptimize = cfg.reoptimize_per_candidate and \
        isinstance(params, (InverseVisParams, MirrorParams))

    def energy_fn(theta, phi):
        camera = make_camera(theta, phi, cfg.projection)
        if reoptimize:
            cand, _, report = optimize_params(
                scene, camera, params, res, res, cfg.gamma,
                cfg.reoptimize_config,
                analytic=cfg.gradient_mode == 'analytic',
                exact=cfg.exact_propagator)
        else:
            cand = params
            report, _ = evaluate_view(scene, camera, params, res, res,
                                      cfg.gamma)
        return report.total, (cand, report)

    return energy_fn


def anneal_scene(cfg: RunConfig, scene: Scene,
                 params: TechniqueParams) -> AnnealResult:
    '''Anneal the viewpoint of a scene from the configured camera'''
    start = (math.radians(cfg.theta_deg), math.radians(cfg.phi_deg))
    return anneal_viewpoint(candidate_energy(cfg, scene, params),
                            cfg.anneal_config, start)


def run(cfg: RunConfig):
    '''
    Search the camera sphere for the view of maximal energy and render it

    Parameters
    ---------
    cfg: RunConfig
        RunConfig object with user runconfig options

    Returns
    -------
    result: AnnealResult
        Best viewpoint and sample log
    report: EnergyReport
        Energy of the final render
    '''
    module_name = get_module_name(__file__)
    info_channel = logging.getLogger(f'{module_name}.run')
    info_channel.info(f'Starting {module_name}')

    # Start tracking processing time
    t_start = time.perf_counter()

    scene = load_scene(cfg)
    params = cfg.technique_params()
    result = anneal_scene(cfg, scene, params)
    best_params, _ = result.best_extra
    info_channel.info(f'best view theta {math.degrees(result.theta):.2f} '
                      f'phi {math.degrees(result.phi):.2f}: energy '
                      f'{result.best_energy:.6g} after '
                      f'{len(result.samples) - 1} steps in '
                      f'{get_time_delta_str(t_start)}')

    samples_path = cfg.output_path('samples_file')
    if samples_path:
        write_table_csv(result.samples, samples_path, SAMPLE_COLUMNS,
                        cfg.force)

    trace_path = cfg.output_path('trace_file')
    if trace_path:
        write_json({'technique': params.technique,
                    'energy': cfg.energy_mode,
                    'resolution': cfg.optimization_resolution,
                    'reoptimize_per_candidate': cfg.reoptimize_per_candidate,
                    'best': {'theta': math.degrees(result.theta),
                             'phi': math.degrees(result.phi),
                             'params': best_params.as_dict()},
                    'best_energy': result.best_energy,
                    'steps': result.samples}, trace_path, cfg.force)

    camera = make_camera(result.theta, result.phi, cfg.projection)
    res = cfg.render_resolution
    image, report, trace = render(scene, camera, best_params, res, res,
                                  cfg.gamma, cfg.shading_config)
    write_outputs(cfg, image, report, trace, scene)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} successfully ran in {dt} (hr:min:sec)')
    return result, report


def main():
    '''Optimize the viewpoint from command line'''
    parser = YamlArgparse(subcommand='optimize-view')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
