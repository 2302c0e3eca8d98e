#!/usr/bin/env python

'''wrapper for the seed-scale (alpha) ascent of one view'''

from __future__ import annotations

import logging
import time

from inversevis.iv_build_sdf import load_scene
from inversevis.iv_render import write_outputs
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.product_io import write_json
from inversevis.utils.render_pass import optimize_params, render
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.yaml_argparse import YamlArgparse


def ascend_view(cfg: RunConfig, technique: str, module_name: str):
    '''
    Optimize the parameters of a technique for the configured camera at
    the optimization resolution, then render the best parameters

    Parameters
    ----------
    cfg: RunConfig
        Runconfig of the run
    technique: str
        'inversevis' or 'mirror'
    module_name: str
        Name of the calling workflow for logging

    Returns
    -------
    params: TechniqueParams
        Best parameters
    report: EnergyReport
        Energy of the final render
    result: AscentResult
        Ascent log
    '''
    info_channel = logging.getLogger(f'{module_name}.run')
    t_start = time.perf_counter()

    scene = load_scene(cfg)
    camera = cfg.camera
    start = cfg.technique_params(technique)

    res = cfg.optimization_resolution
    best, result, _ = optimize_params(
        scene, camera, start, res, res, cfg.gamma, cfg.ascent_config,
        analytic=cfg.gradient_mode == 'analytic',
        exact=cfg.exact_propagator)
    info_channel.info(f'{technique} ascent: {result.evaluations} '
                      f'evaluations, best energy {result.best_energy:.6g} '
                      f'with {best.as_dict()} in '
                      f'{get_time_delta_str(t_start)}')

    trace_path = cfg.output_path('trace_file')
    if trace_path:
        write_json({'technique': technique,
                    'camera': {'theta': cfg.theta_deg, 'phi': cfg.phi_deg},
                    'gradient_mode': cfg.gradient_mode,
                    'resolution': res,
                    'start': start.as_dict(),
                    'best': best.as_dict(),
                    'best_energy': result.best_energy,
                    'evaluations': result.evaluations,
                    'steps': result.trace}, trace_path, cfg.force)

    render_res = cfg.render_resolution
    image, report, trace = render(scene, camera, best, render_res,
                                  render_res, cfg.gamma, cfg.shading_config)
    write_outputs(cfg, image, report, trace, scene)
    return best, report, result


def run(cfg: RunConfig):
    '''
    Maximize the energy of the configured view over the InverseVis seed
    scale alpha

    Parameters
    ---------
    cfg: RunConfig
        RunConfig object with user runconfig options
    '''
    module_name = get_module_name(__file__)
    info_channel = logging.getLogger(f'{module_name}.run')
    info_channel.info(f'Starting {module_name}')

    # Start tracking processing time
    t_start = time.perf_counter()

    out = ascend_view(cfg, 'inversevis', module_name)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} successfully ran in {dt} (hr:min:sec)')
    return out


def main():
    '''Optimize alpha from command line'''
    parser = YamlArgparse(subcommand='optimize-alpha')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
