#!/usr/bin/env python

'''wrapper for rendering one view'''

from __future__ import annotations

import logging
import time

from inversevis.iv_build_sdf import load_scene
from inversevis.utils.energy_metrics import EnergyReport, measure_visibility
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.product_io import (write_browse_png, write_render_hdf5,
                                         write_report)
from inversevis.utils.render_pass import Scene, render
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.shading import Image, write_ppm
from inversevis.utils.techniques import PixelTrace
from inversevis.utils.yaml_argparse import YamlArgparse


def write_outputs(cfg: RunConfig, image: Image, report: EnergyReport,
                  trace: PixelTrace | None = None,
                  scene: Scene | None = None) -> None:
    '''
    Write the image, the energy report and the optional browse image and
    HDF5 product of a render to the runconfig output paths

    Parameters
    ----------
    cfg: RunConfig
        Runconfig with the output paths
    image: Image
        Rendered image
    report: EnergyReport
        Energy of the render
    trace: PixelTrace or None
        Per-pixel hits, needed for the HDF5 product
    scene: Scene or None
        Scene of the render, adds the voxel visibility to the HDF5 product
    '''
    info_channel = logging.getLogger('iv_render.write_outputs')
    force = cfg.force

    image_path = cfg.output_path('image_file')
    if image_path:
        write_ppm(image, image_path, force)
        info_channel.info(f'wrote {image_path}')

    report_path = cfg.output_path('report_file')
    if report_path:
        write_report(report, report_path, force)
        info_channel.info(f'wrote {report_path}')

    browse_path = cfg.output_path('browse_file')
    if browse_path:
        write_browse_png(image, browse_path, force)

    hdf5_path = cfg.output_path('hdf5_file')
    if hdf5_path and trace is not None:
        vis = measure_visibility(scene.vis, trace) if scene else None
        write_render_hdf5(hdf5_path, image, trace, report, cfg.yaml_string,
                          vis, force)
        info_channel.info(f'wrote {hdf5_path}')


def run(cfg: RunConfig):
    '''
    Render the configured view with the configured technique

    Parameters
    ---------
    cfg: RunConfig
        RunConfig object with user runconfig options

    Returns
    -------
    image: Image
        Shaded image
    report: EnergyReport
        Energy of the view
    '''
    module_name = get_module_name(__file__)
    info_channel = logging.getLogger(f'{module_name}.run')
    info_channel.info(f'Starting {module_name}')

    # Start tracking processing time
    t_start = time.perf_counter()

    scene = load_scene(cfg)
    info_channel.info(f'scene ready in {get_time_delta_str(t_start)}')

    res = cfg.render_resolution
    image, report, trace = render(scene, cfg.camera, cfg.technique_params(),
                                  res, res, cfg.gamma, cfg.shading_config)
    info_channel.info(f'{report.technique}: energy {report.total:.6g}, '
                      f'census {report.census}, '
                      f'effective {report.effective_census}')

    write_outputs(cfg, image, report, trace, scene)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} successfully ran in {dt} (hr:min:sec)')
    return image, report


def main():
    '''Render one view from command line'''
    parser = YamlArgparse(subcommand='render')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
