#!/usr/bin/env python

'''wrapper for the mirror coefficient ascent of one view'''

import logging
import time

from inversevis.iv_optimize_alpha import ascend_view
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.yaml_argparse import YamlArgparse


def run(cfg: RunConfig):
    '''
    Maximize the energy of the configured view over the five mirror
    coefficients; the mirror offset stays fixed

    Parameters
    ---------
    cfg: RunConfig
        RunConfig object with user runconfig options
    '''
    module_name = get_module_name(__file__)
    info_channel = logging.getLogger(f'{module_name}.run')
    info_channel.info(f'Starting {module_name}')

    t_start = time.perf_counter()

    out = ascend_view(cfg, 'mirror', module_name)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} successfully ran in {dt} (hr:min:sec)')
    return out


def main():
    '''Optimize the mirror from command line'''
    parser = YamlArgparse(subcommand='optimize-mirror')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
