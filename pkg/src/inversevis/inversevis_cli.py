#!/usr/bin/env python

'''driver for the InverseVis workflows'''

import logging
import sys

from inversevis import (iv_benchmark, iv_build_sdf, iv_optimize_alpha,
                        iv_optimize_mirror, iv_optimize_view, iv_render)
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.yaml_argparse import YamlArgparse


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

WORKFLOWS = {
    'render': iv_render,
    'optimize-alpha': iv_optimize_alpha,
    'optimize-mirror': iv_optimize_mirror,
    'optimize-view': iv_optimize_view,
    'benchmark': iv_benchmark,
    'build-sdf': iv_build_sdf,
}


def run(cfg: RunConfig, subcommand: str):
    """
    Run one InverseVis workflow with user-defined options.

    Parameters
    ----------
    cfg: RunConfig
        Runconfig with user-defined options and defaults filled in
    subcommand: str
        Workflow to run
    """
    return WORKFLOWS[subcommand].run(cfg)


def main(argv=None) -> int:
    '''
    Parse the command line, run the selected workflow and map failures to
    exit codes: 2 configuration, 3 I/O, 4 numerical
    '''
    parser = YamlArgparse(argv=argv)
    logging.basicConfig(
        level=logging.DEBUG if parser.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s: %(message)s')
    error_channel = logging.getLogger('inversevis_cli.main')

    try:
        cfg = RunConfig.load_from_yaml(parser.run_config_path,
                                       parser.overrides)
        run(cfg, parser.subcommand)
    except ValueError as err:
        # yamale.YamaleError derives from ValueError
        error_channel.error(f'configuration error: {err}')
        return EXIT_CONFIG
    except OSError as err:
        error_channel.error(f'I/O error: {err}')
        return EXIT_IO
    except ArithmeticError as err:
        error_channel.error(f'numerical failure: {err}')
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    '''run inversevis from command line'''
    sys.exit(main())
