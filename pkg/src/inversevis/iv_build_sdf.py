#!/usr/bin/env python

'''wrapper for building and caching the distance field of a mesh'''

from __future__ import annotations

import logging
import os
import time

from inversevis.utils.geometry_io import (PRIMITIVE_PREFIX, ImportanceField,
                                          Mesh, load_mesh, load_vertex_mask,
                                          normalize)
from inversevis.utils.helpers import get_module_name, get_time_delta_str
from inversevis.utils.render_pass import Scene
from inversevis.utils.runconfig import RunConfig
from inversevis.utils.sdf_grid import SdfGrid, load_or_build_grid
from inversevis.utils.yaml_argparse import YamlArgparse


def mesh_name(mesh_path: str) -> str:
    '''File stem of a mesh path, the kind of a primitive'''
    if mesh_path.startswith(PRIMITIVE_PREFIX):
        return mesh_path[len(PRIMITIVE_PREFIX):]
    return os.path.splitext(os.path.basename(mesh_path))[0]


def load_input_mesh(cfg: RunConfig, mesh_path: str | None = None) -> Mesh:
    '''
    Load the runconfig mesh, or another mesh with no scalar field, and
    bring it into the canonical domain

    Parameters
    ----------
    cfg: RunConfig
        Runconfig with the input file options
    mesh_path: str or None
        Mesh to load instead of the runconfig mesh

    Returns
    -------
    _: Mesh
        Mesh in [-1, 1]^3
    '''
    if mesh_path is None or mesh_path == cfg.mesh_path:
        mesh_path = cfg.mesh_path
        mesh = load_mesh(mesh_path, cfg.scalar_file_path, cfg.scalar_property)
    else:
        mesh = load_mesh(mesh_path, scalar_property=None)

    # primitives are built in canonical coordinates
    if cfg.normalize_mesh and not mesh_path.startswith(PRIMITIVE_PREFIX):
        mesh = normalize(mesh)
    return mesh


def load_scene(cfg: RunConfig, mesh_path: str | None = None,
               energy_mode: str | None = None) -> Scene:
    '''
    Mesh, distance field and importance of a run

    Parameters
    ----------
    cfg: RunConfig
        Runconfig of the run
    mesh_path: str or None
        Mesh replacing the runconfig mesh; it carries no scalar, mask or
        distance field cache
    energy_mode: str or None
        Importance mode replacing the runconfig one

    Returns
    -------
    _: Scene
        Scene ready to render
    '''
    own_mesh = mesh_path is None or mesh_path == cfg.mesh_path
    mesh_path = cfg.mesh_path if own_mesh else mesh_path
    mesh = load_input_mesh(cfg, mesh_path)

    mask = None
    if own_mesh and cfg.importance_mask_path:
        mask = load_vertex_mask(cfg.importance_mask_path, mesh.n_vertices)
    importance = ImportanceField(energy_mode or cfg.energy_mode, mask)

    cache_path = cfg.output_path('sdf_cache_file') if own_mesh else None
    grid = load_or_build_grid(mesh, cfg.sdf_resolution, cache_path)

    return Scene(mesh, grid, importance, cfg.trace_settings,
                 cfg.vis_resolution, cfg.n_workers, cfg.tile_rows,
                 mesh_name(mesh_path))


def run(cfg: RunConfig) -> SdfGrid:
    '''
    Build the distance field of the runconfig mesh and store it in the
    cache file, reusing a cache built from identical mesh content

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

    cache_path = cfg.output_path('sdf_cache_file') or \
        os.path.join(cfg.product_path, f'{mesh_name(cfg.mesh_path)}.sdf')

    mesh = load_input_mesh(cfg)
    info_channel.info(f'{cfg.mesh_path}: {mesh.n_vertices} vertices, '
                      f'{mesh.n_triangles} triangles')
    grid = load_or_build_grid(mesh, cfg.sdf_resolution, cache_path)

    dt = get_time_delta_str(t_start)
    info_channel.info(f'{module_name} wrote {cache_path}, successfully ran '
                      f'in {dt} (hr:min:sec)')
    return grid


def main():
    '''Build the distance field from command line'''
    parser = YamlArgparse(subcommand='build-sdf')
    cfg = RunConfig.load_from_yaml(parser.run_config_path, parser.overrides)
    run(cfg)


if __name__ == "__main__":
    main()
