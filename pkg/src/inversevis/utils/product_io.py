'''
Writers for render products: JSON reports and traces, CSV tables, the
optional HDF5 product and PNG browse image
'''
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging

import h5py
import numpy as np
import pandas as pd
from PIL import Image as PILImage

from inversevis.utils.helpers import check_write_file
from inversevis.version import release_version


ROOT_PATH = '/inversevis'
DATA_PATH = f'{ROOT_PATH}/data'
METADATA_PATH = f'{ROOT_PATH}/metadata'


@dataclass
class Meta:
    '''
    Dataset name, value, description and extra attributes for HDF5
    '''
    name: str
    value: object
    description: str
    attr_dict: dict = field(default_factory=dict)


def _as_np_string_if_needed(val):
    return np.bytes_(val) if isinstance(val, str) else val


def add_dataset_and_attrs(group: h5py.Group, meta_item: Meta) -> None:
    '''
    Write a Meta item as a dataset of group, replacing any existing one

    Parameters
    ----------
    group: h5py.Group
        Group to write into
    meta_item: Meta
        Dataset to add
    '''
    if meta_item.name in group:
        del group[meta_item.name]

    val = _as_np_string_if_needed(meta_item.value)
    try:
        if val is None:
            group[meta_item.name] = np.nan
        else:
            group[meta_item.name] = val
    except TypeError as err:
        err_str = f'unable to write {meta_item.name}'
        logging.getLogger('product_io.add_dataset_and_attrs').error(err_str)
        raise TypeError(err_str) from err

    val_ds = group[meta_item.name]
    val_ds.attrs['description'] = _as_np_string_if_needed(
        meta_item.description)
    for key, val in meta_item.attr_dict.items():
        val_ds.attrs[key] = _as_np_string_if_needed(val)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f'{type(obj).__name__} is not JSON serializable')


def write_json(payload, path: str, force: bool = False) -> None:
    '''Write payload as sorted, indented JSON'''
    check_write_file(path, force)
    with open(path, 'w') as f_out:
        json.dump(payload, f_out, indent=2, sort_keys=True,
                  default=_json_default)
        f_out.write('\n')


def write_report(report, path: str, force: bool = False) -> None:
    '''Write an EnergyReport as JSON'''
    write_json(report.to_dict(), path, force)


def write_table_csv(rows: list, path: str, columns: list | None = None,
                    force: bool = False) -> pd.DataFrame:
    '''
    Write rows of dicts as CSV with fixed float formatting

    Returns
    -------
    _: pd.DataFrame
        The written table
    '''
    check_write_file(path, force)
    table = pd.DataFrame(rows, columns=columns)
    table.to_csv(path, index=False, float_format='%.6f')
    return table


def write_browse_png(image, path: str, force: bool = False) -> None:
    '''Save an 8-bit RGB image as PNG'''
    check_write_file(path, force)
    PILImage.fromarray(image.rgb).save(path, 'PNG')


def write_render_hdf5(path: str, image, trace, report, yaml_string: str,
                      vis=None, force: bool = False) -> None:
    '''
    HDF5 product of one render: image, per-pixel classes and hits, the
    energy report, the full runconfig and optionally the voxel visibility

    Parameters
    ----------
    path: str
        Output file
    image: Image
        Rendered image
    trace: PixelTrace
        Per-pixel hits of the render
    report: EnergyReport
        Energy of the render
    yaml_string: str
        Runconfig with defaults filled in
    vis: VisibilityGrid or None
        Marked and visited voxels of the render
    force: bool
        Replace an existing file
    '''
    check_write_file(path, force)
    shape = (image.height, image.width)
    with h5py.File(path, 'w') as h5_obj:
        h5_obj.attrs['title'] = np.bytes_('InverseVis render product')
        h5_obj.attrs['software'] = np.bytes_('inversevis')
        h5_obj.attrs['software_version'] = np.bytes_(release_version)

        data_group = h5_obj.require_group(DATA_PATH)
        data_items = [
            Meta('image', image.rgb, 'Rendered image, row-major from top-left'),
            Meta('pixel_class', trace.effective_class.reshape(shape),
                 'Pixel class: 0 none, 1 direct, 2 indirect'),
            Meta('hit_position', trace.position.reshape(*shape, 3),
                 'Surface point of every pixel, NaN without a hit',
                 {'units': 'normalized object space'}),
            Meta('hit_triangle', trace.triangle.reshape(shape),
                 'Triangle index of every hit, -1 without a hit'),
            Meta('hit_scalar', trace.scalar.reshape(shape),
                 'Interpolated mesh scalar of every hit'),
        ]
        if vis is not None:
            data_items += [
                Meta('voxel_marked', vis.marked.astype(np.uint8),
                     'Surface shell voxels, indexed [ix, iy, iz]',
                     {'extent': vis.extent}),
                Meta('voxel_visited', vis.visited.astype(np.uint8),
                     'Shell voxels reached by a hit of this render',
                     {'extent': vis.extent}),
            ]
        for meta_item in data_items:
            add_dataset_and_attrs(data_group, meta_item)

        report_group = h5_obj.require_group(f'{METADATA_PATH}/report')
        census = report.census
        effective = report.effective_census or census
        report_items = [
            Meta('technique', str(report.technique),
                 'Technique mapping the hidden pixels'),
            Meta('total', report.total, 'gamma * direct + indirect energy'),
            Meta('direct', report.direct_term,
                 'Energy of directly visible pixels'),
            Meta('indirect', report.indirect_term,
                 'Energy of indirectly mapped pixels'),
            Meta('gamma', report.gamma, 'Weight of the direct term'),
            Meta('visibility', report.visibility,
                 'Visited share of the marked surface voxels'),
            Meta('mean_scalar', report.mean_scalar,
                 'Mean importance over all hits'),
            Meta('census', np.array([census.get(name, 0) for name in
                                     ('none', 'direct', 'indirect')]),
                 'Pixel count per class: none, direct, indirect'),
            Meta('effective_census',
                 np.array([effective.get(name, 0) for name in
                           ('none', 'direct', 'indirect')]),
                 'Pixel count per class with unlanded indirect pixels as '
                 'none'),
            Meta('report_json', json.dumps(report.to_dict(), sort_keys=True,
                                           default=_json_default),
                 'Energy report as JSON'),
        ]
        for meta_item in report_items:
            add_dataset_and_attrs(report_group, meta_item)

        add_dataset_and_attrs(h5_obj.require_group(METADATA_PATH),
                              Meta('runconfig', yaml_string,
                                   'Runconfig with defaults filled in'))
