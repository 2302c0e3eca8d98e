'''
Lambertian shading with hard shadows, the diverging scalar colormap and the
binary portable pixmap (P6) image format

Colormap breakpoints: s = 0 -> blue (0, 0, 1), s = 0.5 -> white (1, 1, 1),
s = 1 -> red (1, 0, 0), linear in between.
'''
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from scipy import ndimage

from inversevis.utils.camera_image import (PIXEL_DIRECT, PIXEL_INDIRECT,
                                           Camera)
from inversevis.utils.helpers import check_write_file, normalize_rows
from inversevis.utils.ray_engine import TraceSettings, sphere_trace_batch
from inversevis.utils.sdf_grid import SdfGrid, gradient


AMBIENT = 0.2
RIM_DARKENING = 0.15
BACKGROUND = (0.15, 0.15, 0.15)
# shadow rays start this many hit tolerances above the surface
SHADOW_OFFSET = 3.0
MIN_IMAGE_SIZE = 16
PPM_MAGIC = b'P6'


@dataclass(frozen=True)
class ShadingConfig:
    ambient: float = AMBIENT
    # world direction toward the light, None uses the camera's up-left
    light_direction: tuple | None = None
    shadows: bool = True
    rim: bool = True
    rim_darkening: float = RIM_DARKENING
    background: tuple = BACKGROUND


@dataclass(frozen=True)
class Image:
    '''8-bit RGB image, row-major from the top-left pixel'''
    width: int
    height: int
    rgb: np.ndarray

    def __post_init__(self):
        error_channel = logging.getLogger('shading.Image')
        if self.width < MIN_IMAGE_SIZE or self.height < MIN_IMAGE_SIZE:
            err_str = f'image must be at least {MIN_IMAGE_SIZE}x' \
                      f'{MIN_IMAGE_SIZE}, got {self.width}x{self.height}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if self.rgb.shape != (self.height, self.width, 3) or \
                self.rgb.dtype != np.uint8:
            err_str = f'pixel buffer {self.rgb.shape} {self.rgb.dtype} does ' \
                      f'not match a {self.width}x{self.height} RGB image'
            error_channel.error(err_str)
            raise ValueError(err_str)


def default_light(camera: Camera) -> np.ndarray:
    '''Light from the camera's upper left, toward the viewer'''
    return normalize_rows(camera.up - camera.right - camera.look)


def colormap(s) -> np.ndarray:
    '''
    Blue-white-red diverging map

    Parameters
    ----------
    s: float or array_like
        Scalar(s), clamped to [0, 1]

    Returns
    -------
    _: np.ndarray
        (..., 3) RGB in [0, 1]
    '''
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    low = np.minimum(s, 0.5) * 2.0
    high = (np.maximum(s, 0.5) - 0.5) * 2.0
    red = np.where(s <= 0.5, low, 1.0)
    green = np.where(s <= 0.5, low, 1.0 - high)
    blue = np.where(s <= 0.5, 1.0, 1.0 - high)
    return np.stack([red, green, blue], axis=-1)


def to_bytes(rgb) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def shadowed(grid: SdfGrid, positions, normals, light_dir,
             settings: TraceSettings | None = None) -> np.ndarray:
    '''
    Hard shadow test: trace from just above each point toward the light

    Returns
    -------
    _: np.ndarray
        (n,) bool, True when the light is occluded
    '''
    settings = settings or TraceSettings()
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(positions) == 0:
        return np.zeros(0, dtype=bool)
    origins = positions + SHADOW_OFFSET * settings.tolerance * normals
    directions = np.broadcast_to(light_dir, origins.shape)
    # hits within a voxel of the start come from interpolation error
    hits = sphere_trace_batch(grid, origins, directions, settings,
                              min_length=grid.voxel_size)
    return hits.found


def shade_intensity(grid: SdfGrid, positions, light_dir,
                    settings: TraceSettings | None = None,
                    ambient: float = AMBIENT,
                    shadows: bool = True) -> np.ndarray:
    '''
    ambient + (1 - ambient) * max(0, n.l), the diffuse part zeroed in shadow

    Parameters
    ----------
    grid: SdfGrid
        Distance field, its gradient gives the normals
    positions: array_like
        (n, 3) surface points
    light_dir: array_like
        (3,) unit direction toward the light
    settings: TraceSettings
        Tolerance for the shadow rays
    ambient: float
        Intensity floor
    shadows: bool
        Trace shadow rays

    Returns
    -------
    _: np.ndarray
        (n,) intensity in [ambient, 1]
    '''
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    light_dir = np.asarray(light_dir, dtype=np.float64)
    normals = normalize_rows(gradient(grid, positions), eps=1e-12)
    diffuse = np.maximum(0.0, normals @ light_dir)

    if shadows:
        lit = np.flatnonzero(diffuse > 0)
        blocked = shadowed(grid, positions[lit], normals[lit], light_dir,
                           settings)
        diffuse[lit[blocked]] = 0.0
    return ambient + (1.0 - ambient) * diffuse


def shade(grid: SdfGrid, position, light_dir, base_color,
          settings: TraceSettings | None = None,
          ambient: float = AMBIENT, shadows: bool = True) -> np.ndarray:
    '''Shaded RGB of one surface point'''
    intensity = shade_intensity(grid, position, light_dir, settings, ambient,
                                shadows)[0]
    return intensity * np.asarray(base_color, dtype=np.float64)


def rim_mask(indirect: np.ndarray) -> np.ndarray:
    '''Indirect pixels with a 4-neighbor outside the indirect region'''
    inner = ndimage.binary_erosion(indirect, border_value=0)
    return indirect & ~inner


def compose_image(trace, grid: SdfGrid, camera: Camera, width: int,
                  height: int, config: ShadingConfig | None = None,
                  settings: TraceSettings | None = None) -> Image:
    '''
    Paint a traced view: shaded colormapped scalar on direct pixels, flat
    colormapped scalar on indirect pixels (rim optionally darkened) and the
    background elsewhere

    Parameters
    ----------
    trace: PixelTrace
        Row-major per-pixel hits
    grid: SdfGrid
        Distance field for normals and shadows
    camera: Camera
        Camera of the trace, for the default light
    width, height: int
        Image size
    config: ShadingConfig
        Lighting and cue options

    Returns
    -------
    _: Image
    '''
    config = config or ShadingConfig()
    light = default_light(camera) if config.light_direction is None else \
        normalize_rows(config.light_direction)

    cls = trace.effective_class
    rgb = np.empty((width * height, 3))
    rgb[:] = config.background

    direct = np.flatnonzero(cls == PIXEL_DIRECT)
    if direct.size:
        intensity = shade_intensity(grid, trace.position[direct], light,
                                    settings, config.ambient, config.shadows)
        rgb[direct] = colormap(trace.scalar[direct]) * intensity[:, None]

    indirect = np.flatnonzero(cls == PIXEL_INDIRECT)
    if indirect.size:
        rgb[indirect] = colormap(trace.scalar[indirect])

    rgb = rgb.reshape(height, width, 3)
    if config.rim and indirect.size:
        rim = rim_mask((cls == PIXEL_INDIRECT).reshape(height, width))
        rgb[rim] *= 1.0 - config.rim_darkening

    return Image(width, height, to_bytes(rgb))


def write_ppm(image: Image, path: str, force: bool = False) -> None:
    '''
    Write a binary portable pixmap: "P6\\n{w} {h}\\n255\\n" then raw RGB
    '''
    check_write_file(path, force)
    header = b'%s\n%d %d\n255\n' % (PPM_MAGIC, image.width, image.height)
    with open(path, 'wb') as f_out:
        f_out.write(header)
        f_out.write(np.ascontiguousarray(image.rgb).tobytes())


def read_ppm(path: str) -> Image:
    '''Read a binary portable pixmap with an 8-bit maximum value'''
    error_channel = logging.getLogger('shading.read_ppm')
    with open(path, 'rb') as f_in:
        data = f_in.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b'#':
            pos = data.index(b'\n', pos)
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            break
        tokens.append(data[start:pos])
    # single whitespace byte separates the header from the raster
    pos += 1

    if len(tokens) != 4 or tokens[0] != PPM_MAGIC or tokens[3] != b'255':
        err_str = f'{path} is not an 8-bit binary portable pixmap'
        error_channel.error(err_str)
        raise ValueError(err_str)

    width, height = int(tokens[1]), int(tokens[2])
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height * 3,
                           offset=pos)
    return Image(width, height, raster.reshape(height, width, 3).copy())
