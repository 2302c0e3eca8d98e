'''
Golden-section line search, gradient ascent on the seed scale and mirror
coefficients, and simulated annealing of the viewpoint
'''
from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np


GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
MIN_ALPHA = 1.0e-4
FD_EPSILON = 0.025
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LineSearchConfig:
    '''Interval and stopping length of the golden-section search'''
    lower: float = 0.0
    upper: float = 0.25
    stop_length: float = 0.01

    def __post_init__(self):
        if not (self.stop_length > 0 and self.upper > self.lower):
            err_str = f'line search needs stop_length > 0 and a nonempty ' \
                      f'interval, got [{self.lower}, {self.upper}] ' \
                      f'stop {self.stop_length}'
            logging.getLogger('optimizers.LineSearchConfig').error(err_str)
            raise ValueError(err_str)


@dataclass(frozen=True)
class AscentConfig:
    '''Limits shared by the alpha and mirror ascents'''
    line_search: LineSearchConfig = LineSearchConfig()
    max_iterations: int = 20
    fd_epsilon: float = FD_EPSILON
    min_alpha: float = MIN_ALPHA


@dataclass(frozen=True)
class AnnealConfig:
    '''
    Simulated annealing schedule over the camera angles; neighborhood is
    the half width of the uniform proposal in degrees
    '''
    t0: float = 1.0
    cooling: float = 0.95
    steps: int = 100
    neighborhood: float = 60.0
    seed: int = 0
    acceptance_scale: float = 10.0

    def __post_init__(self):
        error_channel = logging.getLogger('optimizers.AnnealConfig')
        if not 0.0 < self.cooling < 1.0:
            err_str = f'cooling must lie in (0, 1), got {self.cooling}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if not 0.0 < self.neighborhood <= 180.0:
            err_str = f'neighborhood must lie in (0, 180] degrees, got ' \
                      f'{self.neighborhood}'
            error_channel.error(err_str)
            raise ValueError(err_str)
        if self.steps < 1 or not self.t0 > 0:
            err_str = 'annealing needs steps >= 1 and t0 > 0'
            error_channel.error(err_str)
            raise ValueError(err_str)


@dataclass(frozen=True)
class AscentResult:
    '''Best parameters seen and the per-iteration trace'''
    best: np.ndarray
    best_energy: float
    trace: list
    evaluations: int


@dataclass(frozen=True)
class AnnealResult:
    '''Best viewpoint (radians) and the log of every proposal'''
    theta: float
    phi: float
    best_energy: float
    samples: list
    # whatever the energy function attached to the best candidate
    best_extra: object = None


def golden_section_max(f: Callable[[float], float],
                       config: LineSearchConfig | None = None) -> float:
    '''
    Maximize f on [lower, upper] by golden-section search

    Each iteration keeps the subinterval around the better interior probe
    and reuses the surviving probe, so only one new evaluation is needed.

    Parameters
    ----------
    f: callable
        Function of one float
    config: LineSearchConfig
        Interval and stopping length

    Returns
    -------
    _: float
        Midpoint of the final interval once its length is below stop_length
    '''
    config = config or LineSearchConfig()
    x1, x4 = config.lower, config.upper
    x2 = x4 - (x4 - x1) / GOLDEN_RATIO
    x3 = x1 + (x4 - x1) / GOLDEN_RATIO
    f2, f3 = f(x2), f(x3)

    while x4 - x1 >= config.stop_length:
        if f2 > f3:
            x4, x3, f3 = x3, x2, f2
            x2 = x4 - (x4 - x1) / GOLDEN_RATIO
            f2 = f(x2)
        else:
            x1, x2, f2 = x2, x3, f3
            x3 = x1 + (x4 - x1) / GOLDEN_RATIO
            f3 = f(x3)
    return 0.5 * (x1 + x4)


class _CachedEnergy:
    '''Memoized energy evaluations keyed by the parameter vector'''

    def __init__(self, energy_fn):
        self.energy_fn = energy_fn
        self.cache = {}
        self.evaluations = 0

    def __call__(self, x) -> float:
        key = tuple(np.round(np.atleast_1d(x).astype(np.float64), 12))
        if key not in self.cache:
            self.cache[key] = float(self.energy_fn(np.array(key)))
            self.evaluations += 1
        return self.cache[key]


def forward_difference(energy: Callable, x: np.ndarray,
                       epsilon: float = FD_EPSILON,
                       e_x: float | None = None) -> np.ndarray:
    '''(E(x + eps e_i) - E(x)) / eps for every coordinate of x'''
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    e_x = energy(x) if e_x is None else e_x
    grad = np.empty_like(x)
    for i in range(len(x)):
        step = np.zeros_like(x)
        step[i] = epsilon
        grad[i] = (energy(x + step) - e_x) / epsilon
    return grad


def _ascend(energy: _CachedEnergy, gradient_fn: Callable, x0: np.ndarray,
            config: AscentConfig, project: Callable, label: str):
    '''
    Gradient ascent with a golden-section step length; halts when the energy
    after a line search drops below the energy before it
    '''
    info_channel = logging.getLogger(f'optimizers.{label}')
    x = project(np.atleast_1d(np.asarray(x0, dtype=np.float64)))[0]
    e_x = energy(x)
    best, best_energy = x.copy(), e_x
    trace = [{'iteration': 0, 'params': x.tolist(), 'energy': e_x,
              'gradient': None, 'step': 0.0, 'clamped': False,
              'accepted': True, 'best_energy': best_energy}]

    for iteration in range(1, config.max_iterations + 1):
        grad = np.atleast_1d(gradient_fn(x, e_x))
        if not np.all(np.isfinite(grad)) or not np.any(grad):
            info_channel.info(f'iteration {iteration}: no ascent direction')
            break

        step = golden_section_max(
            lambda h: energy(project(x + h * grad)[0]), config.line_search)
        x_new, clamped = project(x + step * grad)
        e_new = energy(x_new)
        accepted = e_new >= e_x
        if accepted and e_new > best_energy:
            best, best_energy = x_new.copy(), e_new

        trace.append({'iteration': iteration, 'params': x_new.tolist(),
                      'energy': e_new, 'gradient': grad.tolist(),
                      'step': step, 'clamped': clamped,
                      'accepted': accepted, 'best_energy': best_energy})
        info_channel.info(f'iteration {iteration}: energy {e_new:.6g} '
                          f'step {step:.4g} accepted {accepted}')
        if not accepted or np.array_equal(x_new, x):
            break
        x, e_x = x_new, e_new

    return AscentResult(best, best_energy, trace, energy.evaluations)


def optimize_alpha(energy_fn: Callable[[float], float],
                   alpha0: float = 0.5,
                   gradient_fn: Callable[[float], float] | None = None,
                   config: AscentConfig | None = None) -> AscentResult:
    '''
    Gradient ascent on the seed scale alpha

    Parameters
    ----------
    energy_fn: callable
        alpha -> energy of the render with that alpha
    alpha0: float
        Starting alpha
    gradient_fn: callable or None
        alpha -> analytic dE/dalpha; None uses forward differences with
        step config.fd_epsilon
    config: AscentConfig
        Line search and iteration limits

    Returns
    -------
    _: AscentResult
        best holds a one-element array; trace rows note when alpha was
        clamped at config.min_alpha
    '''
    config = config or AscentConfig()
    energy = _CachedEnergy(lambda x: energy_fn(float(x[0])))

    def project(x):
        clamped = bool(x[0] < config.min_alpha)
        return np.maximum(x, config.min_alpha), clamped

    if gradient_fn is None:
        def gradient(x, e_x):
            return forward_difference(energy, x, config.fd_epsilon, e_x)
    else:
        def gradient(x, e_x):
            return np.array([gradient_fn(float(x[0]))])

    return _ascend(energy, gradient, [alpha0], config, project,
                   'optimize_alpha')


def optimize_mirror(energy_fn: Callable[[np.ndarray], float],
                    omega0=None,
                    config: AscentConfig | None = None) -> AscentResult:
    '''
    Gradient ascent on the five mirror coefficients with forward-difference
    gradients

    Parameters
    ----------
    energy_fn: callable
        (5,) omega -> energy of the render with that mirror
    omega0: array_like or None
        Starting coefficients, flat mirror by default
    config: AscentConfig
        Line search, iteration limit and difference step

    Returns
    -------
    _: AscentResult
        best holds the (5,) coefficients
    '''
    config = config or AscentConfig()
    omega0 = np.zeros(5) if omega0 is None else np.asarray(omega0, float)
    energy = _CachedEnergy(energy_fn)

    def gradient(x, e_x):
        return forward_difference(energy, x, config.fd_epsilon, e_x)

    return _ascend(energy, gradient, omega0, config,
                   lambda x: (x, False), 'optimize_mirror')


def acceptance_probability(delta_energy: float, temperature: float,
                           scale: float = 10.0) -> float:
    '''min(1, exp(scale * dE / T))'''
    if delta_energy >= 0:
        return 1.0
    return math.exp(scale * delta_energy / temperature)


def wrap_angles(theta: float, phi: float):
    '''
    Bring proposed angles back onto the sphere: theta is reflected at the
    poles (moving phi to the opposite meridian) and phi wraps to [0, 2 pi)
    '''
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta = -theta
        phi += math.pi
    if theta > math.pi:
        theta = TWO_PI - theta
        phi += math.pi
    return theta, math.fmod(phi, TWO_PI) % TWO_PI


def anneal_viewpoint(energy_fn: Callable, config: AnnealConfig | None = None,
                     start=(0.5 * math.pi, 0.0)) -> AnnealResult:
    '''
    Simulated annealing over the camera angles

    Parameters
    ----------
    energy_fn: callable
        (theta, phi) in radians -> energy, or -> (energy, extra) where extra
        is kept for the best candidate
    config: AnnealConfig
        Temperature schedule, proposal width and RNG seed
    start: tuple
        Starting (theta, phi) in radians

    Returns
    -------
    _: AnnealResult
        Best position ever visited and one log row per step
    '''
    config = config or AnnealConfig()
    info_channel = logging.getLogger('optimizers.anneal_viewpoint')
    rng = np.random.default_rng(config.seed)
    width = math.radians(config.neighborhood)

    def evaluate(theta, phi):
        out = energy_fn(theta, phi)
        if isinstance(out, tuple):
            return float(out[0]), out[1]
        return float(out), None

    theta, phi = wrap_angles(*start)
    e_cur, extra = evaluate(theta, phi)
    best = (theta, phi, e_cur, extra)
    temperature = config.t0
    samples = [{'step': 0, 'theta_deg': math.degrees(theta),
                'phi_deg': math.degrees(phi), 'energy': e_cur,
                'accepted': True, 'temperature': temperature,
                'best_energy': e_cur}]

    for step in range(1, config.steps + 1):
        d_theta, d_phi = rng.uniform(-width, width, size=2)
        cand_theta, cand_phi = wrap_angles(theta + d_theta, phi + d_phi)
        e_new, cand_extra = evaluate(cand_theta, cand_phi)

        threshold = rng.random()
        accepted = threshold < acceptance_probability(
            e_new - e_cur, temperature, config.acceptance_scale)
        if accepted:
            theta, phi, e_cur = cand_theta, cand_phi, e_new
        if e_new > best[2]:
            best = (cand_theta, cand_phi, e_new, cand_extra)

        samples.append({'step': step, 'theta_deg': math.degrees(cand_theta),
                        'phi_deg': math.degrees(cand_phi), 'energy': e_new,
                        'accepted': bool(accepted),
                        'temperature': temperature, 'best_energy': best[2]})
        info_channel.debug(f'step {step}: energy {e_new:.6g} '
                           f'accepted {accepted} T {temperature:.4g}')
        temperature *= config.cooling

    return AnnealResult(best[0], best[1], best[2], samples, best[3])
