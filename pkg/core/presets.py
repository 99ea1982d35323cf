# core/presets.py

import os
import sys

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.utils.errors import ConfigError


def paper_example(x, y):
    """10 exp(-5 (x^2 + y^2))"""
    return 10.0 * np.exp(-5.0 * (x ** 2 + y ** 2))


def zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def sine_product(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def manufactured_source(x, y):
    """Source whose -Laplace solution with zero boundary data is sine_product"""
    return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def sine_product_gradient(x, y):
    return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))


class Gaussian:
    """amplitude * exp(-width * |x - center|^2)"""

    def __init__(self, amplitude=1.0, center=(0.5, 0.5), width=10.0):
        self.amplitude = float(amplitude)
        self.center = tuple(float(c) for c in center)
        self.width = float(width)
        if len(self.center) != 2:
            raise ConfigError(f"gaussian center must have two coordinates, got {center}")
        if self.width <= 0:
            raise ConfigError(f"gaussian width must be positive, got {width}")

    def __call__(self, x, y):
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return self.amplitude * np.exp(-self.width * r2)

    def __repr__(self):
        return f"Gaussian(amplitude={self.amplitude}, center={self.center}, width={self.width})"


PRESETS = {
    "paper-example": paper_example,
    "zero": zero,
    "sine-product": sine_product,
    "manufactured-source": manufactured_source,
}


def resolve_preset(spec):
    """Turn a preset name, or a mapping {name: custom-gaussian, ...}, into a callable"""
    if spec is None:
        return None
    if isinstance(spec, dict):
        params = dict(spec)
        name = params.pop("name", None)
        if name != "custom-gaussian":
            if not params and name in PRESETS:
                return PRESETS[name]
            raise ConfigError(f"only custom-gaussian takes parameters, got preset {name!r}")
        try:
            return Gaussian(**params)
        except TypeError as e:
            raise ConfigError(f"bad custom-gaussian parameters: {e}")
    if spec == "custom-gaussian":
        return Gaussian()
    if spec not in PRESETS:
        raise ConfigError(f"unknown preset {spec!r}; choose from {sorted(PRESETS) + ['custom-gaussian']}")
    return PRESETS[spec]
