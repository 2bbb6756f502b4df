"""Discretisation of the azimuth circle into classification classes."""

from dataclasses import dataclass
import math

import numpy as np

from doalab.exceptions import ConfigException


def cyclic_distance_deg(first, second):
    """Absolute angular difference in degrees, folded into [0, 180]."""
    diff = np.abs(np.mod(np.asarray(first, dtype=np.float64) - np.asarray(second, dtype=np.float64), 360.0))
    return np.minimum(diff, 360.0 - diff)


@dataclass(frozen=True)
class AngularGrid:
    """floor(360/gamma) classes; class k (0-based) is centred on gamma*(k+1) - (gamma-1)/2 degrees."""

    gamma: float

    def __post_init__(self):
        if not 0 < self.gamma <= 180:
            raise ConfigException("angular resolution must be in (0, 180] degrees, got {}".format(self.gamma))

    @property
    def size(self) -> int:
        """Number of classes."""
        return int(math.floor(360.0 / self.gamma))

    @property
    def class_degrees(self) -> np.ndarray:
        """Class centres in degrees, strictly increasing."""
        index = np.arange(1, self.size + 1, dtype=np.float64)
        return self.gamma * index - (self.gamma - 1.0) / 2.0

    @property
    def class_angles(self) -> np.ndarray:
        """Class centres in radians."""
        return self.class_degrees * (math.pi / 180.0)

    @property
    def wrapped_angles(self) -> np.ndarray:
        """Class centres in radians folded into [0, 2*pi)."""
        return np.mod(self.class_angles, 2 * math.pi)

    def degrees_of(self, index) -> np.ndarray:
        """Class centre of a 0-based index, in degrees folded into [0, 360)."""
        return np.mod(self.class_degrees[np.asarray(index)], 360.0)

    def class_index(self, degrees) -> np.ndarray:
        """Nearest class by cyclic distance; ties go to the lower index."""
        degrees = np.atleast_1d(np.asarray(degrees, dtype=np.float64))
        distance = cyclic_distance_deg(degrees[:, np.newaxis], self.class_degrees[np.newaxis, :])
        return np.argmin(distance, axis=1)
