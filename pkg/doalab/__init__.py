"""
Multi-source direction of arrival estimation for microphone arrays.

Simulates labelled reverberant mixtures, estimates the azimuths of all
simultaneous talkers with subspace methods or source-splitting networks and
feeds the estimates to a mask-based MVDR separation frontend.
"""

import sys

if sys.version_info < (3, 11):
    raise ValueError("doalab requires python version >= 3.11, found {}".format(sys.version.split()[0]))

__version__ = "0.1.0"

from doalab.exceptions import DoaLabException  # noqa: E402
from doalab.grid import AngularGrid  # noqa: E402
from doalab.dsp import (  # noqa: E402
    ArrayGeometry,
    MultichannelSpectrogram,
    STFTConfig,
    Waveform,
    geometry_by_name,
)

__all__ = [
    "AngularGrid",
    "ArrayGeometry",
    "DoaLabException",
    "MultichannelSpectrogram",
    "STFTConfig",
    "Waveform",
    "geometry_by_name",
]
