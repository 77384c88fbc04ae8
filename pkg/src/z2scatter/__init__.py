"""Classical simulation of meson wave-packet scattering in a (1+1)D Z2 lattice
gauge theory: exact model, meson ansatz, statevector circuits, variational
preparation and shot analysis."""

__version__ = "0.1.0"

from .model import ExactSystem, LatticeParams  # noqa: E402,F401
from .simulator import Circuit, Gate, Statevector  # noqa: E402,F401
