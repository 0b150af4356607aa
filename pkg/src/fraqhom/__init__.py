"""fraqhom: a numerical laboratory for Riesz-fractional diffusion.

Spectral fractional-gradient calculus on periodic lattices, restricted
Dirichlet and heat solves, oscillating-coefficient limit experiments, the
solution-flux metric, and the block (Schur) operator machinery, with a CLI
driving reproducible CSV-producing runs.
"""

from .fracops import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
