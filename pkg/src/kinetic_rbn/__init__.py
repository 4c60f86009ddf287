"""kinetic_rbn: simulation and numerical verification toolkit for degenerate
kinetic SDEs driven by symmetric alpha-stable noise.

The package covers exact noise sampling, the singular drift families and
their mollifications, Gaussian-weighted drift-gradient integrability probes,
kinetic path simulation with shared-noise coupling, transition-density
envelope checks, characteristic-flow transport machinery, the approximation
sequence of Watanabe-Yamada type, a Feynman-Kac resolvent probe, and a
configuration-driven experiment runner.
"""

__version__ = "0.1.0"
