"""fhlab: a desk-scale numerical laboratory for conservative stochastic
PDEs of fluctuating-hydrodynamics type on a bounded interval with Dirichlet
boundary data, together with the matching lattice particle system and the
control-based large-deviations rate function."""

__version__ = "0.1.0"
