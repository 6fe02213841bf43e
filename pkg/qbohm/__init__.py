"""
Quantum hydrodynamics toolkit: Madelung fields on grids, split-step evolution,
Bohmian trajectories, relaxation to equilibrium, Clebsch potentials and the
quantum Rankine vortex.
"""
__version__ = "0.1.0"
