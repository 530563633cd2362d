"""Fractional Brownian motion integration and slow/fast averaging toolkit.

Submodules
----------
gridpath     uniform grids, paths and Hölder-type norms
fbm          exact fBm sampling, conditioning and covariance kernels
sewing       dyadic sewing engine and Young integration
sde          Young and mixed Young/Itô solvers, stability checks
fast         fast diffusions on the circle and their invariant measures
experiments  averaging experiments producing convergence reports
cli          command line entry point
"""

__version__ = "0.1.0"
