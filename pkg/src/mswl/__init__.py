"""mswl: a numerical laboratory for multisoliton dynamics of the defocusing
energy-critical wave equation in R^3 with moving potential wells.

Subpackages cover the static elliptic problem, Lorentz kinematics, the exact
quintic interaction algebra, spacetime norms, the interaction-decay oracle,
the time-domain solver with its iteration drivers, and bound-state shooting.
"""

__version__ = "0.1.0"
