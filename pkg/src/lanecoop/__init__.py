"""Intention-driven lane-change toolkit.

Mines lane changes from NGSIM-format trajectories, clusters driving styles,
learns cooperation scores and a BC-IRL lane-change decision model, predicts
target-rear vehicles with Max-Ent IRL and plans the manoeuvre with an MPC.
"""

__version__ = "0.1.0"

DT = 0.1
LANE_WIDTH = 3.6576
DEFAULT_SEED = 42
