"""Time-optimal gate synthesis on U(d) with quantum speed limit diagnostics."""

from .opspace import gate_angle, gate_fidelity, hs_inner, energy_variance
from .qsl import diagnostics, ml_min_time, mt_min_time
from .controls import ControlModel, ControlSchedule, CrabAnsatz
from .propagate import Trajectory
from .optimize import CostWeights, StepPolicy, crab_optimize, pmp_optimize

__version__ = "0.1.0"
