"""Run-to-run adaptive feedforward control of a reluctance actuator.

Modules: :mod:`.actuator` (plant and switch simulator), :mod:`.trajectory`
(quintic reference), :mod:`.feedforward` (flatness-based inversion and
sensitivity basis), :mod:`.stepsize` and :mod:`.adapt` (adaptation laws),
:mod:`.harness` (Monte Carlo campaigns) and :mod:`.cli`.
"""

from .actuator import (J_UNCONTROLLED, NO_CONTACT_PENALTY, ActuatorState, ConstantDrive,
                       SimOptions, SwitchOutcome, simulate_switch)
from .adapt import AdaptiveCoordinates, PatternSearch, Phase, ProtocolError, Proposal
from .feedforward import (ControllerParams, Feedforward, InfeasibleTrajectory, SensitivityBasis,
                          fisher, phi_to_theta, theta_to_phi, u_ff)
from .params import NOMINAL, ParameterError, PhysicalParams
from .stepsize import StepSizeState, Strategy
from .trajectory import QuinticTrajectory, make_quintic

__version__ = "0.1.0"
