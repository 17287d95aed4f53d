"""Cusp-capturing PINNs for elliptic interface problems."""

from .diffnet import NetworkParams, forward, forward_jet, init_params, load_params, save_params
from .geometry import CollocationSet, sample_collocation
from .optim import AdamConfig, LMConfig, TrainReport, train_adam, train_lm
from .problem import InterfaceProblem, NetworkSolution, ResidualPlan, assemble

__version__ = "0.1.0"
