"""Neural solution of the regulator equations for a model helicopter."""

from . import autodiff, heli, net, regeq, sim, train
from .heli import HeliParams
from .kernels import BACKEND
from .net import MlpParams
from .sim import Gains, simulate
from .train import TrainConfig

__version__ = "0.1.0"
