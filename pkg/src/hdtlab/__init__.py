"""Deep thermalization and holographic deep thermalization toolkit."""

from . import core, metrics, permutations, protocols, qml, rng, runner, security, theory
from .metrics import frame_potential, frame_potential_mc, haar_frame_potential
from .protocols import ProjectedEnsemble, ProtocolConfig, UnitarySource, run_dt, run_hdt
from .rng import RngStream
from .theory import f1_dt, f1_hdt, fk_hdt_lower_bound

__version__ = "0.1.0"
