"""Value-of-update admission control for networked control loops."""
from .control import LoopModel, solve_lqr
from .admission import PolicyConfig, PolicyKind
from .netsim import ScenarioConfig, run, aoi_trace

__all__ = ["LoopModel", "solve_lqr", "PolicyConfig", "PolicyKind", "ScenarioConfig", "run",
           "aoi_trace"]
__version__ = "0.1.0"
