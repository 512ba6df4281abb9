from .common import AgentHyperparams, Batch, ReplayBuffer, observe_for_generalist
from .critics import CollapsedSfCritic, SfaStack, TwinSfCritics
from .sac import SacAgent
from .susfa import SusfaAgent, gpi_select_action, q_from_psi

__all__ = [
    "AgentHyperparams",
    "Batch",
    "ReplayBuffer",
    "observe_for_generalist",
    "SfaStack",
    "CollapsedSfCritic",
    "TwinSfCritics",
    "SacAgent",
    "SusfaAgent",
    "gpi_select_action",
    "q_from_psi",
]
