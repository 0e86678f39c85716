"""Context-divided deep Q-learning laboratory."""

__version__ = "0.1.0"

from .agent import (Agent, Hyperparams, StepMetrics, epsilon_at, lambda_at,
                    load_agent, make_variant, save_agent)
from .context import ContextModel, contextualize_gs, warm_start
from .envs import EnvSpec, PixelObservation, StepResult, env_names, make
from .errors import TrainingDiverged, UsageError
from .metrics import (EvalRecord, FlopsConfig, aei, avg_episode_return,
                      context_interference_matrix, count_flops,
                      gradient_interference, max_deterioration_ratio)
from .nn import (AdamState, Layout, MultiHeadQNet, RandomEncoder, adam_step,
                 gradient_check, huber, huber_grad, load_net, save_net)
from .replay import Batch, FrameStore, RecentBuffer, ReplayBuffer, Transition

__all__ = [
    "Agent", "AdamState", "Batch", "ContextModel", "EnvSpec", "EvalRecord",
    "FlopsConfig", "FrameStore", "Hyperparams", "Layout", "MultiHeadQNet",
    "PixelObservation", "RandomEncoder", "RecentBuffer", "ReplayBuffer",
    "StepMetrics", "StepResult", "Transition", "TrainingDiverged",
    "UsageError", "adam_step", "aei", "avg_episode_return",
    "context_interference_matrix", "contextualize_gs", "count_flops",
    "env_names", "epsilon_at", "gradient_check", "gradient_interference",
    "huber", "huber_grad", "lambda_at", "load_agent", "load_net", "make",
    "make_variant", "max_deterioration_ratio", "save_agent", "save_net",
    "warm_start",
]
