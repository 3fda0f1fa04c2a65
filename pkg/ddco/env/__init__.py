"""
Environments Package
====================

The planar pushing task with its scripted supervisor, the switching linear
dynamics generator, and closed-loop policy rollouts.
"""

from .push import (
    DEFAULT_CONFIG,
    PushConfig,
    PushEnv,
    PushEnvState,
    arm_fk,
    arm_ik,
    generate_demos,
    observe,
    push_step,
    reset_state,
    sample_goal,
    scripted_supervisor,
    supervisor_episode,
)
from .rollout import RolloutResult, TraceStep, evaluate_policy, rollout, supervisor_reference
from .slds import SldsConfig, slds_generate

__all__ = [
    'DEFAULT_CONFIG',
    'PushConfig',
    'PushEnv',
    'PushEnvState',
    'RolloutResult',
    'SldsConfig',
    'TraceStep',
    'arm_fk',
    'arm_ik',
    'evaluate_policy',
    'generate_demos',
    'observe',
    'push_step',
    'reset_state',
    'rollout',
    'sample_goal',
    'scripted_supervisor',
    'slds_generate',
    'supervisor_episode',
    'supervisor_reference',
]
