"""
Workflows Package
=================

Parallel execution of independent jobs with deterministic result order.
"""

from .orchestrator import JobOrchestrator, JobResult, JobSpec, JobStatus

__all__ = [
    'JobOrchestrator',
    'JobResult',
    'JobSpec',
    'JobStatus',
]
