#!/usr/bin/env python3
"""
Job Orchestrator
================

Runs independent numerical jobs (per-trajectory E-steps, cross-validation
folds, stability seeds, evaluation episodes) on a thread pool.

Features:
- Results always come back in submission order, whatever the worker count
- Failures are captured per job and never raised from the pool
- A single worker runs jobs inline, without a pool
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from ..configs.settings import get_settings

logger = logging.getLogger(__name__)


class JobStatus(Enum):
    """Job execution status"""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class JobSpec:
    """A unit of work: func(*args, **kwargs)"""
    id: str
    func: Callable[..., Any]
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)


@dataclass
class JobResult:
    """Outcome of one job"""
    id: str
    status: JobStatus = JobStatus.PENDING
    value: Any = None
    error: Optional[str] = None
    exception: Optional[BaseException] = None
    execution_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is JobStatus.COMPLETED


class JobOrchestrator:
    """Order-preserving parallel job runner"""

    def __init__(self, max_workers: Optional[int] = None):
        if max_workers is None:
            max_workers = get_settings().jobs
        self.max_workers = max(1, int(max_workers))

    def _execute(self, job: JobSpec) -> JobResult:
        result = JobResult(id=job.id, status=JobStatus.RUNNING)
        start = time.perf_counter()
        try:
            result.value = job.func(*job.args, **job.kwargs)
            result.status = JobStatus.COMPLETED
        except Exception as e:
            result.status = JobStatus.FAILED
            result.error = f"{type(e).__name__}: {e}"
            result.exception = e
            logger.debug(f"Job {job.id} failed: {result.error}")
        result.execution_time = time.perf_counter() - start
        return result

    def run(self, jobs: Sequence[JobSpec]) -> List[JobResult]:
        """Execute jobs and return their results in submission order"""
        jobs = list(jobs)
        if not jobs:
            return []
        workers = min(self.max_workers, len(jobs))
        if workers == 1:
            results = [self._execute(job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(self._execute, jobs))

        failed = [r.id for r in results if not r.ok]
        if failed:
            logger.debug(f"{len(failed)} of {len(results)} jobs failed: {', '.join(failed)}")
        return results

    def map(self, func: Callable[[Any], Any], items: Iterable[Any], prefix: str = "job") -> List[Any]:
        """
        Apply func to every item; re-raise the first failure in submission order.
        """
        jobs = [JobSpec(id=f"{prefix}-{i}", func=func, args=(item,)) for i, item in enumerate(items)]
        results = self.run(jobs)
        for result in results:
            if not result.ok:
                raise result.exception
        return [r.value for r in results]
