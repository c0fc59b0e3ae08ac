"""Asynchronous inference service: ingest API, durable queue, worker pool,
orchestrated model stages, study aggregation, and result stores."""

from .config import PipelineConfig, load_config
from .orchestrator import ImageResult, Orchestrator, StageError
from .service import InferenceRequest, PipelineService, RequestStatus, StudyResult

__all__ = [
    "ImageResult",
    "InferenceRequest",
    "Orchestrator",
    "PipelineConfig",
    "PipelineService",
    "RequestStatus",
    "StageError",
    "StudyResult",
    "load_config",
]
