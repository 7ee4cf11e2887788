"""Operational shell: artifact store, job queue, HTTP API, and CLI."""

from .config import StudioConfig, load_config
from .jobs import Job, JobQueue
from .operations import Studio
from .store import Store

__all__ = ["Job", "JobQueue", "Store", "Studio", "StudioConfig", "load_config"]
