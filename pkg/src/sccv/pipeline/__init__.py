"""Agent, server, queueing, live detection engine, and the CLI."""
from .agent import AgentConfig, AgentError, AgentStats, agent_run
from .engine import DetectionEngine
from .queueing import BoundedQueue, Counters
from .server import DEFAULT_QUEUE_CAP, SccvServer

__all__ = ["AgentConfig", "AgentError", "AgentStats", "agent_run",
           "DetectionEngine", "BoundedQueue", "Counters",
           "DEFAULT_QUEUE_CAP", "SccvServer"]
