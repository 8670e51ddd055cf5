"""Whole-body reach-and-grasp synthesis from a probabilistic reaching field."""
from __future__ import annotations

import os

__version__ = "0.1.0"


def configure_threads() -> int:
    """Cap torch/numpy worker threads from REACHGRASP_THREADS (default 1)."""
    n = int(os.environ.get("REACHGRASP_THREADS", "1"))
    try:
        import torch

        torch.set_num_threads(max(1, n))
    except ImportError:  # pragma: no cover
        pass
    return n
