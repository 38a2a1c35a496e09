"""Transfer learning from a large source regression task to a tiny target task,
with hand-written dense / batch-norm / sigmoid networks and classical baselines.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
