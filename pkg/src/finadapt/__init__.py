"""Financial-domain LLM adaptation toolkit.

Pipeline stages: pack domain documents into fixed-length token blocks, build
an instruction dataset through one template, grow it with LLM-generated
synthetic samples, emit two-stage training configurations, and evaluate the
result with constrained label decoding plus classical baselines.
"""
__version__ = "0.1.0"

from .errors import BackendError, FinadaptError, InputDataError

__all__ = [
    "__version__",
    "BackendError",
    "FinadaptError",
    "InputDataError",
]
