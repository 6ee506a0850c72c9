"""HTTP scoring service: NLI entailment and hallucination criticism.

Wraps two sequence-classification scorers behind a small JSON wire
protocol so generation-side tooling can query entailment probabilities
and faithfulness judgments without importing any model code.
"""

from importlib import resources
from pathlib import Path

from .backends import EntailScores, StubBackend, TransformersBackend, make_backend
from .config import ConfigError, ModelPin, ServiceConfig, load_config
from .service import create_app

__version__ = "0.1.0"


def schema_dir() -> Path:
    """Directory holding the published response JSON schemas."""
    return Path(resources.files("nli_bridge") / "schema")


__all__ = [
    "ConfigError",
    "EntailScores",
    "ModelPin",
    "ServiceConfig",
    "StubBackend",
    "TransformersBackend",
    "create_app",
    "load_config",
    "make_backend",
    "schema_dir",
    "__version__",
]
