"""trainshim: minimal reference consumer for the ctsynth wire contracts.

Demonstrates that the generator slots into an ML training stack without
linking against it: this package reads dataset manifests (JSON), simulates
a training loop with a mock model, writes per-checkpoint metrics in the
trajectory JSONL format, and invokes the ``ctsynth select-checkpoint`` CLI
as a subprocess. Standard library only.
"""

from .shim import ShimConfig, ShimError, emit_trajectory, read_manifest

__version__ = "0.1.0"
__all__ = ["ShimConfig", "ShimError", "emit_trajectory", "read_manifest", "__version__"]
