"""Lane-aware multimodal trajectory prediction with two-stage refinement.

The package provides a vectorized scene model, a deterministic synthetic
scenario generator, an attention-based scene encoder with temporally dense
lane-aware candidate selection, a Laplace mixture-density decoder, a
second-stage motion refiner, and a training/evaluation harness with a CLI.
"""

from .model import LAformer, ModelConfig
from .scenario import GenConfig, MapSpec, BehaviorScript
from .scene import Scene, NormalizedScene
from .train import TrainConfig

__all__ = [
    "LAformer",
    "ModelConfig",
    "GenConfig",
    "MapSpec",
    "BehaviorScript",
    "Scene",
    "NormalizedScene",
    "TrainConfig",
]

__version__ = "0.1.0"
