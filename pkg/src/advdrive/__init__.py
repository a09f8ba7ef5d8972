"""advdrive: adversarial robustness pipeline for multi-agent driving policies.

A self-contained 2D T-intersection driving simulator with egocentric
84x84x3 image observations, a from-scratch convolutional policy/value
network (manual backprop + Adam), PPO training, a three-phase
train/attack/retrain workflow, and driving-error metrics with report
comparison and trajectory plots.
"""

__version__ = "0.1.0"

from .errors import AdvDriveError  # noqa: F401
