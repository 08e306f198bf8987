"""Mapping from normalized time to a model's native timestep ladder.

Clients send t in the open interval (0, 1); models index a discrete ladder of
``num_train_timesteps`` rungs. The mapping scales linearly and floors, so the
client-side gate at t = 0.2 lands on index 200 of a 1000-rung ladder.
"""

from __future__ import annotations

import math


def to_native_index(t: float, num_train_timesteps: int) -> int:
    if not 0.0 < t < 1.0:
        raise ValueError(f"normalized timestep must lie in (0, 1), got {t}")
    if num_train_timesteps < 1:
        raise ValueError(f"num_train_timesteps must be >= 1, got {num_train_timesteps}")
    return min(int(math.floor(t * num_train_timesteps)), num_train_timesteps - 1)
