"""Receding-horizon warm start."""

from typing import NamedTuple

import numpy as np


class HorizonLayout(NamedTuple):
    """Decision vector layout: ``2 * horizon`` interleaved thrusts, then ``t_d, t_s`` if ``has_times``."""

    horizon: int
    has_times: bool
    dt: float

    @property
    def dim(self) -> int:
        return 2 * self.horizon + (2 if self.has_times else 0)


def warm_start_shift(previous, layout: HorizonLayout, t_s_floor: float = 0.0) -> np.ndarray:
    """Shift the thrust sequence one step (repeating the last pair) and age ``t_s`` by one step."""
    prev = np.asarray(previous, dtype=float)
    if prev.shape != (layout.dim,):
        raise ValueError(f"previous solution has shape {prev.shape}, layout expects ({layout.dim},)")
    out = prev.copy()
    nt = 2 * layout.horizon
    out[: nt - 2] = prev[2:nt]
    out[nt - 2: nt] = prev[nt - 2: nt]
    if layout.has_times:
        out[nt + 1] = max(prev[nt + 1] - layout.dt, t_s_floor)
    return out
