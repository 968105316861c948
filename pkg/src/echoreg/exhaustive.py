"""Exhaustive grid-search baseline over the 6-DOF box.

Evaluates the squared NCC at every node of a regular grid centered on the
identity and returns the best node.  Ties break toward the lowest node index
in lexicographic (rx, ry, rz, tx, ty, tz) order, so the winner does not
depend on worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import Executor
from .errors import BadConfig
from .geometry import RigidParams, to_matrix
from .metrics import MetricValue
from .volume import Volume3

CHUNK = 4096


@dataclass(frozen=True)
class GridSpec:
    """Per-axis half counts and step sizes; axis order (rx, ry, rz, tx, ty, tz).

    An axis with half count m contributes nodes -m..+m, so the grid holds
    prod(2 m + 1) nodes and always contains the identity.
    """

    half_counts: tuple[int, int, int, int, int, int] = (4, 4, 4, 4, 4, 4)
    step_t: float = 2.5     # mm
    step_r: float = 2.0     # degrees

    def validate(self):
        if len(self.half_counts) != 6 or any(m < 0 for m in self.half_counts):
            raise BadConfig(
                f"half counts must be six integers >= 0, got {self.half_counts}"
            )
        if any(self.half_counts[:3]) and self.step_r <= 0:
            raise BadConfig(f"step_r must be positive, got {self.step_r}")
        if any(self.half_counts[3:]) and self.step_t <= 0:
            raise BadConfig(f"step_t must be positive, got {self.step_t}")

    @property
    def n_nodes(self) -> int:
        return int(np.prod([2 * m + 1 for m in self.half_counts]))

    def axis_values(self) -> list[np.ndarray]:
        """Node coordinates per axis, in internal units (radians, mm)."""
        steps = [math.radians(self.step_r)] * 3 + [self.step_t] * 3
        return [
            np.arange(-m, m + 1, dtype=np.float64) * s
            for m, s in zip(self.half_counts, steps)
        ]

    def node_state(self, index: int) -> np.ndarray:
        """State vector of the node at a flat lexicographic index."""
        axes = self.axis_values()
        sizes = [len(a) for a in axes]
        out = np.empty(6)
        rest = index
        for axis in range(5, -1, -1):
            rest, pos = divmod(rest, sizes[axis])
            out[axis] = axes[axis][pos]
        return out


def _node_states(g: GridSpec) -> np.ndarray:
    """All node states, flat index varying the last axis fastest."""
    axes = g.axis_values()
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def register_exhaustive(
    target: Volume3,
    source: Volume3,
    g: GridSpec,
    executor: Executor | None = None,
    ncc_region: str = "full",
) -> tuple[RigidParams, MetricValue]:
    """Highest-NCC grid node and its score.

    Every node is evaluated exactly once; chunked batches keep memory flat
    and the fixed scan order makes the tie-break deterministic.
    """
    g.validate()
    if ncc_region not in ("full", "overlap"):
        raise BadConfig(f"ncc_region must be full or overlap, got {ncc_region!r}")
    executor = executor or Executor()
    center = target.physical_center()
    states = _node_states(g)
    best_value = -1.0
    best_index = -1
    for start in range(0, states.shape[0], CHUNK):
        block = states[start : start + CHUNK]
        mats = np.stack(
            [to_matrix(RigidParams.from_array(row), center) for row in block]
        )
        scores, _ = executor.measure_ncc(
            target, source, mats, overlap_only=(ncc_region == "overlap")
        )
        top = int(np.argmax(scores))
        if float(scores[top]) > best_value:
            best_value = float(scores[top])
            best_index = start + top
    return (
        RigidParams.from_array(states[best_index]),
        MetricValue(best_value, "NCC"),
    )
