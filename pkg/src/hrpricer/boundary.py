"""Free-boundary extraction and striking-curve analysis."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BoundaryNotBracketedError, ExtrapolationError
from .pde import ValueSurface


@dataclass
class ExerciseBoundary:
    """b(t, z) on the stored time slices and the band's z-diagonals.

    ``b[s, k]`` is the boundary at ``times[s]`` and ``z[k]``.
    """

    times: np.ndarray
    z: np.ndarray
    b: np.ndarray
    tolerance: float
    K: float
    cell: float        # x-grid cell width just below K

    def __call__(self, t: float, z: float) -> float:
        times, lz = self.times, np.log(self.z)
        if not (times[0] - 1e-12 <= t <= times[-1] + 1e-12):
            raise ExtrapolationError(f"t={t} outside [{times[0]}, {times[-1]}]")
        if not (z > 0 and lz[0] - 1e-12 <= math.log(z) <= lz[-1] + 1e-12):
            raise ExtrapolationError(f"z={z} outside boundary coverage [{self.z[0]:.4g}, {self.z[-1]:.4g}]")
        s = min(max(int(np.searchsorted(times, t, side="right")) - 1, 0), len(times) - 2)
        a = min(max((t - times[s]) / (times[s + 1] - times[s]), 0.0), 1.0)
        v = math.log(z)
        b0 = np.interp(v, lz, self.b[s])
        b1 = np.interp(v, lz, self.b[s + 1])
        return float((1 - a) * b0 + a * b1)

    def jump_constant(self) -> float:
        """max |b(t, z_{k+1}) - b(t, z_k)| / (z_{k+1} - z_k) over slices and neighbours."""
        dz = np.diff(self.z)
        return float(np.max(np.abs(np.diff(self.b, axis=1)) / dz[None, :]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "z", "b"])
            for s, t in enumerate(self.times):
                for k, z in enumerate(self.z):
                    w.writerow([f"{t:.17g}", f"{z:.17g}", f"{self.b[s, k]:.17g}"])


def _refine(x, gap, i0):
    # Above the boundary gap ~ c (x - b)^2, so sqrt(gap) is close to linear;
    # extend the line through the next two nodes down to zero.
    i1, i2 = i0 + 1, i0 + 2
    if i2 >= len(x):
        return x[i0]
    s1, s2 = math.sqrt(max(gap[i1], 0.0)), math.sqrt(max(gap[i2], 0.0))
    if s2 <= s1:
        return x[i0]
    xb = x[i1] - s1 * (x[i2] - x[i1]) / (s2 - s1)
    return min(max(xb, x[i0]), x[i1])


def _column_boundary(x, gap, iK, tol):
    for i in range(iK, -1, -1):
        if gap[i] <= tol:
            if i == iK:
                return x[iK]
            return _refine(x, gap, i)
    return None


def extract(surface: ValueSurface, tolerance: Optional[float] = None) -> ExerciseBoundary:
    """Largest x <= K with V(t, x, z) - (K - x)^+ <= tolerance, per slice and z.

    Raises
    ------
    BoundaryNotBracketedError
        If a column is in continuation all the way down to the grid edge.
    """
    K = surface.params.K
    tol = 1e-6 * K if tolerance is None else float(tolerance)
    x = surface.x_nodes
    payoff = surface.payoff_x
    iK = int(np.searchsorted(x, K * (1 + 1e-12), side="right")) - 1
    z = surface.z_nodes
    b = np.empty((len(surface.times), len(z)))
    for s in range(len(surface.times)):
        gap = surface.values_xz(s) - payoff[None, :]
        for k in range(len(z)):
            val = _column_boundary(x, gap[k], iK, tol)
            if val is None:
                raise BoundaryNotBracketedError(
                    f"no stopping node at t={surface.times[s]:.6g}, z={z[k]:.6g}; widen the x-range",
                    column=(s, k),
                )
            b[s, k] = val
    cell = x[iK] - x[iK - 1]
    return ExerciseBoundary(surface.times.copy(), z.copy(), b, tol, K, float(cell))


@dataclass
class StrikingCurve:
    times: np.ndarray
    z: np.ndarray
    values: np.ndarray
    path_id: Optional[int] = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "z_t", "b"])
            for t, z, b in zip(self.times, self.z, self.values):
                w.writerow([f"{t:.17g}", f"{z:.17g}", f"{b:.17g}"])


def striking_curve_along(boundary: ExerciseBoundary, times, z_path,
                         path_id: Optional[int] = None) -> StrikingCurve:
    """t -> b(t, z(t)) along one trajectory of Z."""
    times = np.asarray(times, dtype=float)
    z_path = np.asarray(z_path, dtype=float)
    vals = np.array([boundary(t, z) for t, z in zip(times, z_path)])
    return StrikingCurve(times, z_path, vals, path_id)


def monotonicity_report(curve: StrikingCurve, noise_floor: Optional[float] = None,
                        K: Optional[float] = None) -> dict:
    """Largest one-step decrease of the curve and whether it exceeds the noise floor.

    The default floor is 1e-4 K (``K`` defaults to the curve's final value).
    """
    vals = np.asarray(curve.values, dtype=float)
    if noise_floor is None:
        scale = K if K is not None else float(vals[-1])
        noise_floor = 1e-4 * scale
    d = np.diff(vals)
    if d.size == 0 or d.min() >= 0.0:
        return {"is_monotone_increasing": True, "max_decrease": 0.0,
                "location": None, "index": None, "noise_floor": noise_floor}
    j = int(np.argmin(d))
    drop = float(-d[j])
    return {
        "is_monotone_increasing": drop <= noise_floor,
        "max_decrease": drop,
        "location": float(curve.times[j + 1]),
        "index": j + 1,
        "noise_floor": noise_floor,
    }


def envelope_violation(boundary: ExerciseBoundary, b_high_vol, b_low_vol, grid_tol: float) -> float:
    """Largest excursion of b(t, z) outside [b_high_vol(t), b_low_vol(t)] (0 if inside)."""
    lo = b_high_vol(boundary.times)[:, None] - grid_tol
    hi = b_low_vol(boundary.times)[:, None] + grid_tol
    below = np.max(lo - boundary.b, initial=0.0)
    above = np.max(boundary.b - hi, initial=0.0)
    return float(max(below, above, 0.0))


def anti_comonotone_violation(surface: ValueSurface, boundary: ExerciseBoundary,
                              slice_index: int, interp_tol: float = 0.0) -> float:
    """Check that at fixed t, b(z) < b(z') implies V(x, z) > V(x, z') for grid x in between.

    Returns the worst shortfall max(V(x, z') - V(x, z) - interp_tol, 0).
    """
    vals = surface.values_xz(slice_index)
    x = surface.x_nodes
    bs = boundary.b[slice_index]
    worst = 0.0
    for k in range(len(bs)):
        for kp in range(len(bs)):
            if bs[k] < bs[kp]:
                inside = (x > bs[k]) & (x < bs[kp])
                if inside.any():
                    gap = vals[kp, inside] - vals[k, inside] - interp_tol
                    worst = max(worst, float(gap.max()))
    return max(worst, 0.0)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
