from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfskit.errors import DegenerateFitError, InvalidArgumentError


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n: int

    def __call__(self, x):
        return self.slope * np.asarray(x) + self.intercept


# rmIoU[%] vs NFS[%] over many sensor setups and trained sparse voxel CNNs in
# the full-scale CARLA protocol. Shown next to desk-scale fits for context; not
# a target for the stand-in features.
FULL_SCALE_REFERENCE = LinearFit(slope=1.04, intercept=1.63, r_squared=0.916, n=0)


def linear_fit(xs, ys) -> LinearFit:
    """Ordinary least squares ``y = slope * x + intercept`` with R² = 1 - SS_res / SS_tot.

    A constant ``y`` fitted exactly reports R² = 1.
    """
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"{x.size} x values vs {y.size} y values")
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateFitError("need at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    slope = float(np.dot(dx, dy) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(dy, dy))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(slope, intercept, r2, int(x.size))
