"""Quality indicators: normalized hypervolume, IGD, MIGD and MHV."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import hypervolume


@dataclass(frozen=True)
class NormalizationSpec:
    ideal: np.ndarray
    nadir: np.ndarray

    def __post_init__(self):
        ideal = np.asarray(self.ideal, dtype=float)
        nadir = np.asarray(self.nadir, dtype=float)
        if ideal.shape != nadir.shape or not np.all(nadir > ideal):
            raise ValueError("nadir must exceed ideal in every objective")
        object.__setattr__(self, "ideal", ideal)
        object.__setattr__(self, "nadir", nadir)

    @classmethod
    def from_front(cls, front):
        front = np.asarray(front, dtype=float)
        return cls(front.min(axis=0), front.max(axis=0))

    def normalize(self, Y):
        return (np.asarray(Y, dtype=float) - self.ideal) / (self.nadir - self.ideal)


def normalized_hv(points, spec: NormalizationSpec, ref_value: float = 1.1) -> float:
    Y = np.asarray(points, dtype=float)
    m = spec.ideal.size
    if Y.size == 0:
        return 0.0
    return hypervolume(spec.normalize(Y.reshape(-1, m)), np.full(m, ref_value))


def igd(reference_front, approx_front) -> float:
    """Mean distance from each reference point to its nearest approximation point."""
    R = np.atleast_2d(np.asarray(reference_front, dtype=float))
    A = np.atleast_2d(np.asarray(approx_front, dtype=float))
    if R.size == 0 or A.size == 0:
        raise ValueError("IGD needs non-empty reference and approximation sets")
    d = np.sqrt(((R[:, None, :] - A[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean())


def migd(per_step_igd) -> float:
    v = np.asarray(per_step_igd, dtype=float)
    if v.size == 0:
        raise ValueError("MIGD of an empty sequence")
    return float(v.mean())


def mhv(fronts, refs) -> float:
    """Mean over time of HV(front_t) against the per-step reference points."""
    if len(fronts) != len(refs):
        raise ValueError(f"{len(fronts)} fronts but {len(refs)} reference points")
    if not fronts:
        raise ValueError("MHV of an empty sequence")
    return float(np.mean([hypervolume(f, r) for f, r in zip(fronts, refs)]))
