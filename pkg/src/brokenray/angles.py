"""Launch-angle grids over the receiver (or transmitter) direction sphere.

Grids are uniform in theta and in cos(phi) over a configured sector, sampled
with exclusive upper endpoints so that doubling the counts yields a strict
superset of nodes (old nodes plus midpoints). A degenerate axis (lo == hi)
pins that angle and is never subdivided.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .raytrace import PHI_MIN

__all__ = ["AngleGrid", "full_sphere"]


@dataclass(frozen=True)
class AngleGrid:
    phi_lo: float = np.pi / 2
    phi_hi: float = np.pi / 2
    n_phi: int = 1
    theta_lo: float = 0.0
    theta_hi: float = 2.0 * np.pi
    n_theta: int = 64

    def __post_init__(self):
        if self.n_phi < 1 or self.n_theta < 1:
            raise ValueError("angle grid needs n_phi, n_theta >= 1")
        if self.phi_hi < self.phi_lo or self.theta_hi < self.theta_lo:
            raise ValueError("angle sector must have hi >= lo")

    @property
    def theta_step(self) -> float:
        return (self.theta_hi - self.theta_lo) / self.n_theta

    @property
    def phi_degenerate(self) -> bool:
        return self.phi_hi == self.phi_lo

    @property
    def theta_degenerate(self) -> bool:
        return self.theta_hi == self.theta_lo

    def min_step(self) -> float:
        """Smallest nonzero node spacing, used as the refinement floor."""
        steps = []
        if not self.theta_degenerate:
            steps.append(self.theta_step)
        if not self.phi_degenerate:
            steps.append((self.phi_hi - self.phi_lo) / self.n_phi)
        return min(steps) if steps else 0.0

    def nodes(self):
        """(phis (A,), thetas (A,)) enumerated phi-major, theta fastest."""
        if self.phi_degenerate:
            phis = np.array([self.phi_lo])
        else:
            u0 = np.cos(self.phi_lo)
            u1 = np.cos(self.phi_hi)
            u = u0 + (u1 - u0) * np.arange(self.n_phi) / self.n_phi
            phis = np.arccos(np.clip(u, -1.0, 1.0))
        phis = np.clip(phis, PHI_MIN, np.pi - PHI_MIN)
        if self.theta_degenerate:
            thetas = np.array([self.theta_lo])
        else:
            thetas = self.theta_lo + self.theta_step * np.arange(self.n_theta)
        pp, tt = np.meshgrid(phis, thetas, indexing="ij")
        return pp.ravel(), tt.ravel()

    def doubled(self) -> "AngleGrid":
        """Nested refinement: twice the nodes on every non-degenerate axis."""
        return replace(
            self,
            n_phi=self.n_phi if self.phi_degenerate else 2 * self.n_phi,
            n_theta=self.n_theta if self.theta_degenerate else 2 * self.n_theta,
        )


def full_sphere(n_phi: int, n_theta: int) -> AngleGrid:
    return AngleGrid(phi_lo=PHI_MIN, phi_hi=np.pi - PHI_MIN, n_phi=n_phi,
                     theta_lo=0.0, theta_hi=2.0 * np.pi, n_theta=n_theta)
