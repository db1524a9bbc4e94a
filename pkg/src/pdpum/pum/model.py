"""A PUM problem description that can be rebuilt for any crack geometry."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pdpum.geometry import Box, CrackPolyline
from pdpum.materials import Material
from pdpum.pum.cover import build_cover
from pdpum.pum.quadrature import DEFAULT_ORDER, build_quadrature
from pdpum.pum.solver import (
    AssembledSystem,
    BoundaryConditions,
    PUMSolution,
    assemble,
    estimate_critical_dt,
    run_dynamic,
    solve_static,
    u_max,
)
from pdpum.pum.space import EPS_STAB, PUSpace, build_space, interior_tips

log = logging.getLogger(__name__)


@dataclass
class PUMModel:
    """Domain, discretization parameters and loads of a PUM problem.

    ``tip_radius`` is given in cell widths.
    """

    domain: Box
    material: Material
    bcs: BoundaryConditions
    level: int = 6
    alpha: float = 1.25
    order: int = DEFAULT_ORDER
    tip_radius: float = 2.0
    eps: float = EPS_STAB
    rtol: float = 1e-10
    sample_spacing: float = 0.0005

    def discretize(self, crack: Optional[CrackPolyline] = None, bcs: Optional[BoundaryConditions] = None) -> AssembledSystem:
        t0 = time.perf_counter()
        cover = build_cover(self.domain, self.level, self.alpha)
        tips = []
        if crack is not None:
            tips = [crack.tips[k] for k in interior_tips(crack, cover.domain, 1e-12 * cover.width)]
        quad = build_quadrature(cover, crack, order=self.order, tips=tips)
        space = build_space(cover, crack, quad, tip_radius=self.tip_radius * cover.cell_width, eps=self.eps)
        system = assemble(space, quad, self.material, bcs or self.bcs)
        log.info("PUM level %d: %d patches, %d DOF, %.2f s", self.level, cover.n_active, space.n_dof, time.perf_counter() - t0)
        return system

    def solve_static(self, crack: Optional[CrackPolyline] = None, system: Optional[AssembledSystem] = None) -> PUMSolution:
        system = system or self.discretize(crack)
        return solve_static(system, rtol=self.rtol)

    def solve_dynamic(
        self,
        T: float,
        dt: Optional[float] = None,
        crack: Optional[CrackPolyline] = None,
        system: Optional[AssembledSystem] = None,
        safety: float = 0.5,
    ) -> tuple[PUMSolution, float]:
        """Explicit run to ``T``; default ``dt`` is ``safety * dt_crit`` rounded to divide ``T``."""
        system = system or self.discretize(crack)
        if dt is None:
            dt = default_dt(system, T, safety)
        ref = float(np.linalg.norm(solve_static(system, rtol=self.rtol).coefficients))
        return run_dynamic(system, T, dt, reference_norm=ref), dt

    def u_max(self, solution: PUMSolution) -> float:
        return u_max(solution, self.sample_spacing)


def default_dt(system: AssembledSystem, T: float, safety: float = 0.5) -> float:
    """Largest ``T / n`` not above ``safety`` times the critical step."""
    dtc = estimate_critical_dt(system)
    n = int(np.ceil(T / (safety * dtc)))
    return T / n
