"""Collision operators as Markov transition rules on post-collision velocities.

A kernel maps the pre-collision angle (measured from the wall, in (0,pi)) to a
random post-collision angle; random-reflection kernels never change the speed.
Every shipped kernel declares its stationary surface measure and, where a
closed form exists, exposes the transition density and exact row masses used
by the spectral pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .geometry import (
    CellFamily,
    CellGeometry,
    GeometryError,
    SHALLOW_THRESHOLD,
    semicircle_map,
    semicircle_pieces,
    shallow_kernel_density,
    trace_batch,
)

__all__ = [
    "SurfaceMeasure",
    "CosineLaw",
    "SurfaceMaxwellian",
    "CollisionKernel",
    "MicrostructureKernel",
    "MSKernel",
    "MHKernel",
    "FlatTopKernel",
    "UniformAngleKernel",
    "microstructure_kernel",
    "ms_kernel",
    "mh_kernel",
    "flat_top_kernel",
    "check_stationarity",
    "check_detailed_balance",
    "dominates_off_diagonal",
    "StatTestReport",
]


# ---------------------------------------------------------------------------
# Surface measures


def angle_cdf(phi):
    """CDF of the 2D cosine law (1/2) sin(phi) d(phi), cancellation-free."""
    s = np.sin(0.5 * np.asarray(phi, dtype=float))
    return s * s


def angle_quantile(u):
    """Inverse of ``angle_cdf``."""
    return 2.0 * np.arcsin(np.sqrt(np.asarray(u, dtype=float)))


class SurfaceMeasure:
    """Stationary post-collision velocity law on the half-space."""

    n: int

    def sample_angles(self, m, rng):
        """2D angle-from-wall samples; both shipped measures share the cosine law."""
        return angle_quantile(rng.random(m))

    def angle_pdf(self, phi):
        return 0.5 * np.sin(np.asarray(phi, dtype=float))

    def sample_velocities(self, m, rng):
        raise NotImplementedError

    @property
    def mean_square_speed(self):
        raise NotImplementedError


@dataclass(frozen=True)
class CosineLaw(SurfaceMeasure):
    """Knudsen cosine law on the speed-s hemisphere in dimension n."""

    s: float = 1.0
    n: int = 2

    def __post_init__(self):
        if self.s <= 0 or self.n < 2:
            raise ValueError("cosine law requires s > 0, n >= 2")

    def sample_velocities(self, m, rng):
        # <w, e_n> dV_sph(w) = dV_{n-1}(wbar): draw uniform in the (n-1)-ball
        d = self.n - 1
        x = rng.standard_normal((m, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        x *= rng.random((m, 1)) ** (1.0 / d)
        vn = np.sqrt(np.maximum(1.0 - np.sum(x * x, axis=1), 0.0))
        return self.s * np.column_stack([x, vn])

    @property
    def mean_square_speed(self):
        return self.s ** 2


@dataclass(frozen=True)
class SurfaceMaxwellian(SurfaceMeasure):
    """Surface Maxwell-Boltzmann law: density prop. to <v,e_n> exp(-beta M |v|^2 / 2)."""

    beta: float = 1.0
    M: float = 1.0
    n: int = 2

    def __post_init__(self):
        if self.beta <= 0 or self.M <= 0 or self.n < 2:
            raise ValueError("surface Maxwellian requires beta, M > 0, n >= 2")

    @property
    def sigma(self):
        return 1.0 / math.sqrt(self.beta * self.M)

    def sample_velocities(self, m, rng):
        tang = self.sigma * rng.standard_normal((m, self.n - 1))
        vn = self.sigma * np.sqrt(2.0 * rng.exponential(size=m))  # Rayleigh
        return np.column_stack([tang, vn])

    def sample_speeds(self, m, rng):
        """Speed marginal: chi(n+1) scaled by sigma."""
        q = rng.standard_normal((m, self.n + 1))
        return self.sigma * np.linalg.norm(q, axis=1)

    @property
    def mean_square_speed(self):
        return (self.n + 1) / (self.beta * self.M)


def sample_cosine_hemisphere(n, s, m, rng):
    """Velocity samples from the cosine law mu on the speed-s hemisphere."""
    return CosineLaw(s=s, n=n).sample_velocities(m, rng)


def sample_surface_maxwellian(n, beta, M, m, rng):
    """Velocity samples from the surface Maxwellian mu_beta."""
    return SurfaceMaxwellian(beta=beta, M=M, n=n).sample_velocities(m, rng)


# ---------------------------------------------------------------------------
# Kernels


class CollisionKernel:
    """Markov transition rule on the post-collision angle in (0,pi)."""

    label: str = "kernel"
    stationary: SurfaceMeasure = CosineLaw()

    def sample_angles(self, phi, rng):
        raise NotImplementedError

    # Optional closed forms ------------------------------------------------
    def density_ac(self, phi, psi):
        """Absolutely continuous part of the transition density w.r.t. d(psi)."""
        return None

    def density_pairs(self, phi, psi):
        """Elementwise q(phi_i, psi_i); default loops over ``density_ac``."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        out = np.empty_like(psi)
        for i, (a, b) in enumerate(zip(phi, psi)):
            out[i] = self.density_ac(float(a), np.asarray([b]))[0]
        return out

    def diag_mass(self, phi):
        """Mass of the atom at psi = phi (specular/rejection part)."""
        return np.zeros_like(np.asarray(phi, dtype=float))

    def row_masses(self, phi, edges):
        """Exact cell masses P(phi, [e_j, e_{j+1}]) or None if unavailable."""
        return None

    @property
    def has_density(self):
        return False


class MicrostructureKernel(CollisionKernel):
    """Random reflection induced by a cell geometry: r ~ U[0,1], psi = Psi_phi(r)."""

    RETRIES = 8

    def __init__(self, cell: CellGeometry, stationary: Optional[SurfaceMeasure] = None):
        if cell.family is CellFamily.FLAT_TOP:
            raise GeometryError("flat_top is compositional; use flat_top_kernel(h, base)")
        self.cell = cell
        self.stationary = stationary or CosineLaw()
        self.label = cell.family.value + (f"(h={cell.h:g})" if cell.h else "")

    def sample_angles(self, phi, rng):
        phi = np.asarray(phi, dtype=float)
        out = np.full_like(phi, np.nan)
        todo = np.ones(phi.shape, dtype=bool)
        for _ in range(self.RETRIES):
            if not todo.any():
                break
            u = rng.random(int(todo.sum()))
            if self.cell.family is CellFamily.SEMICIRCLE:
                psi, _, near = semicircle_map(phi[todo], u, check_discontinuity=True)
                psi = np.where(near, np.nan, psi)
            else:
                psi, _ = trace_batch(self.cell, phi[todo], u)
            sub = np.where(todo)[0]
            out[sub] = psi
            todo[sub] = ~np.isfinite(psi)
        if todo.any():
            raise GeometryError(
                f"kernel sampling failed after {self.RETRIES} retries "
                f"({int(todo.sum())} states)")
        return out

    def density_ac(self, phi, psi):
        """Exact transition density for the semicircle (any phi); shallow
        closed form for the flat bottom below the shallow threshold."""
        psi = np.asarray(psi, dtype=float)
        if self.cell.family is CellFamily.SEMICIRCLE:
            flip = phi > 0.5 * math.pi
            th = math.pi - phi if flip else phi
            ps = (math.pi - psi) if flip else psi
            st = math.sin(th)
            out = np.zeros_like(psi)
            for (rlo, rhi, n, c) in semicircle_pieces(th):
                alo = 2 * n * math.asin((2 * rlo - 1) * st) + c
                ahi = 2 * n * math.asin((2 * rhi - 1) * st) + c
                m = (ps > alo) & (ps < ahi)
                out = np.where(m, out + np.cos((ps - c) / (2 * n)) / (4 * n * st), out)
            return out
        if self.cell.family is CellFamily.FLAT_BOTTOM and phi < SHALLOW_THRESHOLD:
            return shallow_kernel_density(self.cell, phi, psi)
        return None

    def row_masses(self, phi, edges):
        """Exact cell masses for the semicircle via the monotone pieces."""
        if self.cell.family is not CellFamily.SEMICIRCLE:
            return None
        edges = np.asarray(edges, dtype=float)
        ncell = len(edges) - 1
        flip = phi > 0.5 * math.pi
        th = math.pi - phi if flip else phi
        st = math.sin(th)
        row = np.zeros(ncell)
        for (rlo, rhi, n, c) in semicircle_pieces(th):
            if rhi <= rlo:
                continue
            alo = 2 * n * math.asin((2 * rlo - 1) * st) + c
            ahi = 2 * n * math.asin((2 * rhi - 1) * st) + c
            j_lo = max(int(np.searchsorted(edges, alo)) - 1, 0)
            j_hi = min(int(np.searchsorted(edges, ahi)) - 1, ncell - 1)
            es = edges[j_lo:j_hi + 2].copy()
            es[0], es[-1] = alo, ahi
            rs = 0.5 * (1.0 + np.sin((es - c) / (2 * n)) / st)
            row[j_lo:j_hi + 1] += np.diff(rs)
        total = row.sum()
        if total < 1.0 - 1e-8:
            raise GeometryError(f"row mass {total} too small at phi={phi}")
        row /= total
        return row[::-1] if flip else row

    @property
    def has_density(self):
        return self.cell.family is CellFamily.SEMICIRCLE


class MSKernel(CollisionKernel):
    """Maxwell-Smoluchowski mixture: diffuse re-emission with probability alpha,
    specular reflection (identity on the angle) otherwise."""

    def __init__(self, alpha: float, measure: SurfaceMeasure):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0,1]")
        self.alpha = alpha
        self.stationary = measure
        self.label = f"ms(alpha={alpha:g})"

    def sample_angles(self, phi, rng):
        phi = np.asarray(phi, dtype=float)
        fresh = rng.random(phi.shape) < self.alpha
        out = phi.copy()
        out[fresh] = self.stationary.sample_angles(int(fresh.sum()), rng)
        return out

    def sample_velocities(self, v, rng):
        v = np.asarray(v, dtype=float)
        fresh = rng.random(v.shape[0]) < self.alpha
        out = v.copy()
        out[fresh] = self.stationary.sample_velocities(int(fresh.sum()), rng)
        return out

    def density_ac(self, phi, psi):
        return self.alpha * self.stationary.angle_pdf(psi) * np.ones_like(np.asarray(psi, dtype=float))

    def density_pairs(self, phi, psi):
        return self.alpha * self.stationary.angle_pdf(psi)

    def diag_mass(self, phi):
        return np.full_like(np.asarray(phi, dtype=float), 1.0 - self.alpha)

    def row_masses(self, phi, edges):
        edges = np.asarray(edges, dtype=float)
        row = self.alpha * np.diff(angle_cdf(edges))
        j = min(max(int(np.searchsorted(edges, phi)) - 1, 0), len(row) - 1)
        row[j] += 1.0 - self.alpha
        return row

    @property
    def has_density(self):
        return True


class FlatTopKernel(CollisionKernel):
    """P_h = (1-h) P + h I: specular with probability h, else the base kernel."""

    def __init__(self, h: float, base: CollisionKernel):
        if not 0.0 <= h < 1.0:
            raise ValueError("h must lie in [0,1)")
        self.h = h
        self.base = base
        self.stationary = base.stationary
        self.label = f"flat_top(h={h:g})|{base.label}"

    def sample_angles(self, phi, rng):
        phi = np.asarray(phi, dtype=float)
        move = rng.random(phi.shape) >= self.h
        out = phi.copy()
        if move.any():
            out[move] = self.base.sample_angles(phi[move], rng)
        return out

    def density_ac(self, phi, psi):
        base = self.base.density_ac(phi, psi)
        return None if base is None else (1.0 - self.h) * base

    def diag_mass(self, phi):
        return self.h + (1.0 - self.h) * self.base.diag_mass(phi)

    def row_masses(self, phi, edges):
        base = self.base.row_masses(phi, edges)
        if base is None:
            return None
        row = (1.0 - self.h) * base
        j = min(max(int(np.searchsorted(edges, phi)) - 1, 0), len(row) - 1)
        row[j] += self.h
        return row

    @property
    def has_density(self):
        return self.base.has_density


class UniformAngleKernel(CollisionKernel):
    """Diffuse proposal: psi ~ U(0,pi) independent of phi (not natural)."""

    label = "uniform"

    def __init__(self, stationary: Optional[SurfaceMeasure] = None):
        self.stationary = stationary or CosineLaw()

    def sample_angles(self, phi, rng):
        return math.pi * rng.random(np.asarray(phi).shape)

    def density_ac(self, phi, psi):
        return np.full_like(np.asarray(psi, dtype=float), 1.0 / math.pi)

    def density_pairs(self, phi, psi):
        return np.full_like(np.asarray(psi, dtype=float), 1.0 / math.pi)

    @property
    def has_density(self):
        return True


class MHKernel(CollisionKernel):
    """Metropolis-Hastings kernel: propose from a diffuse Q, accept with alpha(v,u).

    The default acceptance is the standard ratio
    min{1, [w(u) q(u,v)] / [w(v) q(v,u)]} with w the target angle density,
    which makes the target stationary and detailed balance hold.
    """

    def __init__(
        self,
        proposal: CollisionKernel,
        target: SurfaceMeasure,
        acceptance: Optional[Callable] = None,
    ):
        if not proposal.has_density:
            raise ValueError("MH construction requires a proposal with a density")
        self.proposal = proposal
        self.stationary = target
        if acceptance is None:
            def acceptance(phi, psi):
                w = target.angle_pdf
                num = w(psi) * proposal.density_pairs(psi, phi)
                den = w(phi) * proposal.density_pairs(phi, psi)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(den > 0, num / np.maximum(den, 1e-300), 1.0)
                return np.minimum(1.0, ratio)
        self.acceptance = acceptance
        self.label = f"mh({proposal.label})"

    def sample_angles(self, phi, rng):
        phi = np.asarray(phi, dtype=float)
        prop = self.proposal.sample_angles(phi, rng)
        acc = rng.random(phi.shape) < self.acceptance(phi, prop)
        return np.where(acc, prop, phi)

    def density_ac(self, phi, psi):
        psi = np.asarray(psi, dtype=float)
        q = self.proposal.density_ac(phi, psi)
        return q * self.acceptance(np.full_like(psi, phi), psi)

    @property
    def has_density(self):
        return True


# Factory helpers matching the experiment-config vocabulary ------------------


def microstructure_kernel(cell: CellGeometry, stationary=None) -> CollisionKernel:
    """Kernel induced by a cell geometry; flat tops become (1-h) P + h I."""
    if cell.family is CellFamily.FLAT_TOP:
        base = MicrostructureKernel(CellGeometry(CellFamily.SEMICIRCLE), stationary)
        return FlatTopKernel(cell.h, base)
    return MicrostructureKernel(cell, stationary)


def ms_kernel(alpha: float, nu: SurfaceMeasure) -> MSKernel:
    return MSKernel(alpha, nu)


def mh_kernel(proposal, target, acceptance=None) -> MHKernel:
    return MHKernel(proposal, target, acceptance)


def flat_top_kernel(h: float, base: CollisionKernel) -> FlatTopKernel:
    return FlatTopKernel(h, base)


# ---------------------------------------------------------------------------
# Statistical verifiers


@dataclass(frozen=True)
class StatTestReport:
    statistic: float
    pvalue: float
    n_samples: int
    label: str = ""

    @property
    def passed(self):
        return self.pvalue > 0.01


def check_stationarity(kernel: CollisionKernel, nu: SurfaceMeasure, n_samples: int, stream) -> StatTestReport:
    """One kernel step from nu vs fresh nu draws, two-sample KS on angles."""
    if n_samples < 10 ** 4:
        raise ValueError("n_samples must be >= 1e4")
    x = nu.sample_angles(n_samples, stream)
    y = kernel.sample_angles(x, stream)
    z = nu.sample_angles(n_samples, stream)
    res = stats.ks_2samp(y, z, method="asymp")
    return StatTestReport(float(res.statistic), float(res.pvalue), n_samples, kernel.label)


def check_detailed_balance(kernel: CollisionKernel, nu: SurfaceMeasure, grid) -> float:
    """Max violation |w(phi) p(phi,psi) - w(psi) p(psi,phi)| on grid pairs."""
    if not kernel.has_density:
        raise ValueError("detailed-balance check requires a kernel density")
    grid = np.asarray(grid, dtype=float)
    w = nu.angle_pdf(grid)
    P = np.array([kernel.density_ac(float(phi), grid) for phi in grid])
    F = w[:, None] * P
    return float(np.abs(F - F.T).max())


def _offdiag_masses(kernel, nodes, edges, n_samples, stream):
    rows = []
    for phi in nodes:
        row = kernel.row_masses(float(phi), edges)
        if row is None:
            psi = kernel.sample_angles(np.full(n_samples, float(phi)), stream)
            row = np.histogram(psi, bins=edges)[0] / n_samples
            # subtract the atom at phi (diagonal) estimated from exact returns
            stay = np.mean(psi == float(phi))
            j = min(max(int(np.searchsorted(edges, phi)) - 1, 0), len(row) - 1)
            row = row.copy()
            row[j] -= stay
        else:
            row = row - 0.0
            j = min(max(int(np.searchsorted(edges, phi)) - 1, 0), len(row) - 1)
            row[j] -= float(kernel.diag_mass(np.asarray(phi)))
        rows.append(row)
    return np.array(rows)


def dominates_off_diagonal(k1, k2, nu, grid, tol=1e-3, n_samples=200_000, stream=None) -> bool:
    """True iff P1(v, A \\ {v}) >= P2(v, A \\ {v}) - tol for grid cells A, nodes v.

    Off-diagonal domination implies D1 <= D2 for the induced diffusivities.
    """
    nodes = np.asarray(grid, dtype=float)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    edges = np.concatenate([[0.0], mids, [math.pi]])
    if stream is None:
        stream = np.random.default_rng(0)
    m1 = _offdiag_masses(k1, nodes, edges, n_samples, stream)
    m2 = _offdiag_masses(k2, nodes, edges, n_samples, stream)
    return bool(np.all(m1 >= m2 - tol))
