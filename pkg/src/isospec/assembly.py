"""Stiffness/mass assembly and conformal perturbation operators.

The base pair (K, M0) realizes the Laplacian of the unperturbed metric:
Delta0 = M0^-1 K, symmetric with respect to <u, v> = u^T M0 v.  A conformal
perturbation enters twice: as a multiplier in front of Delta0 (the operator
series H1, H2) and as a reweighting of the inner product (the diagonal
series G1, G2).  Both truncate at second order in t.

In two dimensions the stiffness matrix is conformally invariant, so the
exact perturbed problem at finite t only rescales the mass diagonal; this
gives a cheap ground-truth family for validating perturbative predictions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sparse

from .errors import (
    DegenerateTriangleError,
    NumericalBreakdownError,
    PositivityError,
    SurfaceMismatchError,
)
from .surface import (
    ConformalPerturbation,
    DiscreteSurface,
    PerturbationSide,
    SurfaceKind,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OperatorPair:
    """Stiffness operator K and diagonal mass M0 on a common node set.

    Attributes
    ----------
    surface : DiscreteSurface | None
        The surface the pair was assembled on; None for synthetic pairs.
    stiffness : scipy.sparse.csr_matrix
        Symmetric positive-semidefinite K; constants in its kernel for
        assembled pairs.
    mass : np.ndarray
        Strictly positive diagonal of M0 (lumped areas).
    """

    surface: DiscreteSurface | None
    stiffness: sparse.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)

    @property
    def node_count(self):
        return self.mass.shape[0]

    @property
    def total_mass(self):
        return float(np.sum(self.mass))

    def apply_laplacian(self, v):
        """Apply Delta0 = M0^-1 K to a vector or a matrix of columns."""
        out = self.stiffness @ v
        if out.ndim == 1:
            return out / self.mass
        return out / self.mass[:, None]

    def validate(self, check_area=True):
        """Check symmetry, kernel, and mass positivity invariants."""
        K = self.stiffness
        if K.shape != (self.node_count, self.node_count):
            raise NumericalBreakdownError("stiffness shape does not match mass")
        scale = np.abs(K).max()
        asym = np.abs(K - K.T).max()
        if asym > 1e-12 * max(scale, 1.0):
            raise NumericalBreakdownError(f"stiffness asymmetry {asym:.3e}")
        kernel_residual = np.abs(K @ np.ones(self.node_count)).max()
        if kernel_residual > 1e-10 * max(scale, 1.0):
            raise NumericalBreakdownError(
                f"stiffness does not annihilate constants: {kernel_residual:.3e}"
            )
        if np.any(self.mass <= 0.0):
            raise NumericalBreakdownError("mass diagonal has nonpositive entries")
        if check_area and self.surface is not None:
            area = analytic_area(self.surface)
            if abs(self.total_mass - area) > 1e-10 * area:
                raise NumericalBreakdownError(
                    f"total mass {self.total_mass!r} != surface area {area!r}"
                )


@dataclass(frozen=True)
class PerturbationOperators:
    """First and second order operator/inner-product perturbation data.

    H1 and H2 act as a diagonal multiplier composed with Delta0; they are
    stored by their multiplier fields.  G1 and G2 are the diagonal
    corrections of the inner product: M_t = M0 (I + t G1 + t^2 G2 + O(t^3)).

    None of H1, H2 is symmetric with respect to M0 in general; the family
    H(t) is self-adjoint only with respect to the moving inner product M_t.
    """

    pair: OperatorPair
    h1_multiplier: np.ndarray = field(repr=False)
    h2_multiplier: np.ndarray = field(repr=False)
    g1: np.ndarray = field(repr=False)
    g2: np.ndarray = field(repr=False)

    def apply_h1(self, v):
        """H1 v = h1_multiplier * (Delta0 v); works on column stacks."""
        out = self.pair.apply_laplacian(v)
        if out.ndim == 1:
            return self.h1_multiplier * out
        return self.h1_multiplier[:, None] * out

    def apply_h2(self, v):
        out = self.pair.apply_laplacian(v)
        if out.ndim == 1:
            return self.h2_multiplier * out
        return self.h2_multiplier[:, None] * out

    def apply_h1_adjoint(self, v):
        """M0-adjoint of H1: Delta0 (h1_multiplier * v)."""
        if v.ndim == 1:
            return self.pair.apply_laplacian(self.h1_multiplier * v)
        return self.pair.apply_laplacian(self.h1_multiplier[:, None] * v)


@dataclass(frozen=True)
class GenericPerturbationOperators:
    """Dense synthetic H1/H2 with optional diagonal G terms.

    Same protocol as PerturbationOperators; used for perturbation theory
    outside the conformal family (e.g. textbook operator perturbations).
    """

    pair: OperatorPair
    h1: np.ndarray = field(repr=False)
    h2: np.ndarray | None = field(default=None, repr=False)
    g1: np.ndarray = field(default=None, repr=False)
    g2: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.pair.node_count
        if self.g1 is None:
            object.__setattr__(self, "g1", np.zeros(n))
        if self.g2 is None:
            object.__setattr__(self, "g2", np.zeros(n))

    def apply_h1(self, v):
        return self.h1 @ v

    def apply_h2(self, v):
        if self.h2 is None:
            return np.zeros_like(v)
        return self.h2 @ v

    def apply_h1_adjoint(self, v):
        m = self.pair.mass
        if v.ndim == 1:
            return (self.h1.T @ (m * v)) / m
        return (self.h1.T @ (m[:, None] * v)) / m[:, None]


def analytic_area(surface):
    """Total area of the base metric."""
    if surface.kind is SurfaceKind.TORUS_GRID:
        return surface.lx * surface.ly
    v = surface.vertices
    f = surface.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def assemble_base(surface):
    """Assemble (K, M0) for the unperturbed metric.

    Torus grids get the 5-point periodic finite-difference stiffness scaled
    by the cell area with a uniform lumped mass; triangle meshes get the
    cotangent stiffness with barycentric lumped mass.
    """
    if surface.kind is SurfaceKind.TORUS_GRID:
        pair = _assemble_torus(surface)
    else:
        pair = _assemble_mesh(surface)
    pair.validate()
    return pair


def _assemble_torus(surface):
    nx, ny = surface.nx, surface.ny
    hx = surface.lx / nx
    hy = surface.ly / ny
    cell = surface.cell_area

    def second_difference(n, h):
        main = np.full(n, 2.0 / h**2)
        off = np.full(n, -1.0 / h**2)
        mat = sparse.diags(
            [off, main, off], offsets=[-1, 0, 1], shape=(n, n), format="lil"
        )
        # periodic wraparound
        mat[0, n - 1] += -1.0 / h**2
        mat[n - 1, 0] += -1.0 / h**2
        return sparse.csr_matrix(mat)

    dx = second_difference(nx, hx)
    dy = second_difference(ny, hy)
    lap = sparse.kron(dx, sparse.identity(ny), format="csr") + sparse.kron(
        sparse.identity(nx), dy, format="csr"
    )
    stiffness = sparse.csr_matrix(cell * lap)
    mass = np.full(surface.node_count, cell)
    return OperatorPair(surface=surface, stiffness=stiffness, mass=mass)


def _assemble_mesh(surface):
    v = surface.vertices
    f = surface.faces
    # edge vectors opposite each corner
    e0 = v[f[:, 2]] - v[f[:, 1]]
    e1 = v[f[:, 0]] - v[f[:, 2]]
    e2 = v[f[:, 1]] - v[f[:, 0]]
    double_area = np.linalg.norm(np.cross(e1, e2), axis=1)
    areas = 0.5 * double_area
    mean_area = areas.mean()
    bad = np.flatnonzero(areas < 1e-14 * mean_area)
    if bad.size:
        raise DegenerateTriangleError(
            f"triangle {int(bad[0])} has area {areas[bad[0]]:.3e} "
            f"< 1e-14 x mean area {mean_area:.3e}"
        )
    # cot(angle at corner i) = <e_j, e_k> / |e_j x e_k|, against opposite edge
    cot0 = np.einsum("ij,ij->i", -e1, e2) / double_area
    cot1 = np.einsum("ij,ij->i", -e2, e0) / double_area
    cot2 = np.einsum("ij,ij->i", -e0, e1) / double_area

    rows, cols, vals = [], [], []
    for cot, (a, b) in ((cot0, (1, 2)), (cot1, (2, 0)), (cot2, (0, 1))):
        w = 0.5 * cot
        ia, ib = f[:, a], f[:, b]
        rows.extend((ia, ib, ia, ib))
        cols.extend((ib, ia, ia, ib))
        vals.extend((-w, -w, w, w))
    n = surface.node_count
    stiffness = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    mass = np.zeros(n)
    np.add.at(mass, f[:, 0], areas / 3.0)
    np.add.at(mass, f[:, 1], areas / 3.0)
    np.add.at(mass, f[:, 2], areas / 3.0)
    return OperatorPair(surface=surface, stiffness=stiffness, mass=mass)


def conformal_operators(pair, pert):
    """Expand a conformal perturbation into (H1, H2, G1, G2).

    Inverse-metric side, factor c(t) = 1 + t f1 + t^2 f2 on the inverse
    metric: H1 = F1 Delta0, H2 = F2 Delta0.  The 2D volume form scales as
    1/c(t), so G1 = -F1 and G2 = F1^2 - F2.

    Metric side, factor 1 + t f1 on the metric: the reciprocal expansion
    gives H1 = -F1 Delta0, H2 = F1^2 Delta0, G1 = F1, G2 = 0.
    """
    if pair.surface is None or pert.surface is not pair.surface:
        raise SurfaceMismatchError(
            "perturbation and operator pair live on different surfaces"
        )
    f1 = pert.f1.values
    f2 = pert.f2_values()
    if pert.side is PerturbationSide.INVERSE_METRIC:
        return PerturbationOperators(
            pair=pair,
            h1_multiplier=f1,
            h2_multiplier=f2,
            g1=-f1,
            g2=f1 * f1 - f2,
        )
    return PerturbationOperators(
        pair=pair,
        h1_multiplier=-f1,
        h2_multiplier=f1 * f1,
        g1=f1.copy(),
        g2=np.zeros_like(f1),
    )


def conformal_factor(pert, t):
    """Inverse-metric conformal factor c(t) at every node; checks positivity."""
    f1 = pert.f1.values
    if pert.side is PerturbationSide.INVERSE_METRIC:
        c = 1.0 + t * f1 + t * t * pert.f2_values()
    else:
        denom = 1.0 + t * f1
        if np.any(denom <= 0.0):
            node = int(np.flatnonzero(denom <= 0.0)[0])
            raise PositivityError(
                f"metric factor 1 + t*f1 nonpositive at node {node} for t={t!r}",
                node_index=node,
            )
        c = 1.0 / denom
    if np.any(c <= 0.0):
        node = int(np.flatnonzero(c <= 0.0)[0])
        raise PositivityError(
            f"conformal factor nonpositive at node {node} for t={t!r}",
            node_index=node,
        )
    return c


def exact_perturbed_pair(pair, pert, t):
    """Exact operator family at finite t.

    K is conformally invariant in 2D, so only the mass diagonal changes:
    M_t = M0 diag(1/c(t)) with c the inverse-metric conformal factor.
    Returns the input pair itself at t = 0.
    """
    if pair.surface is None or pert.surface is not pair.surface:
        raise SurfaceMismatchError(
            "perturbation and operator pair live on different surfaces"
        )
    if t == 0.0:
        return pair
    c = conformal_factor(pert, t)
    return OperatorPair(
        surface=pair.surface, stiffness=pair.stiffness, mass=pair.mass / c
    )


def generic_operators(pair, h1, h2=None, g1=None, g2=None):
    """Wrap dense synthetic operators in the perturbation protocol."""
    h1 = np.asarray(h1, dtype=float)
    if h1.shape != (pair.node_count, pair.node_count):
        raise ValueError("h1 shape does not match the operator pair")
    if h2 is not None:
        h2 = np.asarray(h2, dtype=float)
    return GenericPerturbationOperators(pair=pair, h1=h1, h2=h2, g1=g1, g2=g2)


def export_matrix_market(pair, directory, stem):
    """Write K and M0 in Matrix Market format; returns the two paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    k_path = directory / f"{stem}_stiffness.mtx"
    m_path = directory / f"{stem}_mass.mtx"
    scipy.io.mmwrite(str(k_path), pair.stiffness.tocoo())
    scipy.io.mmwrite(str(m_path), sparse.diags(pair.mass).tocoo())
    logger.info("exported operators to %s and %s", k_path, m_path)
    return k_path, m_path
