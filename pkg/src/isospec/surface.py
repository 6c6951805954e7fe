"""Discrete closed surfaces (flat torus grids, triangle meshes) and nodal fields.

Two backends are supported: a periodic structured grid on a flat torus,
whose spectrum has a closed form useful for validation, and general
closed triangle meshes read from OFF files.  Both are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import expressions
from .errors import (
    GridTooSmallError,
    MeshParseError,
    MeshTopologyError,
    SurfaceMismatchError,
)

logger = logging.getLogger(__name__)

MIN_GRID_DIM = 4


class SurfaceKind(Enum):
    TORUS_GRID = "torus_grid"
    TRIANGLE_MESH = "triangle_mesh"


class PerturbationSide(Enum):
    """Which conformal family is being expanded.

    INVERSE_METRIC scales the metric on 1-forms by (1 + t f1 + t^2 f2);
    METRIC scales the metric itself by (1 + t f1).
    """

    INVERSE_METRIC = "inverse_metric"
    METRIC = "metric"


@dataclass(frozen=True)
class DiscreteSurface:
    """A closed discrete surface.

    Attributes
    ----------
    kind : SurfaceKind
        Backend discriminator.
    node_count : int
        Number of sample points (grid nodes or mesh vertices).
    nx, ny : int | None
        Grid dimensions (torus only).  Node ``i`` sits at grid position
        ``(i // ny, i % ny)`` -- row-major enumeration, fixed so operator
        matrices are bit-reproducible.
    lx, ly : float | None
        Torus periods (torus only).
    vertices : np.ndarray | None
        ``(node_count, 3)`` vertex coordinates (mesh only).
    faces : np.ndarray | None
        ``(F, 3)`` triangle vertex indices, consistently oriented (mesh only).
    euler_characteristic : int | None
        ``V - E + F`` (mesh only).
    genus : int | None
        ``(2 - euler_characteristic) / 2`` (mesh only).
    """

    kind: SurfaceKind
    node_count: int
    nx: int | None = None
    ny: int | None = None
    lx: float | None = None
    ly: float | None = None
    vertices: np.ndarray | None = field(default=None, repr=False)
    faces: np.ndarray | None = field(default=None, repr=False)
    euler_characteristic: int | None = None
    genus: int | None = None

    def validate(self):
        """Re-run the construction invariants; raises on violation."""
        if self.kind is SurfaceKind.TORUS_GRID:
            if self.nx < MIN_GRID_DIM or self.ny < MIN_GRID_DIM:
                raise GridTooSmallError(
                    f"torus grid must be at least {MIN_GRID_DIM}x{MIN_GRID_DIM}, "
                    f"got {self.nx}x{self.ny}"
                )
            if not (self.lx > 0 and self.ly > 0):
                raise GridTooSmallError("torus periods must be positive")
            if self.node_count != self.nx * self.ny:
                raise GridTooSmallError("node_count does not match grid dimensions")
        else:
            _validate_mesh_topology(self.vertices, self.faces)

    @property
    def cell_area(self):
        """Uniform cell area of the torus grid."""
        return (self.lx * self.ly) / (self.nx * self.ny)

    def node_coordinates(self):
        """Coordinates usable in field expressions, keyed by name.

        Torus nodes expose ``x`` and ``y`` (z does not exist on the
        2-coordinate chart); mesh vertices expose ``x``, ``y``, ``z``.
        """
        if self.kind is SurfaceKind.TORUS_GRID:
            hx = self.lx / self.nx
            hy = self.ly / self.ny
            ix, iy = np.divmod(np.arange(self.node_count), self.ny)
            return {"x": ix * hx, "y": iy * hy}
        v = self.vertices
        return {"x": v[:, 0], "y": v[:, 1], "z": v[:, 2]}


@dataclass(frozen=True)
class ScalarField:
    """A real-valued function sampled at the nodes of a surface."""

    surface: DiscreteSurface
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.shape != (self.surface.node_count,):
            raise ValueError(
                f"field has {vals.shape} values for {self.surface.node_count} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must all be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ConformalPerturbation:
    """Coefficients of a conformal perturbation, truncated at second order.

    ``side`` selects whether (1 + t f1 + t^2 f2) multiplies the inverse
    metric or (1 + t f1) multiplies the metric.  The metric side is first
    order only: its reciprocal expansion fixes the second-order data, so a
    nonzero ``f2`` is rejected there.
    """

    side: PerturbationSide
    f1: ScalarField
    f2: ScalarField | None = None

    def __post_init__(self):
        if self.f2 is not None:
            if self.f2.surface is not self.f1.surface:
                raise SurfaceMismatchError("f1 and f2 live on different surfaces")
            if self.side is PerturbationSide.METRIC and np.any(self.f2.values != 0.0):
                raise ValueError(
                    "metric-side perturbations are first order only; f2 must be zero"
                )

    @property
    def surface(self):
        return self.f1.surface

    def f2_values(self):
        if self.f2 is None:
            return np.zeros(self.surface.node_count)
        return self.f2.values


def make_torus(nx, ny, lx, ly):
    """Build a flat-torus grid surface.

    Parameters
    ----------
    nx, ny : int
        Grid dimensions, at least 4 each.
    lx, ly : float
        Torus periods, strictly positive.
    """
    nx, ny = int(nx), int(ny)
    if nx < MIN_GRID_DIM or ny < MIN_GRID_DIM:
        raise GridTooSmallError(
            f"torus grid must be at least {MIN_GRID_DIM}x{MIN_GRID_DIM}, got {nx}x{ny}"
        )
    if not (lx > 0 and ly > 0):
        raise GridTooSmallError(f"torus periods must be positive, got {lx}, {ly}")
    surf = DiscreteSurface(
        kind=SurfaceKind.TORUS_GRID,
        node_count=nx * ny,
        nx=nx,
        ny=ny,
        lx=float(lx),
        ly=float(ly),
    )
    surf.validate()
    return surf


def load_mesh(path):
    """Load a closed triangle mesh from an ASCII OFF file.

    Validates closedness (every edge shared by exactly two faces),
    consistent orientation, and connectedness; rejects anything else.
    """
    with open(path, "r") as fh:
        text = fh.read()
    vertices, faces = _parse_off(text, str(path))
    return mesh_from_arrays(vertices, faces)


def mesh_from_arrays(vertices, faces):
    """Build a validated TriangleMesh surface from raw arrays."""
    vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
    faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
    edge_count = _validate_mesh_topology(vertices, faces)
    chi = vertices.shape[0] - edge_count + faces.shape[0]
    if chi % 2 != 0:
        raise MeshTopologyError(f"Euler characteristic {chi} is odd")
    vertices.flags.writeable = False
    faces.flags.writeable = False
    surf = DiscreteSurface(
        kind=SurfaceKind.TRIANGLE_MESH,
        node_count=vertices.shape[0],
        vertices=vertices,
        faces=faces,
        euler_characteristic=chi,
        genus=(2 - chi) // 2,
    )
    logger.info(
        "loaded mesh: %d vertices, %d faces, genus %d",
        surf.node_count,
        faces.shape[0],
        surf.genus,
    )
    return surf


def field_from_expression(surface, text):
    """Sample an expression of the node coordinates at every node.

    The expression language supports ``x``, ``y`` (``z`` on meshes),
    ``pi``, arithmetic, ``sin``, ``cos`` and ``pow``.
    """
    values = expressions.evaluate(text, surface.node_coordinates())
    return ScalarField(surface, values)


def field_from_values(surface, values):
    """Wrap raw nodal values as a ScalarField."""
    return ScalarField(surface, np.asarray(values, dtype=float))


def constant_field(surface, value):
    return ScalarField(surface, np.full(surface.node_count, float(value)))


def fourier_fields(surface, count):
    """The first ``count`` real Fourier fields on a torus grid.

    Ordered by frequency magnitude |k|^2 and then lexicographically in
    (m, n): the constant, then cos/sin of 2*pi*(m x / lx + n y / ly) for
    (m, n) = (0,1), (1,0), (1,-1), (1,1), (0,2), ...  Deterministic.
    """
    if surface.kind is not SurfaceKind.TORUS_GRID:
        raise SurfaceMismatchError("fourier_fields requires a torus grid surface")
    coords = surface.node_coordinates()
    x, y = coords["x"], coords["y"]
    fields = [constant_field(surface, 1.0)]
    if count <= 1:
        return fields[:count]
    # enumerate one representative (m, n) per +/- pair, lowest |k|^2 first
    kmax = int(np.ceil(np.sqrt(count))) + 1
    reps = []
    for m in range(-kmax, kmax + 1):
        for n in range(-kmax, kmax + 1):
            if m > 0 or (m == 0 and n > 0):
                reps.append((m * m + n * n, m, n))
    reps.sort()
    for _, m, n in reps:
        phase = 2.0 * np.pi * (m * x / surface.lx + n * y / surface.ly)
        fields.append(ScalarField(surface, np.cos(phase)))
        if len(fields) >= count:
            break
        fields.append(ScalarField(surface, np.sin(phase)))
        if len(fields) >= count:
            break
    return fields[:count]


def _parse_off(text, name):
    lines = []
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append(stripped)
    if not lines:
        raise MeshParseError(f"{name}: empty file")
    if lines[0] != "OFF":
        raise MeshParseError(f"{name}: missing OFF header, got {lines[0]!r}")
    try:
        counts = lines[1].split()
        nv, nf = int(counts[0]), int(counts[1])
    except (IndexError, ValueError) as exc:
        raise MeshParseError(f"{name}: bad count line {lines[1]!r}") from exc
    if nv <= 0 or nf <= 0:
        raise MeshParseError(f"{name}: nonpositive vertex or face count")
    if len(lines) < 2 + nv + nf:
        raise MeshParseError(
            f"{name}: expected {nv} vertex and {nf} face lines, file is short"
        )
    vertices = np.empty((nv, 3))
    for i in range(nv):
        parts = lines[2 + i].split()
        if len(parts) < 3:
            raise MeshParseError(f"{name}: vertex line {i} has {len(parts)} fields")
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError as exc:
            raise MeshParseError(f"{name}: bad vertex line {i}") from exc
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        parts = lines[2 + nv + i].split()
        try:
            arity = int(parts[0])
        except (IndexError, ValueError) as exc:
            raise MeshParseError(f"{name}: bad face line {i}") from exc
        if arity != 3 or len(parts) < 4:
            raise MeshParseError(f"{name}: face {i} is not a triangle")
        try:
            faces[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
        except ValueError as exc:
            raise MeshParseError(f"{name}: bad face line {i}") from exc
    if not np.all(np.isfinite(vertices)):
        raise MeshParseError(f"{name}: non-finite vertex coordinates")
    return vertices, faces


def _validate_mesh_topology(vertices, faces):
    """Check closed/oriented/connected manifold structure; returns edge count."""
    nv = vertices.shape[0]
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshTopologyError("faces must be an (F, 3) index array")
    if faces.min() < 0 or faces.max() >= nv:
        raise MeshTopologyError("face index out of range")
    if np.any(
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 0] == faces[:, 2])
    ):
        raise MeshTopologyError("face with a repeated vertex")

    directed = {}
    for f in range(faces.shape[0]):
        a, b, c = faces[f]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v))
            if key in directed:
                raise MeshTopologyError(
                    f"directed edge {key} appears twice: inconsistent orientation "
                    "or non-manifold edge"
                )
            directed[key] = f

    undirected = set()
    for (u, v) in directed:
        if u < v:
            undirected.add((u, v))
        else:
            undirected.add((v, u))
    for (u, v) in undirected:
        has_fwd = (u, v) in directed
        has_bwd = (v, u) in directed
        if not (has_fwd and has_bwd):
            raise MeshTopologyError(f"boundary edge ({u}, {v}): surface is not closed")

    referenced = np.zeros(nv, dtype=bool)
    referenced[faces.ravel()] = True
    if not referenced.all():
        orphan = int(np.flatnonzero(~referenced)[0])
        raise MeshTopologyError(f"vertex {orphan} belongs to no face")

    # connectedness via union of face edges
    adjacency = [[] for _ in range(nv)]
    for (u, v) in undirected:
        adjacency[u].append(v)
        adjacency[v].append(u)
    seen = np.zeros(nv, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    if not seen.all():
        raise MeshTopologyError("mesh is disconnected")
    return len(undirected)
