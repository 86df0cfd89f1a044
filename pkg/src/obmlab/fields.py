"""Grids, field containers, and discrete differential operators.

Geometry conventions
--------------------
Three geometries share one code path:

* ``STRIP2``: a vertical slice, periodic in x1 with period 2, walls at
  x3 = 0 and x3 = 1.  Arrays have shape (n3, n1).  Fields are read as
  x2-independent, so vector calculus keeps all three components with
  d/dx2 = 0.
* ``STRIP3``: the full layer, periodic in x1 and x2 (period 2 each), walls
  at x3 = 0, 1.  Arrays have shape (n3, n2, n1).
* ``TORUS2``: the horizontal torus (periodic square of side 2) carrying
  the depth-independent limit fields.  Arrays have shape (n2, n1).

Horizontal derivatives are Fourier-spectral (wavenumbers pi * m for integer
mode m, since the period is 2); the vertical direction uses second-order
centered differences on a vertex-centered grid that includes both walls,
with one-sided second-order closures at the walls.  Nonlinear products of
spectral fields should pass through :func:`dealias_arr` (2/3 rule).

Because horizontal and vertical operators act along different array axes,
mixed second derivatives commute exactly; identities such as div(curl v) = 0
hold to rounding for this discretization.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Geometry",
    "Grid",
    "FieldError",
    "SnapshotFormatError",
    "ScalarField",
    "VectorField",
    "grad",
    "div",
    "curl",
    "laplacian",
    "leray_project",
    "lorentz_force",
    "mean",
    "mean_laplacian_flux",
    "dealias_arr",
    "ddx1_arr",
    "ddx2_arr",
    "ddx3_arr",
    "d2dx3_arr",
    "lap_h_arr",
    "mean_arr",
    "hmean_arr",
    "wall_flux_arr",
    "leray_arr",
    "cross3",
    "write_snapshot",
    "read_snapshot",
]


class FieldError(ValueError):
    """Raised for malformed or non-finite field data."""


class SnapshotFormatError(IOError):
    """Raised when a snapshot file cannot be parsed."""


class Geometry(enum.Enum):
    STRIP2 = 0
    STRIP3 = 1
    TORUS2 = 2


def _is_pow2(n: int) -> bool:
    return n >= 4 and (n & (n - 1)) == 0


class Grid:
    """Structured grid for one of the three geometries.

    Horizontal resolutions n1 (and n2 where present) must be powers of two;
    n3 counts vertical vertices including both walls (n3 >= 5 so the
    one-sided closures have room).
    """

    def __init__(self, geometry: Geometry, n1: int, n2: int = 1, n3: int = 1):
        self.geometry = geometry
        if not _is_pow2(n1):
            raise FieldError(f"n1 must be a power of two >= 4, got {n1}")
        self.n1 = int(n1)
        if geometry in (Geometry.STRIP3, Geometry.TORUS2):
            if not _is_pow2(n2):
                raise FieldError(f"n2 must be a power of two >= 4, got {n2}")
            self.n2 = int(n2)
        else:
            self.n2 = 1
        if geometry in (Geometry.STRIP2, Geometry.STRIP3):
            if n3 < 5:
                raise FieldError(f"n3 must be >= 5 for wall closures, got {n3}")
            self.n3 = int(n3)
        else:
            self.n3 = 1

        if geometry is Geometry.STRIP2:
            self.shape = (self.n3, self.n1)
            self.hshape = (self.n1,)
            self.volume = 2.0
        elif geometry is Geometry.STRIP3:
            self.shape = (self.n3, self.n2, self.n1)
            self.hshape = (self.n2, self.n1)
            self.volume = 4.0
        else:
            self.shape = (self.n2, self.n1)
            self.hshape = (self.n2, self.n1)
            self.volume = 4.0

        self.has_walls = geometry is not Geometry.TORUS2
        self.has_x2 = geometry in (Geometry.STRIP3, Geometry.TORUS2)

        self.dx1 = 2.0 / self.n1
        self.dx2 = 2.0 / self.n2 if self.has_x2 else None
        self.dx3 = 1.0 / (self.n3 - 1) if self.has_walls else None

        self.x1 = -1.0 + self.dx1 * np.arange(self.n1)
        self.x2 = -1.0 + self.dx2 * np.arange(self.n2) if self.has_x2 else None
        self.x3 = np.linspace(0.0, 1.0, self.n3) if self.has_walls else None

        # trapezoidal quadrature weights over (0, 1), sum exactly 1
        if self.has_walls:
            w = np.full(self.n3, self.dx3)
            w[0] = w[-1] = 0.5 * self.dx3
            self.w3 = w
        else:
            self.w3 = None

        # spectral machinery: wavenumbers pi*m on a period-2 direction
        n1r = self.n1 // 2 + 1
        self.k1r = np.pi * np.arange(n1r).astype(float)
        self.k1r_d = self.k1r.copy()
        self.k1r_d[-1] = 0.0  # odd derivative of the Nyquist mode is dropped
        m1 = np.arange(n1r)
        keep1 = m1 <= self.n1 // 3
        if self.has_x2:
            m2 = np.fft.fftfreq(self.n2, d=1.0 / self.n2)
            self.k2 = np.pi * m2
            self.k2_d = self.k2.copy()
            self.k2_d[self.n2 // 2] = 0.0
            keep2 = np.abs(m2) <= self.n2 // 3
            self.ksq = self.k2[:, None] ** 2 + self.k1r[None, :] ** 2
            self.dealias_mask = keep2[:, None] & keep1[None, :]
        else:
            self.k2 = None
            self.k2_d = None
            self.ksq = self.k1r ** 2
            self.dealias_mask = keep1

    # -- identity ---------------------------------------------------------
    def _key(self):
        return (self.geometry, self.n1, self.n2, self.n3)

    def __eq__(self, other):
        return isinstance(other, Grid) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"Grid({self.geometry.name}, n1={self.n1}, n2={self.n2}, n3={self.n3})"

    def coords(self) -> dict:
        """Coordinate arrays broadcastable to ``shape`` (keys x1, x2, x3)."""
        if self.geometry is Geometry.STRIP2:
            return {"x1": self.x1[None, :], "x3": self.x3[:, None]}
        if self.geometry is Geometry.STRIP3:
            return {
                "x1": self.x1[None, None, :],
                "x2": self.x2[None, :, None],
                "x3": self.x3[:, None, None],
            }
        return {"x1": self.x1[None, :], "x2": self.x2[:, None]}


# -- raw array helpers (axis conventions: x3 = axis 0 on strips, x2 = -2, x1 = -1)


def _check_finite(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        raise FieldError(f"non-finite values in {what}")


def hfft(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Real-to-complex horizontal transform (rfft on x1, full fft on x2)."""
    if grid.has_x2:
        return np.fft.rfftn(data, axes=(-2, -1))
    return np.fft.rfft(data, axis=-1)


def hifft(spec: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.has_x2:
        return np.fft.irfftn(spec, s=(grid.n2, grid.n1), axes=(-2, -1))
    return np.fft.irfft(spec, n=grid.n1, axis=-1)


def ddx1_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral d/dx1 along the last axis."""
    spec = np.fft.rfft(data, axis=-1)
    spec *= 1j * grid.k1r_d
    return np.fft.irfft(spec, n=grid.n1, axis=-1)


def ddx2_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral d/dx2; identically zero on STRIP2 (x2-independent fields)."""
    if not grid.has_x2:
        return np.zeros_like(data)
    spec = np.fft.fft(data, axis=-2)
    shape = [1] * data.ndim
    shape[-2] = grid.n2
    spec *= (1j * grid.k2_d).reshape(shape)
    return np.real(np.fft.ifft(spec, axis=-2))


def lap_h_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral horizontal Laplacian (all periodic directions)."""
    spec = hfft(data, grid)
    spec *= -grid.ksq
    return hifft(spec, grid)


def ddx3_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order d/dx3 along axis 0; one-sided closures at the walls."""
    if not grid.has_walls:
        return np.zeros_like(data)
    h = grid.dx3
    out = np.empty_like(data)
    out[1:-1] = (data[2:] - data[:-2]) / (2.0 * h)
    out[0] = (-3.0 * data[0] + 4.0 * data[1] - data[2]) / (2.0 * h)
    out[-1] = (3.0 * data[-1] - 4.0 * data[-2] + data[-3]) / (2.0 * h)
    return out


def d2dx3_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order d2/dx3^2 along axis 0; one-sided closures at the walls."""
    if not grid.has_walls:
        return np.zeros_like(data)
    h2 = grid.dx3 ** 2
    out = np.empty_like(data)
    out[1:-1] = (data[2:] - 2.0 * data[1:-1] + data[:-2]) / h2
    out[0] = (2.0 * data[0] - 5.0 * data[1] + 4.0 * data[2] - data[3]) / h2
    out[-1] = (2.0 * data[-1] - 5.0 * data[-2] + 4.0 * data[-3] - data[-4]) / h2
    return out


def dealias_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """2/3-rule truncation of the horizontal spectrum."""
    spec = hfft(data, grid)
    spec *= grid.dealias_mask
    return hifft(spec, grid)


def mean_arr(data: np.ndarray, grid: Grid) -> float:
    """Domain average: exact horizontally, trapezoidal vertically."""
    if grid.has_walls:
        column = data.reshape(grid.n3, -1).mean(axis=1)
        return float(grid.w3 @ column)
    return float(data.mean())


def hmean_arr(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Horizontal average; on strips returns a profile over x3."""
    if grid.has_walls:
        return data.reshape(grid.n3, -1).mean(axis=1)
    return np.asarray(data.mean())


def wall_flux_arr(data: np.ndarray, grid: Grid) -> float:
    """Averaged boundary flux of grad f through the walls,

        mean_h d3f(top) - mean_h d3f(bottom)

    with one-sided second-order wall derivatives.  The stencil
    (-4f0 + 7f1 - 4f2 + f3)/(2h) is the one for which the trapezoid rule
    applied to the second-difference Laplacian telescopes exactly, so the
    discrete divergence theorem mean(laplacian f) = wall flux holds to
    rounding, not just to truncation order.
    """
    h = grid.dx3
    bottom = (-4.0 * data[0] + 7.0 * data[1] - 4.0 * data[2] + data[3]) / (2.0 * h)
    top = (4.0 * data[-1] - 7.0 * data[-2] + 4.0 * data[-3] - data[-4]) / (2.0 * h)
    return float(top.mean() - bottom.mean())


def leray_arr(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral Leray projection of a 2-component horizontal field."""
    spec = np.fft.rfftn(v, axes=(-2, -1))
    k1 = grid.k1r_d[None, :]
    k2 = grid.k2_d[:, None]
    ksq = k1 ** 2 + k2 ** 2
    ksq_safe = np.where(ksq > 0, ksq, 1.0)
    dot = (k1 * spec[0] + k2 * spec[1]) / ksq_safe
    spec[0] -= k1 * dot
    spec[1] -= k2 * dot
    return np.fft.irfftn(spec, s=(grid.n2, grid.n1), axes=(-2, -1))


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of (3, ...) arrays along the leading axis."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


# -- field containers ---------------------------------------------------------


@dataclass
class ScalarField:
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape:
            raise FieldError(
                f"scalar data shape {self.data.shape} != grid shape {self.grid.shape}")
        _check_finite(self.data, "ScalarField")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        c = grid.coords()
        return cls(grid, np.broadcast_to(fn(**c), grid.shape).astype(float).copy())


@dataclass
class VectorField:
    grid: Grid
    data: np.ndarray  # shape (ncomp, *grid.shape), ncomp in {2, 3}

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != len(self.grid.shape) + 1 or self.data.shape[0] not in (2, 3) \
                or self.data.shape[1:] != self.grid.shape:
            raise FieldError(
                f"vector data shape {self.data.shape} incompatible with grid {self.grid.shape}")
        _check_finite(self.data, "VectorField")

    @property
    def ncomp(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 3) -> "VectorField":
        return cls(grid, np.zeros((ncomp,) + grid.shape))


# -- vector calculus ----------------------------------------------------------


def grad(f: ScalarField) -> VectorField:
    """Gradient; 2 components on TORUS2, 3 on the strips."""
    g = f.grid
    d1 = ddx1_arr(f.data, g)
    if g.geometry is Geometry.TORUS2:
        return VectorField(g, np.stack([d1, ddx2_arr(f.data, g)]))
    d2 = ddx2_arr(f.data, g)
    d3 = ddx3_arr(f.data, g)
    return VectorField(g, np.stack([d1, d2, d3]))


def div(v: VectorField) -> ScalarField:
    g = v.grid
    out = ddx1_arr(v.data[0], g)
    if g.has_x2:
        out = out + ddx2_arr(v.data[1], g)
    if g.has_walls and v.ncomp == 3:
        out = out + ddx3_arr(v.data[2], g)
    return ScalarField(g, out)


def curl(v: VectorField) -> VectorField:
    """Curl of a 3-component field; missing directions contribute zero."""
    if v.ncomp != 3:
        raise FieldError("curl needs a 3-component field")
    g = v.grid
    v1, v2, v3 = v.data
    d1 = lambda a: ddx1_arr(a, g)
    d2 = lambda a: ddx2_arr(a, g)
    d3 = lambda a: ddx3_arr(a, g)
    return VectorField(g, np.stack([
        d2(v3) - d3(v2),
        d3(v1) - d1(v3),
        d1(v2) - d2(v1),
    ]))


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    out = lap_h_arr(f.data, g)
    if g.has_walls:
        out = out + d2dx3_arr(f.data, g)
    return ScalarField(g, out)


def leray_project(v: VectorField) -> VectorField:
    """Divergence-free projection on TORUS2 (2-component fields only)."""
    g = v.grid
    if g.geometry is not Geometry.TORUS2:
        raise FieldError("leray_project is defined on TORUS2")
    if v.ncomp != 2:
        raise FieldError("leray_project needs a 2-component field")
    return VectorField(g, leray_arr(v.data, g))


def lorentz_force(B: VectorField) -> VectorField:
    """curl(B) x B with 2/3-dealiased products."""
    g = B.grid
    J = curl(B).data
    Jf = np.stack([dealias_arr(c, g) for c in J])
    Bf = np.stack([dealias_arr(c, g) for c in B.data])
    F = cross3(Jf, Bf)
    F = np.stack([dealias_arr(c, g) for c in F])
    return VectorField(g, F)


def mean(f: ScalarField) -> float:
    return mean_arr(f.data, f.grid)


def mean_laplacian_flux(f: ScalarField) -> float:
    """Mean of the Laplacian computed from wall fluxes alone.

    On TORUS2 there is no boundary, so the result is exactly 0 (logged)."""
    g = f.grid
    if not g.has_walls:
        logger.warning("mean_laplacian_flux on a boundary-free geometry: returning 0")
        return 0.0
    return wall_flux_arr(f.data, g)


# -- snapshot I/O --------------------------------------------------------------

_MAGIC = b"OBMQ"
_VERSION = 1


def write_snapshot(path, grid: Grid, fields: dict) -> None:
    """Write named scalar arrays in the portable binary layout.

    Header: magic 'OBMQ', u32 version, u32 geometry tag, u32 n1, n2, n3
    (all little-endian).  Each field follows as an 8-byte ASCII name padded
    with spaces and the little-endian float64 values in x3-major,
    x1-fastest (C) order.
    """
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIIII", _MAGIC, _VERSION, grid.geometry.value,
                             grid.n1, grid.n2, grid.n3))
        for name, data in fields.items():
            raw = name.encode("ascii")
            if len(raw) > 8:
                raise SnapshotFormatError(f"field name {name!r} longer than 8 bytes")
            data = np.asarray(data, dtype=float)
            if data.shape != grid.shape:
                raise SnapshotFormatError(
                    f"field {name!r} shape {data.shape} != grid shape {grid.shape}")
            fh.write(raw.ljust(8, b" "))
            fh.write(np.ascontiguousarray(data).astype("<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (grid, dict of named arrays)."""
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) != 24:
            raise SnapshotFormatError("truncated header")
        magic, version, geom, n1, n2, n3 = struct.unpack("<4sIIIII", head)
        if magic != _MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise SnapshotFormatError(f"unsupported version {version}")
        try:
            geometry = Geometry(geom)
        except ValueError as exc:
            raise SnapshotFormatError(f"unknown geometry tag {geom}") from exc
        grid = Grid(geometry, n1, n2, n3)
        count = int(np.prod(grid.shape))
        fields = {}
        while True:
            name_raw = fh.read(8)
            if not name_raw:
                break
            if len(name_raw) != 8:
                raise SnapshotFormatError("truncated field name")
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise SnapshotFormatError("truncated field payload")
            name = name_raw.decode("ascii").rstrip()
            fields[name] = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
        return grid, fields
