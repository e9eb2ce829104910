"""Driving fields on the unit torus and their discrete work/fluxes.

A field is kept in orthogonally-decomposed form

    E(r) = -grad U(r) + Etilde(r),

where the divergence-free part Etilde is either a constant vector or, in
d = 2, the rotation (d2 psi, -d1 psi) of a stream function psi.  A constant
field is the special case U = 0; a conservative field the special case
Etilde = 0.  Pointwise orthogonality grad U . Etilde = 0 is validated on a
sample grid at construction.
"""

from __future__ import annotations

import numpy as np

from .lattice import Torus

# 4-point Gauss-Legendre on [0, 1]
_GAUSS_T = 0.5 + 0.5 * np.array([-0.8611363115940526, -0.3399810435848563,
                                 0.3399810435848563, 0.8611363115940526])
_GAUSS_W = 0.5 * np.array([0.3478548451374538, 0.6521451548625461,
                           0.6521451548625461, 0.3478548451374538])


class FieldError(ValueError):
    pass


def fourier_scalar(d: int, cos: dict | None = None, sin: dict | None = None):
    """Build a periodic scalar field from Fourier coefficients.

    Keys are integer modes (ints in d=1, d-tuples otherwise); returns
    ``(value, grad)`` callables taking an (n, d) array of points.
    """
    cos = {_as_mode(k, d): v for k, v in (cos or {}).items()}
    sin = {_as_mode(k, d): v for k, v in (sin or {}).items()}

    def value(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = np.zeros(pts.shape[0])
        for k, a in cos.items():
            out += a * np.cos(2 * np.pi * pts @ np.asarray(k))
        for k, a in sin.items():
            out += a * np.sin(2 * np.pi * pts @ np.asarray(k))
        return out

    def grad(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = np.zeros_like(pts)
        for k, a in cos.items():
            kv = np.asarray(k, dtype=np.float64)
            out -= (2 * np.pi * a) * np.sin(2 * np.pi * pts @ kv)[:, None] * kv
        for k, a in sin.items():
            kv = np.asarray(k, dtype=np.float64)
            out += (2 * np.pi * a) * np.cos(2 * np.pi * pts @ kv)[:, None] * kv
        return out

    return value, grad


def _as_mode(k, d):
    if isinstance(k, (int, np.integer)):
        if d != 1:
            raise FieldError("integer Fourier mode only valid in d=1")
        return (int(k),)
    k = tuple(int(v) for v in k)
    if len(k) != d:
        raise FieldError(f"mode {k} does not match dimension {d}")
    return k


class Field:
    """Orthogonally decomposed driving field; see module docstring."""

    def __init__(self, d: int, U=None, grad_U=None, etilde_const=None,
                 stream=None, grad_stream=None, validate: bool = True):
        self.d = d
        self.U = U
        self.grad_U = grad_U
        if (U is None) != (grad_U is None):
            raise FieldError("U and grad_U must be given together")
        self.etilde_const = (None if etilde_const is None
                             else np.asarray(etilde_const, dtype=np.float64))
        if self.etilde_const is not None and self.etilde_const.shape != (d,):
            raise FieldError("constant field component has wrong dimension")
        if stream is not None and d != 2:
            raise FieldError("stream-function fields require d=2")
        if (stream is None) != (grad_stream is None):
            raise FieldError("stream and grad_stream must be given together")
        self.stream = stream
        self.grad_stream = grad_stream
        if validate:
            self._validate_orthogonality()

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> "Field":
        return cls(d)

    @classmethod
    def constant(cls, E) -> "Field":
        E = np.atleast_1d(np.asarray(E, dtype=np.float64))
        return cls(len(E), etilde_const=E)

    @classmethod
    def conservative(cls, d: int, U, grad_U) -> "Field":
        return cls(d, U=U, grad_U=grad_U)

    @classmethod
    def decomposed(cls, d: int, U, grad_U, etilde_const=None, stream=None,
                   grad_stream=None) -> "Field":
        return cls(d, U=U, grad_U=grad_U, etilde_const=etilde_const,
                   stream=stream, grad_stream=grad_stream)

    # -- evaluation --------------------------------------------------------
    def etilde(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = np.zeros((pts.shape[0], self.d))
        if self.etilde_const is not None:
            out += self.etilde_const
        if self.stream is not None:
            g = self.grad_stream(pts)
            out[:, 0] += g[:, 1]
            out[:, 1] -= g[:, 0]
        return out

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = self.etilde(pts)
        if self.U is not None:
            out -= self.grad_U(pts)
        return out

    def has_potential(self) -> bool:
        return self.U is not None

    def reversed_etilde(self) -> "Field":
        """The adjoint-dynamics drift -grad U - Etilde."""
        flip = None if self.etilde_const is None else -self.etilde_const
        if self.stream is None:
            return Field(self.d, self.U, self.grad_U, flip, validate=False)
        return Field(self.d, self.U, self.grad_U, flip,
                     stream=lambda p: -np.asarray(self.stream(p)),
                     grad_stream=lambda p: -np.asarray(self.grad_stream(p)),
                     validate=False)

    def _validate_orthogonality(self, npts: int = 33, tol: float = 1e-10):
        if self.U is None:
            return
        if self.etilde_const is None and self.stream is None:
            return
        axes = [np.linspace(0, 1, npts, endpoint=False)] * self.d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        dot = np.einsum("ij,ij->i", self.grad_U(pts), self.etilde(pts))
        worst = float(np.max(np.abs(dot)))
        if worst > tol:
            raise FieldError(
                f"grad U . Etilde = {worst:.3e} exceeds {tol:g}; "
                "field is not orthogonally decomposable")


def field_work(field: Field, torus: Torus, x: int, y: int) -> float:
    """Work E_N(x, y) of the field along the bond segment x/N -> y/N.

    ``(x, y)`` must be an ordered nearest-neighbor pair; the segment runs
    along the bond direction (periodic wrap handled through the direction
    vector, not through coordinate differences).
    """
    direction, sign = _bond_direction(torus, x, y)
    start = np.asarray(torus.site_coords(x), dtype=np.float64) / torus.N
    step = np.zeros(field.d)
    step[direction] = sign / torus.N
    w = 0.0
    if field.U is not None:
        w += float(field.U(start[None, :])[0] - field.U((start + step)[None, :])[0])
    if field.etilde_const is not None:
        w += float(field.etilde_const[direction]) * sign / torus.N
    if field.stream is not None:
        pts = start[None, :] + _GAUSS_T[:, None] * step[None, :]
        g = field.grad_stream(pts)
        et = np.stack([g[:, 1], -g[:, 0]], axis=1)
        w += float(np.dot(_GAUSS_W, et @ step))
    return w


def _bond_direction(torus: Torus, x: int, y: int) -> tuple[int, int]:
    for i in range(torus.d):
        if torus.neighbors[x, 2 * i + 1] == y:
            return i, +1
        if torus.neighbors[x, 2 * i] == y:
            return i, -1
    raise FieldError(f"sites {x},{y} are not nearest neighbors")


def bond_work_table(field: Field, torus: Torus) -> np.ndarray:
    """E_N over the torus bond list, canonical orientation (bond_x -> bond_y)."""
    return np.array([field_work(field, torus, int(x), int(y))
                     for x, y in zip(torus.bond_x, torus.bond_y)])


def face_drift(field: Field, d: int, M: int) -> list[np.ndarray]:
    """Per-axis face-averaged drift on the M^d finite-volume grid.

    Axis-i array entry [j, ...] is the drift component i at the face between
    cells j and j+1 along axis i.  The conservative part is the exact
    potential difference of cell centers (well balanced with the stationary
    profile); the stream part uses vertex differences of psi, which makes
    its discrete divergence vanish identically.
    """
    if field.d != d:
        raise FieldError("field dimension mismatch")
    centers = (np.arange(M) + 0.5) / M
    out = []
    if d == 1:
        drift = np.zeros(M)
        if field.etilde_const is not None:
            drift += field.etilde_const[0]
        if field.U is not None:
            u = field.U(centers[:, None])
            drift += M * (u - np.roll(u, -1))
        out.append(drift)
        return out
    if d == 2:
        cx, cy = np.meshgrid(centers, centers, indexing="ij")
        cpts = np.stack([cx, cy], axis=-1)
        verts = np.arange(M + 1) / M
        vx, vy = np.meshgrid(verts, verts, indexing="ij")
        vpts = np.stack([vx, vy], axis=-1)
        u = (field.U(cpts.reshape(-1, 2)).reshape(M, M)
             if field.U is not None else None)
        psi = (np.asarray(field.stream(vpts.reshape(-1, 2))).reshape(M + 1, M + 1)
               if field.stream is not None else None)
        for axis in range(2):
            drift = np.zeros((M, M))
            if field.etilde_const is not None:
                drift += field.etilde_const[axis]
            if u is not None:
                drift += M * (u - np.roll(u, -1, axis=axis))
            if psi is not None:
                # E1 = d2 psi averaged over x-faces; E2 = -d1 psi over y-faces
                if axis == 0:
                    drift += M * (psi[1:, 1:] - psi[1:, :-1])
                else:
                    drift -= M * (psi[1:, 1:] - psi[:-1, 1:])
            out.append(drift)
        return out
    raise FieldError("face_drift implemented for d in {1, 2}")
