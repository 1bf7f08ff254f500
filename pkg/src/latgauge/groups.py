"""Compact gauge groups and their unitary representations.

Three families are supported:

* ``Z_n`` (cyclic): an element is a residue ``j`` in ``0..n-1`` standing for
  the 1x1 unitary ``exp(2*pi*i*j/n)``.
* ``U(1)``: an element is an angle in ``[0, 2*pi)``.
* ``SU(2)``: an element is a unit quaternion ``(a, b, c, d)`` standing for the
  matrix ``[[a + i b, c + i d], [-c + i d, a - i b]]``.

Two layers are provided. :class:`GroupSpec` works on raw numpy arrays (int
residues, float angles, or ``(..., 4)`` quaternion arrays) and is what the
samplers and enumerators use. :class:`GroupElement` wraps a single value
together with its group so that mixing groups raises instead of silently
producing garbage.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi

# Pauli matrices, used for the adjoint representation of SU(2).
_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class GroupMismatchError(ValueError):
    """Raised when elements of two different groups are combined."""


class NotCentralError(ValueError):
    """Raised when an element that should be central is not."""


def _wrap_angle(x):
    """Reduce angles to [0, 2*pi), guarding against the rounding edge."""
    y = np.mod(x, TWO_PI)
    return np.where(y >= TWO_PI, 0.0, y)


def quat_mul(p, q):
    """Hamilton product of quaternion arrays with broadcasting."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    out = -q
    out[..., 0] = q[..., 0]
    return out


def quat_to_matrix(q):
    """Map ``(..., 4)`` quaternions to ``(..., 2, 2)`` complex matrices."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a + 1j * b
    out[..., 0, 1] = c + 1j * d
    out[..., 1, 0] = -c + 1j * d
    out[..., 1, 1] = a - 1j * b
    return out


def matrix_to_quat(m):
    """Inverse of :func:`quat_to_matrix` for matrices in SU(2)."""
    m = np.asarray(m, dtype=complex)
    return np.stack(
        [m[..., 0, 0].real, m[..., 0, 0].imag, m[..., 0, 1].real, m[..., 0, 1].imag],
        axis=-1,
    )


@dataclass(frozen=True)
class GroupSpec:
    """A compact group together with its value encoding.

    Attributes:
        kind: one of ``"cyclic"``, ``"circle"`` (U(1)) or ``"su2"``.
        n: order of the cyclic group; ignored for the continuous groups.
    """

    kind: str
    n: int = 0

    def __post_init__(self):
        if self.kind not in ("cyclic", "circle", "su2"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == "cyclic" and not (2 <= self.n <= 64):
            raise ValueError("cyclic groups need 2 <= n <= 64")

    # ------------------------------------------------------------------ naming
    @classmethod
    def parse(cls, name: str) -> "GroupSpec":
        """Parse ``"Z2"``, ``"Z3"``, ..., ``"U1"`` or ``"SU2"``."""
        text = str(name).strip().upper().replace("_", "").replace("(", "").replace(")", "")
        m = re.fullmatch(r"Z(\d+)", text)
        if m:
            return cls("cyclic", int(m.group(1)))
        if text == "U1":
            return cls("circle")
        if text == "SU2":
            return cls("su2")
        raise ValueError(f"unknown group {name!r}; expected Zn, U1 or SU2")

    @property
    def name(self) -> str:
        return {"cyclic": f"Z{self.n}", "circle": "U1", "su2": "SU2"}[self.kind]

    @property
    def is_finite(self) -> bool:
        return self.kind == "cyclic"

    @property
    def matrix_dim(self) -> int:
        """Dimension of the defining matrix representation."""
        return 2 if self.kind == "su2" else 1

    @property
    def value_shape(self) -> tuple:
        return (4,) if self.kind == "su2" else ()

    @property
    def dtype(self):
        return np.int64 if self.kind == "cyclic" else np.float64

    # -------------------------------------------------------- vectorized ops
    def identity_array(self, shape=()) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        if self.kind == "su2":
            out = np.zeros(shape + (4,))
            out[..., 0] = 1.0
            return out
        return np.zeros(shape, dtype=self.dtype)

    def multiply(self, a, b):
        if self.kind == "cyclic":
            return (np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)) % self.n
        if self.kind == "circle":
            return _wrap_angle(np.asarray(a, dtype=float) + np.asarray(b, dtype=float))
        return quat_mul(a, b)

    def inverse(self, a):
        if self.kind == "cyclic":
            return (-np.asarray(a, dtype=np.int64)) % self.n
        if self.kind == "circle":
            return _wrap_angle(-np.asarray(a, dtype=float))
        return quat_conj(a)

    def power(self, a, s):
        """``a`` raised to ``s`` in ``{+1, -1}`` (elementwise for arrays of signs)."""
        s = np.asarray(s)
        if self.kind == "cyclic":
            return (np.asarray(a, dtype=np.int64) * s) % self.n
        if self.kind == "circle":
            return _wrap_angle(np.asarray(a, dtype=float) * s)
        a = np.asarray(a, dtype=float)
        out = a.copy()
        out[..., 1:] = a[..., 1:] * s[..., None]
        return out

    def re_trace(self, a) -> np.ndarray:
        """Real part of the trace in the defining representation."""
        if self.kind == "cyclic":
            return np.cos(TWO_PI * np.asarray(a) / self.n)
        if self.kind == "circle":
            return np.cos(np.asarray(a, dtype=float))
        return 2.0 * np.asarray(a, dtype=float)[..., 0]

    def matrices(self, a) -> np.ndarray:
        """Defining-representation matrices, shape ``(..., m, m)``."""
        if self.kind == "cyclic":
            return np.exp(1j * TWO_PI * np.asarray(a) / self.n)[..., None, None]
        if self.kind == "circle":
            return np.exp(1j * np.asarray(a, dtype=float))[..., None, None]
        return quat_to_matrix(a)

    def normalize(self, a):
        """Project back onto the group (SU(2) drift control, angle wrapping)."""
        if self.kind == "cyclic":
            return np.asarray(a, dtype=np.int64) % self.n
        if self.kind == "circle":
            return _wrap_angle(a)
        a = np.asarray(a, dtype=float)
        return a / np.linalg.norm(a, axis=-1, keepdims=True)

    def equal(self, a, b, tol: float = 1e-12):
        if self.kind == "cyclic":
            return np.asarray(a) % self.n == np.asarray(b) % self.n
        if self.kind == "circle":
            d = np.abs(_wrap_angle(np.asarray(a) - np.asarray(b)))
            return np.minimum(d, TWO_PI - d) <= tol
        return np.max(np.abs(np.asarray(a) - np.asarray(b)), axis=-1) <= tol

    def haar(self, rng: np.random.Generator, size=None):
        """Draw Haar-distributed elements."""
        if self.kind == "cyclic":
            return rng.integers(0, self.n, size=size, dtype=np.int64)
        if self.kind == "circle":
            return rng.uniform(0.0, TWO_PI, size=size)
        shape = (() if size is None else tuple(np.atleast_1d(size))) + (4,)
        g = rng.standard_normal(shape)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def elements(self) -> np.ndarray:
        """All elements of a finite group."""
        if self.kind != "cyclic":
            raise ValueError(f"{self.name} is not finite")
        return np.arange(self.n, dtype=np.int64)

    def center_elements(self) -> np.ndarray:
        """The center, or a representative sample of it for U(1).

        For U(1) the whole group is central; the sample contains twelve
        equally spaced angles plus the generic angle 1.0 so that characters
        with charges divisible by twelve are still detected as nontrivial.
        """
        if self.kind == "cyclic":
            return self.elements()
        if self.kind == "circle":
            return np.concatenate([TWO_PI * np.arange(12) / 12.0, [1.0]])
        return np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]])

    def is_central(self, g, n_probe: int = 100, tol: float = 1e-10) -> bool:
        """Check ``g h = h g`` against Haar samples drawn with a fixed seed."""
        if self.kind != "su2":
            return True
        probe = self.haar(np.random.default_rng(12345), n_probe)
        lhs = quat_mul(np.broadcast_to(g, probe.shape), probe)
        rhs = quat_mul(probe, np.broadcast_to(g, probe.shape))
        return bool(np.max(np.abs(lhs - rhs)) <= tol)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A single group element bound to its group."""

    group: GroupSpec
    value: object = field(repr=True)

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return mul(self, other)

    def __eq__(self, other):
        if not isinstance(other, GroupElement) or other.group != self.group:
            return NotImplemented
        return bool(self.group.equal(self.value, other.value))

    def __hash__(self):
        if self.group.kind == "cyclic":
            return hash((self.group, int(self.value)))
        return hash(self.group)

    def matrix(self) -> np.ndarray:
        return self.group.matrices(self.value)

    def inv(self) -> "GroupElement":
        return inv(self)


def element(group: GroupSpec, value) -> GroupElement:
    """Build a validated element of ``group``."""
    if group.kind == "cyclic":
        v = int(value)
        if not 0 <= v < group.n:
            raise ValueError(f"residue {value} outside 0..{group.n - 1}")
        return GroupElement(group, v)
    if group.kind == "circle":
        return GroupElement(group, float(_wrap_angle(float(value))))
    q = np.asarray(value, dtype=float).reshape(4)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise ValueError("SU(2) quaternion must have unit norm")
    return GroupElement(group, tuple(q))


def _check_same(*els: GroupElement) -> GroupSpec:
    g = els[0].group
    for e in els[1:]:
        if e.group != g:
            raise GroupMismatchError(f"cannot combine {g.name} with {e.group.name}")
    return g


def _wrap(group: GroupSpec, raw) -> GroupElement:
    if group.kind == "cyclic":
        return GroupElement(group, int(raw))
    if group.kind == "circle":
        return GroupElement(group, float(raw))
    return GroupElement(group, tuple(float(x) for x in np.asarray(raw)))


def mul(a: GroupElement, b: GroupElement) -> GroupElement:
    g = _check_same(a, b)
    return _wrap(g, g.multiply(np.asarray(a.value), np.asarray(b.value)))


def inv(a: GroupElement) -> GroupElement:
    return _wrap(a.group, a.group.inverse(np.asarray(a.value)))


def identity(group: GroupSpec) -> GroupElement:
    return _wrap(group, group.identity_array())


def haar_sample(group: GroupSpec, rng: np.random.Generator) -> GroupElement:
    return _wrap(group, group.haar(rng))


def center_elements(group: GroupSpec) -> list[GroupElement]:
    return [_wrap(group, v) for v in group.center_elements()]


# ---------------------------------------------------------------- representations
@dataclass(frozen=True)
class Representation:
    """A finite-dimensional unitary representation from the catalog.

    Labels: ``"char:k"`` for Z_n, ``"charge:q"`` for U(1), and ``"fund"``,
    ``"adjoint"`` or ``"trivial"`` for SU(2). ``"fund"`` and ``"trivial"`` are
    accepted for every group and mean charge/character 1 and 0.
    """

    group: GroupSpec
    label: str

    @cached_property
    def _parsed(self):
        g, lab = self.group, self.label
        if lab == "trivial":
            return ("trivial", 0)
        if g.kind == "cyclic":
            if lab == "fund":
                return ("char", 1)
            m = re.fullmatch(r"char:(-?\d+)", lab)
            if m:
                return ("char", int(m.group(1)) % g.n)
        elif g.kind == "circle":
            if lab == "fund":
                return ("charge", 1)
            m = re.fullmatch(r"charge:(-?\d+)", lab)
            if m:
                return ("charge", int(m.group(1)))
        else:
            if lab in ("fund", "adjoint"):
                return (lab, 0)
        raise ValueError(f"representation {lab!r} not available for {g.name}")

    def __post_init__(self):
        self._parsed  # validate eagerly

    @property
    def dim(self) -> int:
        kind = self._parsed[0]
        return {"trivial": 1, "char": 1, "charge": 1, "fund": 2, "adjoint": 3}[kind]

    @property
    def charge(self) -> int | None:
        """``k`` for a one-dimensional ``char:k`` / ``charge:q`` label (0 if trivial), else ``None``."""
        kind, k = self._parsed
        return k if kind in ("char", "charge", "trivial") else None

    @property
    def is_trivial(self) -> bool:
        kind, k = self._parsed
        return kind == "trivial" or (kind in ("char", "charge") and k == 0)

    @property
    def self_conjugate(self) -> bool:
        kind, k = self._parsed
        if kind in ("trivial", "fund", "adjoint"):
            return True
        if kind == "char":
            return (2 * k) % self.group.n == 0
        return k == 0

    def matrices(self, values) -> np.ndarray:
        """Representation matrices for raw group values, shape ``(..., m, m)``."""
        kind, k = self._parsed
        g = self.group
        if kind == "trivial":
            shape = np.shape(values)[:-1] if g.kind == "su2" else np.shape(values)
            return np.ones(shape + (1, 1), dtype=complex)
        if kind == "char":
            return np.exp(1j * TWO_PI * k * np.asarray(values) / g.n)[..., None, None]
        if kind == "charge":
            return np.exp(1j * k * np.asarray(values, dtype=float))[..., None, None]
        u = quat_to_matrix(values)
        if kind == "fund":
            return u
        # adjoint: R_ij = 1/2 Tr(sigma_i U sigma_j U^dagger)
        ud = np.conj(np.swapaxes(u, -1, -2))
        return 0.5 * np.einsum("iab,...bc,jcd,...da->...ij", _PAULI, u, _PAULI, ud)

    def character(self, values) -> np.ndarray:
        return np.trace(self.matrices(values), axis1=-2, axis2=-1)


def rep_matrix(rep: Representation, g: GroupElement) -> np.ndarray:
    """Matrix of ``g`` in ``rep``; raises on group mismatch."""
    if rep.group != g.group:
        raise GroupMismatchError(f"{rep.label} is a representation of {rep.group.name}, not {g.group.name}")
    return rep.matrices(np.asarray(g.value))


def center_scalar(rep: Representation, g0: GroupElement, tol: float = 1e-10) -> complex:
    """The scalar ``c`` with ``rep(g0) = c I`` for a central ``g0``."""
    if rep.group != g0.group:
        raise GroupMismatchError("representation and element belong to different groups")
    if not rep.group.is_central(np.asarray(g0.value)):
        raise NotCentralError(f"{g0.value} is not central in {rep.group.name}")
    m = rep_matrix(rep, g0)
    c = complex(m[0, 0])
    if np.max(np.abs(m - c * np.eye(m.shape[0]))) > tol:
        raise NotCentralError("representation matrix of a central element is not scalar")
    return c


def acts_nontrivially_on_center(rep: Representation, tol: float = 1e-10) -> bool:
    for z in center_elements(rep.group):
        if abs(center_scalar(rep, z) - 1.0) > tol:
            return True
    return False


def parse_rep(group: GroupSpec, label: str) -> Representation:
    return Representation(group, str(label))
