"""Dense tensor algebra, SVD compression and MPS/MPO containers.

Every tensor is a complex ``numpy.ndarray`` in C (row-major) order over its
declared index list.  MPS sites carry the legs ``(left, physical, right)`` and
MPO sites ``(left, out, in, right)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "TruncationPolicy",
    "MatrixProductState",
    "MatrixProductOperator",
    "contract",
    "svd_split",
    "apply_mpo",
    "swap_adjacent",
    "canonicalize",
    "open_contract",
]


@dataclass(frozen=True)
class TruncationPolicy:
    """Relative Schmidt-value cutoff plus an optional hard bond cap."""

    schmidt_cutoff: float = 1e-12
    max_bond: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.schmidt_cutoff < 1.0:
            raise ValueError(f"schmidt_cutoff must lie in [0, 1), got {self.schmidt_cutoff}")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError(f"max_bond must be >= 1, got {self.max_bond}")

    def n_keep(self, s: np.ndarray) -> int:
        """Number of leading singular values retained from the sorted list ``s``."""
        if s.size == 0 or s[0] == 0.0:
            return 1
        keep = int(np.count_nonzero(s >= self.schmidt_cutoff * s[0]))
        if self.max_bond is not None:
            keep = min(keep, self.max_bond)
        return max(keep, 1)


def contract(a: np.ndarray, b: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired indices of ``a`` and ``b``.

    The result carries the free indices of ``a`` followed by those of ``b``,
    each in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a, axes_b = [], []
    for ia, ib in pairs:
        if not (-a.ndim <= ia < a.ndim) or not (-b.ndim <= ib < b.ndim):
            raise IndexError(f"index pair ({ia}, {ib}) out of range for ranks {a.ndim}, {b.ndim}")
        ia %= a.ndim
        ib %= b.ndim
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(
                f"extent mismatch on pair ({ia}, {ib}): {a.shape[ia]} != {b.shape[ib]}"
            )
        axes_a.append(ia)
        axes_b.append(ib)
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError("an index may be paired at most once")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _svd(m: np.ndarray):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on ill-conditioned input; gesvd is slower but robust
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def _truncated_svd(m: np.ndarray, policy: TruncationPolicy):
    u, s, vh = _svd(m)
    keep = policy.n_keep(s)
    discarded = float(np.sum(s[keep:] ** 2))
    if s.size == 0 or s[0] == 0.0:
        u = np.zeros((m.shape[0], 1), dtype=m.dtype)
        vh = np.zeros((1, m.shape[1]), dtype=m.dtype)
        u[0, 0] = 1.0
        vh[0, 0] = 1.0
        return u, np.zeros(1), vh, 0.0
    return u[:, :keep], s[:keep], vh[:keep], discarded


def svd_split(t: np.ndarray, left_indices: Sequence[int], policy: TruncationPolicy):
    """Split ``t`` into ``left · diag(s) · right`` across a truncated bond.

    Parameters
    ----------
    t : ndarray
        Tensor to split.
    left_indices : sequence of int
        Axes of ``t`` that end up on the left factor; the remaining axes keep
        their relative order on the right factor.
    policy : TruncationPolicy

    Returns
    -------
    left : ndarray
        Shape ``[t.shape[i] for i in left_indices] + [bond]``.
    s : ndarray
        Retained singular values, descending.
    right : ndarray
        Shape ``[bond] + remaining extents``.
    discarded_weight : float
        Sum of the squared dropped singular values.

    An all-zero tensor yields a bond of extent 1 with a zero singular value.
    """
    t = np.asarray(t)
    left = [i % t.ndim for i in left_indices]
    if not left or len(left) >= t.ndim or len(set(left)) != len(left):
        raise ValueError("left_indices must be a nonempty proper subset of the tensor indices")
    right = [i for i in range(t.ndim) if i not in left]
    lshape = [t.shape[i] for i in left]
    rshape = [t.shape[i] for i in right]
    m = np.transpose(t, left + right).reshape(int(np.prod(lshape)), int(np.prod(rshape)))
    u, s, vh, discarded = _truncated_svd(m, policy)
    return (
        u.reshape(lshape + [s.size]),
        s,
        vh.reshape([s.size] + rshape),
        discarded,
    )


@dataclass
class MatrixProductOperator:
    sites: list[np.ndarray]

    def __post_init__(self):
        for k, w in enumerate(self.sites):
            if w.ndim != 4:
                raise ValueError(f"MPO site {k} has rank {w.ndim}, expected 4")
        for k in range(len(self.sites) - 1):
            if self.sites[k].shape[3] != self.sites[k + 1].shape[0]:
                raise ValueError(f"MPO bond mismatch between sites {k} and {k + 1}")

    def __len__(self):
        return len(self.sites)

    def to_dense(self) -> np.ndarray:
        """Dense matrix ``(out, in)`` over the row-major product of physical legs."""
        acc = self.sites[0]
        for w in self.sites[1:]:
            acc = np.tensordot(acc, w, axes=(-1, 0))
        # acc legs: l, o0, i0, o1, i1, ..., r
        n = len(self.sites)
        outs = [1 + 2 * k for k in range(n)]
        ins = [2 + 2 * k for k in range(n)]
        acc = np.transpose(acc, [0] + outs + ins + [acc.ndim - 1])
        dout = int(np.prod([w.shape[1] for w in self.sites]))
        din = int(np.prod([w.shape[2] for w in self.sites]))
        if acc.shape[0] != 1 or acc.shape[-1] != 1:
            raise ValueError("dense conversion needs unit boundary bonds")
        return acc.reshape(dout, din)


@dataclass
class MatrixProductState:
    """Chain of ``(left, physical, right)`` tensors with orthogonality-center bookkeeping.

    ``center`` is the site index of the orthogonality center, or ``None`` when
    the gauge is unknown.  ``discarded_weight`` accumulates the squared
    singular values dropped by every truncating operation on this chain.
    """

    sites: list[np.ndarray]
    center: int | None = None
    discarded_weight: float = 0.0
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.sites = [np.asarray(s, dtype=complex) for s in self.sites]
        if self._check:
            self.validate()

    def validate(self):
        for k, s in enumerate(self.sites):
            if s.ndim != 3:
                raise ValueError(f"MPS site {k} has rank {s.ndim}, expected 3")
            if min(s.shape) < 1:
                raise ValueError(f"MPS site {k} has an empty extent")
        for k in range(len(self.sites) - 1):
            if self.sites[k].shape[2] != self.sites[k + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {k} and {k + 1}")

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "MatrixProductState":
        sites = [np.asarray(v, dtype=complex).reshape(1, -1, 1) for v in vectors]
        return cls(sites, center=None)

    def __len__(self):
        return len(self.sites)

    def copy(self) -> "MatrixProductState":
        # arrays are never mutated in place, so sharing them is safe
        return MatrixProductState(list(self.sites), self.center, self.discarded_weight, _check=False)

    @property
    def bond_dims(self) -> list[int]:
        return [s.shape[2] for s in self.sites[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def physical_dims(self) -> list[int]:
        return [s.shape[1] for s in self.sites]

    def reversed(self) -> "MatrixProductState":
        """Same state with the site order (and bond orientation) mirrored."""
        sites = [np.transpose(s, (2, 1, 0)) for s in reversed(self.sites)]
        center = None if self.center is None else len(self.sites) - 1 - self.center
        return MatrixProductState(sites, center, self.discarded_weight, _check=False)

    def to_dense(self) -> np.ndarray:
        """Full coefficient tensor; unit boundary bonds are dropped."""
        acc = self.sites[0]
        for s in self.sites[1:]:
            acc = np.tensordot(acc, s, axes=(-1, 0))
        if acc.shape[-1] == 1:
            acc = acc[..., 0]
        if acc.shape[0] == 1:
            acc = acc[0]
        return acc

    def norm(self) -> float:
        env = np.ones((1, 1), dtype=complex)
        for s in self.sites:
            env = np.einsum("ab,apc,bpd->cd", env, s, s.conj(), optimize=True)
        return float(np.sqrt(abs(np.trace(env))))

    def contract_with(self, covectors: Sequence[np.ndarray]) -> complex | np.ndarray:
        """Contract every physical leg with the given covector.

        With unit boundary bonds the result is a scalar; otherwise the
        remaining ``(left, right)`` boundary matrix is returned.
        """
        if len(covectors) != len(self.sites):
            raise ValueError("one covector per site required")
        env = None
        for s, v in zip(self.sites, covectors):
            m = np.tensordot(s, np.asarray(v), axes=(1, 0))
            env = m if env is None else env @ m
        if env.shape == (1, 1):
            return complex(env[0, 0])
        return env

    # -- in-place gauge machinery (callers hold a private copy) ------------

    def _left_qr(self, k: int):
        a = self.sites[k]
        l, p, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l * p, r))
        self.sites[k] = q.reshape(l, p, q.shape[1])
        self.sites[k + 1] = np.tensordot(rr, self.sites[k + 1], axes=(1, 0))

    def _right_qr(self, k: int):
        a = self.sites[k]
        l, p, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l, p * r).T)
        self.sites[k] = q.T.reshape(q.shape[1], p, r)
        self.sites[k - 1] = np.tensordot(self.sites[k - 1], rr.T, axes=(2, 0))

    def _move_center(self, k: int):
        n = len(self.sites)
        if not 0 <= k < n:
            raise IndexError(f"center {k} outside chain of length {n}")
        if self.center is None:
            for j in range(k):
                self._left_qr(j)
            for j in range(n - 1, k, -1):
                self._right_qr(j)
        else:
            for j in range(self.center, k):
                self._left_qr(j)
            for j in range(self.center, k, -1):
                self._right_qr(j)
        self.center = k

    def _split_pair(self, k: int, theta: np.ndarray, policy: TruncationPolicy, center_right: bool):
        """Factor a ``(l, p1, p2, r)`` block back onto sites ``k, k+1``."""
        l, p1, p2, r = theta.shape
        u, s, vh, disc = _truncated_svd(theta.reshape(l * p1, p2 * r), policy)
        if center_right:
            self.sites[k] = u.reshape(l, p1, s.size)
            self.sites[k + 1] = (s[:, None] * vh).reshape(s.size, p2, r)
            self.center = k + 1
        else:
            self.sites[k] = (u * s[None, :]).reshape(l, p1, s.size)
            self.sites[k + 1] = vh.reshape(s.size, p2, r)
            self.center = k
        self.discarded_weight += disc
        return disc

    def _pair(self, k: int) -> np.ndarray:
        return np.tensordot(self.sites[k], self.sites[k + 1], axes=(2, 0))

    def _swap(self, k: int, policy: TruncationPolicy, center_right: bool = True) -> float:
        if not 0 <= k < len(self.sites) - 1:
            raise IndexError(f"cannot swap sites {k}, {k + 1} in chain of length {len(self.sites)}")
        if self.center not in (k, k + 1):
            self._move_center(k)
        theta = np.transpose(self._pair(k), (0, 2, 1, 3))
        return self._split_pair(k, theta, policy, center_right)

    def _insert(self, k: int, site: np.ndarray):
        """Insert ``site`` so that it becomes index ``k``; center index follows."""
        self.sites.insert(k, np.asarray(site, dtype=complex))
        if self.center is not None and self.center >= k:
            self.center += 1


def canonicalize(psi: MatrixProductState, center: int) -> MatrixProductState:
    """Mixed-canonical form with orthogonality center at ``center``."""
    out = psi.copy()
    out.center = None
    out._move_center(center)
    return out


def swap_adjacent(psi: MatrixProductState, site: int, policy: TruncationPolicy) -> MatrixProductState:
    """Exchange the physical legs of ``site`` and ``site + 1``."""
    out = psi.copy()
    out._swap(site, policy)
    return out


def _recompress(psi: MatrixProductState, first: int, last: int, policy: TruncationPolicy):
    """QR sweep right-to-left over ``first..last`` then truncating SVD sweep back.

    Sites right of ``last`` must already be right-orthonormal (or absent) and
    sites left of ``first`` left-orthonormal.  Leaves the center at ``last``.
    """
    for j in range(last, first, -1):
        psi._right_qr(j)
    for j in range(first, last):
        a = psi.sites[j]
        l, p, r = a.shape
        u, s, vh, disc = _truncated_svd(a.reshape(l * p, r), policy)
        psi.sites[j] = u.reshape(l, p, s.size)
        psi.sites[j + 1] = np.tensordot(s[:, None] * vh, psi.sites[j + 1], axes=(1, 0))
        psi.discarded_weight += disc
    psi.center = last


def apply_mpo(
    psi: MatrixProductState,
    op: MatrixProductOperator,
    policy: TruncationPolicy,
    first: int = 0,
) -> MatrixProductState:
    """Apply ``op`` to sites ``first .. first+len(op)-1`` and recompress.

    Sites outside the window are spectators.  The window is recompressed with
    a left-to-right truncating sweep, so the orthogonality center ends on the
    last site of the window.  The discarded weight of the sweep is added to
    ``discarded_weight``.
    """
    n = len(op)
    if first < 0 or first + n > len(psi):
        raise ValueError(f"MPO of length {n} does not fit at offset {first} in chain of length {len(psi)}")
    out = psi.copy()
    if out.center is None:
        out._move_center(first)
    elif out.center < first:
        out._move_center(first)
    elif out.center > first + n - 1:
        out._move_center(first + n - 1)
    for k in range(n):
        a = out.sites[first + k]
        w = op.sites[k]
        if a.shape[1] != w.shape[2]:
            raise ValueError(f"physical extent mismatch at site {first + k}: {a.shape[1]} vs {w.shape[2]}")
        # (l, p, r) x (wl, o, p, wr) -> (l, wl, o, r, wr)
        t = np.tensordot(a, w, axes=(1, 2))
        t = np.transpose(t, (0, 2, 3, 1, 4))
        l, wl, o, r, wr = t.shape
        out.sites[first + k] = t.reshape(l * wl, o, r * wr)
    if op.sites[0].shape[0] != 1 or op.sites[-1].shape[3] != 1:
        raise ValueError("MPO boundary bonds must have extent 1")
    _recompress(out, first, first + n - 1, policy)
    return out


def open_contract(psi: MatrixProductState, covectors: Sequence[np.ndarray | None]) -> np.ndarray:
    """Contract every physical leg with its covector except the one given as ``None``.

    Returns the uncontracted physical leg as a vector (boundary bonds must be 1).
    """
    covectors = list(covectors)
    if len(covectors) != len(psi.sites) or sum(c is None for c in covectors) != 1:
        raise ValueError("need one covector per site with exactly one open site")
    left = np.ones((1, 1), dtype=complex)
    open_site = next(k for k, c in enumerate(covectors) if c is None)
    for s, v in zip(psi.sites[:open_site], covectors[:open_site]):
        left = left @ np.tensordot(s, v, axes=(1, 0))
    right = np.ones((1, 1), dtype=complex)
    for s, v in zip(psi.sites[:open_site:-1], covectors[:open_site:-1]):
        right = np.tensordot(s, v, axes=(1, 0)) @ right
    # (1, l) x (l, p, r) x (r, 1)
    return np.einsum("xl,lpr,ry->p", left, psi.sites[open_site], right)
