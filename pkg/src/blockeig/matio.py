"""Sparse symmetric matrices: storage, Matrix Market I/O, shifting and generators.

Only the lower triangle (including the diagonal) is stored, in compressed
row form. The full symmetric operator is materialized lazily as a SciPy CSR
matrix the first time it is needed for products.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from os import PathLike
from typing import BinaryIO, Iterable, TextIO

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MatrixMarketError",
    "SparseSym",
    "parse_matrix_market",
    "read_matrix_market",
    "write_matrix_market",
    "apply_spd_shift",
    "gen_diag",
    "gen_diag_geom",
    "gen_laplacian_1d",
    "from_generator_spec",
]

SYMMETRY_RTOL = 1e-12


class MatrixMarketError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""


@dataclass(eq=False)
class SparseSym:
    """Real symmetric matrix stored as its lower triangle in CSR form.

    Attributes
    ----------
    n : int
        Dimension.
    indptr, indices, data : ndarray
        Row offsets, column indices (strictly increasing within a row, all
        ``<= row``) and values of the lower triangle.
    norm_est : float or None
        Cached estimate of the spectral norm, filled by
        :func:`blockeig.kernel.estimate_norm2`.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    norm_est: float | None = None
    _full: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have n + 1 entries")
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must start at 0 and be nondecreasing")
        if self.indptr[-1] != len(self.indices) or len(self.indices) != len(self.data):
            raise ValueError("inconsistent entry count")
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        if np.any(self.indices > rows) or np.any(self.indices < 0):
            raise ValueError("only lower-triangle entries (col <= row) may be stored")
        same_row = rows[1:] == rows[:-1]
        if np.any(self.indices[1:][same_row] <= self.indices[:-1][same_row]):
            raise ValueError("column indices must be strictly increasing within a row")

    @classmethod
    def from_triplets(cls, n: int, rows, cols, vals) -> "SparseSym":
        """Build from coordinate triplets, folding upper entries and summing duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        m = sp.coo_matrix((vals, (hi, lo)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(n, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, M, drop_zeros: bool = True) -> "SparseSym":
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        low = np.tril(M)
        if drop_zeros:
            r, c = np.nonzero(low)
        else:
            r, c = np.tril_indices(M.shape[0])
        return cls.from_triplets(M.shape[0], r, c, low[r, c])

    @property
    def nnz(self) -> int:
        """Stored entries of the full symmetric matrix."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        diag = int(np.count_nonzero(self.indices == rows))
        return 2 * len(self.data) - diag

    def lower(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_scipy(self) -> sp.csr_matrix:
        """Full symmetric matrix as CSR (cached)."""
        if self._full is None:
            low = self.lower()
            strict = sp.tril(low, k=-1, format="csr")
            full = (low + strict.T).tocsr()
            full.sort_indices()
            self._full = full
        return self._full

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.lower().diagonal()


def _open_text(source) -> Iterable[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("ascii", errors="strict"))
    if isinstance(source, str):
        return io.StringIO(source)
    if hasattr(source, "read"):
        content = source.read()
        if isinstance(content, bytes):
            content = content.decode("ascii", errors="strict")
        return io.StringIO(content)
    raise TypeError(f"cannot read Matrix Market data from {type(source).__name__}")


def parse_matrix_market(text: bytes | str | BinaryIO | TextIO) -> SparseSym:
    """Parse a real (or integer) coordinate Matrix Market file.

    ``symmetric`` files may list either triangle. ``general`` files are
    accepted only when every entry matches its transpose to a relative
    ``1e-12``; they are then folded to the lower triangle.
    """
    lines = _open_text(text)
    banner = next(iter(lines), "")
    parts = banner.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(f"malformed banner: {banner.strip()!r}")
    obj, fmt, field_, symm = (p.lower() for p in parts[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format: {obj} {fmt}")
    if field_ not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unsupported field: {field_}")
    if symm not in ("symmetric", "general"):
        raise MatrixMarketError(f"unsupported symmetry: {symm}")

    header = None
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(lines, start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        tok = s.split()
        if header is None:
            if len(tok) != 3:
                raise MatrixMarketError(f"line {lineno}: bad size line {s!r}")
            try:
                header = tuple(int(t) for t in tok)
            except ValueError as exc:
                raise MatrixMarketError(f"line {lineno}: bad size line {s!r}") from exc
            continue
        if len(tok) != 3:
            raise MatrixMarketError(f"line {lineno}: expected 'row col value', got {s!r}")
        try:
            i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError as exc:
            raise MatrixMarketError(f"line {lineno}: cannot parse {s!r}") from exc
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)

    if header is None:
        raise MatrixMarketError("missing size line")
    nr, nc, nnz = header
    if nr != nc:
        raise MatrixMarketError(f"matrix must be square, got {nr}x{nc}")
    if len(vals) != nnz:
        raise MatrixMarketError(f"header announces {nnz} entries, found {len(vals)}")
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    v = np.asarray(vals, dtype=np.float64)
    if np.any((r < 0) | (r >= nr) | (c < 0) | (c >= nc)):
        raise MatrixMarketError("entry index out of range")

    if symm == "general":
        full = sp.coo_matrix((v, (r, c)), shape=(nr, nr)).tocsr()
        full.sum_duplicates()
        diff = abs(full - full.T)
        scale = abs(full).maximum(abs(full.T))
        d = diff.tocoo()
        if d.nnz:
            ref = np.asarray(scale[d.row, d.col]).ravel()
            if np.any(d.data > SYMMETRY_RTOL * ref):
                raise MatrixMarketError("general matrix is not symmetric")
        low = sp.tril(full).tocoo()
        return SparseSym.from_triplets(nr, low.row, low.col, low.data)
    return SparseSym.from_triplets(nr, r, c, v)


def read_matrix_market(path: str | PathLike) -> SparseSym:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh.read())


def write_matrix_market(A: SparseSym) -> str:
    """Serialize as a ``symmetric`` coordinate file (lower triangle, 17 digits)."""
    out = io.StringIO()
    out.write("%%MatrixMarket matrix coordinate real symmetric\n")
    out.write(f"{A.n} {A.n} {len(A.data)}\n")
    for i in range(A.n):
        for p in range(A.indptr[i], A.indptr[i + 1]):
            out.write(f"{i + 1} {A.indices[p] + 1} {float(A.data[p])!r}\n")
    return out.getvalue()


def apply_spd_shift(A: SparseSym, lam1: float) -> SparseSym:
    """Return ``A - 1.05*lam1*I`` when ``lam1 <= 0``, else ``A`` itself.

    ``lam1`` is the algebraically smallest eigenvalue of ``A``, supplied by
    the caller.
    """
    if lam1 > 0:
        return A
    low = A.lower().tolil()
    low.setdiag(low.diagonal() - 1.05 * lam1)
    low = low.tocsr()
    low.sort_indices()
    return SparseSym(A.n, low.indptr, low.indices, low.data)


def gen_diag(values) -> SparseSym:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("gen_diag needs at least one value")
    n = values.size
    return SparseSym(n, np.arange(n + 1), np.arange(n), values)


def gen_diag_geom(n: int, ratio: float) -> SparseSym:
    """Diagonal matrix with geometric spectrum ``1, ratio, ratio**2, ...``."""
    if n < 1 or ratio <= 0:
        raise ValueError("need n >= 1 and ratio > 0")
    return gen_diag(ratio ** np.arange(n, dtype=np.float64))


def gen_laplacian_1d(n: int) -> SparseSym:
    """Tridiagonal ``[-1, 2, -1]``; eigenvalues ``2 - 2 cos(k pi / (n+1))``."""
    if n < 2:
        raise ValueError("gen_laplacian_1d needs n >= 2")
    rows = np.concatenate([np.arange(n), np.arange(1, n)])
    cols = np.concatenate([np.arange(n), np.arange(n - 1)])
    vals = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0)])
    return SparseSym.from_triplets(n, rows, cols, vals)


def from_generator_spec(spec: str) -> SparseSym:
    """Build a matrix from ``laplacian1d:N``, ``diag:v1,v2,...`` or ``diag-geom:n,ratio``."""
    kind, sep, args = spec.partition(":")
    if not sep or not args:
        raise ValueError(f"bad generator spec {spec!r}")
    try:
        if kind == "laplacian1d":
            return gen_laplacian_1d(int(args))
        if kind == "diag":
            return gen_diag([float(a) for a in args.split(",")])
        if kind == "diag-geom":
            n, ratio = args.split(",")
            return gen_diag_geom(int(n), float(ratio))
    except ValueError as exc:
        raise ValueError(f"bad generator spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown generator {kind!r}")

