"""Small dense linear algebra over :class:`Fraction` (lists of lists)."""

from fractions import Fraction


def _copy(rows):
    return [[Fraction(x) for x in row] for row in rows]


def row_echelon(rows):
    """Return ``(echelon_rows, rank, det_sign_and_scale)`` by exact Gaussian elimination.

    The third element is the product of the pivots with row-swap signs, i.e.
    the determinant when the matrix is square.
    """
    a = _copy(rows)
    n_rows = len(a)
    n_cols = len(a[0]) if a else 0
    rank = 0
    det = Fraction(1)
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if a[r][col] != 0), None)
        if pivot is None:
            det = Fraction(0)
            continue
        if pivot != rank:
            a[rank], a[pivot] = a[pivot], a[rank]
            det = -det
        pv = a[rank][col]
        det *= pv
        for r in range(rank + 1, n_rows):
            factor = a[r][col] / pv
            if factor:
                a[r] = [x - factor * y for x, y in zip(a[r], a[rank])]
        rank += 1
        if rank == n_rows:
            break
    if rank < n_cols or rank < n_rows:
        det = Fraction(0)
    return a, rank, det


def rank(rows):
    return row_echelon(rows)[1]


def det(rows):
    if len(rows) != len(rows[0]):
        raise ValueError("determinant of a non-square matrix")
    return row_echelon(rows)[2]


def solve(rows, rhs):
    """Solve ``A x = b`` exactly; raises ``ZeroDivisionError`` if ``A`` is singular."""
    n = len(rows)
    aug = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(rows, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [x - factor * y for x, y in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def vecmat(vec, rows):
    """Row vector times matrix."""
    n_cols = len(rows[0])
    out = [Fraction(0)] * n_cols
    for v, row in zip(vec, rows):
        if v:
            for j, x in enumerate(row):
                if x:
                    out[j] += v * x
    return out


def identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def sub(a, b):
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def transpose(a):
    return [list(col) for col in zip(*a)]
