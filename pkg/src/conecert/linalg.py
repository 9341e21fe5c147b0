"""Dense real linear algebra kernels.

Matrices are plain ``numpy`` float arrays. This module owns the two kernels
that everything else leans on for independent verification: the matrix
exponential (scaling and squaring with a Padé approximant) and the
eigenvalue solver (Hessenberg reduction followed by Francis double-shift QR).
Neither delegates to LAPACK's ``expm``/``eig`` so that they can serve as an
oracle against the LP certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import ConvergenceError, ShapeError

__all__ = [
    "Spectrum",
    "as_matrix",
    "as_vector",
    "matmul",
    "expm",
    "integrate_expm",
    "eigenvalues",
    "spectral_abscissa",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_vector(x, name: str = "vector") -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _square(a, name="matrix") -> np.ndarray:
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

# Padé coefficients and 1-norm thresholds (Higham 2005, Table 2.3).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(a: np.ndarray, m: int):
    b = _PADE[m]
    ident = np.eye(a.shape[0])
    if m != 13:
        powers = [ident, a @ a]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ powers[1])
        u = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        v = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
        return a @ u, v
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(a * t)``.

    Scaling and squaring with a diagonal Padé approximant of degree 3-13,
    chosen from the 1-norm of ``a * t``.
    """
    a = _square(a, "a")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    at = a * t
    norm = np.linalg.norm(at, 1)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            u, v = _pade_uv(at, m)
            return np.linalg.solve(v - u, v + u)
    s = max(0, int(math.ceil(math.log2(norm / _THETA[13])))) if norm > 0 else 0
    u, v = _pade_uv(at / 2.0**s, 13)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def integrate_expm(a, delta: float) -> np.ndarray:
    """``∫_0^delta exp(a τ) dτ`` via the exponential of an augmented matrix.

    For invertible ``a`` this equals ``a^{-1} (exp(a delta) - I)``; the
    augmented form is used unconditionally since it also covers singular ``a``.
    """
    a = _square(a, "a")
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = a.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = a
    aug[:n, n:] = np.eye(n)
    return expm(aug, delta)[:n, n:]


# ---------------------------------------------------------------------------
# eigenvalues
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex, sorted by descending real part

    @property
    def abscissa(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def __len__(self):
        return len(self.eigenvalues)


def _sorted_spectrum(values) -> Spectrum:
    vals = np.asarray(values, dtype=complex)
    order = np.lexsort((vals.imag, -vals.real))
    return Spectrum(vals[order])


def _balance(a: np.ndarray) -> None:
    """Diagonal similarity scaling by powers of two (in place)."""
    radix = 2.0
    sqrdx = radix * radix
    n = a.shape[0]
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f


def _hessenberg(a: np.ndarray) -> None:
    """Householder reduction to upper Hessenberg form (in place)."""
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        x[0] -= alpha
        vnorm = np.linalg.norm(x)
        if vnorm == 0.0:
            continue
        v = x / vnorm
        a[k + 1:, :] -= 2.0 * np.outer(v, v @ a[k + 1:, :])
        a[:, k + 1:] -= 2.0 * np.outer(a[:, k + 1:] @ v, v)
        a[k + 2:, k] = 0.0


_EPS = float(np.finfo(float).eps)


def _hqr(a: np.ndarray, max_iter: int):
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Destroys ``a``. Deflates one or two eigenvalues at a time from the bottom
    of the active block, with exceptional shifts at iterations 10 and 20.
    """
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = sum(abs(a[i, j]) for i in range(n) for j in range(max(i - 1, 0), n))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                sub = abs(a[l, l - 1])
                # local test, plus a norm-wise one for blocks far below the matrix scale
                if sub + s == s or sub <= _EPS * anorm:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + (z if p >= 0 else -z)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its >= max_iter:
                raise ConvergenceError(
                    "QR iteration did not converge",
                    {"unconverged_index": nn, "iterations": its,
                     "subdiagonal": float(a[nn, nn - 1]), "shift": t},
                )
            if its in (10, 20):
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.sqrt(p * p + q * q + r * r)
                if p < 0:
                    s = -s
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = a[k, j] + q * a[k + 1, j]
                    if k != nn - 1:
                        p += r * a[k + 2, j]
                        a[k + 2, j] -= p * z
                    a[k + 1, j] -= p * y
                    a[k, j] -= p * x
                mmin = min(nn, k + 3)
                for i in range(l, mmin + 1):
                    p = x * a[i, k] + y * a[i, k + 1]
                    if k != nn - 1:
                        p += z * a[i, k + 2]
                        a[i, k + 2] -= p * r
                    a[i, k + 1] -= p * q
                    a[i, k] -= p
    return wr + 1j * wi


def eigenvalues(a, tol: Tolerances = DEFAULT) -> Spectrum:
    """Full spectrum of a real square matrix.

    Orders above ``tol.eig_max_order`` are refused; block-structured networks
    should go through :func:`conecert.network.ring_spectrum` instead.
    """
    a = _square(a, "a")
    n = a.shape[0]
    if n > tol.eig_max_order:
        raise ShapeError(
            f"order {n} exceeds the dense eigenvalue cap {tol.eig_max_order}; "
            "use the structured (block-circulant) path"
        )
    # power-of-two rescaling keeps tiny or huge entries away from under/overflow
    peak = float(np.abs(a).max()) if a.size else 0.0
    shift = -math.frexp(peak)[1] if peak > 0 else 0
    work = np.ldexp(a, shift)
    _balance(work)
    _hessenberg(work)
    spec = _sorted_spectrum(_hqr(work, tol.eig_max_iter))
    if shift:
        spec = Spectrum(np.ldexp(spec.eigenvalues.real, -shift)
                        + 1j * np.ldexp(spec.eigenvalues.imag, -shift))
    return spec


def complex_eigenvalues(m) -> np.ndarray:
    """Eigenvalues of a complex square matrix through its real embedding.

    The real matrix ``[[Re, -Im], [Im, Re]]`` has spectrum
    ``eig(m) ∪ conj(eig(m))``; the caller gets that doubled multiset.
    """
    m = np.asarray(m, dtype=complex)
    re, im = m.real, m.imag
    emb = np.block([[re, -im], [im, re]])
    return eigenvalues(emb).eigenvalues


def spectral_abscissa(a, tol: Tolerances = DEFAULT) -> float:
    return eigenvalues(a, tol).abscissa
