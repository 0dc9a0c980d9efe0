"""Pure numpy versions of the compiled kernels (same signatures, same results)."""
import numpy as np


def smoothstep(t):
    """C-infinity step: 0 for t<=0, 1 for t>=1."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 1e-300, 1 - 1e-16)
    with np.errstate(over="ignore", under="ignore"):
        a = np.exp(-1.0 / tc)
        b = np.exp(-1.0 / (1.0 - tc))
        s = a / (a + b)
    s = np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, s))
    return s if s.ndim else float(s)


def direct_velocity(tx, sx, swo, delta, width, chunk=2_000_000):
    tx = np.ascontiguousarray(tx, dtype=float)
    sx = np.ascontiguousarray(sx, dtype=float)
    out = np.zeros((len(tx), 3))
    rows = max(1, chunk // max(len(sx), 1))
    for a in range(0, len(tx), rows):
        x = tx[a:a + rows]
        d = sx[None, :, :] - x[:, None, :]
        c2 = np.einsum("ijk,ijk->ij", d, d)
        c = np.sqrt(c2)
        eta = smoothstep((c - delta) / width)
        eta[c2 <= delta * delta] = 0.0
        f = eta * swo[None, :] / np.maximum(c2, 1e-300)
        cr = np.cross(x[:, None, :], d)
        out[a:a + rows] = np.einsum("ij,ijk->ik", f, cr) / (2 * np.pi)
    return out


_CR = (
    lambda t: ((-0.5 * t + 1.0) * t - 0.5) * t,
    lambda t: (1.5 * t - 2.5) * t * t + 1.0,
    lambda t: ((-1.5 * t + 2.0) * t + 0.5) * t,
    lambda t: (0.5 * t - 0.5) * t * t,
)


def sample_padded(P, u, v, cubic, clip):
    P = np.asarray(P, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    iu = np.floor(u).astype(np.intp)
    iv = np.floor(v).astype(np.intp)
    tu = u - iu
    tv = v - iv
    p00 = P[iv, iu]
    p01 = P[iv, iu + 1]
    p10 = P[iv + 1, iu]
    p11 = P[iv + 1, iu + 1]
    if not cubic:
        return (1 - tv) * ((1 - tu) * p00 + tu * p01) + tv * ((1 - tu) * p10 + tu * p11)
    wu = [f(tu) for f in _CR]
    wv = [f(tv) for f in _CR]
    s = np.zeros_like(u)
    for b in range(4):
        row = np.zeros_like(u)
        for a in range(4):
            row += wu[a] * P[iv - 1 + b, iu - 1 + a]
        s += wv[b] * row
    if clip:
        lo = np.minimum(np.minimum(p00, p01), np.minimum(p10, p11))
        hi = np.maximum(np.maximum(p00, p01), np.maximum(p10, p11))
        s = np.clip(s, lo, hi)
    return s
