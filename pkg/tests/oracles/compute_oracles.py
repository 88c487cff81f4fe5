"""Independent oracles for the frozen reference values in the test suite.

Run once with ``python3 tests/oracles/compute_oracles.py``; the printed
numbers are pasted into the tests.  Nothing here imports the package: each
value comes from a separate route (mpmath Rosenbluth potential, scipy
adaptive quadrature, Gauss-Legendre box quadrature, fixed-point and
bisection solvers written from scratch).
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 40


def mu_mass_midpoint(n_v=32, v_max=6.0):
    """Midpoint sum of the unit Maxwellian in extended precision."""
    h = mp.mpf(2 * v_max) / n_v
    s = mp.fsum(mp.e ** (-((-v_max + (i + mp.mpf(1) / 2) * h) ** 2) / 2) for i in range(n_v))
    return (s * h / mp.sqrt(2 * mp.pi)) ** 3


def rosenbluth_psi(r):
    """``|.| * mu`` at radius ``r`` by direct radial quadrature."""
    r = mp.mpf(r)

    def inner(s):
        # Angular average of |v - w| for |v| = r, |w| = s.
        return ((r + s) ** 3 - abs(r - s) ** 3) / (6 * r * s)

    mu = lambda s: mp.e ** (-s * s / 2) / (2 * mp.pi) ** 1.5
    return 4 * mp.pi * mp.quad(lambda s: s * s * mu(s) * inner(s), [0, r, mp.inf])


def sigma_eigs(r):
    """Parallel ``psi''`` and perpendicular ``psi'/r`` eigenvalues of ``sigma``."""
    d1 = mp.diff(rosenbluth_psi, r, 1)
    d2 = mp.diff(rosenbluth_psi, r, 2)
    return float(d2), float(d1 / r)


def sigma0_tplquad():
    """``(Phi_11 * mu)(0)`` by adaptive 3D quadrature in spherical coordinates."""
    def f(phi, th, r):
        w1 = math.sin(th) * math.cos(phi)
        return (1.0 - w1 * w1) / r * math.exp(-r * r / 2) * r * r * math.sin(th)

    val, _ = integrate.tplquad(f, 0, 40, 0, math.pi, 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13)
    return val * (2 * math.pi) ** -1.5


def gl_box(n, v_max):
    x, w = np.polynomial.legendre.leggauss(n)
    return x * v_max, w * v_max


def h_sigma_v1_oracle(v_max=6.0, n=96):
    """``int_box sigma_11 dv`` by tensor Gauss-Legendre on the erf form of sigma."""
    x, w = gl_box(n, v_max)
    V = np.stack(np.meshgrid(x, x, x, indexing="ij"))
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    r = np.linalg.norm(V, axis=0)
    # Eigenvalues from psi = (r + 1/r) erf(r/sqrt2) + sqrt(2/pi) e^{-r^2/2}.
    from scipy.special import erf
    rr = np.maximum(r, 1e-6)
    ef = erf(rr / math.sqrt(2))
    g = math.sqrt(2 / math.pi) * np.exp(-rr * rr / 2)
    psi1 = (1 - 1 / rr ** 2) * ef + g / rr
    lam_perp = psi1 / rr
    lam_par = 2 * ef / rr ** 3 - 2 * g / rr ** 2
    s11 = lam_perp + (lam_par - lam_perp) * (V[0] / rr) ** 2
    return float(np.sum(W * s11))


def mu_weighted_l2(m, v_max=6.0, n=160):
    """``|<v>^m mu|_{L^2(box)}`` by tensor Gauss-Legendre."""
    x, w = gl_box(n, v_max)
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    r2 = x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2
    mu = np.exp(-r2 / 2) * (2 * math.pi) ** -1.5
    return float(np.sqrt(np.sum(W * ((1 + r2) ** m) * mu * mu)))


def mu_bessel_l2(r):
    """``|<xi>^r mu_hat|`` over R^3 (Plancherel), radial quadrature."""
    f = lambda k: 4 * math.pi * k * k * (1 + k * k) ** r * math.exp(-k * k)
    val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-15, epsrel=1e-14)
    return math.sqrt(val / (2 * math.pi) ** 3)


def pb_fixed_point(n, beta, iters=4000, c=None):
    """Relaxed fixed point ``(-Lap + a) phi_new = 4 pi (n - e^{beta phi}) + a phi``."""
    N = n.size
    k = np.fft.fftfreq(N, d=1.0 / N)
    k2 = (2 * math.pi * k) ** 2
    a = 4 * math.pi * beta * n.max() if c is None else c
    phi = np.zeros(N)
    for _ in range(iters):
        rhs = 4 * math.pi * (n - np.exp(beta * phi)) + a * phi
        new = np.fft.ifft(np.fft.fft(rhs) / (k2 + a)).real
        if np.max(np.abs(new - phi)) < 1e-15:
            phi = new
            break
        phi = new
    return phi


def field_energy_1d(phi):
    N = phi.size
    k = np.fft.fftfreq(N, d=1.0 / N)
    ph = np.fft.fft(phi) / N
    return float(np.sum((2 * math.pi * k) ** 2 * np.abs(ph) ** 2) / (8 * math.pi))


def coupled_bisection(n, E, tol=1e-12):
    g = lambda b: 1.5 / b + field_energy_1d(pb_fixed_point(n, b)) - E
    lo, hi = 1.5 / E, 10.0 / E
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


if __name__ == "__main__":
    print("mu mass midpoint n_v=32:", mp.nstr(mu_mass_midpoint(), 20))
    print("sigma(0)_11 tplquad:", repr(sigma0_tplquad()))
    for r in (0.5, 1.0, 2.0, 5.0):
        print(f"sigma eigs r={r}:", sigma_eigs(r))
    print("int_box sigma_11:", repr(h_sigma_v1_oracle()))
    for m in (5, 10, 15):
        print(f"|<v>^{m} mu|:", repr(mu_weighted_l2(m)))
    print("|<xi>^0.5 mu|:", repr(mu_bessel_l2(0.5)))
    x = np.arange(32) / 32
    n = 1 + 0.1 * np.cos(2 * math.pi * x)
    phi = pb_fixed_point(n, 1.0)
    print("pb beta=1 phi[0], max|phi|:", repr(phi[0]), repr(np.abs(phi).max()))
    print("coupled beta E=1:", repr(coupled_bisection(n, 1.0)))
