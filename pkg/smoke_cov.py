"""Coherent covariance via HS star pairing with a noise-robust mode cutoff."""
import math
import time
import numpy as np

from starqm.fieldgrid import GridSpec, Field2D
from starqm.star import StarKernel, star
from starqm.operators import x_theta_l, t_theta_l, p_x, p_t, apply, transform_matrix

np.set_printoptions(precision=10, suppress=True)

for theta, n, cut in [(0.1, 128, 1e-10), (0.1, 64, 1e-10), (0.1, 128, 1e-12),
                      (0.05, 128, 1e-10), (0.4, 128, 1e-10)]:
    L = 8 * math.sqrt(theta)
    spec = GridSpec(n, n, -L, L, -L, L, theta)
    kernel = StarKernel(theta, mode_cutoff=cut)
    tt, xx = np.meshgrid(spec.t, spec.x, indexing="ij")
    vals = np.exp(-(tt**2 + xx**2) / (2 * theta)) / math.sqrt(2 * math.pi * theta)
    psi = Field2D(spec, vals)

    def hs(bra, ket):
        prod = star(kernel, Field2D(spec, np.conj(bra.values)), ket)
        return complex(np.sum(prod.values) * spec.dx * spec.dt)

    t0 = time.time()
    den = hs(psi, psi)
    ops = [x_theta_l(theta), t_theta_l(theta), p_x(), p_t()]
    means = np.array([hs(psi, apply(op, psi)) / den for op in ops])
    V = np.zeros((4, 4))
    imag_max = 0.0
    for i in range(4):
        for j in range(i, 4):
            so = ops[i].compose(ops[j]) + ops[j].compose(ops[i])
            v = 0.5 * hs(psi, apply(so, psi)) / den
            imag_max = max(imag_max, abs(v.imag))
            V[i, j] = V[j, i] = v.real - means[i].real * means[j].real
    el = time.time() - t0

    A = np.zeros((4, 4))
    A[0, 0] = A[1, 1] = theta / 2
    A[2, 2] = A[3, 3] = 1 / theta
    A[0, 3] = A[3, 0] = 0.5
    A[1, 2] = A[2, 1] = -0.5
    dev = np.max(np.abs(V - A))
    print(f"theta={theta} n={n} cutoff={cut}: dev={dev:.3e} "
          f"imag={imag_max:.2e} |mean|max={np.max(np.abs(means)):.2e} "
          f"norm={abs(den - 1):.2e} det={np.linalg.det(V):.12f} [{el:.1f}s]")
    if dev > 1e-6:
        print(V)
