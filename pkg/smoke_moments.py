"""Smoke-check the moments-module physics before implementation."""
import math
import numpy as np

from starqm.fieldgrid import GridSpec, Field1D, Field2D
from starqm.star import StarKernel, star
from starqm import phasecalc
from starqm.operators import (
    x_theta_l, t_theta_l, p_x, p_t, x_c, t_c, apply, commutator,
    transform_matrix, hamiltonian,
)
from starqm.dynamics import OscillatorParams, oscillator_eigenstate

theta = 0.1
L = 8 * math.sqrt(theta)
spec = GridSpec(128, 128, -L, L, -L, L, theta)
kernel = StarKernel(theta)
tt, xx = np.meshgrid(spec.t, spec.x, indexing="ij")
vals = np.exp(-(tt**2 + xx**2) / (2 * theta)) / math.sqrt(2 * math.pi * theta)
psi = Field2D(spec, vals)


def hs(bra, ket):
    prod = star(kernel, Field2D(spec, np.conj(bra.values)), ket)
    return complex(np.sum(prod.values) * spec.dx * spec.dt)


den = hs(psi, psi)
print("HS norm:", den)

ops = [x_theta_l(theta), t_theta_l(theta), p_x(), p_t()]
names = ["X", "T", "Px", "Pt"]
means = [hs(psi, apply(op, psi)) / den for op in ops]
print("means:", [f"{m:.3e}" for m in means])

V = np.zeros((4, 4))
imag_max = 0.0
for i in range(4):
    for j in range(i, 4):
        so = ops[i].compose(ops[j]) + ops[j].compose(ops[i])
        v = 0.5 * hs(psi, apply(so, psi)) / den
        imag_max = max(imag_max, abs(v.imag))
        V[i, j] = V[j, i] = v.real - means[i].real * means[j].real
np.set_printoptions(precision=10, suppress=True)
print("V^theta (X,T,Px,Pt):\n", V)
print("imag residue:", imag_max)
print("det V:", np.linalg.det(V))

M = transform_matrix(theta)
V0 = M @ V @ M.T
print("V0 = M V M^T:\n", V0)
print("det V0:", np.linalg.det(V0))

Omega0 = np.zeros((4, 4))
Omega0[0, 2] = 0.5
Omega0[1, 3] = 0.5
Omega0 -= Omega0.T
nus = np.abs(np.linalg.eigvals(np.linalg.solve(Omega0, V0)))
print("nus (Omega^-1 V0):", sorted(nus, reverse=True))
nus2 = np.abs(np.linalg.eigvals(2j * Omega0 @ V0))
print("|eig(2i Omega V0)|:", sorted(nus2, reverse=True))

# deformed form maps to the canonical one under M
Om_th = np.zeros((4, 4))
Om_th[0, 1] = -theta / 2
Om_th[0, 2] = 0.5
Om_th[1, 3] = 0.5
Om_th -= Om_th.T
print("M Om_th M^T - Om0 max:", np.max(np.abs(M @ Om_th @ M.T - Omega0)))

print()
print("--- stationary slice expectations (oscillator ground, theta=0.1) ---")
params = OscillatorParams(1.0, 1.0, theta)
espec = GridSpec(8, 512, 0.0, 0.2, -12.0, 12.0, theta)
g = oscillator_eigenstate(params, 0, espec)
E0 = float(g.metadata["energy"])
prof = phasecalc.stationary_part(espec, E0, g.values * np.exp(1j * E0 * g.t_slice))
norm = phasecalc.induced_product(prof, prof, 0.0)
print("induced norm:", norm)


def ev(op, t=0.0):
    ket = apply(op, prof)
    return phasecalc.induced_product(prof, ket, t) / norm


X = x_theta_l(theta)
T = t_theta_l(theta)
print("<X_th>:", ev(X))
print("<T_th> at t=0:", ev(T), " at t=0.1:", ev(T, 0.1))
print("<T_th^2> at t=0:", ev(T.compose(T)), "(expect 0.055)")
print("<T_th^2>-t^2 at t=0.1:", ev(T.compose(T), 0.1) - 0.01)
print("<Px^2>:", ev(p_x().compose(p_x())), "(expect 0.5)")
print("<Pt>:", ev(p_t()), "(expect -0.5)")
print("<X_th^2>:", ev(X.compose(X)), "(expect 0.5)")
XT_sym = X.compose(T) + T.compose(X)
print("sym cov X,T at t=0:", 0.5 * ev(XT_sym) - ev(X) * ev(T))
print("<x_mult>:", ev(hamiltonian(1.0, [0.0, 1.0], theta) - hamiltonian(1.0, None, theta)),
      "(expect theta*E0/2 =", theta * E0 / 2, ")")

# Ehrenfest rhs pieces on the ground state, O = P_x
mw2 = params.m * params.omega**2
H = hamiltonian(params.m, None, theta) + (X.compose(X) * (0.5 * mw2))
comm = commutator(H, p_x())
print("i<[H,Px]>:", 1j * ev(comm), "(expect ~0)")
from starqm.operators import SymbolOperator
Vp = SymbolOperator("composite", theta, {(0, 1, 0, 0): mw2})
W = SymbolOperator("composite", theta, {(0, 0, 0, 1): mw2, (0, 0, 1, 0): -1j * mw2})
rhs116 = -ev(Vp) - (theta / 2) * ev(W)
print("eq116 rhs:", rhs116, "(expect ~0 up to O(theta^2))")
comm_T = commutator(H, T)
print("i<[H,T_th]> + <dT/dt=1>:", 1j * ev(comm_T) + 1.0, "(expect ~1)")
comm_X = commutator(H, X)
print("i<[H,X_th]>:", 1j * ev(comm_X), "(expect <P>/m = 0)")
