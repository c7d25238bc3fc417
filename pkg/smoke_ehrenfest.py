"""Ehrenfest residuals along evolve() trajectories, both deformed and plain."""
import math
import numpy as np

from starqm.fieldgrid import GridSpec, Field1D
from starqm.star import StarKernel
from starqm import phasecalc
from starqm.operators import (
    SymbolOperator, x_theta_l, t_theta_l, p_x, p_t, apply, commutator, hamiltonian,
)
from starqm.dynamics import OscillatorParams, Potential, oscillator_eigenstate, evolve


def expect_slice(op, fld, t=None):
    spec = fld.spec
    E = fld.metadata.get("energy")
    if t is None:
        t = fld.t_slice + float(fld.metadata.get("elapsed", 0.0))
    if E is None:
        if spec.theta != 0.0 or any(key[2] > 0 for key in op.terms):
            raise ValueError("needs an energy tag")
        E = 0.0
    E = float(E)
    prof = phasecalc.stationary_part(spec, E, fld.values * np.exp(1j * E * t))
    den = phasecalc.induced_product(prof, prof, t)
    num = phasecalc.induced_product(prof, apply(op, prof), t)
    return complex(num / den)


def fd5(series, h):
    f = np.asarray(series)
    out = np.empty(len(f) - 4, dtype=complex)
    for k in range(2, len(f) - 2):
        out[k - 2] = (-f[k + 2] + 8 * f[k + 1] - 8 * f[k - 1] + f[k - 2]) / (12 * h)
    return out


def time_derivative_terms(op):
    return SymbolOperator(
        "composite", op.theta,
        {(a - 1, b, c, d): a * v for (a, b, c, d), v in op.terms.items() if a > 0},
    )


print("--- deformed oscillator ground trajectory, theta=0.1 ---")
theta = 0.1
params = OscillatorParams(1.0, 1.0, theta)
espec = GridSpec(8, 512, 0.0, 0.2, -12.0, 12.0, theta)
g = oscillator_eigenstate(params, 0, espec)
kernel = StarKernel(theta)
pot = Potential.harmonic(1.0, 1.0)
traj = evolve(g, pot, kernel, 1.0, 2e-4, 50, record_every=5)
print("snapshots:", len(traj), "h =", traj[1].metadata["elapsed"] - traj[0].metadata["elapsed"])

mw2 = 1.0
X = x_theta_l(theta)
T = t_theta_l(theta)
H = hamiltonian(1.0, None, theta) + X.compose(X) * (0.5 * mw2)
ts = np.array([f.t_slice + f.metadata["elapsed"] for f in traj])
h = ts[1] - ts[0]
for name, op in [("X_th", X), ("P_x", p_x()), ("T_th", T)]:
    series = [expect_slice(op, f) for f in traj]
    fd = fd5(series, h)
    rhs_op = commutator(H, op) * 1j + time_derivative_terms(op)
    rhs = np.array([expect_slice(rhs_op, f) for f in traj[2:-2]])
    res = np.abs(fd - rhs)
    print(f"  O={name}: max residual {np.max(res):.3e}  <O> range "
          f"[{np.min(np.real(series)):.3e}, {np.max(np.real(series)):.3e}]")

Vp = SymbolOperator("composite", theta, {(0, 1, 0, 0): mw2})
W = SymbolOperator("composite", theta, {(0, 0, 0, 1): mw2, (0, 0, 1, 0): -1j * mw2})
series = [expect_slice(p_x(), f) for f in traj]
fd = fd5(series, h)
force = np.array([-expect_slice(Vp, f) - (theta / 2) * expect_slice(W, f)
                  for f in traj[2:-2]])
print(f"  eq-force P_x: max residual {np.max(np.abs(fd - force)):.3e}")

print()
print("--- displaced packet, theta=0, dt-halving ---")
spec0 = GridSpec(8, 64, 0.0, 0.2, -12.0, 12.0, 0.0)
x = spec0.x
vals = (1.0 / math.pi) ** 0.25 * np.exp(-((x - 1.0) ** 2) / 2.0)
psi0 = Field1D(spec0, 0.0, vals.astype(complex), {})
k0 = StarKernel(0.0)
X0 = x_theta_l(0.0)
H0 = hamiltonian(1.0, None, 0.0) + X0.compose(X0) * (0.5 * mw2)
res_by_dt = {}
for dt, rec in [(4e-3, 10), (2e-3, 20)]:
    steps = int(round(2.0 / dt))
    traj0 = evolve(psi0, pot, k0, 1.0, dt, steps, record_every=rec)
    ts0 = np.array([f.t_slice + f.metadata["elapsed"] for f in traj0])
    h0 = ts0[1] - ts0[0]
    assert np.max(np.abs(np.diff(ts0) - h0)) < 1e-12
    for name, op in [("x", X0), ("p", p_x())]:
        series = [expect_slice(op, f) for f in traj0]
        fd = fd5(series, h0)
        rhs_op = commutator(H0, op) * 1j + time_derivative_terms(op)
        rhs = np.array([expect_slice(rhs_op, f) for f in traj0[2:-2]])
        res = float(np.max(np.abs(fd - rhs)))
        res_by_dt[(dt, name)] = res
        print(f"  dt={dt}: O={name} max residual {res:.3e} "
              f"(snapshots {len(traj0)}, h={h0})")
print("  ratio x:", res_by_dt[(4e-3, 'x')] / res_by_dt[(2e-3, 'x')])
print("  ratio p:", res_by_dt[(4e-3, 'p')] / res_by_dt[(2e-3, 'p')])
