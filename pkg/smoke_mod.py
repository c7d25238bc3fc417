import numpy as np

from starqm import dynamics, moments, operators
from starqm.dynamics import OscillatorParams, Potential
from starqm.fieldgrid import GridSpec
from starqm.star import StarKernel

theta = 0.1

# --- coherent covariance ---------------------------------------------------
V = moments.coherent_variance_matrix(theta)
print("cov dev:", V.metadata["cross_check_max_abs"])
print("det:", V.det, " spread X:", V.spread("X"), " unc XT:", V.uncertainty("X", "T"))
print(V.values)

# --- symplectic spectrum ----------------------------------------------------
Om_th = moments.symplectic_form(theta)
Om_0 = moments.symplectic_form(0.0)
M = operators.transform_matrix(theta)
V0 = moments.VarianceMatrix(M @ V.values @ M.T, theta=theta)
print("nu(V^theta, Om^theta):", moments.symplectic_eigenvalues(V, Om_th))
print("nu(V^0, Om^0):", moments.symplectic_eigenvalues(V0, Om_0))
vac = moments.VarianceMatrix(np.eye(4) * 0.5)
print("nu(I/2, Om^0):", moments.symplectic_eigenvalues(vac, Om_0))
rng = np.random.default_rng(7)
A = rng.normal(size=(4, 4))
S = moments.VarianceMatrix(A @ A.T + 4 * np.eye(4))
print("det preserved:", np.linalg.det(M @ S.values @ M.T) - S.det)
nus = moments.symplectic_eigenvalues(S, Om_0)
print("nu1*nu2 vs 4 sqrt(detV):", nus[0] * nus[2], 4 * np.sqrt(S.det))

# --- stationary expectations ------------------------------------------------
spec = GridSpec(8, 512, 0.0, 0.2, -12.0, 12.0, theta)
kernel = StarKernel(theta)
psi0 = dynamics.oscillator_eigenstate(OscillatorParams(1.0, 1.0, theta), 0, spec)
E0 = psi0.metadata["energy"]
Xl = operators.x_theta_l(theta)
Tl = operators.t_theta_l(theta)
Px = operators.p_x()
Pt = operators.p_t()
print("E0:", E0)
print("<X>:", moments.expectation(Xl, psi0, kernel))
print("<X^2>:", moments.expectation(Xl.compose(Xl), psi0, kernel))
print("<T^2> at t=0:", moments.expectation(Tl.compose(Tl), psi0, kernel, t=0.0))
print("<P_x^2>:", moments.expectation(Px.compose(Px), psi0, kernel))
print("<P_t>:", moments.expectation(Pt, psi0, kernel))
print("DX DT at t=0:", moments.uncertainty_product(Xl, Tl, psi0, kernel, t=0.0))

rec = moments.robertson_schrodinger_check(Xl, Px, psi0, kernel)
print("RS X,P_x:", rec)
rec = moments.robertson_schrodinger_check(Xl, Tl, psi0, kernel, t=0.0)
print("RS X,T:", rec)

# --- ehrenfest on the ground trajectory --------------------------------------
pot = Potential.harmonic(1.0, 1.0)
traj = dynamics.evolve(psi0, pot, kernel, 1.0, 2e-4, 50, record_every=5)
print("n slices:", len(traj), " spacing:", traj[1].t_slice + traj[1].metadata["elapsed"] - traj[0].t_slice - traj[0].metadata["elapsed"])
for op, name in ((Xl, "X"), (Px, "P_x"), (Tl, "T")):
    out = moments.ehrenfest_residual(traj, op, kernel, 1.0, pot)
    line = f"ehrenfest {name}: max resid {np.max(out['residual']):.3e}"
    if "force_residual" in out:
        line += f"  force {np.max(out['force_residual']):.3e}"
    print(line)

print(moments.residual_csv(out["t"][:2], out["residual"][:2]))
