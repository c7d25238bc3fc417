"""Expectation values and fluctuation analysis under the induced pairing.

One `expectation` front end covers the three state representations: a
stationary-tagged slice is lifted to a phase polynomial so coordinate-t and
d_t monomials act exactly, a full field paired on a fixed-t line goes
through the induced product, and a full field with no line selected is
paired over the whole plane, integral dt dx psi* (star) O psi -- the right
reading for coherent basis elements, which are not on shell.

On top of that sit the uncertainty products, the 4x4 covariance matrix of
the coherent element together with its commutator (symplectic) form, the
Williamson spectrum, both uncertainty bounds, and the residual of the
evolution law d<O>/dt = i<[H, O]> + <d_t O> along stored trajectories.

Covariance analysis at theta > 0 is transferred to commuting coordinates
first -- V -> M V M^T with the frame map M -- because the Williamson
machinery presumes a theta = 0 block form; M maps the deformed commutator
form exactly onto that block form, so nothing is lost in transit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import phasecalc, symbols
from .dynamics import Potential
from .fieldgrid import Field1D, Field2D, GridSpec
from .operators import (
    CANONICAL_ORDERING,
    SymbolOperator,
    apply,
    commutator,
    hamiltonian,
    ordering_permutation,
    p_t,
    p_x,
    t_theta_l,
    x_theta_l,
)
from .star import StarKernel, star
from .symbols import CoherentPoint, coherent_symbol

_IMAG_TOL = 1e-8
_NORM_TOL = 1e-6
_VAR_FLOOR = -1e-10
_CROSS_TOL = 1e-6
_BOUND_TOL = 1e-8

# Whole-plane pairings of operator-applied symbols run through the star
# engine, whose mode multiplier grows like e^{theta |k||k'|/2} on
# anti-aligned mode pairs.  Derivative factors in a composed operator lift
# the rounding floor of the input spectrum above the engine's default
# 1e-14 cutoff, and the growth then amplifies exactly those modes; pairing
# therefore coarsens any finer cutoff to this value, which still keeps
# every mode a Gaussian symbol populates above the 1e-10 level.
_PAIRING_MODE_CUTOFF = 1e-10

# Members of a Williamson eigenvalue pair must agree to this relative gap.
_PAIR_RTOL = 1e-6


def _require_voros(kernel: StarKernel, what: str) -> None:
    if kernel.flavor != "voros":
        raise ValueError(f"{what} is defined through the Voros pairing; got flavor {kernel.flavor!r}")


def _require_theta_match(kernel: StarKernel, spec: GridSpec) -> None:
    if kernel.theta != spec.theta:
        raise ValueError(f"kernel.theta={kernel.theta} does not match grid theta={spec.theta}")


# ---------------------------------------------------------------------------
# covariance and commutator-form containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceMatrix:
    """Symmetrized second moments V_ij = <{Z_i - <Z_i>, Z_j - <Z_j>}>/2."""

    values: np.ndarray
    ordering: tuple[str, ...] = CANONICAL_ORDERING
    theta: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (4, 4):
            raise ValueError(f"variance matrix must be 4x4, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("variance matrix entries must be finite")
        scale = max(float(np.max(np.abs(vals))), 1.0)
        asym = float(np.max(np.abs(vals - vals.T)))
        if asym > 1e-10 * scale:
            raise ValueError(f"variance matrix must be symmetric; asymmetry {asym:.3e}")
        vals = 0.5 * (vals + vals.T)
        if float(np.min(np.diag(vals))) < _VAR_FLOOR:
            raise ValueError(f"negative diagonal variance: {np.diag(vals)}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        ordering = tuple(self.ordering)
        ordering_permutation(ordering)
        object.__setattr__(self, "ordering", ordering)
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.values))

    def spread(self, label: str) -> float:
        """Standard deviation of one coordinate, read off the diagonal."""
        if label not in self.ordering:
            raise ValueError(f"unknown label {label!r}; ordering is {self.ordering}")
        i = self.ordering.index(label)
        return math.sqrt(max(float(self.values[i, i]), 0.0))

    def uncertainty(self, a: str, b: str) -> float:
        """Delta_a Delta_b from the diagonal spreads."""
        return self.spread(a) * self.spread(b)

    def to_json(self) -> str:
        return json.dumps(
            {
                "ordering": list(self.ordering),
                "theta": self.theta,
                "values": [[float(v) for v in row] for row in self.values],
            }
        )


@dataclass(frozen=True)
class SymplecticForm:
    """Commutator form Omega_ij = [Z_i, Z_j] / 2i on the declared ordering."""

    values: np.ndarray
    ordering: tuple[str, ...] = CANONICAL_ORDERING
    theta: float = 0.0

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (4, 4):
            raise ValueError(f"symplectic form must be 4x4, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("symplectic form entries must be finite")
        scale = max(float(np.max(np.abs(vals))), 1.0)
        sym = float(np.max(np.abs(vals + vals.T)))
        if sym > 1e-10 * scale:
            raise ValueError(f"symplectic form must be antisymmetric; defect {sym:.3e}")
        vals = 0.5 * (vals - vals.T)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        ordering = tuple(self.ordering)
        ordering_permutation(ordering)
        object.__setattr__(self, "ordering", ordering)
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "ordering": list(self.ordering),
                "theta": self.theta,
                "values": [[float(v) for v in row] for row in self.values],
            }
        )


def symplectic_form(theta: float = 0.0, ordering=CANONICAL_ORDERING) -> SymplecticForm:
    """Commutator form of (X, T, P_x, P_t) at deformation scale theta.

    [X, P_x] = i and [T, P_t] = i give the two 1/2 entries; [X, T] = -i theta
    adds the deformation corner.  theta = 0 is the standard block form.
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    base = np.zeros((4, 4))
    base[0, 2] = 0.5
    base[1, 3] = 0.5
    base[0, 1] = -theta / 2.0
    base = base - base.T
    perm = ordering_permutation(ordering)
    return SymplecticForm(base[np.ix_(perm, perm)], tuple(ordering), theta)


# ---------------------------------------------------------------------------
# expectation values
# ---------------------------------------------------------------------------


def _slice_time(fld: Field1D) -> float:
    """Physical time of a slice: its label plus any evolver offset."""
    return fld.t_slice + float(fld.metadata.get("elapsed", 0.0))


def _pairing_kernel(kernel: StarKernel) -> StarKernel:
    if kernel.mode_cutoff is not None and kernel.mode_cutoff < _PAIRING_MODE_CUTOFF:
        return replace(kernel, mode_cutoff=_PAIRING_MODE_CUTOFF)
    return kernel


def _checked_norm(norm: complex) -> float:
    if abs(norm.imag) > _IMAG_TOL * max(abs(norm.real), 1.0):
        raise ValueError(f"pairing norm carries an imaginary residue: {norm:.6g}")
    if abs(norm.real - 1.0) > _NORM_TOL:
        raise ValueError(
            f"state is not normalized under the induced pairing: norm "
            f"{norm.real:.9g} is off unity by more than {_NORM_TOL}"
        )
    return norm.real


def _plane_pairing(kernel: StarKernel, bra: Field2D, ket: Field2D) -> complex:
    prod = star(kernel, Field2D(bra.spec, np.conj(bra.values)), ket)
    return complex(np.sum(prod.values) * bra.spec.dt * bra.spec.dx)


def expectation(
    op: SymbolOperator,
    psi: Field1D | Field2D,
    kernel: StarKernel,
    t: float | None = None,
) -> complex:
    """<O>_t = (psi, O psi)_t / (psi, psi)_t under the induced pairing.

    A Field1D is read as a stationary slice: metadata['energy'] fixes the
    temporal reduction and the state is lifted to a phase polynomial, so
    t-multiplication and d_t factors act exactly (a global phase from the
    unwind time cancels in the ratio).  The slice is evaluated at time t,
    defaulting to its physical time t_slice + metadata['elapsed'].  An
    untagged slice is accepted only at theta = 0 for operators free of d_t
    factors, where the reduction is vacuous.

    A Field2D with explicit t pairs on that fixed-t grid line; with t=None
    it pairs over the whole plane, integral dt dx psi* (star) O psi.  Plane
    and fixed-line pairings coarsen a finer-than-1e-10 kernel mode cutoff
    (see _PAIRING_MODE_CUTOFF).

    The state must arrive normalized: a pairing norm off unity beyond 1e-6
    is rejected; the residual deviation below that is divided out.
    """
    if not isinstance(op, SymbolOperator):
        raise TypeError(f"expected a SymbolOperator, got {type(op).__name__}")
    _require_voros(kernel, "the expectation value")

    if isinstance(psi, Field1D):
        spec = psi.spec
        _require_theta_match(kernel, spec)
        t_eval = _slice_time(psi) if t is None else float(t)
        energy = psi.metadata.get("energy")
        if energy is None:
            if spec.theta != 0.0 or any(key[2] > 0 for key in op.terms):
                raise ValueError(
                    "slice is missing temporal information: tag it with "
                    "metadata['energy'] (the reduction d_t -> -i*energy); an "
                    "untagged slice works only at theta = 0 for operators "
                    "with no d_t factors"
                )
            energy = 0.0
        energy = float(energy)
        profile = phasecalc.stationary_part(
            spec, energy, psi.values * np.exp(1j * energy * t_eval)
        )
        norm = _checked_norm(complex(phasecalc.induced_product(profile, profile, t_eval)))
        num = phasecalc.induced_product(profile, apply(op, profile), t_eval)
        return complex(num) / norm

    if isinstance(psi, Field2D):
        spec = psi.spec
        _require_theta_match(kernel, spec)
        kernel = _pairing_kernel(kernel)
        if t is not None:
            norm = _checked_norm(symbols.induced_inner_product(kernel, psi, psi, t=float(t)))
            num = symbols.induced_inner_product(kernel, psi, apply(op, psi), t=float(t))
            return complex(num) / norm
        norm = _checked_norm(_plane_pairing(kernel, psi, psi))
        return _plane_pairing(kernel, psi, apply(op, psi)) / norm

    raise TypeError(f"expected a Field1D or Field2D state, got {type(psi).__name__}")


def _variance(
    op: SymbolOperator,
    psi: Field1D | Field2D,
    kernel: StarKernel,
    t: float | None,
    label: str,
) -> tuple[float, float]:
    """(mean, variance) of a hermitian operator, with reality guards."""
    mean = expectation(op, psi, kernel, t)
    second = expectation(op.compose(op), psi, kernel, t)
    scale = 1.0 + abs(mean) + abs(second)
    if abs(mean.imag) > _IMAG_TOL * scale or abs(second.imag) > _IMAG_TOL * scale:
        raise ValueError(
            f"moments of {label} carry imaginary residues beyond {_IMAG_TOL}: "
            f"<O> = {mean:.6g}, <O^2> = {second:.6g}"
        )
    var = second.real - mean.real**2
    if var < _VAR_FLOOR:
        raise ValueError(
            f"variance of {label} came out {var:.3e} < {_VAR_FLOOR}: the pairing "
            f"lost positivity (refine the grid or coarsen the mode cutoff)"
        )
    return mean.real, max(var, 0.0)


def uncertainty_product(
    opA: SymbolOperator,
    opB: SymbolOperator,
    psi: Field1D | Field2D,
    kernel: StarKernel,
    t: float | None = None,
) -> float:
    """Delta A . Delta B with Delta O = sqrt(<O^2> - <O>^2)."""
    _, var_a = _variance(opA, psi, kernel, t, "the first operator")
    _, var_b = _variance(opB, psi, kernel, t, "the second operator")
    return math.sqrt(var_a) * math.sqrt(var_b)


# ---------------------------------------------------------------------------
# coherent-element covariance
# ---------------------------------------------------------------------------


def coherent_variance_matrix(
    theta: float,
    kernel: StarKernel | None = None,
    spec: GridSpec | None = None,
) -> VarianceMatrix:
    """Covariance of (X, T, P_x, P_t) on a coherent basis element.

    In closed form the matrix is diag(theta/2, theta/2, 1/theta, 1/theta)
    with cross entries V[X, P_t] = +1/2 and V[T, P_x] = -1/2: the coordinate
    spreads are the element's Gaussian widths, the momentum spreads their
    duals, and the cross terms come from the one-sided coordinate action
    (x from the left carries (theta/2) d_x - (i theta/2) d_t along with the
    multiplication, and the d_t half couples to P_t).  Each conjugate 2x2
    block {X, P_t} and {T, P_x} has determinant (theta/2)(1/theta) - 1/4 =
    1/4, so det V = 1/16 at every theta.

    The same matrix is recomputed numerically from the sampled symbol via
    `expectation` over the whole plane, and the two must agree entrywise
    within 1e-6; the achieved deviation lands in
    metadata['cross_check_max_abs'].  Omitting kernel/spec uses a
    box of reach 8 sqrt(theta) at 128x128 with the pairing mode cutoff.
    """
    if not theta > 0:
        raise ValueError(f"the coherent element needs theta > 0, got {theta}")
    if spec is None:
        reach = 8.0 * math.sqrt(theta)
        spec = GridSpec(128, 128, -reach, reach, -reach, reach, theta)
    if kernel is None:
        kernel = StarKernel(theta, mode_cutoff=_PAIRING_MODE_CUTOFF)
    if spec.theta != theta:
        raise ValueError(f"grid theta {spec.theta} does not match theta {theta}")
    _require_theta_match(kernel, spec)

    psi = coherent_symbol(CoherentPoint(0.0, 0.0, theta), spec)
    ops = [x_theta_l(theta), t_theta_l(theta), p_x(), p_t()]
    means = [expectation(op, psi, kernel).real for op in ops]
    numeric = np.zeros((4, 4))
    for i in range(4):
        for j in range(i, 4):
            anti = ops[i].compose(ops[j]) + ops[j].compose(ops[i])
            second = 0.5 * expectation(anti, psi, kernel).real
            numeric[i, j] = numeric[j, i] = second - means[i] * means[j]

    analytic = np.zeros((4, 4))
    analytic[0, 0] = analytic[1, 1] = theta / 2.0
    analytic[2, 2] = analytic[3, 3] = 1.0 / theta
    analytic[0, 3] = analytic[3, 0] = 0.5
    analytic[1, 2] = analytic[2, 1] = -0.5
    deviation = float(np.max(np.abs(numeric - analytic)))
    if deviation > _CROSS_TOL:
        raise ValueError(
            f"numerical covariance disagrees with the closed form by "
            f"{deviation:.3e} (> {_CROSS_TOL}):\nnumeric =\n{numeric}\n"
            f"closed form =\n{analytic}"
        )
    return VarianceMatrix(
        analytic, CANONICAL_ORDERING, theta, {"cross_check_max_abs": deviation}
    )


# ---------------------------------------------------------------------------
# Williamson spectrum and uncertainty bounds
# ---------------------------------------------------------------------------


def symplectic_eigenvalues(V: VarianceMatrix, Omega: SymplecticForm) -> list[float]:
    """Williamson spectrum of V with respect to Omega: each value twice, descending.

    The eigenvalue moduli of Omega^{-1} V come in equal pairs
    (nu_1, nu_1, nu_2, nu_2).  This normalization makes the vacuum matrix
    V = I/2 on the standard theta = 0 form give nu = 1, and a covariance
    matrix is physical exactly when every nu >= 1.
    """
    if V.ordering != Omega.ordering:
        raise ValueError(f"ordering mismatch: {V.ordering} vs {Omega.ordering}")
    spectrum = np.linalg.eigvalsh(V.values)
    if float(np.min(spectrum)) <= 0.0:
        raise ValueError(
            f"variance matrix must be positive definite; spectrum {spectrum}"
        )
    scale = float(np.max(np.abs(Omega.values)))
    det = float(np.linalg.det(Omega.values))
    if scale == 0.0 or abs(det) < 1e-12 * scale**4:
        raise ValueError(f"symplectic form is singular: det = {det:.3e}")
    mods = np.abs(np.linalg.eigvals(np.linalg.solve(Omega.values, V.values)))
    mods = np.sort(mods)[::-1]
    for a, b in ((0, 1), (2, 3)):
        if abs(mods[a] - mods[b]) > _PAIR_RTOL * mods[a]:
            raise ValueError(f"eigenvalue moduli failed to pair up: {mods}")
    return [float(v) for v in mods]


def robertson_schrodinger_check(
    opA: SymbolOperator,
    opB: SymbolOperator,
    psi: Field1D | Field2D,
    kernel: StarKernel,
    t: float | None = None,
) -> dict:
    """Both uncertainty bounds for the pair (A, B) on one state.

    Returns {"lhs": Delta A Delta B, "robertson_rhs": |<[A,B]>|/2,
    "schrodinger_rhs": sqrt(cov^2 + (|<[A,B]>|/2)^2)} with cov the
    symmetrized covariance.  lhs can undercut neither bound for an exact
    pairing, so a shortfall beyond 1e-8 raises, carrying all three numbers.
    """
    mean_a, var_a = _variance(opA, psi, kernel, t, "the first operator")
    mean_b, var_b = _variance(opB, psi, kernel, t, "the second operator")
    anti = expectation(opA.compose(opB) + opB.compose(opA), psi, kernel, t)
    comm = expectation(commutator(opA, opB), psi, kernel, t)
    lhs = math.sqrt(var_a) * math.sqrt(var_b)
    cov = 0.5 * anti.real - mean_a * mean_b
    half_comm = 0.5 * abs(comm)
    record = {
        "lhs": lhs,
        "robertson_rhs": half_comm,
        "schrodinger_rhs": math.hypot(cov, half_comm),
    }
    if lhs < record["robertson_rhs"] - _BOUND_TOL or lhs < record["schrodinger_rhs"] - _BOUND_TOL:
        raise ValueError(
            "uncertainty bound violated beyond tolerance -- a numerical "
            f"failure, not physics: lhs = {lhs:.12g}, robertson_rhs = "
            f"{record['robertson_rhs']:.12g}, schrodinger_rhs = "
            f"{record['schrodinger_rhs']:.12g}"
        )
    return record


# ---------------------------------------------------------------------------
# evolution-law residuals
# ---------------------------------------------------------------------------


def _deformed_hamiltonian(m: float, potential: Potential, theta: float) -> SymbolOperator:
    """Generator P_x^2/2m + V(X_theta) for polynomial potential kinds.

    The harmonic term is multiplication by V composed through the one-sided
    coordinate action -- the operator the evolver realizes in its
    conjugated frame -- not plain multiplication by V(x).
    """
    kinetic = hamiltonian(m, None, theta)
    if potential.kind == "none":
        return kinetic
    if potential.kind == "harmonic":
        x_op = x_theta_l(theta)
        return kinetic + x_op.compose(x_op) * (0.5 * potential.m * potential.omega**2)
    raise ValueError(
        f"the commutator side needs a polynomial potential; got kind "
        f"{potential.kind!r} (use 'none' or 'harmonic')"
    )


def _explicit_time_derivative(op: SymbolOperator) -> SymbolOperator:
    """d_t of the operator's explicit coordinate-t dependence."""
    terms = {
        (a - 1, b, c, d): a * coef
        for (a, b, c, d), coef in op.terms.items()
        if a > 0
    }
    return SymbolOperator("composite", op.theta, terms)


_P_X_TERMS = {(0, 0, 0, 1): complex(-1j)}


def ehrenfest_residual(
    trajectory: Sequence[Field1D],
    op: SymbolOperator,
    kernel: StarKernel,
    m: float,
    potential: Potential,
) -> dict:
    """Residual of d<O>/dt = i<[H, O]> + <d_t O> along a stored trajectory.

    <O> is evaluated on every slice at its physical time and differentiated
    with 4th-order central differences, so at least five uniformly spaced
    slices are needed.  H is rebuilt from (m, potential) as the deformed
    generator (see _deformed_hamiltonian).  For O = P_x the first-order
    force form -<V'> - (theta/2) <V'' (d_x - i d_t)> is evaluated as well
    and returned under 'force_residual'; it matches the commutator side up
    to O(theta^2).

    Returns {"t": interior times, "residual": |lhs - rhs|, ...} as arrays.
    """
    n = len(trajectory)
    if n < 5:
        raise ValueError(
            f"trajectory too short for central differences: need at least 5 "
            f"slices, got {n}"
        )
    spec = trajectory[0].spec
    for fld in trajectory[1:]:
        if fld.spec != spec:
            raise ValueError("trajectory slices must share one GridSpec")
    _require_theta_match(kernel, spec)
    if m <= 0:
        raise ValueError(f"mass must be > 0, got {m}")
    theta = spec.theta

    ts = np.array([_slice_time(fld) for fld in trajectory])
    h = float(ts[1] - ts[0])
    if h <= 0 or float(np.max(np.abs(np.diff(ts) - h))) > 1e-9 * max(abs(h), 1e-12):
        raise ValueError("trajectory slices must be uniformly spaced in time")

    H = _deformed_hamiltonian(m, potential, theta)
    rhs_op = commutator(H, op) * 1j + _explicit_time_derivative(op)

    series = np.array([expectation(op, fld, kernel) for fld in trajectory])
    interior = range(2, n - 2)
    fd = np.array(
        [
            (-series[k + 2] + 8.0 * series[k + 1] - 8.0 * series[k - 1] + series[k - 2])
            / (12.0 * h)
            for k in interior
        ]
    )
    rhs = np.array([expectation(rhs_op, trajectory[k], kernel) for k in interior])
    out = {"t": ts[2 : n - 2], "residual": np.abs(fd - rhs)}

    if op.terms == _P_X_TERMS and potential.kind in ("none", "harmonic"):
        if potential.kind == "none":
            force = np.zeros(len(fd), dtype=complex)
        else:
            mw2 = potential.m * potential.omega**2
            v_prime = SymbolOperator("composite", theta, {(0, 1, 0, 0): mw2})
            force = -np.array(
                [expectation(v_prime, trajectory[k], kernel) for k in interior]
            )
            if theta != 0.0:
                v_dd_slope = SymbolOperator(
                    "composite", theta, {(0, 0, 0, 1): mw2, (0, 0, 1, 0): -1j * mw2}
                )
                force = force - (theta / 2.0) * np.array(
                    [expectation(v_dd_slope, trajectory[k], kernel) for k in interior]
                )
        out["force_residual"] = np.abs(fd - force)
    return out


# ---------------------------------------------------------------------------
# tabular export
# ---------------------------------------------------------------------------


def residual_csv(ts: Sequence[float], values: Sequence[float]) -> str:
    """CSV rows `t,value` for a residual or bound-check series."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.shape != values.shape:
        raise ValueError(f"shape mismatch: t {ts.shape} vs value {values.shape}")
    lines = ["t,value"]
    for t, v in zip(ts, values):
        lines.append(f"{t:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"
