"""Coherent-state symbol calculus on the (t, x) grid.

States are represented by their symbols psi(t, x) = (t,x|psi).  The basis
overlap is a Gaussian of width sqrt(theta) in each coordinate, momentum
symbols carry the Gaussian damping e^{-(theta/4)(E^2+p^2)}, and the physical
pairing of two states on a fixed-t surface is the induced product
(psi, phi)_t = integral dx  psi* (star) phi.  The probability density is the
manifestly positive star-square of the symbol.

Normalization note: the density carries the sqrt(2 pi theta) prefactor of its
defining display while the induced product does not, so for a state of unit
induced norm the density integrates to sqrt(2 pi theta) rather than 1.  The
continuity defect pairs density and current at one common normalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import phasecalc
from .fieldgrid import Field1D, Field2D, GridSpec, integrate, spectral_derivative
from .star import DEFAULT_MODE_CUTOFF, StarKernel, star

_SERIES_RTOL = 1e-12
_SERIES_MAX_TERMS = 512

# Relative floor under which a sampled kernel mode is treated as numerically
# empty: below it the compensating growth factor would only amplify rounding
# noise, so those modes are dropped instead of inverted.
_KERNEL_MODE_FLOOR = 1e-13


@dataclass(frozen=True)
class MomentumLabel:
    """Joint label (E, p) of a common energy-momentum eigenstate."""

    E: float
    p: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.E) and math.isfinite(self.p)):
            raise ValueError(f"MomentumLabel needs finite entries, got E={self.E}, p={self.p}")


@dataclass(frozen=True)
class CoherentPoint:
    """A point (t, x) of the coherent-state base manifold at scale theta."""

    t: float
    x: float
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and math.isfinite(self.x)):
            raise ValueError(f"CoherentPoint needs finite coordinates, got ({self.t}, {self.x})")
        if not self.theta > 0:
            raise ValueError(f"CoherentPoint needs theta > 0, got {self.theta}")

    @property
    def z(self) -> complex:
        return (self.t + 1j * self.x) / math.sqrt(2.0 * self.theta)


def gauss_delta(u: float | np.ndarray, sigma: float) -> float | np.ndarray:
    """Normalized Gaussian of width sigma (a regularized delta)."""
    if not sigma > 0:
        raise ValueError(f"gauss_delta needs sigma > 0, got {sigma}")
    return np.exp(-np.asarray(u) ** 2 / (2.0 * sigma**2)) / (sigma * math.sqrt(2.0 * math.pi))


def momentum_symbol(label: MomentumLabel, theta: float) -> Callable[..., np.ndarray]:
    """Symbol of the (E, p) eigenstate: a damped plane wave.

    Returns the pointwise function
        (t, x) -> (1/2pi) e^{-(theta/4)(E^2+p^2)} e^{-i(Et - px)},
    vectorized over array arguments.  Its modulus is coordinate independent.
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    amp = math.exp(-(theta / 4.0) * (label.E**2 + label.p**2)) / (2.0 * math.pi)
    E, p = label.E, label.p

    def sym(t, x):
        return amp * np.exp(-1j * (E * np.asarray(t) - p * np.asarray(x)))

    return sym


def basis_overlap(a: CoherentPoint, b: CoherentPoint) -> float:
    """Overlap of two coherent basis points: a Gaussian in each separation."""
    if a.theta != b.theta:
        raise ValueError(f"basis points live at different scales: {a.theta} vs {b.theta}")
    s = math.sqrt(a.theta)
    return float(gauss_delta(b.t - a.t, s) * gauss_delta(b.x - a.x, s))


def coherent_symbol(point: CoherentPoint, spec: GridSpec) -> Field2D:
    """Symbol of the coherent basis element attached to one point.

    The element's symbol is the width-sqrt(theta) Gaussian
        (1/sqrt(2 pi theta)) e^{-((t-t0)^2 + (x-x0)^2) / 2 theta},
    which carries unit norm under the full-plane pairing
    integral dt dx  psi* (star) psi (the basis elements are idempotent up to
    the 1/sqrt(2 pi theta) scale).  The grid box must reach at least
    6 sqrt(theta) beyond the center on every side so the periodified tails
    stay at rounding level.
    """
    if spec.theta != point.theta:
        raise ValueError(
            f"basis point theta {point.theta} does not match grid theta {spec.theta}"
        )
    s = math.sqrt(point.theta)
    margin = min(
        point.t - spec.t_min, spec.t_max - point.t,
        point.x - spec.x_min, spec.x_max - point.x,
    )
    if margin < 6.0 * s:
        raise ValueError(
            f"grid box reaches only {margin:.4g} beyond the center; the symbol "
            f"needs at least 6 sqrt(theta) = {6.0 * s:.4g} of clearance on every side"
        )
    tt = spec.t[:, None] - point.t
    xx = spec.x[None, :] - point.x
    vals = np.exp(-(tt**2 + xx**2) / (2.0 * point.theta)) / math.sqrt(
        2.0 * math.pi * point.theta
    )
    return Field2D(spec, vals, {"center_t": point.t, "center_x": point.x})


# ---------------------------------------------------------------------------
# induced inner product
# ---------------------------------------------------------------------------


def _require_voros(kernel: StarKernel, what: str) -> None:
    if kernel.flavor != "voros":
        raise ValueError(f"{what} is defined through the Voros pairing; got flavor {kernel.flavor!r}")


def _require_theta_match(kernel: StarKernel, spec: GridSpec) -> None:
    if kernel.theta != spec.theta:
        raise ValueError(f"kernel.theta={kernel.theta} does not match grid theta={spec.theta}")


def _stationary_profile(fld: Field1D) -> phasecalc.PhasePoly:
    energy = fld.metadata.get("energy")
    if energy is None:
        raise ValueError(
            "slice is missing temporal information: the star product needs t-derivatives, "
            "so tag each Field1D with metadata['energy'] (the reduction d_t -> -i*energy), "
            "or pass full Field2D neighborhoods together with a slice time t"
        )
    energy = float(energy)
    # Field1D stores psi(x, t_slice); recover the profile q with psi = q e^{-iEt}.
    profile = fld.values * np.exp(1j * energy * fld.t_slice)
    return phasecalc.stationary_part(fld.spec, energy, profile)


def induced_inner_product(
    kernel: StarKernel,
    psi: Field1D | Field2D,
    phi: Field1D | Field2D,
    t: float | None = None,
) -> complex:
    """Fixed-t pairing (psi, phi)_t = integral dx  psi* (star) phi.

    Field1D inputs must share a GridSpec and slice time, and (for theta > 0)
    each must carry metadata['energy'] so the star's t-derivatives are well
    posed on a single slice.  Field2D inputs carry their own temporal
    neighborhoods; pass the slice time t (a grid point) explicitly.
    """
    _require_voros(kernel, "the induced product")
    if isinstance(psi, Field1D) and isinstance(phi, Field1D):
        if psi.spec != phi.spec:
            raise ValueError("induced product requires both slices on the same GridSpec")
        if psi.t_slice != phi.t_slice:
            raise ValueError(
                f"slices live at different times: {psi.t_slice} vs {phi.t_slice}"
            )
        _require_theta_match(kernel, psi.spec)
        if kernel.theta == 0.0:
            return complex(np.sum(np.conj(psi.values) * phi.values) * psi.spec.dx)
        bra = _stationary_profile(psi)
        ket = _stationary_profile(phi)
        return phasecalc.induced_product(bra, ket, psi.t_slice)
    if isinstance(psi, Field2D) and isinstance(phi, Field2D):
        if psi.spec != phi.spec:
            raise ValueError("induced product requires both fields on the same GridSpec")
        _require_theta_match(kernel, psi.spec)
        if t is None:
            raise ValueError(
                "Field2D inputs need an explicit slice time: pass t=<grid point> "
                "(the 2-D box has no distinguished surface)"
            )
        spec = psi.spec
        idx = int(np.argmin(np.abs(spec.t - t)))
        if abs(spec.t[idx] - t) > 1e-9 * (1.0 + abs(t)):
            raise ValueError(f"t={t} is not a grid point (nearest is {spec.t[idx]})")
        prod = star(kernel, Field2D(spec, np.conj(psi.values)), phi)
        return complex(np.sum(prod.values[idx, :]) * spec.dx)
    raise TypeError("induced_inner_product takes two Field1D slices or two Field2D fields")


# ---------------------------------------------------------------------------
# density and current
# ---------------------------------------------------------------------------


def _density_series(spec: GridSpec, values: np.ndarray, theta: float) -> tuple[np.ndarray, int]:
    """Positive series sum_n (theta/2)^n / n! |(d_t + i d_x)^n psi|^2."""
    vhat = np.fft.fft2(values)
    peak = np.max(np.abs(vhat))
    if peak > 0.0:
        vhat = np.where(np.abs(vhat) >= DEFAULT_MODE_CUTOFF * peak, vhat, 0.0)
    # d_t + i d_x acts on a mode e^{i(kt t + kx x)} as multiplication by i*kt - kx.
    mult = 1j * spec.k_t[:, None] - spec.k_x[None, :]
    acc = np.abs(np.fft.ifft2(vhat)) ** 2
    term_hat = vhat
    for n in range(1, _SERIES_MAX_TERMS + 1):
        # Keep the coefficient inside the mode array: term_hat carries
        # sqrt((theta/2)^n / n!) mult^n psi-hat, so each term is a plain
        # square and intermediate magnitudes stay in floating-point range.
        term_hat = term_hat * (mult * math.sqrt(theta / (2.0 * n)))
        term = np.abs(np.fft.ifft2(term_hat)) ** 2
        acc += term
        if np.max(term) <= _SERIES_RTOL * np.max(acc):
            return acc, n + 1
    raise RuntimeError(
        f"density series did not converge within {_SERIES_MAX_TERMS} terms; "
        "the field occupies modes too close to the resolution floor"
    )


def probability_density(
    kernel: StarKernel, psi: Field2D, cross_check: bool = False
) -> Field2D:
    """Probability density sqrt(2 pi theta) psi* (star) psi, term by positive term.

    Evaluated through the sum-of-squares series, truncated when a term falls
    below 1e-12 of the running sum, so the result is nonnegative by
    construction.  cross_check=True also evaluates the star product directly
    and records the maximum discrepancy in the metadata.
    """
    _require_voros(kernel, "the probability density")
    if not isinstance(psi, Field2D):
        raise TypeError(f"probability_density expects a Field2D, got {type(psi).__name__}")
    _require_theta_match(kernel, psi.spec)
    if kernel.theta <= 0.0:
        raise ValueError("the coherent-state density needs theta > 0")
    series, n_terms = _density_series(psi.spec, psi.values, kernel.theta)
    scale = math.sqrt(2.0 * math.pi * kernel.theta)
    metadata = {"series_terms": n_terms}
    if cross_check:
        direct = star(kernel, Field2D(psi.spec, np.conj(psi.values)), psi)
        metadata["star_crosscheck_max_abs"] = float(np.max(np.abs(series - direct.values)))
    return Field2D(psi.spec, scale * series, metadata)


def probability_current(kernel: StarKernel, psi: Field2D, m: float) -> Field2D:
    """Current density j = (1/m) Im( psi* (star) d_x psi ).

    The antisymmetrized two-term bracket collapses to this single imaginary
    part because conjugating a star product swaps its factors.  For theta = 0
    it is the textbook current; a plane wave of momentum p carries j = p/m
    times its star-squared modulus.
    """
    _require_voros(kernel, "the probability current")
    if not isinstance(psi, Field2D):
        raise TypeError(f"probability_current expects a Field2D, got {type(psi).__name__}")
    _require_theta_match(kernel, psi.spec)
    if not m > 0:
        raise ValueError(f"mass must be > 0, got {m}")
    dpsi = spectral_derivative(psi, "x", periodic=True)
    prod = star(kernel, Field2D(psi.spec, np.conj(psi.values)), dpsi)
    return Field2D(psi.spec, np.imag(prod.values) / m, dict(prod.metadata))


def continuity_defect(kernel: StarKernel, psi: Field2D, m: float) -> Field2D:
    """Residual d_t rho + d_x j with both terms at the density normalization.

    The density display carries sqrt(2 pi theta) while the bare current does
    not, so the pair is rescaled onto one normalization before differencing;
    the residual vanishes identically for exact free-evolution fields.
    """
    rho = probability_density(kernel, psi, cross_check=False)
    cur = probability_current(kernel, psi, m)
    scale = math.sqrt(2.0 * math.pi * kernel.theta)
    d_rho = spectral_derivative(rho, "t", periodic=True)
    d_cur = spectral_derivative(cur, "x", periodic=True)
    return Field2D(psi.spec, d_rho.values + scale * d_cur.values)


# ---------------------------------------------------------------------------
# on-shell projection
# ---------------------------------------------------------------------------


def onshell_project(
    p_grid: np.ndarray,
    amplitudes: np.ndarray,
    m: float,
    theta: float,
    spec: GridSpec,
) -> Field2D:
    """Assemble the symbol of the on-shell state from momentum amplitudes.

    Psi(x, t) = (1/sqrt(2 pi)) sum_p dp  psi(p) e^{-(theta/4)(E_p^2+p^2)}
                e^{-i(E_p t - p x)},   E_p = p^2 / 2m,

    by quadrature over a uniform momentum grid symmetric about zero.  The
    grid must resolve the integrand's oscillation across the whole (t, x)
    window; otherwise the call is rejected with the required spacing.
    """
    p = np.asarray(p_grid, dtype=float)
    a = np.asarray(amplitudes, dtype=np.complex128)
    if p.ndim != 1 or p.size < 2 or a.shape != p.shape:
        raise ValueError("need 1-D p_grid with matching amplitudes and at least two nodes")
    dp = np.diff(p)
    if not np.allclose(dp, dp[0], rtol=1e-9, atol=0.0):
        raise ValueError("p_grid must be uniformly spaced")
    if not np.allclose(p, -p[::-1], rtol=0.0, atol=1e-9 * (1.0 + np.max(np.abs(p)))):
        raise ValueError("p_grid must be symmetric about 0")
    if not m > 0:
        raise ValueError(f"mass must be > 0, got {m}")
    if theta != spec.theta:
        raise ValueError(f"theta={theta} does not match grid theta={spec.theta}")

    step = float(dp[0])
    # Stationary-phase scale: d(phase)/dp = x - p t / m, extremal at the
    # window corners and the largest momentum node.
    x_edge = max(abs(spec.x_min), abs(spec.x_max))
    t_edge = max(abs(spec.t_min), abs(spec.t_max))
    swing = x_edge + np.max(np.abs(p)) * t_edge / m
    if swing * step > math.pi:
        raise ValueError(
            f"momentum grid too coarse: the integrand phase advances {swing * step:.3g} "
            f"rad per step at the window edge; this window requires dp <= {math.pi / swing:.6g}"
        )

    energy = p**2 / (2.0 * m)
    weights = a * np.exp(-(theta / 4.0) * (energy**2 + p**2)) * step / math.sqrt(2.0 * math.pi)
    # The mode sum is separable: e^{-i E t} outer e^{i p x} per node.
    t_waves = np.exp(-1j * np.outer(energy, spec.t))
    x_waves = np.exp(1j * np.outer(p, spec.x))
    values = (weights[:, None] * t_waves).T @ x_waves
    return Field2D(spec, values, {"mass": m, "dp": step, "max_phase_step": float(swing * step)})


# ---------------------------------------------------------------------------
# fixed-time quasi-projection
# ---------------------------------------------------------------------------


def _absolute_mode_amplitudes(fld: Field2D) -> np.ndarray:
    """Mode amplitudes A with psi(t,x) = sum A e^{i(kt t + kx x)} in absolute coordinates."""
    spec = fld.spec
    amps = np.fft.fft2(fld.values) / (spec.n_t * spec.n_x)
    peak = np.max(np.abs(amps))
    if peak > 0.0:
        amps = np.where(np.abs(amps) >= DEFAULT_MODE_CUTOFF * peak, amps, 0.0)
    origin = np.exp(-1j * (spec.k_t[:, None] * spec.t_min + spec.k_x[None, :] * spec.x_min))
    return amps * origin


def quasi_projection_apply(theta: float, t0: float, psi: Field2D) -> Field2D:
    """Apply the fixed-time quasi-projector pi_{t0} to a symbol field.

    pi_t sandwiches the state between coherent basis elements along one
    constant-t line: (pi_t psi)(t'', x'') = integral dx of the basis Gaussian
    centered at (t'', x'') starred with psi, taken on the t = t0 surface.  In
    mode space the map is diagonal in p and, per (E, p) mode, produces a
    Gaussian-in-time envelope around t0:

        e^{ipx''} (2 pi theta)^{-1/2} e^{theta(E^2-p^2)/8} e^{i theta p E/4}
        e^{-iE t0} e^{-i(E-ip)(t''-t0)/2} e^{-(t''-t0)^2/(2 theta)}.

    The growth factor e^{theta E^2/8} is paired with the mode cutoff of the
    amplitude extraction, mirroring the hygiene of the star engine itself.
    """
    if not theta > 0:
        raise ValueError(f"quasi-projection needs theta > 0, got {theta}")
    if not isinstance(psi, Field2D):
        raise TypeError(f"quasi_projection_apply expects a Field2D, got {type(psi).__name__}")
    spec = psi.spec
    if theta != spec.theta:
        raise ValueError(f"theta={theta} does not match grid theta={spec.theta}")
    if not (spec.t_min <= t0 <= spec.t_max):
        raise ValueError(f"t0={t0} outside box [{spec.t_min}, {spec.t_max}]")

    amps = _absolute_mode_amplitudes(psi)
    E = -spec.k_t  # modes e^{i kt t} carry energy E = -kt in e^{-iEt} form
    p = spec.k_x
    tau = spec.t - t0

    mode_weight = (
        np.exp((theta / 8.0) * (E[:, None] ** 2 - p[None, :] ** 2))
        * np.exp(0.25j * theta * np.outer(E, p))
        * np.exp(-1j * E * t0)[:, None]
    ) / math.sqrt(2.0 * math.pi * theta)
    weighted = amps * mode_weight

    # Collapse the energy axis first (each mode keeps its p), then expand the
    # surviving p-modes back onto the grid with their tau-dependent envelopes.
    e_phase = np.exp(-0.5j * np.outer(E, tau))  # [E, t'']
    by_p = weighted.T @ e_phase  # [p, t'']
    envelope = np.exp(-0.5 * np.outer(p, tau))  # e^{-p tau / 2}, bounded by the Gaussian
    gauss = np.exp(-(tau**2) / (2.0 * theta))
    x_waves = np.exp(1j * np.outer(p, spec.x))  # [p, x'']
    values = ((by_p * envelope).T * gauss[:, None]) @ x_waves
    return Field2D(spec, values, {"t0": t0})


def quasi_projection_discrepancy(
    theta: float, t: float, t_prime: float, states: Sequence[Field2D]
) -> float:
    """Max-norm defect of the composition law pi_{t'} pi_t vs delta-weighted pi_{t'}."""
    if not states:
        raise ValueError("need at least one test state")
    weight = float(gauss_delta(t_prime - t, math.sqrt(theta)))
    worst = 0.0
    for psi in states:
        lhs = quasi_projection_apply(theta, t_prime, quasi_projection_apply(theta, t, psi))
        rhs = weight * quasi_projection_apply(theta, t_prime, psi).values
        worst = max(worst, float(np.max(np.abs(lhs.values - rhs))))
    return worst


def quasi_projection_report(
    theta: float, t: float, t_prime: float, states: Sequence[Field2D]
) -> str:
    """JSON diagnostics of the quasi-projection composition on the test states."""
    weight = float(gauss_delta(t_prime - t, math.sqrt(theta)))
    rows = []
    for psi in states:
        once = quasi_projection_apply(theta, t, psi)
        lhs = quasi_projection_apply(theta, t_prime, once)
        rhs = weight * quasi_projection_apply(theta, t_prime, psi).values
        discrepancy = float(np.max(np.abs(lhs.values - rhs)))
        ref = float(np.max(np.abs(once.values)) * gauss_delta(0.0, math.sqrt(theta)))
        rows.append(
            {
                "discrepancy": discrepancy,
                "reference": ref,
                "ratio": discrepancy / ref if ref > 0 else math.inf,
            }
        )
    return json.dumps(
        {
            "theta": theta,
            "t": t,
            "t_prime": t_prime,
            "delta_weight": weight,
            "states": rows,
        },
        indent=2,
    )


# ---------------------------------------------------------------------------
# reproducing kernel
# ---------------------------------------------------------------------------


def reproducing_map(kernel: StarKernel, psi: Field2D) -> Field2D:
    """Push psi through the full 2-D reproducing identity of the basis overlap.

    R(t, x) = integral dt' dx'  delta_sqrt(theta)(t - t') delta_sqrt(theta)(x - x')
              (star') psi(t', x'),

    with the star acting on the primed pair.  Mode by mode the Gaussian
    transform e^{-theta k^2/2} cancels against the star growth e^{+theta k^2/2}
    exactly, so the map is the identity on every mode the sampled kernel
    resolves.  Kernel modes below the numeric floor are dropped (recorded in
    the metadata) rather than amplified.
    """
    _require_voros(kernel, "the reproducing map")
    if not isinstance(psi, Field2D):
        raise TypeError(f"reproducing_map expects a Field2D, got {type(psi).__name__}")
    _require_theta_match(kernel, psi.spec)
    if kernel.theta <= 0.0:
        raise ValueError("the reproducing kernel needs theta > 0")
    spec = psi.spec
    s = math.sqrt(kernel.theta)

    # Sample the kernel on the circular displacement grid so its DFT is the
    # (real, positive) transform of the Gaussian pair.
    dt_idx = np.fft.fftfreq(spec.n_t, d=1.0 / spec.n_t) * spec.dt
    dx_idx = np.fft.fftfreq(spec.n_x, d=1.0 / spec.n_x) * spec.dx
    k_samples = np.outer(gauss_delta(dt_idx, s), gauss_delta(dx_idx, s))
    k_hat = np.fft.fft2(k_samples).real * spec.dt * spec.dx

    grow = np.exp(
        (kernel.theta / 2.0) * (spec.k_t[:, None] ** 2 + spec.k_x[None, :] ** 2)
    )
    live = k_hat >= _KERNEL_MODE_FLOOR * np.max(k_hat)
    mult = np.where(live, k_hat * grow, 0.0)

    vhat = np.fft.fft2(psi.values)
    peak = np.max(np.abs(vhat))
    if peak > 0.0:
        vhat = np.where(np.abs(vhat) >= DEFAULT_MODE_CUTOFF * peak, vhat, 0.0)
    dropped = int(np.sum((~live) & (vhat != 0.0)))
    out = np.fft.ifft2(vhat * mult)
    metadata: dict = {"kernel_modes_dropped": dropped}
    if dropped:
        metadata["note"] = "field occupies modes beyond the sampled kernel's support"
    return Field2D(spec, out, metadata)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def real_field_csv(fld: Field2D | Field1D, rtol: float = 1e-9) -> str:
    """Serialize a real-valued field as CSV with header ``t,x,value``."""
    scale = float(np.max(np.abs(fld.values))) or 1.0
    if np.max(np.abs(fld.values.imag)) > rtol * scale:
        raise ValueError("field has a non-negligible imaginary part; not a real observable")
    lines = ["t,x,value"]
    if isinstance(fld, Field1D):
        t_col = np.full(fld.spec.n_x, fld.t_slice)
        x_col = fld.spec.x
        v = fld.values.real
    elif isinstance(fld, Field2D):
        tt, xx = np.meshgrid(fld.spec.t, fld.spec.x, indexing="ij")
        t_col, x_col, v = tt.ravel(), xx.ravel(), fld.values.real.ravel()
    else:
        raise TypeError(f"expected Field2D or Field1D, got {type(fld).__name__}")
    for ti, xi, vi in zip(t_col, x_col, v):
        lines.append(f"{ti:.17g},{xi:.17g},{vi:.17g}")
    return "\n".join(lines) + "\n"
