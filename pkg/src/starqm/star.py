"""Voros and Moyal star products on (t, x) fields.

On Fourier modes the products are exact: a mode k = (k0, k1) of f paired with a
mode k' of g lands in mode k + k' carrying the multiplier

    Voros:  exp[-(theta/2) k.k' - (i theta/2)(k0 k1' - k1 k0')]
    Moyal:  exp[          - (i theta/2)(k0 k1' - k1 k0')]

With w = k0 + i k1 the Voros exponent is -(theta/2) conj(w) w', which separates
over the two fields.  The 'fourier' method resums the resulting rank-one series

    f *_V g = sum_n (-theta/2)^n / n! . IFFT[conj(w)^n fhat] . IFFT[w^n ghat]

to numerical convergence — each term costs two FFTs, and the sum is the exact
mode-pair multiplier, not a truncation.  The Moyal exponent splits into two
such rank-one pieces and is resummed as a double series.  The 'series' method
is the literal bidifferential exponential truncated at total order K.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from starqm.fieldgrid import Field2D

# Fourier-mode magnitudes below this fraction of the per-field peak are dropped
# before resummation: the Voros multiplier grows like e^{theta |k||k'|/2} for
# anti-aligned mode pairs, so rounding-level mode noise must not participate.
DEFAULT_MODE_CUTOFF = 1e-14

# A term whose max-norm stays below this fraction of the running sum (twice in
# a row) ends the resummation.
_RESUM_RTOL = 1e-15

_MAX_TERMS = 20000

# Series(K) acceptance gate: the order-K term must have fallen below this
# fraction of the order-0 term.
_SERIES_GATE = 1e-3


class StarConvergenceError(RuntimeError):
    """Star expansion failed its convergence gate; carries a JSON diagnostic."""

    def __init__(self, method: str, order: int | None, term_norms: list[float]):
        self.record = {
            "method": method,
            "K": order,
            "term_norms": [float(v) for v in term_norms],
        }
        super().__init__(f"star product did not converge: {json.dumps(self.record)}")


@dataclass(frozen=True)
class StarKernel:
    """Configuration of a star product: deformation scale, flavor, and method.

    method='fourier' is the exact mode-pair multiplier (ground truth);
    method='series' truncates the bidifferential exponential at total order
    `order` (default 8).  mode_cutoff applies to the fourier method only.
    """

    theta: float
    flavor: str = "voros"
    method: str = "fourier"
    order: int | None = None
    mode_cutoff: float | None = DEFAULT_MODE_CUTOFF

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.flavor not in ("voros", "moyal"):
            raise ValueError(f"flavor must be 'voros' or 'moyal', got {self.flavor!r}")
        if self.method not in ("fourier", "series"):
            raise ValueError(f"method must be 'fourier' or 'series', got {self.method!r}")
        if self.method == "series":
            if self.order is None:
                object.__setattr__(self, "order", 8)
            if self.order < 1:
                raise ValueError(f"series order must be >= 1, got {self.order}")
        elif self.order is not None:
            raise ValueError("the fourier method takes no order parameter")


def plane_wave_star_factor(E: float, p: float, E2: float, p2: float, theta: float) -> complex:
    """Exact Voros multiplier for plane waves: e^{-i(Et-px)} * e^{-i(E2 t - p2 x)}.

    The product is factor . e^{-i((E+E2)t - (p+p2)x)} with
    factor = exp[-(theta/2)(E + ip)(E2 - i p2)].
    """
    return complex(np.exp(-(theta / 2.0) * (E + 1j * p) * (E2 - 1j * p2)))


def _mode_cutoff(fh: np.ndarray, cutoff: float) -> tuple[np.ndarray, int]:
    peak = np.max(np.abs(fh))
    if peak == 0.0:
        return fh, 0
    keep = np.abs(fh) >= cutoff * peak
    dropped = int(fh.size - np.count_nonzero(keep))
    if dropped:
        fh = np.where(keep, fh, 0.0)
    return fh, dropped


def _active_wmax(fh: np.ndarray, w: np.ndarray) -> float:
    """Largest |w| over modes actually populated in fh."""
    active = np.abs(fh) > 0
    if not np.any(active):
        return 0.0
    return float(np.max(np.abs(w)[active]))


def _term_budget(x: float) -> int:
    """Safe series length for resumming sum x^n/n! style tails."""
    return min(_MAX_TERMS, int(x + 20.0 * math.sqrt(x + 1.0) + 50.0))


def _renormed(arr: np.ndarray, log_scale: float) -> tuple[np.ndarray, float]:
    m = float(np.max(np.abs(arr)))
    if m > 1e120 or (0.0 < m < 1e-120):
        arr = arr / m
        log_scale += math.log(m)
    return arr, log_scale


def _apply_log_scale(term: np.ndarray, log_scale: float) -> np.ndarray:
    # exp(log_scale) can overflow even when the scaled term is moderate;
    # multiply in bounded chunks.
    while log_scale != 0.0:
        step = max(min(log_scale, 600.0), -600.0)
        term = term * math.exp(step)
        log_scale -= step
    return term


def _resum_voros(fh: np.ndarray, gh: np.ndarray, w: np.ndarray, theta: float) -> np.ndarray:
    """Resummed rank-one series for the Voros multiplier exp[-(theta/2) conj(w) w']."""
    s = math.sqrt(theta / 2.0)
    budget = _term_budget((theta / 2.0) * _active_wmax(fh, w) * _active_wmax(gh, w))
    mul_f = s * np.conj(w)
    mul_g = s * w

    Fh, Gh = fh.copy(), gh.copy()
    log_f = log_g = 0.0
    acc = np.fft.ifft2(Fh) * np.fft.ifft2(Gh)
    acc_norm = float(np.max(np.abs(acc)))
    term_norms = [acc_norm]
    quiet = 0
    for n in range(1, budget + 1):
        rn = math.sqrt(n)
        Fh = Fh * (mul_f / rn)
        Gh = Gh * (mul_g / rn)
        Fh, log_f = _renormed(Fh, log_f)
        Gh, log_g = _renormed(Gh, log_g)
        term = np.fft.ifft2(Fh) * np.fft.ifft2(Gh)
        term = _apply_log_scale(term, log_f + log_g)
        if n % 2:
            term = -term
        acc += term
        tn = float(np.max(np.abs(term)))
        term_norms.append(tn)
        acc_norm = max(acc_norm, float(np.max(np.abs(acc))))
        quiet = quiet + 1 if tn <= _RESUM_RTOL * max(acc_norm, 1e-300) else 0
        if quiet >= 2:
            return acc
    if acc_norm == 0.0:
        return acc
    raise StarConvergenceError("fourier", None, term_norms[-12:])


def _resum_moyal(fh: np.ndarray, gh: np.ndarray, w: np.ndarray, theta: float) -> np.ndarray:
    """Double rank-one resummation for the Moyal multiplier.

    exp[-(i theta/2)(k0 k1' - k1 k0')] = exp[-(theta/4) conj(w) w'] . exp[+(theta/4) w conj(w')]
    """
    s = math.sqrt(theta / 4.0)
    wmax_f = _active_wmax(fh, w)
    wmax_g = _active_wmax(gh, w)
    budget = _term_budget((theta / 4.0) * wmax_f * wmax_g)
    wb = np.conj(w)

    acc = np.zeros_like(fh)
    acc_norm = 0.0
    row_quiet = 0
    Fj = fh.copy()
    Gj = gh.copy()
    log_fj = log_gj = 0.0
    for j in range(budget + 1):
        # inner series over l at fixed j
        Fl, Gl = Fj.copy(), Gj.copy()
        log_l = log_fj + log_gj
        row_peak = 0.0
        quiet = 0
        sign = -1.0 if j % 2 else 1.0
        for l in range(budget + 1):
            if l > 0:
                rl = math.sqrt(l)
                Fl = Fl * (s * w / rl)
                Gl = Gl * (s * wb / rl)
                Fl, log_l = _renormed(Fl, log_l)
                Gl, log_l = _renormed(Gl, log_l)
            term = np.fft.ifft2(Fl) * np.fft.ifft2(Gl)
            term = _apply_log_scale(term, log_l) * sign
            acc += term
            tn = float(np.max(np.abs(term)))
            row_peak = max(row_peak, tn)
            acc_norm = max(acc_norm, float(np.max(np.abs(acc))))
            quiet = quiet + 1 if tn <= _RESUM_RTOL * max(acc_norm, 1e-300) else 0
            if quiet >= 2:
                break
        else:
            raise StarConvergenceError("fourier", None, [row_peak])
        row_quiet = row_quiet + 1 if row_peak <= _RESUM_RTOL * max(acc_norm, 1e-300) else 0
        if row_quiet >= 2:
            return acc
        rj = math.sqrt(j + 1)
        Fj = Fj * (s * wb / rj)
        Gj = Gj * (s * w / rj)
        Fj, log_fj = _renormed(Fj, log_fj)
        Gj, log_gj = _renormed(Gj, log_gj)
    if acc_norm == 0.0:
        return acc
    raise StarConvergenceError("fourier", None, [acc_norm])


def _cutoff_pair(kernel: StarKernel, fh: np.ndarray, gh: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    metadata: dict = {}
    if kernel.mode_cutoff is not None:
        fh, dropped_f = _mode_cutoff(fh, kernel.mode_cutoff)
        gh, dropped_g = _mode_cutoff(gh, kernel.mode_cutoff)
        if dropped_f or dropped_g:
            metadata["mode_cutoff"] = {
                "threshold": kernel.mode_cutoff,
                "dropped_f": dropped_f,
                "dropped_g": dropped_g,
            }
    return fh, gh, metadata


def _star_fourier(kernel: StarKernel, f: Field2D, g: Field2D) -> Field2D:
    spec = f.spec
    fh = np.fft.fft2(f.values)
    gh = np.fft.fft2(g.values)
    fh, gh, metadata = _cutoff_pair(kernel, fh, gh)
    w = spec.k_t[:, None] + 1j * spec.k_x[None, :]
    if kernel.flavor == "voros":
        out = _resum_voros(fh, gh, w, kernel.theta)
    else:
        out = _resum_moyal(fh, gh, w, kernel.theta)
    return Field2D(spec, out, metadata)


def _star_series(kernel: StarKernel, f: Field2D, g: Field2D) -> Field2D:
    spec = f.spec
    fh = np.fft.fft2(f.values)
    gh = np.fft.fft2(g.values)
    # The noise guard matters here too: w**n amplifies rounding-level high
    # modes by |w_max|^n, which would pollute high-order terms.
    fh, gh, metadata = _cutoff_pair(kernel, fh, gh)
    w = spec.k_t[:, None] + 1j * spec.k_x[None, :]
    wb = np.conj(w)
    K = kernel.order
    theta = kernel.theta

    acc = np.zeros((spec.n_t, spec.n_x), dtype=np.complex128)
    term_norms: list[float] = []
    for n in range(K + 1):
        if kernel.flavor == "voros":
            c = (-theta / 2.0) ** n / math.factorial(n)
            term = c * np.fft.ifft2(wb**n * fh) * np.fft.ifft2(w**n * gh)
        else:
            term = np.zeros_like(acc)
            for j in range(n + 1):
                l = n - j
                c = ((-theta / 4.0) ** j / math.factorial(j)) * (
                    (theta / 4.0) ** l / math.factorial(l)
                )
                term += c * np.fft.ifft2(wb**j * w**l * fh) * np.fft.ifft2(w**j * wb**l * gh)
        acc += term
        term_norms.append(float(np.max(np.abs(term))))
    if term_norms[0] > 0 and term_norms[-1] > _SERIES_GATE * term_norms[0]:
        raise StarConvergenceError("series", K, term_norms)
    metadata.update({"method": "series", "K": K, "term_norms": term_norms})
    return Field2D(spec, acc, metadata)


def star(kernel: StarKernel, f: Field2D, g: Field2D) -> Field2D:
    """Star product f * g under the given kernel.  Bilinear in (f, g).

    Both fields must share one GridSpec whose theta matches the kernel's.
    theta = 0 reduces both flavors to the pointwise product exactly.
    """
    if not isinstance(f, Field2D) or not isinstance(g, Field2D):
        raise TypeError("star operates on Field2D inputs")
    if f.spec != g.spec:
        raise ValueError("star requires both fields on the same GridSpec")
    if kernel.theta != f.spec.theta:
        raise ValueError(
            f"kernel.theta={kernel.theta} does not match grid theta={f.spec.theta}"
        )
    if kernel.theta == 0.0:
        return Field2D(f.spec, f.values * g.values)
    if kernel.method == "fourier":
        return _star_fourier(kernel, f, g)
    return _star_series(kernel, f, g)


def cross_validate(kernel_a: StarKernel, kernel_b: StarKernel, f: Field2D, g: Field2D) -> float:
    """Max-norm relative discrepancy between two methods for the same product."""
    if kernel_a.flavor != kernel_b.flavor:
        raise ValueError("cross_validate requires kernels of the same flavor")
    if kernel_a.theta != kernel_b.theta:
        raise ValueError("cross_validate requires kernels with the same theta")
    if kernel_a.method == kernel_b.method:
        raise ValueError("cross_validate requires two different methods")
    a = star(kernel_a, f, g).values
    b = star(kernel_b, f, g).values
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)
