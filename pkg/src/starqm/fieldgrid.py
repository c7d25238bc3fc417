"""Uniform periodic (t, x) grids and complex fields sampled on them.

Everything downstream — star products, symbol calculus, dynamics — works with
fields on a rectangular box with periodic identification.  Derivatives are
spectral (exact on band-limited fields), which is what makes the infinite-order
bidifferential star product computable at all; the price is that fields must
decay below ``EDGE_DECAY_TOL`` relative magnitude at the box edges unless the
caller explicitly opts into periodic semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

# Relative amplitude at the box edge above which a field no longer counts as
# decayed (spectral differentiation of such a field silently assumes
# periodicity, so we flag it).
EDGE_DECAY_TOL = 1e-10


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the periodic (t, x) sampling box.

    Sample points are ``t_min + i*dt`` for ``i < n_t`` (the right endpoint is
    the periodic image of the left one), and likewise in x.  When theta > 0
    the spacings must resolve the noncommutative length scale:
    dt, dx <= sqrt(theta)/4.
    """

    n_t: int
    n_x: int
    t_min: float
    t_max: float
    x_min: float
    x_max: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        for name, n in (("n_t", self.n_t), ("n_x", self.n_x)):
            if n < 8 or not _is_power_of_two(n):
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        if not self.t_max > self.t_min:
            raise ValueError(f"need t_max > t_min, got [{self.t_min}, {self.t_max}]")
        if not self.x_max > self.x_min:
            raise ValueError(f"need x_max > x_min, got [{self.x_min}, {self.x_max}]")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.theta > 0:
            limit = np.sqrt(self.theta) / 4.0
            if self.dt > limit * (1 + 1e-12) or self.dx > limit * (1 + 1e-12):
                raise ValueError(
                    f"grid too coarse for theta={self.theta}: spacings "
                    f"(dt={self.dt:.4g}, dx={self.dx:.4g}) must not exceed "
                    f"sqrt(theta)/4 = {limit:.4g}"
                )

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_t

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def t(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n_t)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def k_t(self) -> np.ndarray:
        """Angular frequencies of the temporal Fourier modes."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_t, d=self.dt)

    @property
    def k_x(self) -> np.ndarray:
        """Angular wavenumbers of the spatial Fourier modes."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)


def _as_field_values(values: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Field2D:
    """Complex field on the full (t, x) box, values indexed [i_t, i_x]."""

    spec: GridSpec
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = _as_field_values(self.values, (self.spec.n_t, self.spec.n_x), "Field2D")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class Field1D:
    """Complex field on a fixed-t slice of the box, values indexed [i_x]."""

    spec: GridSpec
    t_slice: float
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = _as_field_values(self.values, (self.spec.n_x,), "Field1D")
        object.__setattr__(self, "values", arr)
        if not (self.spec.t_min <= self.t_slice <= self.spec.t_max):
            raise ValueError(
                f"t_slice={self.t_slice} outside box [{self.spec.t_min}, {self.spec.t_max}]"
            )


def sample_field(f: Callable[[np.ndarray, np.ndarray], np.ndarray], spec: GridSpec) -> Field2D:
    """Sample f(t, x) on the grid nodes.

    f is called with broadcastable (t, x) meshes; scalar-only callables are
    handled via np.vectorize.  A non-finite sample is rejected with the
    offending node named.
    """
    tt, xx = np.meshgrid(spec.t, spec.x, indexing="ij")
    try:
        raw = np.asarray(f(tt, xx), dtype=np.complex128)
        vals = np.broadcast_to(raw, (spec.n_t, spec.n_x)).copy()
    except (TypeError, ValueError):
        vals = np.vectorize(f, otypes=[np.complex128])(tt, xx)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i_t, i_x = np.argwhere(bad)[0]
        raise ValueError(
            f"non-finite sample {vals[i_t, i_x]} at node "
            f"(t={spec.t[i_t]:.6g}, x={spec.x[i_x]:.6g})"
        )
    return Field2D(spec, vals)


def _edge_magnitude(values: np.ndarray, axis: int) -> float:
    """Largest |value| on the two boundary lines of the given axis, relative to the global max."""
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return 0.0
    first = np.take(values, 0, axis=axis)
    last = np.take(values, -1, axis=axis)
    return float(max(np.max(np.abs(first)), np.max(np.abs(last))) / peak)


def spectral_derivative(
    fld: Field2D | Field1D,
    axis: str,
    order: int = 1,
    periodic: bool = False,
) -> Field2D | Field1D:
    """Differentiate by Fourier multiplier (ik)^order along axis 't' or 'x'.

    Exact for band-limited periodic fields.  Unless periodic=True, the result
    metadata carries an 'edge_decay_warning' entry when the field has not
    decayed below EDGE_DECAY_TOL (relative) at the box edges of that axis.
    """
    if order < 1 or int(order) != order:
        raise ValueError(f"derivative order must be a positive integer, got {order}")
    if axis not in ("t", "x"):
        raise ValueError(f"axis must be 't' or 'x', got {axis!r}")

    if isinstance(fld, Field1D):
        if axis != "x":
            raise ValueError("Field1D only supports axis='x'")
        axnum, k = 0, fld.spec.k_x
    elif isinstance(fld, Field2D):
        axnum, k = (0, fld.spec.k_t) if axis == "t" else (1, fld.spec.k_x)
    else:
        raise TypeError(f"expected Field2D or Field1D, got {type(fld).__name__}")

    metadata = dict(fld.metadata)
    if not periodic:
        edge = _edge_magnitude(fld.values, axnum)
        if edge > EDGE_DECAY_TOL:
            metadata["edge_decay_warning"] = {"axis": axis, "relative_edge_magnitude": edge}

    mult = (1j * k) ** order
    shape = [1] * fld.values.ndim
    shape[axnum] = k.size
    out = np.fft.ifft(np.fft.fft(fld.values, axis=axnum) * mult.reshape(shape), axis=axnum)

    if isinstance(fld, Field1D):
        return Field1D(fld.spec, fld.t_slice, out, metadata)
    return Field2D(fld.spec, out, metadata)


def integrate(fld: Field2D | Field1D, axes: str | Iterable[str] | None = None) -> complex | np.ndarray:
    """Riemann sum with spacing weights (the trapezoid rule on a periodic box).

    axes=None integrates over every axis of the field and returns a complex
    scalar; naming a single axis of a Field2D returns the 1-D array of partial
    sums along the other axis.
    """
    if isinstance(fld, Field1D):
        if axes not in (None, "x", ("x",)):
            raise ValueError(f"Field1D integrates over 'x' only, got axes={axes!r}")
        return complex(np.sum(fld.values) * fld.spec.dx)
    if not isinstance(fld, Field2D):
        raise TypeError(f"expected Field2D or Field1D, got {type(fld).__name__}")

    if axes is None:
        axes = ("t", "x")
    if isinstance(axes, str):
        axes = tuple(axes) if set(axes) <= {"t", "x"} else (axes,)
    axes = tuple(axes)
    if not axes or any(a not in ("t", "x") for a in axes) or len(set(axes)) != len(axes):
        raise ValueError(f"axes must name 't', 'x' or both, got {axes!r}")

    weights = {"t": fld.spec.dt, "x": fld.spec.dx}
    axnums = tuple(0 if a == "t" else 1 for a in axes)
    out = np.sum(fld.values, axis=axnums)
    for a in axes:
        out = out * weights[a]
    if np.ndim(out) == 0:
        return complex(out)
    return out


def to_csv(fld: Field2D | Field1D) -> str:
    """Serialize to CSV: header ``t,x,re,im``, row-major over (i_t, i_x), 17 significant digits."""
    lines = ["t,x,re,im"]
    if isinstance(fld, Field1D):
        t_col = np.full(fld.spec.n_x, fld.t_slice)
        x_col = fld.spec.x
        v = fld.values
    else:
        tt, xx = np.meshgrid(fld.spec.t, fld.spec.x, indexing="ij")
        t_col, x_col, v = tt.ravel(), xx.ravel(), fld.values.ravel()
    for ti, xi, vi in zip(t_col, x_col, v):
        lines.append(f"{ti:.17g},{xi:.17g},{vi.real:.17g},{vi.imag:.17g}")
    return "\n".join(lines) + "\n"
