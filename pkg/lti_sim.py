"""Gridded LTI systems: impulse, zero-input and zero-state responses, forward operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from pole_grid import PoleGrid


@dataclass(frozen=True)
class GriddedSystem:
    """r + sum_j alpha_j a_j / (z - q_j) with per-chunk initial-condition coefficients b.

    Real-pole groups carry real coefficients; the imaginary part of their entry is ignored.
    """

    r: float
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    scale_zero_state: bool = True

    @property
    def n_chunks(self) -> int:
        return int(self.b.shape[0])


def pack_coefficients(coeffs: np.ndarray, grid: PoleGrid) -> np.ndarray:
    """Complex per-group coefficients -> real unknowns (Re for real poles, Re/Im for pairs)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    out = np.empty(grid.n_dof)
    pos = 0
    for c, pair in zip(coeffs, grid.is_pair):
        out[pos] = c.real
        if pair:
            out[pos + 1] = c.imag
            pos += 2
        else:
            pos += 1
    return out


def unpack_coefficients(dofs: np.ndarray, grid: PoleGrid) -> np.ndarray:
    out = np.empty(grid.n_groups, dtype=complex)
    pos = 0
    for j, pair in enumerate(grid.is_pair):
        if pair:
            out[j] = complex(dofs[pos], dofs[pos + 1])
            pos += 2
        else:
            out[j] = complex(dofs[pos], 0.0)
            pos += 1
    return out


def pole_basis(grid: PoleGrid, length: int, scaled: bool = True) -> np.ndarray:
    """Row k holds the response q^k of every real unknown, k = 0..length-1.

    Pairs expand to 2 Re(c q^k) = 2 Re(c) Re(q^k) - 2 Im(c) Im(q^k).
    """
    powers = np.power(grid.values[None, :], np.arange(length)[:, None])
    weight = grid.alpha if scaled else np.ones(grid.n_groups)
    cols: list[np.ndarray] = []
    for j, pair in enumerate(grid.is_pair):
        col = powers[:, j]
        if pair:
            cols.append(2.0 * weight[j] * col.real)
            cols.append(-2.0 * weight[j] * col.imag)
        else:
            cols.append(weight[j] * col.real)
    return np.column_stack(cols) if cols else np.zeros((length, 0))


def impulse_sequence(sys: GriddedSystem, grid: PoleGrid, length: int) -> np.ndarray:
    """h(0..length-1)."""
    h = np.zeros(length)
    if length == 0:
        return h
    h[0] = sys.r
    if length > 1:
        basis = pole_basis(grid, length - 1, scaled=sys.scale_zero_state)
        h[1:] = basis @ pack_coefficients(sys.a, grid)
    return h


def impulse_response(sys: GriddedSystem, grid: PoleGrid, k: int) -> float:
    if k < 0:
        raise ValueError(f"impulse response index must be >= 0, got {k}")
    if k == 0:
        return float(sys.r)
    weight = grid.alpha if sys.scale_zero_state else np.ones(grid.n_groups)
    terms = weight * sys.a * np.power(grid.values, k - 1)
    return float(np.sum(np.where(grid.is_pair, 2.0 * terms.real, terms.real)))


def zero_input_response(sys: GriddedSystem, grid: PoleGrid, chunk: int, k: int) -> float:
    """y_zi(k) for 1-based k within the chunk."""
    if not (0 <= chunk < sys.n_chunks):
        raise IndexError(f"chunk {chunk} out of range (0..{sys.n_chunks - 1})")
    if k < 1:
        raise ValueError(f"zero-input index is 1-based, got {k}")
    terms = grid.alpha * sys.b[chunk] * np.power(grid.values, k - 1)
    return float(np.sum(np.where(grid.is_pair, 2.0 * terms.real, terms.real)))


def zero_state_response(sys: GriddedSystem, grid: PoleGrid, u: np.ndarray, k: int) -> float:
    """sum_{m=0}^{k} u(m) h(k-m) for 0-based k."""
    u = np.asarray(u, dtype=float)
    if not (0 <= k < len(u)):
        raise IndexError(f"zero-state index {k} outside input of length {len(u)}")
    h = impulse_sequence(sys, grid, k + 1)
    return float(np.dot(u[: k + 1], h[k::-1]))


def zero_input_sequence(sys: GriddedSystem, grid: PoleGrid, chunk: int, length: int) -> np.ndarray:
    if not (0 <= chunk < sys.n_chunks):
        raise IndexError(f"chunk {chunk} out of range (0..{sys.n_chunks - 1})")
    return pole_basis(grid, length, scaled=True) @ pack_coefficients(sys.b[chunk], grid)


def zero_state_sequence(sys: GriddedSystem, grid: PoleGrid, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    h = impulse_sequence(sys, grid, len(u))
    # np.convolve sums directly; chunks are short
    return np.convolve(u, h)[: len(u)]


def simulate_chunk(sys: GriddedSystem, grid: PoleGrid, chunk: int, u: np.ndarray, *, parts: bool = False):
    """Output samples k = 1..n_i of one chunk; with parts=True returns (y, y_zi, y_zs)."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) == 0:
        raise ValueError("chunk input must be a nonempty 1-D sequence")
    y_zi = zero_input_sequence(sys, grid, chunk, len(u))
    y_zs = zero_state_sequence(sys, grid, u)
    y = y_zi + y_zs
    if parts:
        return y, y_zi, y_zs
    return y


@dataclass(frozen=True)
class ParameterLayout:
    """Offsets of the real unknown vector w = [r, a, b^(1..T), noise^(1..T)]."""

    n_dof: int
    n_chunks: int
    noise_counts: tuple[int, ...]

    @property
    def a_slice(self) -> slice:
        return slice(1, 1 + self.n_dof)

    def b_slice(self, chunk: int) -> slice:
        start = 1 + self.n_dof * (1 + chunk)
        return slice(start, start + self.n_dof)

    @property
    def n_params(self) -> int:
        return 1 + self.n_dof * (1 + self.n_chunks)

    def noise_slice(self, chunk: int) -> slice:
        start = self.n_params + sum(self.noise_counts[:chunk])
        return slice(start, start + self.noise_counts[chunk])

    @property
    def noise_slice_all(self) -> slice:
        return slice(self.n_params, self.size)

    @property
    def size(self) -> int:
        return self.n_params + sum(self.noise_counts)

    def local_params(self, w: np.ndarray, chunk: int) -> np.ndarray:
        """[r, a, b^(chunk)] in forward-operator column order."""
        return np.concatenate([w[:1], w[self.a_slice], w[self.b_slice(chunk)]])

    def system(self, w: np.ndarray, grid: PoleGrid, scale_zero_state: bool = True) -> GriddedSystem:
        a = unpack_coefficients(w[self.a_slice], grid)
        b = np.array([unpack_coefficients(w[self.b_slice(i)], grid) for i in range(self.n_chunks)])
        return GriddedSystem(float(w[0]), a, b.reshape(self.n_chunks, grid.n_groups), scale_zero_state)

    def vector(self, sys: GriddedSystem, grid: PoleGrid, noise: np.ndarray | None = None) -> np.ndarray:
        w = np.zeros(self.size)
        w[0] = sys.r
        w[self.a_slice] = pack_coefficients(sys.a, grid)
        for i in range(self.n_chunks):
            w[self.b_slice(i)] = pack_coefficients(sys.b[i], grid)
        if noise is not None:
            w[self.noise_slice_all] = noise
        return w


@dataclass(frozen=True)
class ForwardOperator:
    """y^(i) = matrix @ [r, a, b^(i)] for one chunk."""

    chunk: int
    matrix: np.ndarray = field(repr=False)
    n_dof: int
    column_group: np.ndarray = field(repr=False)

    @property
    def r_column(self) -> np.ndarray:
        return self.matrix[:, 0]

    @property
    def a_columns(self) -> np.ndarray:
        return self.matrix[:, 1 : 1 + self.n_dof]

    @property
    def b_columns(self) -> np.ndarray:
        return self.matrix[:, 1 + self.n_dof :]

    def apply(self, params: np.ndarray) -> np.ndarray:
        return self.matrix @ params


def forward_operator(grid: PoleGrid, u: np.ndarray, chunk: int, scale_zero_state: bool = True) -> ForwardOperator:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) == 0:
        raise ValueError("forward operator needs a nonempty 1-D input")
    n = len(u)
    conv = toeplitz(u, np.zeros(n))
    # h_c(0) = 0 and h_c(k) = basis_c(k - 1) for k >= 1
    shifted = np.zeros((n, grid.n_dof))
    if n > 1:
        shifted[1:] = pole_basis(grid, n - 1, scaled=scale_zero_state)
    a_block = conv @ shifted
    b_block = pole_basis(grid, n, scaled=True)
    matrix = np.column_stack([u, a_block, b_block])
    groups = np.concatenate([[-1], grid.dof_group, grid.dof_group])
    return ForwardOperator(chunk, matrix, grid.n_dof, groups)
