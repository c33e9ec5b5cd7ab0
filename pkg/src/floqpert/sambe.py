"""Truncated extended (Sambe) space and the operators living on it.

The driven problem becomes time independent on the extended space indexed by
(level, photon sector).  This module builds the truncated space, the four
operators needed to evaluate perturbation strings numerically — the shifted
bare Hamiltonian, the perturbation, the degenerate projector and the
resolvent — and evaluates coefficient tables as sparse operator products.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NearResonanceError
from .model import DrivenSystem, ResonantDecomposition
from .opalg import CoefficientTable

#: resolvent denominators below this fraction of the drive frequency trigger
#: the near-resonance diagnostic
NEAR_RESONANCE_GUARD = 1e-6


@dataclass(frozen=True)
class SambeSpace:
    """Truncated extended space: levels x photon sectors [-p_max, p_max].

    Flat indices are sector-major: index(k, p) = (p + p_max) * n_levels + k,
    a deterministic order that makes results bit-reproducible.
    """

    n_levels: int
    p_max: int
    reference_energy: float

    @property
    def dim(self) -> int:
        return self.n_levels * (2 * self.p_max + 1)

    @property
    def sectors(self) -> np.ndarray:
        return np.arange(-self.p_max, self.p_max + 1)

    def index(self, level: int, sector: int) -> int:
        if abs(sector) > self.p_max:
            raise IndexError(f"sector {sector} outside truncation {self.p_max}")
        return (sector + self.p_max) * self.n_levels + level

    def level_of(self) -> np.ndarray:
        return np.tile(np.arange(self.n_levels), 2 * self.p_max + 1)

    def sector_of(self) -> np.ndarray:
        return np.repeat(self.sectors, self.n_levels)


def build_space(decomp: ResonantDecomposition, r_max: int, max_harmonic: int = 1) -> SambeSpace:
    """Space large enough that no order <= r_max string touches the boundary.

    Each V factor moves at most max_harmonic sectors and strings start from
    sectors |n_k|, hence p_max = r_max * max_harmonic + max|n_k| + 1 (one
    sector of margin).
    """
    if r_max < 1:
        raise ValueError("r_max must be at least 1")
    reach = int(np.max(np.abs(decomp.photon_numbers[list(decomp.degenerate)])))
    p_max = r_max * max(max_harmonic, 1) + reach + 1
    return SambeSpace(
        n_levels=decomp.dim,
        p_max=p_max,
        reference_energy=decomp.reference_energy,
    )


@dataclass(frozen=True)
class SambeOperators:
    """The operator bundle for string evaluation on one truncated space.

    h0 and resolvent are diagonals over the flat index; the projector is the
    boolean support of the degenerate subspace with its column order given by
    ``degenerate_indices``; v is the sparse perturbation.
    """

    space: SambeSpace
    h0: np.ndarray
    v: sparse.csr_matrix
    support: np.ndarray
    resolvent: np.ndarray
    degenerate_indices: np.ndarray

    def projector_columns(self) -> np.ndarray:
        """Dense (dim, d) matrix of the degenerate basis columns."""
        cols = np.zeros((self.space.dim, len(self.degenerate_indices)), dtype=complex)
        cols[self.degenerate_indices, np.arange(len(self.degenerate_indices))] = 1.0
        return cols

    def p_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(self.support.astype(float)).tocsr()

    def r_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(self.resolvent).tocsr()

    def h0_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(self.h0).tocsr()


def build_operators(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    space: SambeSpace,
    allow_near_resonance: bool = False,
    guard: float = NEAR_RESONANCE_GUARD,
) -> SambeOperators:
    """Shifted Hamiltonian, perturbation, projector and resolvent.

    The resolvent is diagonal, zero on the degenerate support and
    1 / (E_ref + p wd - E~_l) elsewhere.  Denominators smaller than
    guard * wd signal an accidental resonance: the perturbative treatment
    needs every excluded state separated by a finite gap, so this escalates
    to an error unless explicitly allowed.
    """
    wd = decomp.drive_frequency
    n_lev = decomp.dim
    levels = space.level_of()
    sectors = space.sector_of()
    h0 = decomp.shifted_energies[levels] - sectors * wd

    support = np.zeros(space.dim, dtype=bool)
    degenerate_indices = np.array(
        [space.index(k, int(decomp.photon_numbers[k])) for k in decomp.degenerate]
    )
    support[degenerate_indices] = True

    denominators = space.reference_energy - h0
    offenders = []
    for flat in np.nonzero(~support & (np.abs(denominators) < guard * wd))[0]:
        offenders.append((int(levels[flat]), int(sectors[flat]), float(denominators[flat])))
    if offenders:
        listing = ", ".join(f"(level {l}, sector {p}): gap {d:.3e}" for l, p, d in offenders)
        message = (
            f"near-resonant excluded states: {listing}; the degenerate set is "
            f"likely too small for this drive frequency"
        )
        if any(d == 0.0 for _, _, d in offenders) or not allow_near_resonance:
            raise NearResonanceError(message)
        warnings.warn(message)

    resolvent = np.zeros(space.dim)
    mask = ~support
    resolvent[mask] = 1.0 / denominators[mask]

    # the perturbation is block Toeplitz in the sector index with blocks V_p
    blocks: list[list] = []
    n_sec = 2 * space.p_max + 1
    static = decomp.static_perturbation
    for row in range(n_sec):
        row_blocks = []
        for col in range(n_sec):
            p = row - col
            if p == 0:
                row_blocks.append(static)
            else:
                v_p = system.harmonics.get(p)
                row_blocks.append(v_p if v_p is not None and np.any(v_p) else None)
        blocks.append(row_blocks)
    v = sparse.bmat(blocks, format="csr", dtype=complex)

    return SambeOperators(
        space=space,
        h0=h0,
        v=v,
        support=support,
        resolvent=resolvent,
        degenerate_indices=degenerate_indices,
    )


def evaluate_string(table: CoefficientTable, ops: SambeOperators) -> np.ndarray:
    """Numerically evaluate a coefficient table on the truncated space.

    Strings are applied right-to-left starting from the degenerate columns.
    A slot exponent of zero projects onto the degenerate support; a positive
    exponent multiplies by the corresponding resolvent power.  Tables of the
    effective Hamiltonian return a (d, d) block; transformation tables return
    the full (dim, d) column map.  Terms are accumulated in sorted tuple
    order so results are bit-reproducible.
    """
    cols = ops.projector_columns()
    d = cols.shape[1]
    if table.kind == "heff":
        result = np.zeros((d, d), dtype=complex)
    else:
        result = np.zeros((ops.space.dim, d), dtype=complex)

    support = ops.support
    for tup in sorted(table.entries):
        coeff = float(table.entries[tup])
        x = cols
        for m in tup[::-1]:
            x = ops.v @ x
            if m == 0:
                x = np.where(support[:, None], x, 0.0)
            else:
                x = x * (ops.resolvent[:, None] ** m)
        if table.kind == "heff":
            x = ops.v @ x
            result += coeff * x[ops.degenerate_indices, :]
        else:
            result += coeff * x
    return result
