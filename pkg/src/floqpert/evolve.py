"""Perturbative state evolution in the original basis.

The slow dynamics happens inside the degenerate subspace under the effective
Hamiltonian; mapping it back through the transformation columns restores the
fast oscillating components (extra photon sectors of the dressed states) and
the leakage into levels outside the degenerate set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import DrivenSystem, ResonantDecomposition
from .pert import EffectiveHamiltonian, WOperator


@dataclass(frozen=True)
class EvolutionResult:
    """Time series of bare-basis amplitudes, populations and leakage.

    ``amplitudes[l, i]`` is c_l(times[i]); ``leakage`` is the population
    outside the degenerate set.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    degenerate: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def leakage(self) -> np.ndarray:
        return 1.0 - self.populations[list(self.degenerate), :].sum(axis=0)


def u_eff(heff_matrix: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """Propagator exp(-i H t) of a Hermitian block via eigendecomposition.

    Scalar t gives a (d, d) matrix; an array gives (nt, d, d).
    """
    matrix = np.asarray(heff_matrix)
    herm = np.max(np.abs(matrix - matrix.conj().T))
    if herm > 1e-12 * max(1.0, np.max(np.abs(matrix))):
        raise ValidationError("effective Hamiltonian block is not Hermitian")
    evals, vecs = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    phases = np.exp(-1j * np.outer(t_arr, evals))
    out = np.einsum("ab,tb,cb->tac", vecs, phases, vecs.conj())
    return out[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else out


def _initial_on_degenerate(
    c0, decomp: ResonantDecomposition, n_levels: int, tol: float = 1e-6
) -> np.ndarray:
    """Normalize the initial amplitudes onto the degenerate levels.

    Accepts a length-d vector over the degenerate set or a full bare-basis
    vector; the latter must have no weight outside the set (the perturbative
    propagator only covers initial states inside its dressed subspace).
    """
    c0 = np.asarray(c0, dtype=complex)
    d = len(decomp.degenerate)
    if c0.shape == (d,):
        full = np.zeros(n_levels, dtype=complex)
        full[list(decomp.degenerate)] = c0
    elif c0.shape == (n_levels,):
        full = c0.copy()
        outside = np.linalg.norm(np.delete(full, list(decomp.degenerate)))
        if outside > tol:
            raise ValidationError(
                f"initial state has weight {outside:.2e} outside the degenerate "
                f"set; only states inside the covered subspace can be propagated"
            )
    else:
        raise ValidationError(f"initial state shape {c0.shape} matches neither d nor N")
    norm = np.linalg.norm(full)
    if not np.isclose(norm, 1.0, atol=1e-12):
        raise ValidationError("initial state must be normalized")
    return full


def amplitudes(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    heff: EffectiveHamiltonian,
    w: WOperator,
    c0,
    times,
    normalize: bool | None = None,
    heff_order: int | None = None,
    w_order: int | None = None,
) -> EvolutionResult:
    """Bare-basis amplitudes from the effective propagator and W columns.

    Evaluates c_l(t) = sum_p e^{-i(E_0 + p wd) t} <<l,p| W U(t) W^dag S(0)^dag
    |psi(0)>, with the bilinear in W truncated at combined order w_order so
    that each order of the expansion is reproduced exactly.  Normalization is
    opt-in and defaults to on for w_order >= 1, where the truncated state is
    not normalized.
    """
    r_w = w.order if w_order is None else w_order
    if not 0 <= r_w <= w.order:
        raise ValidationError(f"w_order {r_w} outside the computed range")
    if normalize is None:
        normalize = r_w >= 1
    times = np.asarray(times, dtype=float)
    n_levels = system.dim
    space = w.space
    full0 = _initial_on_degenerate(c0, decomp, n_levels)

    matrix = heff.total if heff_order is None else heff.cumulative(heff_order)
    evals, vecs = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    phases_eff = np.exp(-1j * np.outer(times, evals))  # (nt, d)

    # B_r[j, l] = sum_p conj(W_r[(l, p), j]) realizes W_r^dag S(0)^dag
    n_sec = 2 * space.p_max + 1
    w_cols = [np.asarray(m) for m in w.orders]
    b_mats = [
        m.conj().reshape(n_sec, n_levels, -1).sum(axis=0).T for m in w_cols
    ]

    sambe_t = np.zeros((len(times), space.dim), dtype=complex)
    for r1 in range(r_w + 1):
        left = w_cols[r1]
        for r2 in range(r_w + 1 - r1):
            phi0 = vecs @ (
                (vecs.conj().T @ (b_mats[r2] @ full0))[None, :] * phases_eff
            ).T  # (d, nt)
            sambe_t += (left @ phi0).T

    sector_phase = np.exp(
        -1j
        * np.outer(times, decomp.reference_energy + space.sectors * decomp.drive_frequency)
    )  # (nt, n_sec)
    stacked = sambe_t.reshape(len(times), n_sec, n_levels)
    amps = np.einsum("ts,tsl->lt", sector_phase, stacked)

    mismatch = float(np.linalg.norm(np.abs(amps[:, 0]) - np.abs(full0)))
    if normalize:
        norms = np.linalg.norm(amps, axis=0)
        amps = amps / norms[None, :]

    return EvolutionResult(
        times=times,
        amplitudes=amps,
        degenerate=decomp.degenerate,
        metadata={
            "heff_order": heff_order or heff.order,
            "w_order": r_w,
            "drive_frequency": decomp.drive_frequency,
            "normalized": bool(normalize),
            "initial_mismatch": mismatch,
        },
    )


def first_order_amplitudes(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    heff: EffectiveHamiltonian | np.ndarray,
    c0,
    times,
    normalize: bool = True,
) -> EvolutionResult:
    """Closed-form evolution with the transformation expanded to first order.

    No extended-space matrices are involved: the zeroth order propagates the
    degenerate amplitudes with sector phases, and the first order adds one
    perturbation insertion on either side of the effective propagator,
    weighted by the corresponding energy denominators.  Agrees with
    ``amplitudes(..., w_order=1)`` identically.
    """
    times = np.asarray(times, dtype=float)
    n_levels = system.dim
    members = list(decomp.degenerate)
    full0 = _initial_on_degenerate(c0, decomp, n_levels)
    c0_d = full0[members]

    matrix = heff.total if isinstance(heff, EffectiveHamiltonian) else np.asarray(heff)
    u_t = u_eff(matrix, times)  # (nt, d, d)
    u_c0 = u_t @ c0_d  # (nt, d)

    wd = decomp.drive_frequency
    e0 = decomp.reference_energy
    shifted = decomp.shifted_energies
    n_of = decomp.photon_numbers

    harmonics = {0: decomp.static_perturbation}
    for p, v in system.harmonics.items():
        if p != 0 and np.any(v):
            harmonics[p] = v

    amps = np.zeros((n_levels, len(times)), dtype=complex)

    # zeroth order: sector phase times the effective propagator
    for j, l in enumerate(members):
        phase = np.exp(-1j * (e0 + n_of[l] * wd) * times)
        amps[l, :] += phase * u_c0[:, j]

    # first order, perturbation on the bra side: reaches every level
    for jp, kp in enumerate(members):
        for p, v in harmonics.items():
            sector = p + n_of[kp]
            phase = np.exp(-1j * (e0 + sector * wd) * times)
            for l in range(n_levels):
                if l in members and n_of[l] == sector:
                    continue  # that term belongs to the projector support
                coupling = v[l, kp]
                if coupling == 0:
                    continue
                denom = shifted[kp] + p * wd - shifted[l]
                amps[l, :] += phase * coupling / denom * u_c0[:, jp]

    # first order, perturbation on the initial-state side
    for j, l in enumerate(members):
        phase = np.exp(-1j * (e0 + n_of[l] * wd) * times)
        for jp, kp in enumerate(members):
            for jk, k in enumerate(members):
                acc = 0.0 + 0.0j
                for p, v in harmonics.items():
                    if n_of[kp] - p == n_of[k]:
                        continue  # projector support on the ket side
                    coupling = v[kp, k]
                    if coupling == 0:
                        continue
                    acc += coupling / (shifted[kp] - p * wd - shifted[k])
                amps[l, :] += phase * u_t[:, j, jp] * acc * full0[k]

    if normalize:
        amps = amps / np.linalg.norm(amps, axis=0)[None, :]

    return EvolutionResult(
        times=times,
        amplitudes=amps,
        degenerate=decomp.degenerate,
        metadata={
            "w_order": 1,
            "drive_frequency": wd,
            "normalized": bool(normalize),
            "closed_form": True,
        },
    )


@dataclass(frozen=True)
class TransferPoint:
    t_op: float
    fidelity: float
    flagged: bool


def max_transfer(result: EvolutionResult, level: int) -> TransferPoint:
    """First maximum of one level's population, refined by a parabola.

    The grid argmax is sharpened with a three-point quadratic fit; a maximum
    sitting on the boundary of the window is flagged (monotone population, no
    interior peak).  Ties resolve to the earliest time.
    """
    pops = result.populations[level, :]
    times = result.times
    idx = int(np.argmax(pops))
    if idx == 0 or idx == len(times) - 1:
        return TransferPoint(float(times[idx]), float(pops[idx]), True)
    t0, t1, t2 = times[idx - 1 : idx + 2]
    p0, p1, p2 = pops[idx - 1 : idx + 2]
    denom = (p0 - 2 * p1 + p2)
    if denom >= 0:  # degenerate curvature; keep the grid point
        return TransferPoint(float(times[idx]), float(p1), False)
    shift = 0.5 * (p0 - p2) / denom
    dt = times[idx + 1] - times[idx]
    t_op = times[idx] + shift * dt
    fidelity = min(float(p1 - 0.25 * (p0 - p2) * shift), 1.0)
    return TransferPoint(float(t_op), fidelity, False)
