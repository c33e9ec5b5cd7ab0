"""Effective Hamiltonians, subspace transformations and diagram enumeration.

Two independent evaluation paths are provided on purpose.  The matrix path
contracts the exact coefficient tables with sparse operators on the truncated
extended space and is authoritative.  The diagram path enumerates every
multi-photon process (photon pattern, virtual states, resolvent exponents)
explicitly; it feeds reporting and cross-validates the matrix path term by
term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from . import opalg, sambe
from .errors import EnumerationCapError, NumericalError, ValidationError
from .model import DrivenSystem, ResonantDecomposition, decompose
from .opalg import heff_table, w_table
from .sambe import SambeOperators, build_operators, build_space, evaluate_string


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Per-order effective Hamiltonian blocks on the degenerate set.

    ``orders[r-1]`` is the order-r (d, d) block; ``total`` is their sum.
    Row/column j corresponds to ``levels[j]``.
    """

    levels: tuple[int, ...]
    orders: tuple[np.ndarray, ...]
    drive_frequency: float
    metadata: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.orders)

    @property
    def total(self) -> np.ndarray:
        return self.cumulative(self.order)

    def cumulative(self, r: int) -> np.ndarray:
        if not 1 <= r <= self.order:
            raise ValidationError(f"cumulative order {r} outside computed range")
        return sum(self.orders[:r])

    def _index(self, level: int) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise ValidationError(f"level {level} is not in the degenerate set") from None

    def delta(self, level: int, order: int | None = None) -> float:
        """Stark-shifted effective energy of one degenerate level."""
        matrix = self.total if order is None else self.cumulative(order)
        return float(matrix[self._index(level), self._index(level)].real)

    def omega(self, to_level: int, from_level: int, order: int | None = None) -> complex:
        """Effective coupling rate between two degenerate levels."""
        matrix = self.total if order is None else self.cumulative(order)
        return complex(matrix[self._index(to_level), self._index(from_level)])


@dataclass(frozen=True)
class WOperator:
    """Per-order transformation columns from the degenerate set into the
    extended space; ``orders[r]`` is the (dim, d) matrix of order r."""

    levels: tuple[int, ...]
    orders: tuple[np.ndarray, ...]
    space: sambe.SambeSpace

    @property
    def order(self) -> int:
        return len(self.orders) - 1

    def cumulative(self, r: int | None = None) -> np.ndarray:
        r = self.order if r is None else r
        if not 0 <= r <= self.order:
            raise ValidationError(f"cumulative order {r} outside computed range")
        return sum(self.orders[: r + 1])


def _operators_for(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    r_max: int,
    allow_near_resonance: bool,
    guard: float,
) -> SambeOperators:
    space = build_space(decomp, r_max, system.max_harmonic)
    return build_operators(system, decomp, space, allow_near_resonance, guard)


def effective_hamiltonian(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    order: int,
    operators: SambeOperators | None = None,
    allow_near_resonance: bool = False,
    guard: float = sambe.NEAR_RESONANCE_GUARD,
) -> EffectiveHamiltonian:
    """Matrix-path effective Hamiltonian through the requested order."""
    if order < 1:
        raise ValidationError("the effective Hamiltonian starts at order 1")
    ops = operators or _operators_for(system, decomp, order, allow_near_resonance, guard)
    blocks = tuple(evaluate_string(heff_table(r), ops) for r in range(1, order + 1))
    return EffectiveHamiltonian(
        levels=decomp.degenerate,
        orders=blocks,
        drive_frequency=decomp.drive_frequency,
        metadata={"p_max": ops.space.p_max, "dimension": ops.space.dim},
    )


def w_operator(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    order: int,
    operators: SambeOperators | None = None,
    allow_near_resonance: bool = False,
    guard: float = sambe.NEAR_RESONANCE_GUARD,
) -> WOperator:
    """Matrix-path transformation columns through the requested order."""
    if order < 0:
        raise ValidationError("the transformation order is non-negative")
    ops = operators or _operators_for(
        system, decomp, max(order, 1), allow_near_resonance, guard
    )
    columns = [ops.projector_columns()]
    for r in range(1, order + 1):
        columns.append(evaluate_string(w_table(r), ops))
    return WOperator(levels=decomp.degenerate, orders=tuple(columns), space=ops.space)


# -- diagram path --------------------------------------------------------------


@dataclass(frozen=True)
class ProcessTerm:
    """One multi-photon process contributing to an effective matrix element.

    ``photons[j]`` is the net photon number absorbed at step j+1,
    ``intermediates`` the visited virtual levels, ``exponents`` the resolvent
    powers (zero exactly on resonant steps), ``denominators`` the energy
    penalties of the non-resonant steps.
    """

    order: int
    photons: tuple[int, ...]
    intermediates: tuple[int, ...]
    exponents: tuple[int, ...]
    coefficient: Fraction
    denominators: tuple[float, ...]
    amplitude: complex

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "photons": list(self.photons),
            "intermediates": list(self.intermediates),
            "exponents": list(self.exponents),
            "coefficient": [self.coefficient.numerator, self.coefficient.denominator],
            "denominators": list(self.denominators),
            "amplitude": [self.amplitude.real, self.amplitude.imag],
        }


def _compositions(total: int, slots: int):
    """All tuples of `slots` positive integers summing to `total`."""
    if slots == 0:
        if total == 0:
            yield ()
        return
    for first in range(1, total - slots + 2):
        for rest in _compositions(total - first, slots - 1):
            yield (first,) + rest


def enumerate_processes(
    system: DrivenSystem,
    decomp: ResonantDecomposition,
    to_level: int,
    from_level: int,
    order: int,
    max_terms: int = 10**7,
) -> list[ProcessTerm]:
    """Explicit enumeration of all order-r processes between two D levels.

    Follows the matrix-element rules: photon patterns sum to n_l - n_k,
    virtual levels are unrestricted, resonant intermediate steps (decided in
    exact integer arithmetic on photon counts) carry exponent zero while the
    remaining exponents are positive and sum to r - 1, weighted by the
    multiplicity table.  The amplitudes sum to the matrix-path entry.
    """
    if to_level not in decomp.degenerate or from_level not in decomp.degenerate:
        raise ValidationError("process endpoints must lie in the degenerate set")
    wd = decomp.drive_frequency
    shifted = decomp.shifted_energies
    n_from = int(decomp.photon_numbers[from_level])
    n_to = int(decomp.photon_numbers[to_level])
    resonant_sector = {
        int(decomp.photon_numbers[k]): k for k in decomp.degenerate
    }

    v_of = {0: decomp.static_perturbation}
    for p, v in system.harmonics.items():
        if p != 0 and np.any(v):
            v_of[p] = v
    steps = sorted(v_of)
    n_lev = system.dim

    if order == 1:
        v = v_of.get(n_to - n_from)
        terms = []
        if v is not None and v[to_level, from_level] != 0:
            terms.append(
                ProcessTerm(1, (n_to - n_from,), (), (), Fraction(1), (),
                            complex(v[to_level, from_level]))
            )
        return terms

    table = heff_table(order)
    budget = max_terms
    results: list[ProcessTerm] = []

    def photon_patterns(prefix, remaining):
        if remaining == 1:
            last = (n_to - n_from) - sum(prefix)
            if last in v_of:
                yield prefix + (last,)
            return
        for p in steps:
            yield from photon_patterns(prefix + (p,), remaining - 1)

    reference = decomp.reference_energy
    for photons in photon_patterns((), order):
        # absolute sector after each step; E~_k + (sum p) wd = E~_0 + q wd
        cumulative = np.cumsum(photons[:-1]) + n_from
        step_v = [v_of[p] for p in photons]
        for chain in np.ndindex(*(n_lev,) * (order - 1)):
            budget -= 1
            if budget < 0:
                raise EnumerationCapError(
                    f"more than {max_terms} diagram combinations at order {order}; "
                    f"use the matrix path"
                )
            amp0 = step_v[0][chain[0], from_level]
            if amp0 == 0:
                continue
            chain_amp = amp0
            ok = True
            for j in range(1, order - 1):
                factor = step_v[j][chain[j], chain[j - 1]]
                if factor == 0:
                    ok = False
                    break
                chain_amp *= factor
            if not ok:
                continue
            factor = step_v[-1][to_level, chain[-1]]
            if factor == 0:
                continue
            chain_amp *= factor

            resonant = [
                resonant_sector.get(int(q)) == a for a, q in zip(chain, cumulative)
            ]
            free = [j for j, res in enumerate(resonant) if not res]
            denominators = np.array(
                [reference + q * wd - shifted[a] for a, q in zip(chain, cumulative)]
            )
            n_free = len(free)
            for extra in _compositions(order - 1, n_free):
                exponents = [0] * (order - 1)
                for slot, m in zip(free, extra):
                    exponents[slot] = m
                key = tuple(exponents[::-1])
                coeff = table.get(key)
                if coeff is None:
                    continue
                denom = 1.0
                used = []
                for slot, m in zip(free, extra):
                    denom *= denominators[slot] ** m
                    used.append(float(denominators[slot]))
                amplitude = float(coeff) * chain_amp / denom
                results.append(
                    ProcessTerm(
                        order=order,
                        photons=tuple(int(p) for p in photons),
                        intermediates=tuple(int(a) for a in chain),
                        exponents=tuple(exponents),
                        coefficient=coeff,
                        denominators=tuple(used),
                        amplitude=complex(amplitude),
                    )
                )
    return results


# -- resonance and closed forms -------------------------------------------------


class RabiRate(NamedTuple):
    omega_r: float
    t_pi: float


def rabi_frequency(heff: EffectiveHamiltonian, order: int | None = None) -> RabiRate:
    """Two-level Rabi frequency sqrt(Delta^2 + 4 |Omega|^2) and pi time."""
    if len(heff.levels) != 2:
        raise ValidationError(
            "the Rabi-frequency formula needs exactly two degenerate levels; "
            "use the evolution module for larger sets"
        )
    matrix = heff.total if order is None else heff.cumulative(order)
    detuning = float((matrix[1, 1] - matrix[0, 0]).real)
    coupling = complex(matrix[1, 0])
    omega_r = float(np.sqrt(detuning**2 + 4.0 * abs(coupling) ** 2))
    return RabiRate(omega_r, np.pi / omega_r if omega_r > 0 else np.inf)


@dataclass(frozen=True)
class ResonanceResult:
    omega_d: float
    roots: tuple[float, ...]
    residual: float
    flagged: bool


def resonance_frequency(
    build: Callable[[float], DrivenSystem],
    bracket: tuple[float, float],
    order: int,
    explicit_D: list[int] | None = None,
    explicit_photons: dict[int, int] | None = None,
    threshold: float | None = None,
    tol: float = 1e-10,
    scan_points: int = 17,
    allow_near_resonance: bool = False,
) -> ResonanceResult:
    """Drive frequency at which the two degenerate Stark shifts coincide.

    The splitting Delta(wd) = delta_1 - delta_0 of the cumulative-order
    effective Hamiltonian is scanned over the bracket; each sign change is
    polished by a bracketed secant with bisection fallback.  Multiple roots
    are all returned and flagged.
    """

    def splitting(wd: float) -> float:
        system = build(wd)
        kwargs = {"explicit_D": explicit_D, "explicit_photons": explicit_photons}
        if threshold is not None:
            kwargs["threshold"] = threshold
        dec = decompose(system, **{k: v for k, v in kwargs.items() if v is not None})
        heff = effective_hamiltonian(
            system, dec, order, allow_near_resonance=allow_near_resonance
        )
        matrix = heff.total
        return float((matrix[1, 1] - matrix[0, 0]).real)

    lo, hi = bracket
    if not lo < hi:
        raise ValidationError("bracket must be ordered (lo, hi)")
    grid = np.linspace(lo, hi, scan_points)
    values = [splitting(w) for w in grid]
    crossings = [
        (grid[i], grid[i + 1], values[i], values[i + 1])
        for i in range(len(grid) - 1)
        if values[i] == 0.0 or values[i] * values[i + 1] < 0
    ]
    if not crossings:
        raise NumericalError(
            f"no sign change of the Stark-shift splitting in [{lo:.6g}, {hi:.6g}]"
        )

    roots = []
    for a, b, fa, fb in crossings:
        roots.append(_bracketed_secant(splitting, a, b, fa, fb, tol))
    primary = roots[0]
    return ResonanceResult(
        omega_d=primary,
        roots=tuple(roots),
        residual=abs(splitting(primary)),
        flagged=len(roots) > 1,
    )


def _bracketed_secant(f, a, b, fa, fb, rtol):
    """Secant steps kept inside a shrinking bracket, bisection fallback."""
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    for _ in range(200):
        if abs(b - a) <= rtol * abs(b):
            break
        denom = fb - fa
        x = b - fb * (b - a) / denom if denom != 0 else 0.5 * (a + b)
        if not min(a, b) < x < max(a, b):
            x = 0.5 * (a + b)
        fx = f(x)
        if fx == 0.0:
            return x
        if fa * fx < 0:
            b, fb = x, fx
        else:
            a, fa = x, fx
    return b if abs(fb) < abs(fa) else a


@dataclass(frozen=True)
class LeadingOrder:
    """Closed-form leading coupling and Stark shifts of a monochromatic drive.

    ``coupling`` is the order-n_1 coupling rate between the two degenerate
    levels, ``stark2`` the order-2 shift of each degenerate level, and
    ``splitting3`` the order-3 contribution to delta_1 - delta_0 (linear in
    the residual detuning; only defined for a three-photon resonance).
    """

    coupling: complex
    coupling_order: int
    stark2: np.ndarray
    splitting3: float | None


def closed_form_leading(
    system: DrivenSystem, decomp: ResonantDecomposition
) -> LeadingOrder:
    """Direct summation of the leading-order formulas.

    Independent of the coefficient-table machinery: the n_1-th order coupling
    is a single chain of n_1 one-photon absorptions over all virtual paths,
    and the order-2 shifts collect the static, absorption and emission
    second-order processes.
    """
    if system.max_harmonic != 1:
        raise ValidationError("closed forms require a monochromatic drive")
    if len(decomp.degenerate) != 2:
        raise ValidationError("closed forms require exactly two degenerate levels")
    k0, k1 = decomp.degenerate
    wd = decomp.drive_frequency
    shifted = decomp.shifted_energies
    n1 = int(decomp.photon_numbers[k1] - decomp.photon_numbers[k0])
    v1 = system.harmonic(1)
    v0 = decomp.static_perturbation
    n_lev = system.dim

    # coupling: n1 successive single-photon absorptions, no resonant steps
    coupling = 0.0 + 0.0j
    if n1 >= 1:
        base_sector = int(decomp.photon_numbers[k0])
        amps = np.zeros(n_lev, dtype=complex)
        amps[:] = v1[:, k0]
        for step in range(1, n1):
            energy = shifted[k0] + step * wd
            denominators = energy - shifted
            amps = v1 @ (amps / denominators)
        coupling = complex(amps[k1]) if n1 > 1 else complex(v1[k1, k0])

    stark2 = np.zeros(2)
    for row, k in enumerate((k0, k1)):
        shift = 0.0
        for l in range(n_lev):
            if l != k and shifted[k] != shifted[l]:
                shift += abs(v0[l, k]) ** 2 / (shifted[k] - shifted[l])
            for sign in (+1, -1):
                gap = shifted[k] + sign * wd - shifted[l]
                shift += abs(v1[l, k] if sign > 0 else np.conj(v1[k, l])) ** 2 / gap
        stark2[row] = shift

    splitting3 = None
    if n1 == 3:
        # detuning from exact three-photon resonance; the sign of the whole
        # bracket is fixed by the order-3 matrix evaluation
        eps = -float(decomp.detunings[k1])
        total = 5.0 * abs(v1[k0, k1]) ** 2 * eps / (8.0 * wd**2)
        for l in range(n_lev):
            if l in (k0, k1):
                continue
            v_1l = v1[l, k1]
            if v_1l == 0:
                continue
            for m in (4.0, 2.0):
                gap = m * wd + shifted[k0] - shifted[l]
                total += abs(v_1l) ** 2 * eps / gap**2
        splitting3 = float(total)

    return LeadingOrder(
        coupling=coupling,
        coupling_order=n1,
        stark2=stark2,
        splitting3=splitting3,
    )
