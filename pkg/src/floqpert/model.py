"""Driven quantum systems and their quasi-resonant decomposition.

A system is a bare spectrum plus the Fourier harmonics of a periodic drive,
all in angular-frequency units (rad/ns when built from GHz circuit
parameters).  The decomposition splits every level's gap to the reference
state into an integer number of drive photons plus a residual detuning and
collects the quasi-resonant levels into the degenerate set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousDegeneracyError,
    BasisConvergenceError,
    BoundaryResonanceError,
    ValidationError,
)

TWO_PI = 2.0 * math.pi

#: default quasi-resonance threshold, as a fraction of the drive frequency
DEFAULT_THRESHOLD = 1e-6

HERMITIAN_PAIR_TOL = 1e-12


@dataclass(frozen=True)
class DrivenSystem:
    """Bare spectrum plus drive harmonics, in angular-frequency units.

    ``harmonics[p]`` is the matrix of the e^{-i p wd t} Fourier component of
    the drive; stored components must satisfy the Hermitian pairing
    V_p = adjoint(V_{-p}).  Instances are immutable and safely shareable.
    """

    energies: np.ndarray
    harmonics: dict[int, np.ndarray]
    drive_frequency: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        object.__setattr__(self, "energies", energies)
        if energies.ndim != 1 or len(energies) < 1:
            raise ValidationError("energies must be a non-empty 1-D array")
        if np.any(np.diff(energies) < 0):
            raise ValidationError("energies must be sorted ascending")
        if not self.drive_frequency > 0:
            raise ValidationError("drive frequency must be positive")
        n = len(energies)
        harmonics = {}
        for p, v in self.harmonics.items():
            v = np.asarray(v, dtype=complex)
            if v.shape != (n, n):
                raise ValidationError(f"harmonic {p} has shape {v.shape}, expected {(n, n)}")
            harmonics[int(p)] = v
        for p, v in harmonics.items():
            partner = harmonics.get(-p)
            if partner is None:
                raise ValidationError(f"harmonic {p} stored without its adjoint partner {-p}")
            if np.max(np.abs(v - partner.conj().T)) > HERMITIAN_PAIR_TOL * max(
                1.0, np.max(np.abs(v))
            ):
                raise ValidationError(f"harmonics {p} and {-p} are not adjoint partners")
        object.__setattr__(self, "harmonics", harmonics)
        energies.setflags(write=False)
        for v in harmonics.values():
            v.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def max_harmonic(self) -> int:
        """Largest |p| with a stored non-zero harmonic."""
        orders = [abs(p) for p, v in self.harmonics.items() if np.any(v)]
        return max(orders, default=0)

    def harmonic(self, p: int) -> np.ndarray:
        """V_p, zero when the harmonic is absent."""
        v = self.harmonics.get(p)
        if v is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return v


def system_from_positive_harmonics(
    energies, positive: dict[int, np.ndarray], drive_frequency: float, metadata=None
) -> DrivenSystem:
    """Build a DrivenSystem from harmonics with p >= 0, adding adjoints."""
    harmonics: dict[int, np.ndarray] = {}
    for p, v in positive.items():
        if p < 0:
            raise ValidationError("only p >= 0 harmonics may be supplied here")
        v = np.asarray(v, dtype=complex)
        if p == 0:
            harmonics[0] = v
        else:
            harmonics[p] = v
            harmonics[-p] = v.conj().T
    return DrivenSystem(
        np.asarray(energies, dtype=float), harmonics, drive_frequency, metadata or {}
    )


@dataclass(frozen=True)
class ResonantDecomposition:
    """Photon numbers, detunings and the degenerate set of a driven system.

    For every level, E_k - E_0 = n_k wd + eps_k with eps_k in
    [-wd/2, wd/2).  Members of the degenerate set have their detuning moved
    into the static perturbation; their shifted energies sit exactly on the
    photon ladder of the reference state.
    """

    photon_numbers: np.ndarray
    detunings: np.ndarray
    degenerate: tuple[int, ...]
    shifted_energies: np.ndarray
    static_perturbation: np.ndarray
    drive_frequency: float

    def __post_init__(self):
        for name in ("photon_numbers", "detunings", "shifted_energies", "static_perturbation"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.photon_numbers)

    @property
    def reference_energy(self) -> float:
        """Energy of the degenerate Sambe eigenspace (equals E_0)."""
        return float(self.shifted_energies[0])


def decompose(
    system: DrivenSystem,
    threshold: float = DEFAULT_THRESHOLD,
    explicit_D: list[int] | None = None,
    explicit_photons: dict[int, int] | None = None,
) -> ResonantDecomposition:
    """Quasi-resonant decomposition of a driven system.

    Each gap to the reference level 0 is split into photon number and
    residual detuning.  The degenerate set is either given explicitly or
    collected as the levels with |eps_k| <= threshold * wd.  Detunings of the
    degenerate members are moved into the static perturbation together with
    any static drive harmonic.

    ``explicit_photons`` pins chosen levels to a photon sector by hand, for
    tracking a resonance branch whose drive-induced shift has grown past the
    nearest-integer boundary; the corresponding detunings may then exceed
    half the drive frequency.
    """
    wd = system.drive_frequency
    energies = system.energies
    gaps = energies - energies[0]
    photon = np.floor(gaps / wd + 0.5).astype(int)
    if explicit_photons:
        for k, n in explicit_photons.items():
            photon[k] = int(n)
    eps = gaps - photon * wd

    for k, e in enumerate(eps):
        if abs(abs(e) - wd / 2) == 0.0:
            raise BoundaryResonanceError(
                f"level {k} sits exactly on the half-drive boundary "
                f"(eps = {e:+.6g}); perturb the drive frequency"
            )

    if explicit_D is not None:
        members = sorted(set(int(k) for k in explicit_D))
        if 0 not in members:
            raise ValidationError("the degenerate set must contain the reference level 0")
        if any(k < 0 or k >= system.dim for k in members):
            raise ValidationError("degenerate set contains an out-of-range level")
    else:
        members = [k for k in range(system.dim) if abs(eps[k]) <= threshold * wd]

    seen: dict[int, int] = {}
    for k in members:
        other = seen.get(photon[k])
        if other is not None and energies[other] != energies[k]:
            raise AmbiguousDegeneracyError(
                f"levels {other} and {k} both claim the {photon[k]}-photon sector "
                f"with distinct bare energies; shrink the threshold or pick D explicitly"
            )
        seen[int(photon[k])] = k

    shifted = energies.copy()
    static = np.zeros((system.dim, system.dim), dtype=complex)
    static += system.harmonic(0)
    for k in members:
        shifted[k] = energies[0] + photon[k] * wd
        static[k, k] += eps[k]

    return ResonantDecomposition(
        photon_numbers=photon,
        detunings=eps,
        degenerate=tuple(members),
        shifted_energies=shifted,
        static_perturbation=static,
        drive_frequency=wd,
    )


# -- model builders -----------------------------------------------------------


def xz_model(omega01: float, omega_x: float, omega_z: float, drive_frequency: float) -> DrivenSystem:
    """Two-level system driven transversely and longitudinally.

    The lab Hamiltonian is (omega01/2) sz + 2 cos(wd t)(omega_z sz +
    omega_x sx); energies are relabeled to (0, omega01) and the single
    harmonic V_1 = V_{-1} = omega_z sz + omega_x sx is expressed in the
    ordered eigenbasis, so its diagonal is (-omega_z, +omega_z).
    """
    if omega01 <= 0:
        raise ValidationError("transition frequency must be positive")
    v1 = np.array([[-omega_z, omega_x], [omega_x, omega_z]], dtype=complex)
    return system_from_positive_harmonics(
        [0.0, omega01], {1: v1}, drive_frequency, {"model": "xz"}
    )


def rabi_model(omega01: float, omega_x: float, drive_frequency: float) -> DrivenSystem:
    """Transversely driven two-level system (the xz model with omega_z = 0)."""
    system = xz_model(omega01, omega_x, 0.0, drive_frequency)
    system.metadata["model"] = "rabi"
    return system


@dataclass(frozen=True)
class FluxoniumSpec:
    """Circuit energies of a fluxonium at its flux sweetspot.

    Energies are E/h in GHz.  ``basis_size`` is the harmonic-oscillator basis
    used for diagonalization and ``levels`` the number of retained
    eigenlevels.
    """

    ej: float
    el: float
    ec: float
    amplitude: float
    basis_size: int = 60
    levels: int = 5

    def __post_init__(self):
        if self.ec <= 0 or self.el <= 0:
            raise ValidationError("E_C and E_L must be positive")
        if self.basis_size < 4 * self.levels:
            raise ValidationError("basis size must be at least four times the level count")


def _oscillator_phi(n: int, phi_zpf: float) -> np.ndarray:
    diag = phi_zpf * np.sqrt(np.arange(1, n))
    phi = np.zeros((n, n))
    phi[np.arange(n - 1), np.arange(1, n)] = diag
    phi[np.arange(1, n), np.arange(n - 1)] = diag
    return phi


def _fluxonium_levels(spec: FluxoniumSpec, n_ho: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenlevels of the sweetspot circuit in an oscillator basis.

    The basis oscillator is the E_J = 0 normal mode of frequency
    sqrt(8 E_L E_C); the +E_J cos(phi) sweetspot term creates the double
    well.  Returns angular-frequency eigenvalues and the phase-operator
    matrix in the eigenbasis, with the ladder phases fixed so that
    <k|phi|k+1> >= 0.
    """
    ej, el, ec = TWO_PI * spec.ej, TWO_PI * spec.el, TWO_PI * spec.ec
    phi_zpf = (2.0 * ec / el) ** 0.25
    osc = math.sqrt(8.0 * el * ec)
    phi = _oscillator_phi(n_ho, phi_zpf)
    phi_eigs, phi_vecs = np.linalg.eigh(phi)
    cos_phi = (phi_vecs * np.cos(phi_eigs)) @ phi_vecs.T
    # osc*(n + 1/2) equals 4 E_C n^2 + (E_L/2) phi^2 exactly in this basis
    h = np.diag(osc * (np.arange(n_ho) + 0.5)) + ej * cos_phi
    evals, vecs = np.linalg.eigh(h)
    keep = spec.levels
    evals = evals[:keep]
    vecs = vecs[:, :keep]
    phi_eig = vecs.T @ phi @ vecs
    signs = np.ones(keep)
    for k in range(1, keep):
        if phi_eig[k - 1, k] * signs[k - 1] < 0:
            signs[k] = -1.0
    phi_eig = phi_eig * signs[None, :] * signs[:, None]
    return evals, phi_eig


def fluxonium(spec: FluxoniumSpec, drive_frequency: float) -> DrivenSystem:
    """Flux-driven fluxonium in its eigenbasis, angular units (rad/ns).

    The drive harmonic is V_1 = -(A E_L / 2) phi with the phase convention
    <k|phi|k+1> >= 0 (recorded in metadata).  Eigenvalues must be stable
    under doubling the oscillator basis.
    """
    evals, phi_eig = _fluxonium_levels(spec, spec.basis_size)
    evals2, phi2 = _fluxonium_levels(spec, 2 * spec.basis_size)
    scale = evals[-1] - evals[0]
    drift = np.max(np.abs(evals - evals2)) / scale
    if drift > 1e-10:
        raise BasisConvergenceError(
            f"fluxonium eigenvalues moved by {drift:.2e} (relative) under basis "
            f"doubling; increase basis_size beyond {spec.basis_size}"
        )
    el = TWO_PI * spec.el
    v1 = -(spec.amplitude * el / 2.0) * phi2.astype(complex)
    return system_from_positive_harmonics(
        evals2 - evals2[0],
        {1: v1},
        drive_frequency,
        {
            "model": "fluxonium",
            "phase_convention": "<k|phi|k+1> >= 0; V_1 = -(A E_L/2) phi",
            "basis_size": spec.basis_size,
        },
    )


def _transmon_levels(
    omega_q: float, anharmonicity: float, n_ho: int, levels: int
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenlevels of the quartic transmon Hamiltonian.

    The quartic term with negative anharmonicity makes the truncated matrix
    unbounded from below at large occupation; physical levels are therefore
    selected by overlap with the low Fock states rather than by global
    sorting.  Returns eigenvalues and the (a + adag) matrix in the selected
    eigenbasis with ladder phases fixed non-negative.
    """
    n = np.arange(n_ho)
    x = _oscillator_phi(n_ho, 1.0)  # a + adag
    h = np.diag((omega_q - anharmonicity) * n) + anharmonicity / 12.0 * np.linalg.matrix_power(x, 4)
    evals, vecs = np.linalg.eigh(h)
    order = []
    for target in range(levels):
        weights = np.abs(vecs[target, :]) ** 2
        for idx in np.argsort(weights)[::-1]:
            if idx not in order:
                order.append(int(idx))
                break
    evals = evals[order]
    vecs = vecs[:, order]
    x_eig = vecs.T.conj() @ x @ vecs
    signs = np.ones(levels)
    for k in range(1, levels):
        if (x_eig[k - 1, k] * signs[k - 1]).real < 0:
            signs[k] = -1.0
    x_eig = x_eig * signs[None, :] * signs[:, None]
    resort = np.argsort(evals)
    return evals[resort], x_eig[np.ix_(resort, resort)]


def transmon(
    omega_q: float,
    anharmonicity: float,
    amplitude: float,
    drive_frequency: float,
    levels: int = 5,
    basis_size: int = 56,
) -> DrivenSystem:
    """Charge-driven quartic transmon in its eigenbasis, angular units.

    All frequencies are angular.  The drive matrix is (A/2)(a + adag)
    expressed in the full eigenbasis; no two-level or rotating-wave
    truncation is applied.

    The negative quartic makes the truncated Hamiltonian unbounded from
    below at large occupation, so only the levels well below the classical
    barrier are true bound states.  The convergence check therefore gates on
    the qubit levels; the basis drift of every retained level is recorded in
    the metadata instead of being forced to zero.
    """
    if levels < 4:
        raise ValidationError("keep at least four transmon levels")
    evals, x_eig = _transmon_levels(omega_q, anharmonicity, basis_size, levels)
    probe, _ = _transmon_levels(omega_q, anharmonicity, basis_size + 8, levels)
    scale = evals[-1] - evals[0]
    drift = np.abs(evals - probe) / scale
    if np.max(drift[:2]) > 1e-6:
        raise BasisConvergenceError(
            f"transmon qubit levels moved by {np.max(drift[:2]):.2e} (relative) "
            f"under a basis increase; adjust basis_size={basis_size}"
        )
    v1 = (amplitude / 2.0) * x_eig.astype(complex)
    return system_from_positive_harmonics(
        evals - evals[0],
        {1: v1},
        drive_frequency,
        {
            "model": "transmon",
            "basis_size": basis_size,
            "level_drift": drift.tolist(),
        },
    )


def transmon_rwa_reference(
    omega_q: float, anharmonicity: float, amplitude: float, drive_frequency: float
) -> tuple[float, float]:
    """Frame-change rotating-wave baseline for the driven transmon.

    Returns the drive-induced detuning shift and the three-photon coupling
    rate of the displaced-frame rotating-wave treatment,

        shift    = 2 a (wq - a)^2 A^2 / (wd^2 - (wq - a)^2)^2,
        coupling = a (wq - a)^3 A^3 / (3 (wd^2 - (wq - a)^2)^3).
    """
    gap = drive_frequency**2 - (omega_q - anharmonicity) ** 2
    if gap == 0.0:
        raise ValidationError("drive frequency coincides with the displaced-frame pole")
    shift = 2.0 * anharmonicity * (omega_q - anharmonicity) ** 2 * amplitude**2 / gap**2
    coupling = (
        anharmonicity * (omega_q - anharmonicity) ** 3 * amplitude**3 / (3.0 * gap**3)
    )
    return shift, coupling
