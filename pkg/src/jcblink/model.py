"""Operators and Hamiltonians of the driven, lossy Jaynes-Cummings model.

Everything lives on the product space (two-level atom) x (Fock space truncated
at photon number `cutoff`), dimension D = 2*(cutoff+1).

Basis ordering
--------------
The linear index is i = 2*n + s with s = 0 for the atomic ground state g and
s = 1 for the excited state e, i.e. (g,0), (e,0), (g,1), (e,1), ...
Serialized state vectors always use this ordering.

Conventions
-----------
All rates are plain numbers in whatever unit system the caller adopts; the
rest of the package fixes kappa = 1 so times are in 1/kappa.  The rotating
frame of the drive is used throughout, with detuning delta = omega - omega_M
(drive minus mode, mode and atom resonant), so the coherent part reads

    H = -delta (a'a + s's) + i g (a's - s'a) + i eta (a' - a)

with a' = a-dagger, s = sigma (atomic lowering).  The field decays at kappa
(amplitude rate: photon number decays at 2*kappa) and the atom at gamma, so
the no-click drift is H_eff = H - i kappa a'a - i gamma s's and the jump
operators are sqrt(2 kappa) a and sqrt(2 gamma) sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters. `kappa` sets the time unit and must stay > 0."""

    g: float
    delta: float
    eta: float
    gamma: float = 0.0
    kappa: float = 1.0
    cutoff: int = 30

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0 (it defines the time unit)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0 (real non-negative drive)")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError("cutoff must be an integer >= 1")

    @property
    def dim(self) -> int:
        return 2 * (self.cutoff + 1)


@dataclass(frozen=True)
class Operators:
    """Dense matrix realizations on the product space, all D x D complex."""

    a: np.ndarray
    a_dag: np.ndarray
    sigma: np.ndarray
    sigma_dag: np.ndarray
    number: np.ndarray          # a'a
    atom_excitation: np.ndarray  # s's
    cutoff: int = field(repr=False, default=0)


def basis_index(atom: int, n: int) -> int:
    """Linear index of |atom, n> with atom 0=g, 1=e."""
    return 2 * n + atom


def basis_state(atom: int, n: int, cutoff: int) -> np.ndarray:
    if atom not in (0, 1):
        raise ValueError("atom must be 0 (g) or 1 (e)")
    if not 0 <= n <= cutoff:
        raise ValueError(f"photon number {n} outside 0..{cutoff}")
    psi = np.zeros(2 * (cutoff + 1), dtype=complex)
    psi[basis_index(atom, n)] = 1.0
    return psi


def build_operators(cutoff: int) -> Operators:
    """Ladder and atomic operators truncated at Fock index `cutoff`.

    The truncation simply drops the a'|cutoff> overflow amplitude, so a'
    is not an exact adjoint action at the top level; a'a is still exact on
    the retained space.  Callers that evolve states are expected to police
    the top levels (see mcwf.cutoff_guard).
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    nf = cutoff + 1
    a_f = np.diag(np.sqrt(np.arange(1, nf, dtype=float)), 1).astype(complex)
    id_f = np.eye(nf, dtype=complex)
    sig = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # <g|sigma|e>=1
    id_a = np.eye(2, dtype=complex)

    # photon index slow, atom index fast: kron(fock, atom)
    a = np.kron(a_f, id_a)
    sigma = np.kron(id_f, sig)
    return Operators(
        a=a,
        a_dag=a.conj().T,
        sigma=sigma,
        sigma_dag=sigma.conj().T,
        number=a.conj().T @ a,
        atom_excitation=sigma.conj().T @ sigma,
        cutoff=cutoff,
    )


def build_hamiltonian(params: ModelParams, ops: Operators | None = None) -> np.ndarray:
    """Rotating-frame Hamiltonian -delta(a'a + s's) + ig(a's - s'a) + i eta(a' - a)."""
    if ops is None:
        ops = build_operators(params.cutoff)
    h = (
        -params.delta * (ops.number + ops.atom_excitation)
        + 1j * params.g * (ops.a_dag @ ops.sigma - ops.sigma_dag @ ops.a)
        + 1j * params.eta * (ops.a_dag - ops.a)
    )
    return h


def build_effective_hamiltonian(params: ModelParams, ops: Operators | None = None) -> np.ndarray:
    """Non-Hermitian no-click drift H - i kappa a'a - i gamma s's."""
    if ops is None:
        ops = build_operators(params.cutoff)
    h = build_hamiltonian(params, ops)
    return h - 1j * params.kappa * ops.number - 1j * params.gamma * ops.atom_excitation


def jump_operators(params: ModelParams, ops: Operators | None = None) -> list[np.ndarray]:
    """Collapse operators [sqrt(2 kappa) a] plus [sqrt(2 gamma) sigma] when gamma > 0."""
    if ops is None:
        ops = build_operators(params.cutoff)
    cs = [math.sqrt(2.0 * params.kappa) * ops.a]
    if params.gamma > 0:
        cs.append(math.sqrt(2.0 * params.gamma) * ops.sigma)
    return cs


def dressed_state(n: int, sign: int, cutoff: int) -> np.ndarray:
    """n-th dressed doublet member, an equal-weight g,n / e,n-1 superposition.

    With the i g (a's - s'a) coupling convention the eigenvectors carry a
    relative phase -+i on the atomic component:

        |n,+> = (|g,n> - i |e,n-1>)/sqrt(2),  energy -n delta + sqrt(n) g
        |n,-> = (|g,n> + i |e,n-1>)/sqrt(2),  energy -n delta - sqrt(n) g

    Amplitude magnitudes are 1/sqrt(2) on both components, as in the usual
    real-coupling convention; only the phase differs (atom gauge).
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if not 1 <= n <= cutoff:
        raise ValueError(f"n={n} outside 1..{cutoff}")
    psi = np.zeros(2 * (cutoff + 1), dtype=complex)
    psi[basis_index(0, n)] = 1.0 / math.sqrt(2.0)
    psi[basis_index(1, n - 1)] = -sign * 1j / math.sqrt(2.0)
    return psi


def dressed_energy(n: int, sign: int, delta: float, g: float) -> float:
    """Rotating-frame energy of |n,+-> at eta=0: -n*delta +- sqrt(n)*g."""
    return -n * delta + sign * math.sqrt(n) * g


def ladder_switch_probability(n: int) -> float:
    """Probability that a photon escape from |n,+-> switches the dressed ladder.

    A cavity jump from level n branches with amplitudes (sqrt(n)+sqrt(n-1))/2
    on the same ladder and (sqrt(n)-sqrt(n-1))/2 on the opposite one; the
    switch probability decays like 1/(16 n^2) for large n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    stay = (math.sqrt(n) + math.sqrt(n - 1)) ** 2
    switch = (math.sqrt(n) - math.sqrt(n - 1)) ** 2
    return switch / (stay + switch)


def atomic_switch_probability() -> float:
    """Ladder-switch probability under an atomic decay event: always 1/2."""
    return 0.5


def suggested_cutoff(g: float, delta: float, eta: float, kappa: float = 1.0) -> int:
    """Fock cutoff with headroom above the expected bright-state occupation.

    Uses n_ref = max(g^2/(2 delta^2), eta^2/(kappa^2+delta^2)) and returns
    ceil(n_ref + 6 sqrt(n_ref) + 15), enough that the top levels stay below
    the mcwf guard threshold in ordinary operation.
    """
    n_bright = (g * g) / (2.0 * delta * delta) if delta != 0 else 0.0
    n_drive = eta * eta / (kappa * kappa + delta * delta)
    n_ref = max(n_bright, n_drive)
    return math.ceil(n_ref + 6.0 * math.sqrt(n_ref) + 15.0)
