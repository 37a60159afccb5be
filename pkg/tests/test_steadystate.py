"""Liouvillian structure and steady-state oracle checks."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from jcblink.model import ModelParams, build_operators
from jcblink import steadystate as ss


def _vec(rho):
    return rho.reshape(-1, order="F")


def test_vacuum_dark_state():
    p = ModelParams(g=0.0, delta=0.0, eta=0.0, gamma=0.0, cutoff=3)
    liou = ss.build_liouvillian(p)
    rho = np.zeros((p.dim, p.dim), dtype=complex)
    rho[0, 0] = 1.0
    assert np.linalg.norm(liou @ _vec(rho)) < 1e-14


@pytest.mark.parametrize(
    "g,delta,eta,gamma",
    [(0.0, 0.0, 1.0, 0.0), (10.0, -5.0, 2.5, 0.0), (4.0, 1.5, 0.7, 0.02)],
)
def test_trace_preservation(g, delta, eta, gamma):
    p = ModelParams(g=g, delta=delta, eta=eta, gamma=gamma, cutoff=8)
    liou = ss.build_liouvillian(p)
    ident = np.eye(p.dim, dtype=complex)
    assert np.linalg.norm(liou.conj().T @ _vec(ident)) < 1e-10


def test_cutoff_budget_enforced():
    with pytest.raises(ValueError):
        ss.build_liouvillian(ModelParams(g=1.0, delta=0.0, eta=0.0, cutoff=61))


def test_steady_state_nulls_liouvillian():
    p = ModelParams(g=10.0, delta=-5.0, eta=2.5, cutoff=20)
    rho = ss.steady_state(p)
    liou = ss.build_liouvillian(p)
    assert np.linalg.norm(liou @ _vec(rho)) < 1e-9


@pytest.mark.parametrize(
    "g,delta,eta,gamma,cutoff",
    [
        (0.0, 0.0, 1.0, 0.0, 25),
        (0.0, -5.0, 2.0, 0.0, 15),
        (10.0, -5.0, 2.5, 0.0, 20),
        (10.0, -5.0, 2.5, 0.1, 20),
        (5.0, 2.0, 1.0, 0.05, 12),
    ],
)
def test_steady_state_density_matrix_invariants(g, delta, eta, gamma, cutoff):
    p = ModelParams(g=g, delta=delta, eta=eta, gamma=gamma, cutoff=cutoff)
    rho = ss.steady_state(p)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(rho).min() >= -1e-8


def test_ground_state_without_drive():
    p = ModelParams(g=10.0, delta=-5.0, eta=0.0, gamma=0.01, cutoff=6)
    rho = ss.steady_state(p)
    assert rho[0, 0].real == pytest.approx(1.0, abs=1e-9)
    assert np.sum(np.abs(np.diag(rho)[1:])) < 1e-9


@pytest.mark.parametrize("eta,delta", [(1.0, 0.0), (2.0, -5.0), (3.0, 0.0), (0.5, 2.0)])
def test_linear_cavity_oracle(eta, delta):
    # g=0: exact coherent state alpha = eta/(kappa - i delta)
    alpha = eta / (1.0 - 1j * delta)
    nbar = abs(alpha) ** 2
    cutoff = math.ceil(nbar + 10.0 * math.sqrt(nbar) + 10.0)
    p = ModelParams(g=0.0, delta=delta, eta=eta, cutoff=cutoff)
    rho = ss.steady_state(p)
    ops = build_operators(cutoff)
    assert abs(ss.expectation(rho, ops.a) - alpha) < 1e-8
    assert ss.expectation(rho, ops.number).real == pytest.approx(nbar, abs=1e-8)
    assert abs(ss.mandel_q(rho, ops)) < 1e-8


def test_expectation_contracts():
    p = ModelParams(g=0.0, delta=0.0, eta=0.0, cutoff=4)
    rho = np.zeros((p.dim, p.dim), dtype=complex)
    rho[0, 0] = 1.0
    ops = build_operators(4)
    assert ss.expectation(rho, ops.number) == 0
    with pytest.raises(ValueError):
        ss.expectation(rho, np.eye(4, dtype=complex))
    # Hermitian operator -> real expectation
    p2 = ModelParams(g=10.0, delta=-5.0, eta=2.5, cutoff=10)
    rho2 = ss.steady_state(p2)
    ops2 = build_operators(10)
    assert abs(ss.expectation(rho2, ops2.number).imag) < 1e-12


def test_photon_distribution_poisson():
    p = ModelParams(g=0.0, delta=0.0, eta=1.0, cutoff=25)
    rho = ss.steady_state(p)
    pn = ss.photon_distribution(rho)
    assert np.sum(pn) == pytest.approx(1.0, abs=1e-9)
    for n in range(8):
        assert pn[n] == pytest.approx(math.exp(-1.0) / math.factorial(n), abs=1e-10)


def test_photon_distribution_vacuum():
    rho = np.zeros((8, 8), dtype=complex)
    rho[0, 0] = 1.0
    pn = ss.photon_distribution(rho)
    assert pn[0] == 1.0
    assert np.all(pn[1:] == 0.0)


def test_bimodal_distribution_probe():
    # small-g bistability point: max at n=0 plus a second bump near
    # g^2/(2 delta^2) = 2, visible as a log-convexity violation at n=2
    p = ModelParams(g=10.0, delta=-5.0, eta=2.5, cutoff=20)
    rho = ss.steady_state(p)
    pn = ss.photon_distribution(rho)
    assert pn[0] > pn[1]
    assert pn[2] > math.sqrt(pn[1] * pn[3])


def test_gauge_invariance():
    # multiplying eta by a phase and co-rotating both a and sigma is a
    # similarity transform: steady states must match in trace distance
    from jcblink.model import build_hamiltonian, jump_operators

    p = ModelParams(g=10.0, delta=-5.0, eta=2.5, gamma=0.05, cutoff=14)
    rho1 = ss.steady_state(p)

    theta = 0.7
    ops = build_operators(p.cutoff)
    h = (
        -p.delta * (ops.number + ops.atom_excitation)
        + 1j * p.g * (ops.a_dag @ ops.sigma - ops.sigma_dag @ ops.a)
        + 1j * p.eta * (np.exp(1j * theta) * ops.a_dag - np.exp(-1j * theta) * ops.a)
    )
    d = p.dim
    ident = sp.identity(d, dtype=complex, format="csr")
    liou = -1j * (sp.kron(ident, sp.csr_matrix(h)) - sp.kron(sp.csr_matrix(h.T), ident))
    for c in jump_operators(p, ops):
        c = sp.csr_matrix(c)
        cdc = (c.conj().T @ c).tocsr()
        liou = liou + sp.kron(c.conj(), c) - 0.5 * (
            sp.kron(ident, cdc) + sp.kron(cdc.T, ident)
        )
    rho2 = ss._null_state(liou.tocsr(), d, 1e-9)

    # compensating rotation exp(i theta (n + s's)) applied to rho1
    phases = np.array(
        [np.exp(1j * theta * (n + s)) for n in range(p.cutoff + 1) for s in (0, 1)]
    )
    rho1_rot = (phases[:, None] * rho1) * phases.conj()[None, :]
    dist = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho2 - rho1_rot)))
    assert dist < 1e-9
