"""Master-equation steady state on small cutoffs.

Serves as the correctness oracle for the trajectory engine and as the probe
for bimodal photon statistics.  Density matrices are column-stacked

    vec(rho)[i + j*D] = rho[i, j]

so vec(A rho B) = (B^T kron A) vec(rho).  The Liouvillian is kept sparse;
the null vector comes from a shift-inverted smallest-magnitude eigensolve
followed by one least-squares polish with the trace pinned.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import ModelParams, Operators, build_hamiltonian, build_operators, jump_operators

# the oracle is for verification at small g, not production: D^2 stays <= 14884
MAX_CUTOFF = 60


def build_liouvillian(params: ModelParams) -> sp.csr_matrix:
    """Sparse generator L with d vec(rho)/dt = L vec(rho)."""
    if params.cutoff > MAX_CUTOFF:
        raise ValueError(
            f"cutoff {params.cutoff} > {MAX_CUTOFF}: the direct solver is "
            "meant for small oracle problems"
        )
    ops = build_operators(params.cutoff)
    h = sp.csr_matrix(build_hamiltonian(params, ops))
    d = params.dim
    ident = sp.identity(d, dtype=complex, format="csr")

    liou = -1j * (sp.kron(ident, h) - sp.kron(h.T, ident))
    for c in jump_operators(params, ops):
        c = sp.csr_matrix(c)
        cdc = (c.conj().T @ c).tocsr()
        liou = liou + sp.kron(c.conj(), c) - 0.5 * (
            sp.kron(ident, cdc) + sp.kron(cdc.T, ident)
        )
    return liou.tocsr()


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape((d, d), order="F")


def _null_state(liou: sp.csr_matrix, d: int, resid_tol: float) -> np.ndarray:
    """Unique trace-1 Hermitian null matrix of a Liouvillian, polished."""
    n2 = d * d

    # shift-invert close to zero: the stationary eigenvalue wins by ~gap/shift
    vals, vecs = spla.eigs(liou.tocsc(), k=2, sigma=1e-6, which="LM")
    order = np.argsort(np.abs(vals))
    if abs(vals[order[1]]) < 1e-10:
        raise RuntimeError(
            f"degenerate Liouvillian null space: |second eigenvalue| = "
            f"{abs(vals[order[1]]):.3e}"
        )
    v = vecs[:, order[0]]

    rho = _unvec(v, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real

    # one polish pass: least squares on L x = 0 with the trace pinned to 1
    trace_row = sp.csr_matrix(
        (np.ones(d), (np.zeros(d, dtype=int), np.arange(d) * (d + 1))),
        shape=(1, n2),
        dtype=complex,
    )
    aug = sp.vstack([liou, trace_row]).tocsr()
    rhs = np.zeros(n2 + 1, dtype=complex)
    rhs[-1] = 1.0
    x0 = rho.reshape(n2, order="F")
    dx = spla.lsqr(aug, rhs - aug @ x0, atol=1e-14, btol=1e-14, iter_lim=2000)[0]
    rho = _unvec(x0 + dx, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real

    resid = np.linalg.norm(liou @ rho.reshape(n2, order="F"))
    if resid > resid_tol:
        raise RuntimeError(f"steady-state residual {resid:.3e} > {resid_tol:.1e}")
    return rho


def _cavity_liouvillian(params: ModelParams) -> sp.csr_matrix:
    # field-only generator for the decoupled-atom corner
    nf = params.cutoff + 1
    a_f = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, nf, dtype=float)), 1).astype(complex))
    num = (a_f.conj().T @ a_f).tocsr()
    h = (-params.delta) * num + 1j * params.eta * (a_f.conj().T - a_f)
    ident = sp.identity(nf, dtype=complex, format="csr")
    c = np.sqrt(2.0 * params.kappa) * a_f
    cdc = (c.conj().T @ c).tocsr()
    liou = -1j * (sp.kron(ident, h) - sp.kron(h.T, ident))
    liou = liou + sp.kron(c.conj(), c) - 0.5 * (
        sp.kron(ident, cdc) + sp.kron(cdc.T, ident)
    )
    return liou.tocsr()


def steady_state(params: ModelParams, resid_tol: float = 1e-9) -> np.ndarray:
    """Trace-1 Hermitian PSD steady state with ||L vec(rho)|| < resid_tol.

    With g = 0 and gamma = 0 the atom is inert and its populations are
    separately conserved, so the full generator has a degenerate null space;
    in that corner the cavity-only problem is solved instead and the atom is
    pinned to its ground state, the sector reached from the canonical
    ground-state initial condition.  Raises RuntimeError on any other
    degeneracy, or when the residual cannot be pushed below resid_tol.
    """
    if params.g == 0 and params.gamma == 0:
        rho_f = _null_state(_cavity_liouvillian(params), params.cutoff + 1, resid_tol)
        atom_ground = np.zeros((2, 2), dtype=complex)
        atom_ground[0, 0] = 1.0
        return np.kron(rho_f, atom_ground)
    liou = build_liouvillian(params)
    return _null_state(liou, params.dim, resid_tol)


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    """Tr(rho op)."""
    if rho.shape != op.shape:
        raise ValueError(f"shape mismatch: rho {rho.shape} vs op {op.shape}")
    return complex(np.trace(rho @ op))


def photon_distribution(rho: np.ndarray) -> np.ndarray:
    """p(n) = sum over atom levels of <atom,n|rho|atom,n>."""
    diag = np.diag(rho).real
    return diag[0::2] + diag[1::2]


def mandel_q(rho: np.ndarray, ops: Operators) -> float:
    """(var(n) - <n>)/<n> of the cavity field."""
    nbar = expectation(rho, ops.number).real
    n2 = expectation(rho, ops.number @ ops.number).real
    return (n2 - nbar * nbar - nbar) / nbar


def save_photon_distribution(rho: np.ndarray, path) -> None:
    """CSV dump of p(n), columns n, p_n."""
    pn = photon_distribution(rho)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n,p_n\n")
        for n, p in enumerate(pn):
            fh.write(f"{n},{p!r}\n")
