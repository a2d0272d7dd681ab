"""Operator construction, Liouvillian structure, steady states, and the
constrained traceless solver."""
import numpy as np
import pytest

from helpers import default_params, draw_params
from cavitycool.constants import TWO_PI
from cavitycool.errors import ContractViolationError, TruncationError
from cavitycool.quantum import (FactoredPoint, LiouvillianWorkspace,
                                SystemParams, annihilation, build_hamiltonian,
                                build_liouvillian, constrained_solve,
                                coupling_operator, lowering, observables,
                                steady_state, unvec, vec)

MHZ = TWO_PI * 1e6


def random_hermitian(rng, dim):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return m + m.conj().T


def test_dimensions():
    p = default_params(n_max=4)
    assert p.dim == 10
    assert build_hamiltonian(p, 0.0).shape == (10, 10)
    assert build_liouvillian(p, 0.0).shape == (100, 100)


def test_truncation_guard():
    with pytest.raises((TruncationError, ContractViolationError, ValueError)):
        default_params(n_max=0)


def test_zero_hamiltonian():
    p = default_params(epsilon=0.0, delta_a=0.0, delta_c=0.0)
    assert np.abs(build_hamiltonian(p, 0.0)).max() == 0.0


def test_hamiltonian_hermitian():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = draw_params(rng, n_max=3)
        h = build_hamiltonian(p, rng.uniform(-100, 100) * MHZ)
        assert np.abs(h - h.conj().T).max() <= 1e-12 * np.abs(h).max()


def test_dressed_state_splitting():
    # single-excitation block {|1,g>, |0,e>} at resonance: -Dp +- g
    g = 50.0 * MHZ
    p = default_params(n_max=1, delta_a=10 * MHZ, delta_c=10 * MHZ,
                       epsilon=0.0)
    # basis |n,g>,|n,e> for n=0..1: block indices 2 (|1,g>) and 1 (|0,e>)
    block = build_hamiltonian(p, g)[np.ix_([2, 1], [2, 1])]
    ev = np.sort(np.linalg.eigvalsh(block))
    want = np.sort([-10 * MHZ - g, -10 * MHZ + g])
    assert np.allclose(ev, want, rtol=1e-12)


def test_ladder_operators():
    a = annihilation(4)
    n = a.conj().T @ a
    # composite space is photon (x) atom, so each photon number twice
    assert np.allclose(np.diag(n), np.repeat(np.arange(5.0), 2))
    assert np.allclose(n, np.diag(np.diag(n)))
    sm = lowering(4)
    assert np.allclose(sm @ sm, 0.0)
    gop = coupling_operator(4)
    assert np.allclose(gop, gop.conj().T)


def test_trace_preservation():
    rng = np.random.default_rng(11)
    for _ in range(5):
        p = draw_params(rng, n_max=2)
        lv = build_liouvillian(p, rng.uniform(0, 100) * MHZ)
        rho = random_hermitian(rng, p.dim)
        out = unvec(lv @ vec(rho))
        # roundoff floor scales with the rad/s Liouvillian entries
        scale = np.abs(lv).max() * np.linalg.norm(rho)
        assert abs(np.trace(out)) <= 1e-13 * scale


def test_hermiticity_preservation():
    rng = np.random.default_rng(12)
    p = draw_params(rng, n_max=2)
    lv = build_liouvillian(p, 40 * MHZ)
    rho = random_hermitian(rng, p.dim)
    out = unvec(lv @ vec(rho))
    assert np.abs(out - out.conj().T).max() <= 1e-12 * np.abs(out).max()


def test_vacuum_dark_state():
    p = default_params(epsilon=0.0)
    lv = build_liouvillian(p, 30 * MHZ)
    rho = np.zeros((p.dim, p.dim), dtype=complex)
    rho[0, 0] = 1.0
    assert np.abs(lv @ vec(rho)).max() <= 1e-12
    ss = steady_state(lv)
    assert abs(ss[0, 0] - 1.0) <= 1e-10
    n_bar, p_e, corr = observables(ss)
    assert n_bar <= 1e-12 and p_e <= 1e-12 and abs(corr) <= 1e-12


def test_steady_state_contracts():
    rng = np.random.default_rng(21)
    for _ in range(8):
        p = draw_params(rng)
        lv = build_liouvillian(p, rng.uniform(0, 200) * MHZ)
        rho = steady_state(lv)
        assert abs(np.trace(rho) - 1.0) <= 1e-10
        assert np.abs(rho - rho.conj().T).max() <= 1e-12
        assert np.linalg.eigvalsh(rho).min() >= -1e-9
        resid = np.linalg.norm(lv @ vec(rho))
        assert resid <= 1e-10 * np.linalg.norm(lv)


def test_decoupled_cavity_photon_number():
    p = default_params(epsilon=10 * MHZ, delta_c=10 * MHZ, delta_a=10 * MHZ)
    rho = steady_state(build_liouvillian(p, 0.0))
    n_bar, p_e, _ = observables(rho)
    expect = p.epsilon ** 2 / (p.kappa ** 2 + p.delta_c ** 2)
    assert expect == pytest.approx(9.90e-3, rel=1e-3)
    assert n_bar == pytest.approx(expect, rel=1e-6)
    assert p_e <= 1e-12  # pump drives the cavity, not the atom


def test_weak_drive_block_against_closed_form():
    # full steady state restricted to {|1,g>, |0,e>, |0,g>} at small pump
    from cavitycool.weakdrive import WeakDriveContext, rho0_weak
    p = default_params(epsilon=0.5 * MHZ)
    g = 30 * MHZ
    rho = steady_state(build_liouvillian(p, g))
    idx = [2, 1, 0]  # |1,g>, |0,e>, |0,g>
    block = rho[np.ix_(idx, idx)]
    ctx = WeakDriveContext.at(p, g, np.zeros(3))
    want = rho0_weak(ctx, p)
    assert np.abs(block - want).max() <= 1e-3 * np.abs(want).max()


def test_steady_state_uniqueness_margin():
    p = default_params()
    lv = build_liouvillian(p, 60 * MHZ)
    sv = np.linalg.svd(lv, compute_uv=False)
    assert sv[-2] > 1e-6 * np.linalg.norm(lv)


def test_constrained_solve_roundtrip():
    rng = np.random.default_rng(31)
    p = default_params(n_max=2)
    lv = build_liouvillian(p, 40 * MHZ)
    dim = p.dim
    y = random_hermitian(rng, dim)
    y -= np.trace(y) / dim * np.eye(dim)
    x = unvec(constrained_solve(lv, lv @ vec(y)))
    assert np.abs(x - y).max() <= 1e-8 * np.abs(y).max()
    assert abs(np.trace(x)) <= 1e-10


def test_constrained_solve_zero_rhs():
    p = default_params(n_max=2)
    lv = build_liouvillian(p, 40 * MHZ)
    x = constrained_solve(lv, np.zeros(p.dim ** 2, dtype=complex))
    assert np.abs(x).max() <= 1e-15


def test_constrained_solve_rejects_traceful_rhs():
    p = default_params(n_max=1)
    lv = build_liouvillian(p, 10 * MHZ)
    rho = np.eye(p.dim, dtype=complex)
    with pytest.raises(ContractViolationError):
        constrained_solve(lv, vec(rho))


def test_workspace_matches_direct_build():
    p = default_params()
    ws = LiouvillianWorkspace(p)
    for g in (0.0, 17.3 * MHZ, 200 * MHZ):
        assert np.array_equal(ws.liouvillian(g), build_liouvillian(p, g))


def test_factored_point_matches_steady_state():
    p = default_params()
    ws = LiouvillianWorkspace(p)
    g = 55 * MHZ
    pt = ws.factor(g)
    assert isinstance(pt, FactoredPoint)
    rho_a = pt.steady_state()
    rho_b = steady_state(build_liouvillian(p, g))
    assert np.abs(rho_a - rho_b).max() <= 1e-12


def test_observable_trivials():
    dim = 10
    rho = np.zeros((dim, dim), dtype=complex)
    rho[2, 2] = 1.0  # |1,g>
    n_bar, p_e, corr = observables(rho)
    assert (n_bar, p_e, corr) == pytest.approx((1.0, 0.0, 0.0), abs=1e-14)
