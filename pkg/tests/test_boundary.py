import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsdirac.boundary import (
    aps_projector,
    assemble_adapted_operator,
    build_specs,
    constrain_dense,
    constrain_operator,
    constraint_basis,
    kernel_check,
    mit_projector,
)
from apsdirac.dirac import assemble_spatial_dirac, boundary_flux_density, build_mesh
from apsdirac.errors import ConstructionFault, KernelError
from apsdirac.geometry import annulus, interval
from apsdirac.spin import build_rep, normal_gamma

TAGS = {
    "aps": {"inner": "APS", "outer": "APS"},
    "mit": {"inner": "MIT", "outer": "MIT"},
    "mixed": {"inner": "MIT", "outer": "APS"},
}


def _annulus_assembly(f0=1.0, I=12, K=16, family="static", params=None, t=0.0, spin="antiperiodic"):
    p = {"f0": f0}
    p.update(params or {})
    stt = annulus(1, 2, family, p)
    mesh = build_mesh(stt, I, K, spin_structure=spin)
    return assemble_spatial_dirac(stt, build_rep(2), mesh, t)


def test_flat_circle_spectrum():
    a = _annulus_assembly(f0=1.0, K=16)
    A = assemble_adapted_operator(a, "outer")
    expect = np.sort(np.concatenate([np.arange(8) + 0.5] * 2 + [-(np.arange(8) + 0.5)] * 2))
    assert np.allclose(A.eigenvalues, expect, atol=1e-13)
    assert A.min_abs_eigenvalue == pytest.approx(0.5, abs=1e-13)
    assert np.array_equal(A.matrix, A.matrix.conj().T)
    assert A.anticommutator_residual() <= 1e-12


def test_radius_scaling():
    A = assemble_adapted_operator(_annulus_assembly(f0=2.0), "inner")
    assert A.min_abs_eigenvalue == pytest.approx(0.25, abs=1e-13)
    assert kernel_check(A).passed


def test_interval_point_operator():
    stt = interval(1.0)
    mesh = build_mesh(stt, 9)
    a = assemble_spatial_dirac(stt, build_rep(1), mesh, 0.0)
    for comp in ("left", "right"):
        A = assemble_adapted_operator(a, comp)
        assert np.allclose(A.eigenvalues, [-1, 1], atol=0)
        assert A.anticommutator_residual() == 0
        kr = kernel_check(A)
        assert kr.passed and kr.min_abs_eigenvalue == 1


def test_planted_kernel_fails():
    A = np.diag([1.0, -2.0, 0.0, 3.0])
    assert not kernel_check(A).passed
    with pytest.raises(KernelError, match="kernel"):
        assemble_adapted_operator(_annulus_assembly(spin="periodic"), "outer")


@given(f0=st.floats(0.3, 3.0), t=st.floats(0.0, 1.0))
def test_anticommutation_warped(f0, t):
    a = _annulus_assembly(f0=f0, family="sin_warp", params={"beta": 0.3}, t=t, K=8, I=6)
    for comp in ("inner", "outer"):
        A = assemble_adapted_operator(a, comp)
        assert A.anticommutator_residual() <= 1e-12
        assert A.min_abs_eigenvalue > 0


def test_aps_projector_algebra():
    a = _annulus_assembly(f0=0.8, K=16, family="exp_warp", t=0.6)
    for comp in ("inner", "outer"):
        spec = aps_projector(assemble_adapted_operator(a, comp))
        n = spec.projector.shape[0]
        assert np.linalg.matrix_rank(spec.pi_negative) == n // 2
        assert spec.idempotency_residual() <= 1e-12
        Pn = spec.pi_negative
        assert np.abs(Pn @ Pn - Pn).max() <= 1e-12
        sigma = spec.operator.sigma_n
        # flip: sigma_n Pi_{<0} = Pi_{>0} sigma_n
        assert np.abs(sigma @ Pn - spec.projector @ sigma).max() <= 1e-12
        V = spec.operator.eigenvectors[:, spec.operator.eigenvalues < 0]
        assert np.abs(V.conj().T @ sigma @ V).max() <= 1e-12


def test_mit_projector_examples():
    stt = annulus(1, 2)
    mesh = build_mesh(stt, 8, 8)
    rep = build_rep(2)
    for comp in ("inner", "outer"):
        spec = mit_projector(rep, comp, mesh)
        gn = normal_gamma(rep, mesh.outward_sign(comp))
        P = 0.5 * (np.eye(2) + 1j * gn)
        assert np.allclose(P @ P, P, atol=1e-15)
        assert np.linalg.matrix_rank(P) == 1
        w, v = np.linalg.eig(1j * gn)
        u = v[:, np.argmin(w.real)]
        assert np.abs(P @ u).max() <= 1e-15
        assert spec.idempotency_residual() <= 1e-12
        assert spec.rows.shape == (mesh.K, 1, 2)


@pytest.mark.parametrize("name", list(TAGS))
def test_constrained_operator_invariants(name, rng):
    a = _annulus_assembly(f0=0.7, I=32, K=32, family="sin_warp", params={"beta": 0.2}, t=0.5)
    op = constrain_operator(a, build_specs(a, TAGS[name]))
    assert op.hermiticity_residual <= 1e-11
    bw = a.block_weight
    G = np.conj(np.swapaxes(op.Q, -1, -2)) @ (bw[None, :, None] * op.Q)
    assert np.abs(G - np.eye(G.shape[-1])).max() <= 1e-12
    # one trace constraint per boundary node
    assert op.dim == 2 * a.mesh.I * a.mesh.K - 2 * a.mesh.K
    for _ in range(5):
        c = rng.normal(size=op.Dc.shape[:2]) + 1j * rng.normal(size=op.Dc.shape[:2])
        psi = op.field(c)
        flux = boundary_flux_density(a, psi, psi)
        assert abs(flux) <= 1e-12 * a.inner(psi, psi).real


def test_constraint_dimension_interval():
    stt = interval(1.0)
    mesh = build_mesh(stt, 9)
    a = assemble_spatial_dirac(stt, build_rep(1), mesh, 0.0)
    specs = build_specs(a, {"left": "MIT", "right": "APS"})
    Q = constraint_basis(mesh, a.weight, specs)
    assert Q.shape == (1, 18, 16)


@pytest.mark.parametrize("name", list(TAGS))
def test_dense_and_block_routes_agree(name):
    a = _annulus_assembly(f0=0.6, I=10, K=8, family="exp_warp", t=0.3)
    specs = build_specs(a, TAGS[name])
    op = constrain_operator(a, specs)
    dense = constrain_dense(a, specs)
    assert np.abs(dense - dense.conj().T).max() <= 1e-11 * np.abs(dense).max()
    ev_dense = np.sort(np.linalg.eigvalsh(0.5 * (dense + dense.conj().T)))
    ev_block = np.sort(op.eigh[0].ravel())
    assert np.abs(ev_dense - ev_block).max() <= 1e-10 * np.abs(ev_dense).max()


def test_time_mismatch_rejected():
    a0 = _annulus_assembly(family="exp_warp", t=0.0)
    a1 = _annulus_assembly(family="exp_warp", t=0.5)
    with pytest.raises(ValueError, match="different time"):
        constrain_operator(a1, build_specs(a0, TAGS["aps"]))


def test_broken_plumbing_is_a_construction_fault(rng):
    a = _annulus_assembly(I=8, K=8)
    specs = build_specs(a, TAGS["mixed"])
    a.blocks[:, 4:8, 4:8] += rng.normal(size=(8, 4, 4))
    with pytest.raises(ConstructionFault, match="Hermitian"):
        constrain_operator(a, specs)


def test_unknown_tag():
    a = _annulus_assembly(I=8, K=8)
    with pytest.raises(ValueError, match="unknown boundary condition"):
        build_specs(a, {"inner": "Dirichlet"})
