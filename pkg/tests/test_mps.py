import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from bandchain import exact
from bandchain import mps as tn
from bandchain.model import SystemSpec, assemble_dicke_matrix, build_pec_cavity_spec, build_random_spec
from bandchain.transform import band_reduce


def _random_state(rng, dims):
    psi = rng.standard_normal(int(np.prod(dims))) + 1j * rng.standard_normal(int(np.prod(dims)))
    return psi / np.linalg.norm(psi)


def _site_op(dims, site, op):
    return reduce(np.kron, [op if i == site else np.eye(d) for i, d in enumerate(dims)])


# -- truncation and canonical form ----------------------------------------------

def test_truncation_policy_keep():
    pol = tn.TruncationPolicy(chi_max=3, cutoff=1e-3)
    s = np.sqrt(np.array([0.7, 0.2, 0.0995, 0.0005]))
    assert pol.keep(s) == 3
    assert pol.discarded == pytest.approx(0.0005)
    assert pol.keep(np.sqrt([0.25] * 4)) == 3
    assert pol.discarded == pytest.approx(0.2505)
    assert pol.keep(np.zeros(3)) == 1


def test_dense_roundtrip_and_center_moves(rng):
    dims = (2, 2, 3, 3, 3)
    psi = _random_state(rng, dims)
    m = tn.MPS.from_dense(psi, dims)
    np.testing.assert_allclose(m.to_dense(), psi, atol=1e-12)
    for c in (0, 3, 1, 4):
        m.move_center(c)
        assert m.norm() == pytest.approx(1.0, abs=1e-12)
        assert m.isometry_residual() <= 1e-12
    np.testing.assert_allclose(m.to_dense(), psi, atol=1e-12)


def test_product_state_entropy_is_zero():
    m = tn.MPS.product([np.array([1.0, 0]), np.array([0.6, 0.8]), np.array([1.0, 0, 0])])
    assert tn.entanglement_entropy(m, 1) == 0.0
    assert tn.entanglement_entropy(m, 2) == 0.0


def test_entropy_from_singular_values():
    assert tn.entropy_from_singular_values(np.array([1, 1]) / math.sqrt(2)) == pytest.approx(math.log(2))
    assert tn.entropy_from_singular_values(np.array([1.0, 0.0])) == 0.0


def test_initial_mps_observables():
    layout = exact.HilbertSpaceLayout(2, 3, 3)
    psi2 = tn.init_product_mps(layout, "psi2")
    assert tn.entanglement_entropy(psi2, 1) == pytest.approx(math.log(2), abs=1e-14)
    assert tn.entanglement_entropy(psi2, 2) == pytest.approx(0.0, abs=1e-14)
    psi1 = tn.init_product_mps(layout, "psi1")
    rdm = tn.two_site_rdm(psi1)
    ref = np.zeros((4, 4))
    ref[0, 0] = ref[3, 3] = ref[0, 3] = ref[3, 0] = 0.5
    np.testing.assert_allclose(rdm, ref, atol=1e-14)
    psi3 = tn.init_product_mps(layout, "psi3")
    rdm3 = tn.two_site_rdm(psi3)
    np.testing.assert_allclose(rdm3, np.full((4, 4), 0.25), atol=1e-14)
    np.testing.assert_allclose(np.linalg.eigvalsh(rdm3), [0, 0, 0, 1], atol=1e-14)
    for name in ("psi1", "psi2", "psi3"):
        np.testing.assert_allclose(tn.mps_to_state(tn.init_product_mps(layout, name), layout).amplitudes,
                                   exact.initial_state(layout, name).amplitudes, atol=1e-14)


def test_two_site_rdm_matches_dense(rng):
    dims = (2, 2, 3, 3)
    psi = _random_state(rng, dims)
    m = tn.MPS.from_dense(psi, dims)
    amps = psi.reshape(4, -1)
    ref = amps @ amps.conj().T
    rdm = tn.two_site_rdm(m)
    np.testing.assert_allclose(rdm, ref, atol=1e-10)
    assert np.trace(rdm).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rdm).min() >= -1e-10
    np.testing.assert_allclose(tn.two_atom_components(m), np.real(np.diag(rdm)), atol=1e-12)


def test_schmidt_values_match_dense(rng):
    dims = (2, 2, 3, 3)
    psi = _random_state(rng, dims)
    m = tn.MPS.from_dense(psi, dims)
    for cut in (1, 2, 3):
        ref = np.linalg.svd(psi.reshape(int(np.prod(dims[:cut])), -1), compute_uv=False)
        got = tn.bond_singular_values(m, cut)
        np.testing.assert_allclose(got, ref[:got.size], atol=1e-12)


# -- correlations ---------------------------------------------------------------

def test_boson_correlation_matches_dense(rng):
    dims = (2, 3, 3, 3)
    psi = _random_state(rng, dims)
    m = tn.MPS.from_dense(psi, dims)
    b = exact.annihilation(3)
    ref = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            op = _site_op(dims, 1 + i, b.T) @ _site_op(dims, 1 + j, b)
            ref[i, j] = np.vdot(psi, op @ psi)
    np.testing.assert_allclose(tn.boson_correlation_matrix(m, 1), ref, atol=1e-10)


def test_boson_correlation_vacuum_and_single_boson():
    vac = tn.init_product_mps(exact.HilbertSpaceLayout(1, 4, 3), "all_ground")
    np.testing.assert_array_equal(tn.boson_correlation_matrix(vac, 1), 0)
    one = tn.MPS.product([np.array([1.0, 0])] + [np.array([1.0, 0, 0])] * 2
                         + [np.array([0, 1.0, 0])] + [np.array([1.0, 0, 0])])
    ref = np.zeros((4, 4))
    ref[2, 2] = 1.0
    np.testing.assert_allclose(tn.boson_correlation_matrix(one, 1), ref, atol=1e-15)


def test_field_correlation_single_photon(three_atom_spec):
    spec = three_atom_spec
    _, record = band_reduce(assemble_dicke_matrix(spec))
    x = np.linspace(-0.5, 0.5, 21)
    u = record.u
    k = 2
    corr_a = np.zeros((5, 5))
    corr_a[k, k] = 1.0
    got = tn.field_correlation(u @ corr_a @ u.T, record, spec, x)
    c = tn.field_coefficients(spec, x)
    np.testing.assert_allclose(got, c[k] ** 2, atol=1e-12)
    np.testing.assert_array_equal(tn.field_correlation(np.zeros((5, 5)), record, spec, x), 0.0)


def test_field_correlation_dimension_mismatch(three_atom_spec):
    _, record = band_reduce(assemble_dicke_matrix(three_atom_spec))
    with pytest.raises(ValueError):
        tn.field_correlation(np.zeros((4, 4)), record, three_atom_spec, [0.0])


# -- gates ------------------------------------------------------------------------

def test_number_gate_is_diagonal_phase():
    ops = exact.LocalOperatorSet(4)
    u = tn.exponentiate_gate(0.7 * ops.n, 0.3)
    np.testing.assert_allclose(u, np.diag(np.exp(-1j * 0.7 * np.arange(4) * 0.3)), atol=1e-15)


def test_hopping_gate_is_rotation():
    ops = exact.LocalOperatorSet(2)
    t, dt = 0.8, 0.4
    hop = np.kron(ops.bdag, ops.b)
    u = tn.exponentiate_gate(t * (hop + hop.T), dt)
    # basis |00>, |01>, |10>, |11>; the one-excitation block rotates by t*dt
    c, s = math.cos(t * dt), math.sin(t * dt)
    ref = np.array([[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, 1]])
    np.testing.assert_allclose(u, ref, atol=1e-15)


def test_block_exponential_matches_expm(rng):
    spec = build_random_spec(2, 4, seed=3)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    sched = tn.build_gate_layers(band, exact.HilbertSpaceLayout(2, 4, 3), 0.1)
    for gate in sched.gates:
        np.testing.assert_allclose(tn.exponentiate_gate(gate.generator, 0.1), expm(-0.1j * gate.generator), atol=1e-12)


def test_gate_errors():
    with pytest.raises(tn.GateTooLargeError):
        tn.exponentiate_gate(np.eye(5000), 0.1, cap=4096)
    with pytest.raises(ValueError):
        tn.exponentiate_gate(np.array([[0, 1.0], [0, 0]]), 0.1)


@pytest.mark.parametrize("layout_kind", ["bundled", "per_atom"])
@pytest.mark.parametrize("na,m", [(1, 4), (2, 3), (2, 5), (3, 4)])
def test_gate_terms_sum_to_band_hamiltonian(layout_kind, na, m):
    spec = build_random_spec(na, m, seed=na * 10 + m)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(na, m, 2)
    sched = tn.build_gate_layers(band, layout, 0.05, atom_gates=layout_kind)
    ref = exact.build_band_hamiltonian(band, layout).dense()
    np.testing.assert_allclose(sched.generator_sum(), ref, atol=1e-12)
    for layer in sched.layers:
        spans = [(g.start, g.stop) for g in layer]
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            assert a1 < b0  # gates in a layer are disjoint


def test_schedule_sequence_is_symmetric():
    spec = build_random_spec(2, 5, seed=1)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    sched = tn.build_gate_layers(band, exact.HilbertSpaceLayout(2, 5, 2), 0.1)
    seq = sched.sequence
    assert seq == seq[::-1]
    assert sum(f for _, f in seq) == pytest.approx(len(sched.layers))


def test_entangling_gate_bond_equals_schmidt_rank():
    ops = exact.LocalOperatorSet(3)
    m = tn.MPS.product([np.array([1.0, 0, 0]), np.array([0, 0, 1.0])])
    hop = np.kron(ops.bdag, ops.b)
    u = tn.exponentiate_gate(hop + hop.T, 0.3)
    m.apply_operator(0, u, tn.TruncationPolicy(cutoff=0.0))
    psi = m.to_dense()
    rank = np.linalg.matrix_rank(psi.reshape(3, 3), tol=1e-12)
    assert m.bond_dims == [rank] and rank == 3


# -- MPO -------------------------------------------------------------------------

@pytest.mark.parametrize("na,nf", [(1, 3), (2, 3), (3, 2), (2, 4)])
def test_mpo_bond_bound_on_boson_gates(na, nf):
    spec = build_random_spec(na, na + 3, seed=nf)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    sched = tn.build_gate_layers(band, exact.HilbertSpaceLayout(na, na + 3, nf), 0.2)
    bound = tn.mpo_bond_bound(na, nf)
    for li, layer in enumerate(sched.layers):
        for gi, gate in enumerate(layer):
            u = sched.unitary(li, gi, 1.0).dense()
            mpo = tn.decompose_gate_to_mpo(u, gate.dims, gate.start, gate.boson_only, na)
            assert tn.mpo_recontraction_residual(mpo, u) <= 1e-12
            if gate.boson_only:
                assert max(mpo.bond_dims, default=1) <= bound
            else:
                assert max(mpo.bond_dims) <= int(np.prod(gate.dims)) ** 0.5 * max(gate.dims)


def test_mpo_bound_values():
    assert tn.mpo_bond_bound(2, 8) == 64
    assert tn.mpo_bond_bound(3, 8) == 4096
    assert tn.mpo_bond_bound(1, 8) == 64


def test_apply_mpo_matches_dense(rng):
    dims = (2, 3, 3, 3)
    psi = _random_state(rng, dims)
    m = tn.MPS.from_dense(psi, dims)
    ops = exact.LocalOperatorSet(3)
    hop = np.kron(ops.bdag, ops.b)
    u = tn.exponentiate_gate(hop + hop.T + np.kron(ops.n, np.eye(3)), 0.5)
    mpo = tn.decompose_gate_to_mpo(u, (3, 3), start=1, boson_only=True, atom_count=1)
    tn.apply_mpo_and_truncate(m, mpo, tn.TruncationPolicy(cutoff=0.0))
    ref = np.kron(np.kron(np.eye(2), u), np.eye(3)) @ psi
    np.testing.assert_allclose(m.to_dense(), ref, atol=1e-12)


# -- TEBD ------------------------------------------------------------------------

def _exact_reference(spec, band, layout, name, times):
    h = exact.build_band_hamiltonian(band, layout).dense()
    w, v = np.linalg.eigh(h)
    psi0 = exact.initial_state(layout, name).amplitudes
    c = v.conj().T @ psi0
    return [exact.StateVector(v @ (np.exp(-1j * w * t) * c), layout, t) for t in times]


def test_tebd_matches_exact_small(small_two_atom_spec):
    spec = small_two_atom_spec
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 3, 4)
    dt = 2 * math.pi / 200
    sched = tn.build_gate_layers(band, layout, dt)
    res = tn.tebd_run(tn.init_product_mps(layout, "psi1"), sched, tn.TruncationPolicy(chi_max=64), 200, stride=20)
    ref = _exact_reference(spec, band, layout, "psi1", [r["time"] for r in res.records])
    err = max(abs(r[f"pop{j + 1}"] - exact.atomic_population(p, j)) for r, p in zip(res.records, ref) for j in range(2))
    assert err <= 1e-3
    for r in res.records:
        assert r["S1"] <= math.log(2) + 1e-9
        assert 1 - r["norm"] ** 2 <= r["discarded"] + 1e-12


def test_zero_coupling_keeps_populations():
    spec = SystemSpec([1.0, 1.2], [1.0, 2.0, 3.0], np.zeros((2, 3)))
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 3, 3)
    sched = tn.build_gate_layers(band, layout, 0.05)
    res = tn.tebd_run(tn.init_product_mps(layout, "psi3"), sched, tn.TruncationPolicy(), 1000, stride=250)
    for r in res.records:
        assert r["pop1"] == pytest.approx(0.5, abs=1e-12)
        assert r["pop2"] == pytest.approx(0.5, abs=1e-12)


def test_small_step_changes_state_by_order_dt(small_two_atom_spec):
    band, _ = band_reduce(assemble_dicke_matrix(small_two_atom_spec))
    layout = exact.HilbertSpaceLayout(2, 3, 3)
    m0 = tn.init_product_mps(layout, "all_excited")
    psi0 = m0.to_dense()
    fids = []
    for dt in (1e-2, 5e-3):
        m = m0.copy()
        tn.tebd_step(m, tn.build_gate_layers(band, layout, dt), tn.TruncationPolicy(cutoff=0.0))
        fids.append(1 - abs(np.vdot(psi0, m.to_dense())) ** 2)
    assert fids[1] == pytest.approx(fids[0] / 4, rel=0.05)


def test_symmetric_atoms_stay_symmetric():
    spec = build_pec_cavity_spec([-0.25, 0.25], 4, "odd", 0.1)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 4, 3)
    sched = tn.build_gate_layers(band, layout, 0.02)
    res = tn.tebd_run(tn.init_product_mps(layout, "psi2"), sched, tn.TruncationPolicy(), 200, stride=20)
    for r in res.records:
        assert abs(r["pop1"] - r["pop2"]) <= 1e-10


def test_tebd_run_records_correlation(small_two_atom_spec):
    spec = small_two_atom_spec
    band, record = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 3, 3)
    sched = tn.build_gate_layers(band, layout, 0.05)
    x = np.linspace(-0.5, 0.5, 11)
    res = tn.tebd_run(tn.init_product_mps(layout, "all_excited"), sched, tn.TruncationPolicy(), 40, stride=10,
                      correlation=(spec, record, x, 20))
    assert len(res.records) == 5
    assert len(res.correlation_map) == 3
    np.testing.assert_allclose(res.correlation_map[0], 0.0, atol=1e-15)
    assert min(np.min(c) for c in res.correlation_map) >= -1e-10


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_tebd_norm_budget(seed):
    spec = build_random_spec(2, 3, seed=seed)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 3, 3)
    sched = tn.build_gate_layers(band, layout, 0.05)
    pol = tn.TruncationPolicy(chi_max=3, cutoff=1e-6)
    res = tn.tebd_run(tn.init_product_mps(layout, "psi3"), sched, pol, 40, stride=10)
    for r in res.records:
        assert 1 - r["norm"] ** 2 <= r["discarded"] + 1e-12
        assert r["S1"] <= math.log(2) + 1e-9
        assert r["max_bond"] <= 3
