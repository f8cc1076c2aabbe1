# tests/test_channels.py
import numpy as np
import pytest

from risic.channels import (
    ChannelSet,
    PhaseShift,
    build_cascaded,
    effective_bs_channels,
    effective_device_channels,
    load_channels,
    save_channels,
)
from risic.exceptions import DimensionError


class TestChannelSet:
    def test_shape_mismatch(self, make_instance):
        _, ch, _ = make_instance(M=2, K=1, L=1, N=4)
        with pytest.raises(DimensionError, match="H_UR"):
            ChannelSet(
                H_RB=ch.H_RB,
                H_UD=ch.H_UD,
                H_DD=ch.H_DD,
                H_UB=ch.H_UB,
                H_DB=ch.H_DB,
                H_RD=ch.H_RD,
                H_UR=np.zeros((3, 1)),
                H_DR=ch.H_DR,
            )

    def test_fixture_round_trip(self, make_instance, tmp_path):
        _, ch, _ = make_instance(M=3, K=2, L=2, N=5)
        path = str(tmp_path / "drop.npz")
        save_channels(ch, path)
        loaded = load_channels(path)
        assert np.array_equal(loaded.H_RD, ch.H_RD)
        assert loaded.H_UB.dtype == np.complex128

    def test_fixture_missing_array(self, tmp_path):
        path = str(tmp_path / "partial.npz")
        np.savez(path, H_RB=np.zeros((1, 1)))
        with pytest.raises(DimensionError, match="lacks"):
            load_channels(path)


class TestCascaded:
    def test_entrywise_reconstruction(self, make_instance):
        _, ch, casc = make_instance(M=3, K=2, L=2, N=5)
        for l in range(2):
            for lp in range(2):
                expected = np.conj(ch.H_RD[l] * ch.H_DR[:, lp])
                assert np.allclose(casc.g_DD[l, lp], expected, rtol=1e-12)
        assert np.allclose(casc.G_UB[1], ch.H_RB @ np.diag(ch.H_UR[:, 1]))

    def test_scalar_ris(self, make_instance):
        _, ch, casc = make_instance(M=1, K=1, L=1, N=1)
        assert casc.g_DD[0, 0, 0] == pytest.approx(np.conj(ch.H_RD[0, 0]) * np.conj(ch.H_DR[0, 0]))


class TestEffectiveChannels:
    def test_ris_off(self, make_instance):
        _, ch, casc = make_instance(M=3, K=2, L=2, N=5)
        F_UB, F_DB = effective_bs_channels(ch, casc, PhaseShift.zeros(5))
        F_DD, F_UD = effective_device_channels(ch, casc, np.zeros(5))
        assert np.array_equal(F_UB, ch.H_UB)
        assert np.array_equal(F_DB, ch.H_DB)
        assert np.array_equal(F_DD, ch.H_DD)
        assert np.array_equal(F_UD, ch.H_UD)

    def test_scalar_expansion(self, make_instance):
        _, ch, casc = make_instance(M=3, K=2, L=2, N=5)
        phi = PhaseShift.random(5, np.random.default_rng(4))
        F_UB, _ = effective_bs_channels(ch, casc, phi)
        F_DD, F_UD = effective_device_channels(ch, casc, phi)
        for m in range(3):
            expected = ch.H_UB[m, 1] + sum(
                ch.H_RB[m, n] * ch.H_UR[n, 1] * phi.phi[n] for n in range(5)
            )
            assert F_UB[m, 1] == pytest.approx(expected, rel=1e-12)
        expected_dd = ch.H_DD[0, 1] + np.sum(ch.H_RD[0] * ch.H_DR[:, 1] * phi.phi)
        expected_ud = ch.H_UD[1, 0] + np.sum(ch.H_RD[1] * ch.H_UR[:, 0] * phi.phi)
        assert F_DD[0, 1] == pytest.approx(expected_dd, rel=1e-12)
        assert F_UD[1, 0] == pytest.approx(expected_ud, rel=1e-12)

    def test_affine_in_phi(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=4)
        rng = np.random.default_rng(2)
        a = PhaseShift.random(4, rng).phi
        b = PhaseShift.random(4, rng).phi
        mix = effective_device_channels(ch, casc, 0.3 * a + 0.7 * b)[0]
        parts = 0.3 * effective_device_channels(ch, casc, a)[0] + 0.7 * (
            effective_device_channels(ch, casc, b)[0]
        )
        assert np.allclose(mix, parts, atol=1e-12)

    def test_wrong_length(self, make_instance):
        _, ch, casc = make_instance(N=4)
        with pytest.raises(DimensionError):
            effective_bs_channels(ch, casc, np.zeros(3))


class TestPhaseShift:
    def test_random_is_unit_modulus(self):
        phi = PhaseShift.random(16, np.random.default_rng(0))
        assert np.allclose(np.abs(phi.phi), 1.0)
        assert phi.is_feasible()

    def test_infeasible_magnitude(self):
        assert not PhaseShift([1.0, 1.1]).is_feasible()
        assert PhaseShift([1.0 + 1e-10]).is_feasible()
