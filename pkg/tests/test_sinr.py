# tests/test_sinr.py
import numpy as np
import pytest

from risic.channels import PhaseShift, effective_bs_channels, effective_device_channels
from risic.config import LinkBudget
from risic.exceptions import CombinerError, DimensionError
from risic.scenario import rayleigh
from risic.sinr import Combiner, evaluate, lmmse_combiner, sinr_device, sinr_user


def user_sinr_by_hand(budget, F_UB, F_DB, W, k):
    w = W[k]
    signal = budget.p_user[k] * abs(w @ F_UB[:, k]) ** 2
    interference = sum(
        budget.p_user[j] * abs(w @ F_UB[:, j]) ** 2 for j in range(F_UB.shape[1]) if j != k
    ) + sum(budget.p_dev[l] * abs(w @ F_DB[:, l]) ** 2 for l in range(F_DB.shape[1]))
    return signal / (interference + np.vdot(w, w).real * budget.sigma2_bs)


class TestDeviceSinr:
    def test_single_pair(self, unit_budget):
        sinr = sinr_device(unit_budget(0, 1), np.array([[1.0]]), np.zeros((1, 0)))
        assert sinr == pytest.approx([1.0])

    def test_interference_free(self):
        budget = LinkBudget(np.ones(1), np.array([2.0, 3.0]), 1.0, 0.5)
        F_DD = np.diag([1.0 + 1j, 2.0])
        sinr = sinr_device(budget, F_DD, np.zeros((2, 1)))
        assert sinr == pytest.approx([2.0 * 2.0 / 0.5, 3.0 * 4.0 / 0.5])

    def test_formula(self):
        rng = np.random.default_rng(0)
        budget = LinkBudget(np.array([0.5, 2.0]), np.array([1.5, 0.7]), 0.3, 0.2)
        F_DD = rayleigh(rng, (2, 2))
        F_UD = rayleigh(rng, (2, 2))
        sinr = sinr_device(budget, F_DD, F_UD)
        expected = (1.5 * abs(F_DD[0, 0]) ** 2) / (
            0.7 * abs(F_DD[0, 1]) ** 2
            + 0.5 * abs(F_UD[0, 0]) ** 2
            + 2.0 * abs(F_UD[0, 1]) ** 2
            + 0.2
        )
        assert sinr[0] == pytest.approx(expected, rel=1e-12)


class TestUserSinr:
    def test_single_user(self, unit_budget):
        sinr = sinr_user(unit_budget(1, 0), np.array([[1.0]]), np.zeros((1, 0)), np.array([[1.0]]))
        assert sinr == pytest.approx([1.0])

    def test_formula_and_scale_invariance(self):
        rng = np.random.default_rng(1)
        budget = LinkBudget(np.array([1.0, 2.0]), np.array([0.5, 1.5]), 0.4, 1.0)
        F_UB = rayleigh(rng, (4, 2))
        F_DB = rayleigh(rng, (4, 2))
        W = rayleigh(rng, (2, 4))
        sinr = sinr_user(budget, F_UB, F_DB, W)
        for k in range(2):
            assert sinr[k] == pytest.approx(
                user_sinr_by_hand(budget, F_UB, F_DB, W, k), rel=1e-12
            )
        scaled = W * np.array([[3.0 - 2.0j], [0.01j]])
        assert np.allclose(sinr_user(budget, F_UB, F_DB, scaled), sinr, rtol=1e-10)

    def test_zero_combiner_row(self, unit_budget):
        W = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(CombinerError):
            sinr_user(unit_budget(2, 0), np.ones((2, 2)), np.zeros((2, 0)), W)

    def test_combiner_shape(self, unit_budget):
        with pytest.raises(DimensionError):
            sinr_user(unit_budget(1, 0), np.ones((2, 1)), np.zeros((2, 0)), np.ones((1, 3)))


class TestLmmse:
    def test_rank_one_update(self, unit_budget):
        W = lmmse_combiner(unit_budget(1, 0), np.array([[1.0], [0.0]]), np.zeros((2, 0)))
        assert np.allclose(W.W, [[0.5, 0.0]])

    def test_beats_perturbations(self, make_instance):
        budget, ch, casc = make_instance(M=4, K=2, L=2, N=3)
        phi = PhaseShift.random(3, np.random.default_rng(0))
        F_UB, F_DB = effective_bs_channels(ch, casc, phi)
        W = lmmse_combiner(budget, F_UB, F_DB)
        best = sinr_user(budget, F_UB, F_DB, W)
        rng = np.random.default_rng(1)
        for _ in range(100):
            trial = W.W + 0.3 * rayleigh(rng, W.W.shape)
            assert np.all(sinr_user(budget, F_UB, F_DB, trial) <= best * (1.0 + 1e-9))

    def test_matched_filter_limit(self):
        rng = np.random.default_rng(2)
        F_UB = rayleigh(rng, (4, 1))
        F_DB = rayleigh(rng, (4, 1))
        budget = LinkBudget(np.ones(1), np.ones(1), 1e8 * float(np.sum(np.abs(F_UB) ** 2)), 1.0)
        w = lmmse_combiner(budget, F_UB, F_DB).W[0].conj()
        f = F_UB[:, 0]
        cosine = abs(np.vdot(w, f)) / (np.linalg.norm(w) * np.linalg.norm(f))
        assert 1.0 - cosine < 1e-6

    def test_no_users(self, unit_budget):
        W = lmmse_combiner(unit_budget(0, 1), np.zeros((3, 0)), np.ones((3, 1)))
        assert W.W.shape == (0, 3)


class TestEvaluate:
    def test_ris_off_matches_direct(self, make_instance):
        budget, ch, casc = make_instance(M=3, K=2, L=2, N=4)
        report = evaluate(budget, ch, casc, np.zeros(4))
        W = lmmse_combiner(budget, ch.H_UB, ch.H_DB)
        assert np.allclose(report.sinr_user, sinr_user(budget, ch.H_UB, ch.H_DB, W))
        assert np.allclose(report.sinr_dev, sinr_device(budget, ch.H_DD, ch.H_UD))

    def test_min_over_all_links(self, make_instance):
        for seed in range(20):
            budget, ch, casc = make_instance(M=2, K=2, L=2, N=3, seed=seed)
            report = evaluate(budget, ch, casc, PhaseShift.random(3, np.random.default_rng(seed)))
            assert report.min_sinr == min(
                np.min(report.sinr_dev), np.min(report.sinr_user)
            )
            assert len(report.links_db()) == 4

    def test_more_noise_lowers_every_link(self, make_instance):
        budget, ch, casc = make_instance(M=3, K=2, L=2, N=4)
        phi = PhaseShift.random(4, np.random.default_rng(3))
        W = Combiner(rayleigh(np.random.default_rng(4), (2, 3)))
        noisy = LinkBudget(budget.p_user, budget.p_dev, 2.0, 2.0)
        low = evaluate(noisy, ch, casc, phi, W)
        high = evaluate(budget, ch, casc, phi, W)
        assert np.all(low.sinr_user < high.sinr_user)
        assert np.all(low.sinr_dev < high.sinr_dev)

    def test_unknown_combiner(self, make_instance):
        budget, ch, casc = make_instance()
        with pytest.raises(ValueError):
            evaluate(budget, ch, casc, np.zeros(4), "zf")

    def test_device_channels_unaffected_by_combiner(self, make_instance):
        budget, ch, casc = make_instance(M=2, K=1, L=2, N=4)
        phi = np.full(4, 0.5)
        F_DD, F_UD = effective_device_channels(ch, casc, phi)
        report = evaluate(budget, ch, casc, phi, Combiner(np.ones((1, 2))))
        assert np.allclose(report.sinr_dev, sinr_device(budget, F_DD, F_UD))
