# tests/test_ic.py
import numpy as np
import pytest

from risic.channels import ChannelSet, build_cascaded, effective_device_channels
from risic.exceptions import (
    IcUnavailableError,
    IllConditionedError,
    UnderdeterminedError,
    UnsupportedError,
)
from risic.scenario import rayleigh
from risic.services.ic import (
    IcRepresentation,
    _right_inverse,
    build_representation,
    feedback_cost,
    ic_optimize,
    ic_problem_data,
    limited_feedback_single_pair,
    phi_ic,
    stack,
    transformed_objective,
)
from risic.solvers import AdmmSolver


def hand_built_instance():
    """
    N = 2, one user and one pair with A = [[1, 0], [0.5, 1]] and no direct
    D2D channels, so phi = [f, -f / 2]. Max-min of the transformed objective
    is 0.64 at f = 1 where the true user SINR is 0.32.
    """
    zeros = np.zeros((1, 1))
    ch = ChannelSet(
        H_RB=np.array([[1.0, 0.0]]),
        H_UD=zeros,
        H_DD=zeros,
        H_UB=np.array([[0.3]]),
        H_DB=zeros,
        H_RD=np.array([[1.0, 1.0]]),
        H_UR=np.array([[0.5], [1.0]]),
        H_DR=np.array([[1.0], [0.0]]),
    )
    return ch, build_cascaded(ch)


class TestStack:
    def test_perm_two_pairs(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=8)
        st = stack(ch, casc)
        assert st.perm.tolist() == [0, 3, 1, 2]
        assert st.A.shape == (6, 8)

    def test_matches_effective_channels(self, make_instance):
        _, ch, casc = make_instance(M=2, K=2, L=2, N=10, seed=3)
        st = stack(ch, casc)
        phi = rayleigh(np.random.default_rng(4), (10,))
        F_DD, F_UD = effective_device_channels(ch, casc, phi)
        stacked = st.h + st.A @ phi
        sig, itf = st.split(F_DD.ravel())
        assert np.allclose(stacked[: st.L], sig)
        assert np.allclose(stacked[st.L : st.L * st.L], itf)
        assert np.allclose(stacked[st.L * st.L :], F_UD.ravel())

    def test_merge_inverts_split(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=3, N=12)
        st = stack(ch, casc)
        f_dd = rayleigh(np.random.default_rng(0), (9,))
        assert np.array_equal(st.merge(*st.split(f_dd)), f_dd)


class TestRightInverse:
    def test_orthonormal_rows(self):
        Q, _ = np.linalg.qr(rayleigh(np.random.default_rng(1), (5, 5)))
        A = Q[:3]
        assert np.allclose(_right_inverse(A), A.conj().T, atol=1e-10)

    def test_square(self):
        A = rayleigh(np.random.default_rng(2), (3, 3)) + 3.0 * np.eye(3)
        assert np.allclose(_right_inverse(A), np.linalg.inv(A), atol=1e-10)

    def test_underdetermined(self):
        with pytest.raises(UnderdeterminedError, match="N >= 3"):
            _right_inverse(np.ones((3, 2)))

    def test_duplicate_rows(self):
        row = rayleigh(np.random.default_rng(3), (1, 4))
        with pytest.raises(IllConditionedError):
            _right_inverse(np.vstack((row, row)))

    def test_unavailable_is_common_base(self):
        assert issubclass(UnderdeterminedError, IcUnavailableError)
        assert issubclass(IllConditionedError, IcUnavailableError)


class TestRepresentation:
    def test_nulling(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=8, seed=1)
        rep = build_representation(stack(ch, casc))
        rng = np.random.default_rng(2)
        for _ in range(10):
            f = rayleigh(rng, (2,))
            F_DD, F_UD = effective_device_channels(ch, casc, phi_ic(rep, f))
            assert np.allclose(np.diag(F_DD), f, atol=1e-8)
            assert np.max(np.abs(F_DD - np.diag(np.diag(F_DD)))) <= 1e-8
            assert np.max(np.abs(F_UD)) <= 1e-8

    def test_zero_gain_silences_pairs(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=8, seed=2)
        rep = build_representation(stack(ch, casc))
        F_DD, _ = effective_device_channels(ch, casc, phi_ic(rep, np.zeros(2)))
        assert np.allclose(F_DD, 0.0, atol=1e-8)

    def test_affine_in_gain(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=8, seed=3)
        rep = build_representation(stack(ch, casc))
        rng = np.random.default_rng(4)
        f1, f2 = rayleigh(rng, (2,)), rayleigh(rng, (2,))
        mixed = phi_ic(rep, 0.3 * f1 + 0.7 * f2).phi
        assert np.allclose(mixed, 0.3 * phi_ic(rep, f1).phi + 0.7 * phi_ic(rep, f2).phi)

    def test_too_few_elements(self, make_instance):
        _, ch, casc = make_instance(M=2, K=2, L=2, N=6)
        with pytest.raises(UnderdeterminedError):
            build_representation(stack(ch, casc))

    def test_no_pairs(self, make_instance):
        _, ch, casc = make_instance(M=2, K=2, L=0, N=4)
        with pytest.raises(IcUnavailableError):
            build_representation(stack(ch, casc))


class TestIcOptimize:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_invariants(self, seed, make_instance, solver, mocker):
        budget, ch, casc = make_instance(M=2, K=1, L=1, N=4, seed=seed, direct_scale=0.02)
        rep = build_representation(stack(ch, casc))
        spy = mocker.spy(solver, "solve")
        result = ic_optimize(budget, ch, casc, rep, solver, 20, np.random.SeedSequence(seed))

        assert spy.call_count == 1
        assert result.sdp_solves == 1
        assert result.phi.max_magnitude <= 1.0 + 1e-9
        assert result.report.sinr_dev[0] == pytest.approx(abs(result.f_sig[0]) ** 2, rel=1e-6)
        user_bound, _ = transformed_objective(ic_problem_data(ch, casc, rep), budget, result.f_sig)
        assert result.report.sinr_user[0] <= user_bound[0] * (1.0 + 1e-9)
        assert result.relaxation >= result.min_sinr * (1.0 - 1e-4)

    def test_hand_built_instance(self, solver, unit_budget):
        ch, casc = hand_built_instance()
        budget = unit_budget(1, 1)
        rep = build_representation(stack(ch, casc))
        assert np.allclose(rep.B[:, 0], [1.0, -0.5])
        assert np.allclose(rep.d, 0.0)

        result = ic_optimize(budget, ch, casc, rep, solver, 10, np.random.SeedSequence(0))
        data = ic_problem_data(ch, casc, rep)
        grid = np.linspace(0.0, 1.0, 101)
        best = 0.0
        for x in grid:
            user, device = transformed_objective(data, budget, np.array([x]))
            best = max(best, min(user[0], device[0]))
        assert best == pytest.approx(0.64)
        assert result.relaxation == pytest.approx(0.64, rel=2e-2)
        assert result.relaxation >= best * (1.0 - 1e-4)
        assert result.min_sinr == pytest.approx(0.32, rel=2e-2)
        assert result.min_sinr <= result.relaxation

    def test_single_pair_without_users(self, make_instance, solver):
        budget, ch, casc = make_instance(M=2, K=0, L=1, N=4, seed=5, direct_scale=0.02)
        rep = build_representation(stack(ch, casc))
        result = ic_optimize(budget, ch, casc, rep, solver, 10, np.random.SeedSequence(1))
        assert result.report.sinr_user.size == 0
        assert result.min_sinr == pytest.approx(abs(result.f_sig[0]) ** 2, rel=1e-6)

    def test_deterministic(self, make_instance, settings):
        budget, ch, casc = make_instance(M=2, K=1, L=1, N=4, seed=7, direct_scale=0.02)
        rep = build_representation(stack(ch, casc))
        runs = [
            ic_optimize(budget, ch, casc, rep, AdmmSolver(settings), 10, np.random.SeedSequence(3))
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].phi.phi, runs[1].phi.phi)


class TestLimitedFeedback:
    def test_matches_full_csi(self, make_instance):
        _, ch, casc = make_instance(M=3, K=2, L=1, N=6, seed=4)
        full = build_representation(stack(ch, casc))
        feedback = limited_feedback_single_pair(ch, casc)
        limited = IcRepresentation.from_feedback(feedback.b, feedback.d)
        assert feedback.feedback_count == 12
        a, b = ic_problem_data(ch, casc, full), ic_problem_data(ch, casc, limited)
        assert np.allclose(a.Omega, b.Omega, atol=1e-10)
        assert np.allclose(a.Upsilon, b.Upsilon, atol=1e-10)

    def test_multiple_pairs(self, make_instance):
        _, ch, casc = make_instance(M=2, K=1, L=2, N=8)
        with pytest.raises(UnsupportedError):
            limited_feedback_single_pair(ch, casc)


class TestFeedbackCost:
    @pytest.mark.parametrize(
        "K, L, N, mode, expected",
        [
            (2, 2, 64, "full_multi", 260),
            (2, 1, 64, "full_single", 195),
            (2, 1, 64, "limited_single", 128),
        ],
    )
    def test_counts(self, K, L, N, mode, expected):
        assert feedback_cost(K, L, N, mode) == expected

    def test_limited_needs_single_pair(self):
        with pytest.raises(UnsupportedError):
            feedback_cost(2, 2, 64, "limited_single")
