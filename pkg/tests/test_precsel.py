import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tcecsim.cgemm import cgemm, cgemm_oracle
from tcecsim.emugemm import GemmMode, relative_error
from tcecsim.exceptions import ScaleOverflow
from tcecsim.precsel import (
    LOG_HEADER,
    ComputeKind,
    ComputeMode,
    DecisionLog,
    ExpStats,
    LogEntry,
    MatrixTolerance,
    PowerOfTwoScaler,
    PrecisionSelector,
    SelectionPolicy,
    ToleranceLevel,
    decide,
    descale_output,
    dispatch_cgemm,
    exp_stats,
    matrix_tolerance,
    scale_matrix,
    select_mode,
)

C64 = np.complex64
THRESHOLDS = (0.0, 0.1, 0.5, 0.9)


def full(shape, value):
    return np.full(shape, value, dtype=np.float32)


def random_mags(rng, shape, lo_exp, hi_exp):
    """Complex matrix whose components have exponents drawn from [lo_exp, hi_exp)."""
    def part():
        e = rng.integers(lo_exp, hi_exp, shape)
        return np.ldexp(rng.uniform(1, 1.5, shape), e) * rng.choice([-1, 1], shape)
    return (part() + 1j * part()).astype(C64)


@st.composite
def stats_records(draw):
    n_total = draw(st.integers(1, 10_000))
    n_nonzero = draw(st.integers(0, n_total))
    n1 = draw(st.integers(0, n_nonzero))
    n2 = draw(st.integers(n1, n_nonzero))
    e_max = None if n_nonzero == 0 else draw(st.integers(-149, 14))
    return ExpStats(n1, n2, e_max, n_nonzero, n_total)


class TestExpStats:
    def test_all_ones(self):
        s = exp_stats(full((3, 4), 1.0))
        assert (s.n1, s.n_nonzero, s.n_total, s.e_max) == (12, 12, 12, 0)

    def test_complex_counts_both_parts(self):
        s = exp_stats(np.ones((3, 4), C64) * (1 + 1j))
        assert s.n_total == 24 and s.n_nonzero == 24

    def test_all_tiny(self):
        s = exp_stats(full((4, 4), 2.0**-20))
        assert (s.n1, s.e_max, s.n2) == (0, -20, s.n_nonzero)

    def test_window_excludes_far_component(self):
        s = exp_stats(np.float32([[1.0, 2.0**-40]]))
        assert s.e_max == 0 and s.n2 == 1 and s.n1 == 1

    def test_all_zero(self):
        s = exp_stats(np.zeros((2, 2), C64))
        assert s.e_max is None and s.n_nonzero == 0 and s.r1 == 0.0 and s.scale_exp == 0

    def test_zeros_left_out_of_ratio(self):
        s = exp_stats(np.float32([[0, 0, 0, 2.0**-20]]))
        assert s.n_nonzero == 1 and s.r1 == 1.0

    def test_stage_two_skipped_when_stage_one_passes(self):
        s = exp_stats(full((2, 2), 0.5), threshold=0.0)
        assert s.stage2_skipped and s.r2 is None and s.n2 == s.n1

    def test_stage_two_runs_when_stage_one_fails(self):
        s = exp_stats(full((2, 2), 2.0**-20), threshold=0.0)
        assert not s.stage2_skipped and s.r2 == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            exp_stats(np.float32([[np.inf]]))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 40))
    def test_count_invariants(self, seed, size):
        rng = np.random.default_rng(seed)
        M = random_mags(rng, (size, 3), -60, 1)
        M.real[rng.random((size, 3)) < 0.2] = 0
        s = exp_stats(M)
        assert 0 <= s.n1 <= s.n_nonzero <= s.n_total
        assert 0 <= s.n2 <= s.n_nonzero
        assert s.n1 <= s.n2

    @given(st.integers(0, 2**32 - 1), st.integers(-40, 40))
    def test_power_of_two_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        M = random_mags(rng, (6, 5), -40, 0)
        s0 = exp_stats(M)
        s1 = exp_stats(scale_matrix(M, shift))
        assert (s1.n2, s1.n_nonzero, s1.r2) == (s0.n2, s0.n_nonzero, s0.r2)
        assert s1.e_max == s0.e_max + shift
        if matrix_tolerance(s0, 0).level is ToleranceLevel.FP16_SCALED_OK:
            assert matrix_tolerance(s1, 0).level is not ToleranceLevel.TF32_ONLY

    @given(st.integers(0, 2**32 - 1), st.integers(0, 64 * 64 - 1))
    def test_every_component_is_inspected(self, seed, where):
        rng = np.random.default_rng(seed)
        M = random_mags(rng, (64, 64), -10, 0)
        before = exp_stats(M).n2
        M.reshape(-1)[where] = np.float32(2.0**-60) + 1j * M.reshape(-1)[where].imag
        assert exp_stats(M).n2 == before - 1

    def test_order_independent(self):
        rng = np.random.default_rng(4)
        M = random_mags(rng, (20, 10), -50, 1)
        flat = M.reshape(-1)
        shuffled = rng.permutation(flat).reshape(10, 20)
        assert exp_stats(M) == exp_stats(shuffled)


class TestTolerance:
    def test_all_ones(self):
        assert matrix_tolerance(exp_stats(full((2, 2), 1)), 0).level is ToleranceLevel.FP16_OK

    def test_all_tiny_needs_scaling(self):
        tol = matrix_tolerance(exp_stats(full((2, 2), 2.0**-20)), 0)
        assert tol.level is ToleranceLevel.FP16_SCALED_OK

    def test_wide_range(self):
        vals = np.float32([2.0**-40] * 9 + [1.0])
        s = exp_stats(vals.reshape(1, -1))
        assert matrix_tolerance(s, 0).level is ToleranceLevel.TF32_ONLY
        assert matrix_tolerance(s, 0.95).level is ToleranceLevel.FP16_OK

    def test_large_exponent_demoted(self):
        s = exp_stats(full((2, 2), 2.0**20))
        assert matrix_tolerance(s, 0).level is ToleranceLevel.FP16_SCALED_OK

    def test_skipped_stage_two_cannot_be_reclassified(self):
        s = exp_stats(np.float32([[1.0, 2.0**-20]]), threshold=0.5)
        assert s.stage2_skipped
        with pytest.raises(ValueError):
            matrix_tolerance(s, 0.0)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            matrix_tolerance(exp_stats(full((1, 1), 1)), 1.5)

    @given(stats_records())
    def test_monotone_in_threshold(self, s):
        levels = [matrix_tolerance(s, t).level for t in THRESHOLDS]
        assert levels == sorted(levels)


class TestSelectMode:
    def test_both_fp16(self):
        a = MatrixTolerance(ToleranceLevel.FP16_OK, 0)
        assert select_mode(a, a) == ComputeMode(ComputeKind.FP16TCEC)

    def test_scaled_pair_carries_both_shifts(self):
        a = MatrixTolerance(ToleranceLevel.FP16_OK, 0)
        b = MatrixTolerance(ToleranceLevel.FP16_SCALED_OK, -20)
        assert select_mode(a, b) == ComputeMode(ComputeKind.FP16TCEC_SCALED, 14, 34)

    def test_tf32_wins(self):
        a = MatrixTolerance(ToleranceLevel.TF32_ONLY, 0)
        b = MatrixTolerance(ToleranceLevel.FP16_OK, 0)
        assert select_mode(a, b).kind is ComputeKind.TF32TCEC
        assert select_mode(b, a).kind is ComputeKind.TF32TCEC


class TestScaling:
    def test_zero_shift_is_identity(self):
        M = random_mags(np.random.default_rng(0), (3, 3), -10, 0)
        assert scale_matrix(M, 0).tobytes() == M.tobytes()

    def test_exponent_addition(self):
        assert scale_matrix(full((1, 1), 2.0**-20), 34)[0, 0] == 2.0**14

    def test_round_trip_exact(self):
        M = random_mags(np.random.default_rng(1), (5, 7), -30, 1)
        back = scale_matrix(scale_matrix(M, 23), -23)
        assert back.tobytes() == M.tobytes()

    def test_in_place(self):
        M = np.ones((2, 2), C64)
        out = scale_matrix(M, 3, out=M)
        assert out is M and np.all(M == 8)

    def test_overflow(self):
        with pytest.raises(ScaleOverflow):
            scale_matrix(full((1, 1), 2.0**100), 40)

    def test_descale_identity(self):
        C = random_mags(np.random.default_rng(2), (2, 2), -5, 0)
        assert descale_output(C, 0, 0).tobytes() == C.tobytes()

    def test_descale_exponents(self):
        out = descale_output(np.ones((2, 2), C64) * (1 + 1j), 14, 34)
        assert np.all(out.real == 2.0**-48) and np.all(out.imag == 2.0**-48)


class TestDispatch:
    def test_small_goes_to_baseline(self):
        A = np.ones((64, 64), C64)
        C, d, stats = dispatch_cgemm(A, A)
        assert d.kind is ComputeKind.FP32_BASELINE and stats is None
        assert C.tobytes() == cgemm(A, A, GemmMode.FP32_REF).tobytes()

    def test_mid_size_goes_to_tf32_without_stats(self):
        A = np.ones((1024, 1024), C64)
        log = DecisionLog()
        C, d, stats = dispatch_cgemm(A, A, log=log, dry_run=True)
        assert C is None and d.kind is ComputeKind.TF32TCEC and stats is None
        assert log.lines() == ["1024,1024,1024,TF32TCEC,0,0,,,,,,"]

    def test_smallest_extent_decides(self):
        A = np.ones((4096, 100), C64)
        B = np.ones((100, 4096), C64)
        assert decide(A, B, SelectionPolicy())[0].kind is ComputeKind.FP32_BASELINE

    @pytest.mark.slow
    def test_tiny_inputs_scaled_at_full_size(self):
        rng = np.random.default_rng(3)
        A = random_mags(rng, (2048, 2048), -20, -19)
        B = random_mags(rng, (2048, 2048), -20, -19)
        C, d, _ = dispatch_cgemm(A, B, SelectionPolicy(threshold_t=0.0))
        assert d == ComputeMode(ComputeKind.FP16TCEC_SCALED, 34, 34)
        assert relative_error(C, cgemm_oracle(A, B)) <= 1e-6

    def test_scaling_rescues_what_plain_fp16_loses(self):
        rng = np.random.default_rng(4)
        A = random_mags(rng, (40, 30), -32, -28)
        B = random_mags(rng, (30, 20), -3, 0)
        policy = SelectionPolicy(size_auto=0, size_tf32=0)
        C, d, _ = dispatch_cgemm(A, B, policy)
        assert d.kind is ComputeKind.FP16TCEC_SCALED
        assert relative_error(C, cgemm_oracle(A, B)) <= 1e-6
        forced_plain = cgemm(A, B, GemmMode.FP16TCEC)
        assert relative_error(forced_plain, cgemm_oracle(A, B)) > 1e-3

    def test_inputs_not_modified(self):
        rng = np.random.default_rng(5)
        A = random_mags(rng, (16, 16), -22, -18)
        B = random_mags(rng, (16, 16), -22, -18)
        a0, b0 = A.copy(), B.copy()
        dispatch_cgemm(A, B, SelectionPolicy(size_auto=0, size_tf32=0))
        assert A.tobytes() == a0.tobytes() and B.tobytes() == b0.tobytes()

    @given(st.integers(0, 2**32 - 1), st.integers(-30, 0))
    def test_fp16_at_zero_threshold_means_no_underflow(self, seed, lo):
        rng = np.random.default_rng(seed)
        A = random_mags(rng, (8, 8), lo, 1)
        B = random_mags(rng, (8, 8), -14, 1)
        d, _ = decide(A, B, SelectionPolicy(size_auto=0, size_tf32=0))
        if d.kind is ComputeKind.FP16TCEC:
            for M in (A, B):
                comps = np.abs(M.view(np.float32))
                assert np.all((comps == 0) | (comps >= 2.0**-14))

    def test_forced_policy_overrides_size(self):
        A = np.ones((4, 4), C64)
        d, _ = decide(A, A, SelectionPolicy.forced("FP16TC"))
        assert d.kind is ComputeKind.FP16TC

    def test_forced_scaled_computes_shifts(self):
        A = np.full((4, 4), 2.0**-20, C64)
        d, stats = decide(A, A, SelectionPolicy.forced("FP16TCEC_SCALED"))
        assert (d.scale_exp_a, d.scale_exp_b) == (34, 34) and stats is not None

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            SelectionPolicy(threshold_t=-0.1)
        with pytest.raises(ValueError):
            SelectionPolicy(size_auto=100, size_tf32=200)

    def test_policy_names(self):
        assert SelectionPolicy.auto(0.5).name == "AUTO-0.5"
        assert SelectionPolicy().name == "AUTO-0"
        assert SelectionPolicy.forced("TF32TCEC").name == "TF32TCEC"


class TestDecisionLog:
    def test_line_format(self):
        sa = exp_stats(np.float32([[2.0**-20, 2.0**-20]]))
        sb = exp_stats(np.float32([[1.0, 0.5]]), threshold=0.0)
        e = LogEntry(2, 3, 4, ComputeKind.FP16TCEC_SCALED, 34, 14, sa, sb)
        assert e.to_line() == "2,3,4,FP16TCEC_SCALED,34,14,1,0,0,,-20,0"
        assert len(e.to_line().split(",")) == len(LOG_HEADER.split(","))

    def test_histogram_and_write(self, tmp_path):
        log = DecisionLog()
        A = np.ones((8, 8), C64)
        for policy in (SelectionPolicy(), SelectionPolicy(), SelectionPolicy.forced("TF32TCEC")):
            dispatch_cgemm(A, A, policy, log)
        assert log.histogram() == {"FP32_BASELINE": 2, "TF32TCEC": 1}
        path = tmp_path / "log.csv"
        log.write(path)
        lines = path.read_text().splitlines()
        assert lines[0] == LOG_HEADER and len(lines) == 4
        assert all(e.seconds is not None for e in log)

    def test_concurrent_appends_lose_nothing(self):
        log = DecisionLog()
        entry = LogEntry(1, 1, 1, ComputeKind.FP32_BASELINE, 0, 0)

        def worker():
            for _ in range(2000):
                log.append(entry)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(log) == 16000
        assert set(log.lines()) == {"1,1,1,FP32_BASELINE,0,0,,,,,,"}


class TestEstimators:
    def test_scaler_params_and_clone(self):
        sc = PowerOfTwoScaler(target_max_exponent=10)
        assert sc.get_params() == {"target_max_exponent": 10, "window_width": 28}
        assert clone(sc).get_params() == sc.get_params()

    def test_scaler_round_trip(self):
        M = random_mags(np.random.default_rng(6), (5, 5), -25, -20)
        sc = PowerOfTwoScaler().fit(M)
        assert sc.stats_.e_max == -21 and sc.scale_exp_ == 35
        shifted = sc.transform(M)
        assert exp_stats(shifted).e_max == 14
        assert sc.inverse_transform(shifted).tobytes() == M.tobytes()
        assert sc.fit_transform(M).tobytes() == shifted.tobytes()

    def test_scaler_not_fitted(self):
        with pytest.raises(NotFittedError):
            PowerOfTwoScaler().transform(np.ones((2, 2), C64))

    def test_selector_matches_dispatch(self):
        rng = np.random.default_rng(7)
        A = random_mags(rng, (24, 16), -22, -18)
        B = random_mags(rng, (16, 8), -4, 0)
        sel = PrecisionSelector(size_auto=0, size_tf32=0).fit(A, B)
        assert sel.mode_.kind is ComputeKind.FP16TCEC_SCALED
        C, d, _ = dispatch_cgemm(A, B, sel.policy)
        assert d == sel.mode_
        assert sel.predict(A, B).tobytes() == C.tobytes()

    def test_selector_params(self):
        sel = PrecisionSelector(threshold=0.5, k_tile=8)
        params = sel.get_params()
        assert params["threshold"] == 0.5 and params["k_tile"] == 8
        sel.set_params(threshold=0.1)
        assert sel.policy.threshold_t == 0.1
        assert clone(sel).get_params() == sel.get_params()

    def test_selector_not_fitted(self):
        A = np.ones((2, 2), C64)
        with pytest.raises(NotFittedError):
            PrecisionSelector().predict(A, A)
