"""Objective functions: hand values, exact identities, gradient checks."""

import math

import numpy as np
import pytest

from sedcl import autodiff as ad
from sedcl.errors import ConfigError, DataError, ShapeError
from sedcl.losses import (
    alpha_schedule,
    asc_loss,
    bce,
    combined_loss,
    curriculum_loss,
    gate,
    sad_loss,
)


def rand_instance(rng, bsz=2, n=3, frames=4):
    y = rng.standard_normal((bsz, n, frames)) * 2
    z = rng.integers(0, 2, size=(bsz, n, frames)).astype(float)
    f = rng.integers(0, 2, size=(bsz, n)).astype(float)
    return y, z, f


class TestBce:
    def test_zero_logit_is_log2(self):
        for z in (0.0, 1.0):
            got = bce(np.zeros((1, 1)), np.array([[z]])).item()
            assert got == pytest.approx(math.log(2), abs=1e-15)

    def test_sigma_09_target_one(self):
        y = np.array([[math.log(9.0)]])
        got = bce(y, np.ones((1, 1))).item()
        assert got == pytest.approx(0.105361, abs=1e-6)
        assert got == pytest.approx(-math.log(0.9), abs=1e-12)

    def test_saturated_logit_no_overflow(self):
        got = bce(np.full((1, 1), 40.0), np.ones((1, 1))).item()
        assert 0 <= got < 1e-15

    def test_sum_frames_then_mean_batch(self):
        y = np.zeros((2, 1, 3))
        z = np.zeros((2, 1, 3))
        assert bce(y, z).item() == pytest.approx(3 * math.log(2), abs=1e-12)

    def test_per_event_sums_to_scalar(self):
        rng = np.random.default_rng(0)
        y, z, _ = rand_instance(rng)
        out = bce(y, z, per_event=True)
        assert out.per_event.shape == (3,)
        assert out.per_event.sum() == pytest.approx(out.item(), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce(np.zeros((1, 2, 3)), np.zeros((1, 2, 4)))

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            y, z, _ = rand_instance(rng)
            assert bce(y, z).item() >= 0


class TestAlphaSchedule:
    def test_endpoints_exact(self):
        assert alpha_schedule(0, 10) == 0.0
        assert alpha_schedule(10, 10) == 1.0

    def test_midpoint_quadratic(self):
        assert alpha_schedule(5, 10, lam=2.0) == 0.25

    def test_monotone(self):
        values = [alpha_schedule(s, 30) for s in range(31)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            alpha_schedule(-1, 10)
        with pytest.raises(ConfigError):
            alpha_schedule(11, 10)
        with pytest.raises(ConfigError):
            alpha_schedule(0, 0)


class TestGate:
    def test_early_stage_trains_easy_events(self):
        np.testing.assert_array_equal(gate(np.array([1.0, 0.0]), 0.0), [0.0, 1.0])

    def test_late_stage_trains_difficult_events(self):
        np.testing.assert_array_equal(gate(np.array([1.0, 0.0]), 1.0), [1.0, 0.0])

    def test_midpoint_is_uniform_half(self):
        np.testing.assert_array_equal(gate(np.array([1.0, 0.0, 1.0]), 0.5), [0.5, 0.5, 0.5])

    def test_non_binary_flags_rejected(self):
        with pytest.raises(DataError):
            gate(np.array([0.5]), 0.5)

    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError):
            gate(np.array([1.0]), 1.5)


class TestCurriculumLoss:
    def test_all_ones_gate_equals_bce_exactly(self):
        rng = np.random.default_rng(2)
        y, z, _ = rand_instance(rng)
        full = curriculum_loss(y, z, np.ones((2, 3)), alpha=1.0).item()
        assert full == bce(y, z).item()

    def test_half_alpha_is_half_bce_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            y, z, f = rand_instance(rng)
            assert curriculum_loss(y, z, f, 0.5).item() == 0.5 * bce(y, z).item()

    def test_gated_out_event_has_zero_loss_and_gradient(self):
        rng = np.random.default_rng(4)
        y = ad.parameter(rng.standard_normal((1, 1, 5)))
        z = rng.integers(0, 2, size=(1, 1, 5)).astype(float)
        out = curriculum_loss(y, z, np.array([[1.0]]), alpha=0.0)
        assert out.item() == 0.0
        out.scalar.backward()
        np.testing.assert_array_equal(y.grad, np.zeros((1, 1, 5)))

    def test_decomposition_100_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            frames = int(rng.integers(1, 8))
            y = rng.standard_normal((1, n, frames)) * 3
            z = rng.integers(0, 2, size=(1, n, frames)).astype(float)
            f = rng.integers(0, 2, size=(1, n)).astype(float)
            alpha = float(rng.uniform())
            whole = curriculum_loss(y, z, f, alpha).item()
            hard = y[:, f[0] == 1.0, :]
            easy = y[:, f[0] == 0.0, :]
            parts = 0.0
            if hard.size:
                parts += alpha * bce(hard, z[:, f[0] == 1.0, :]).item()
            if easy.size:
                parts += (1 - alpha) * bce(easy, z[:, f[0] == 0.0, :]).item()
            assert whole == pytest.approx(parts, abs=1e-12)

    def test_per_clip_flags_in_batch(self):
        rng = np.random.default_rng(6)
        y, z, _ = rand_instance(rng, bsz=2)
        f = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        got = curriculum_loss(y, z, f, alpha=1.0).item()
        only_first = bce(y[0], z[0]).item()
        assert got == pytest.approx(0.5 * only_first, abs=1e-12)

    def test_flag_shape_mismatch(self):
        with pytest.raises(ShapeError):
            curriculum_loss(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), np.ones((1, 3)), 0.5)

    def test_gradcheck_bce_and_curriculum(self):
        rng = np.random.default_rng(7)
        y0 = rng.standard_normal((2, 3, 4))
        z = rng.integers(0, 2, size=(2, 3, 4)).astype(float)
        f = rng.integers(0, 2, size=(2, 3)).astype(float)
        assert ad.gradcheck(lambda p: bce(p[0], z).scalar, [y0]) <= 1e-4
        assert (
            ad.gradcheck(lambda p: curriculum_loss(p[0], z, f, 0.3).scalar, [y0]) <= 1e-4
        )


class TestSadLoss:
    def test_target_is_rowwise_max(self):
        z = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
        # logits +40 where some event is active, -40 where none: loss ~ 0
        logits = np.array([[[40.0, -40.0, 40.0]]])
        assert sad_loss(logits, z).item() < 1e-15

    def test_zero_logits_four_frames(self):
        z = np.zeros((1, 3, 4))
        assert sad_loss(np.zeros((1, 1, 4)), z).item() == pytest.approx(
            4 * math.log(2), abs=1e-12
        )

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sad_loss(np.zeros((1, 1, 5)), np.zeros((1, 3, 4)))

    def test_gradcheck(self):
        rng = np.random.default_rng(8)
        z = rng.integers(0, 2, size=(2, 3, 4)).astype(float)
        a0 = rng.standard_normal((2, 1, 4))
        assert ad.gradcheck(lambda p: sad_loss(p[0], z).scalar, [a0]) <= 1e-4


class TestAscLoss:
    def test_uniform_logits_log4(self):
        assert asc_loss(np.zeros(4), 0).item() == pytest.approx(math.log(4), abs=1e-12)
        assert asc_loss(np.zeros(4), 0).item() == pytest.approx(1.386294, abs=1e-6)

    def test_confident_correct_is_near_zero(self):
        logits = np.array([40.0, 0.0, 0.0])
        assert asc_loss(logits, 0).item() < 1e-15

    def test_permuting_wrong_classes_is_invariant(self):
        logits = np.array([1.0, -2.0, 3.0, 0.5])
        base = asc_loss(logits, 1).item()
        swapped = asc_loss(np.array([3.0, -2.0, 0.5, 1.0]), 1).item()
        assert swapped == pytest.approx(base, abs=1e-12)

    def test_index_out_of_range(self):
        with pytest.raises(ShapeError):
            asc_loss(np.zeros(3), 3)

    def test_batch_mean(self):
        logits = np.zeros((2, 4))
        assert asc_loss(logits, [0, 2]).item() == pytest.approx(math.log(4), abs=1e-12)

    def test_gradcheck(self):
        rng = np.random.default_rng(9)
        x0 = rng.standard_normal((3, 4))
        scenes = np.array([0, 2, 1])
        assert ad.gradcheck(lambda p: asc_loss(p[0], scenes).scalar, [x0]) <= 1e-4


class TestCombinedLoss:
    def test_beta_zero_is_primary(self):
        rng = np.random.default_rng(10)
        y, z, _ = rand_instance(rng)
        primary = bce(y, z)
        aux = sad_loss(np.zeros((2, 1, 4)), z)
        assert combined_loss(primary, aux, 0.0).item() == primary.item()

    def test_unit_beta_zero_aux(self):
        rng = np.random.default_rng(11)
        y, z, _ = rand_instance(rng)
        primary = bce(y, z)
        zero_aux = sad_loss(np.full((2, 1, 4), 40.0), np.ones((2, 3, 4)))
        assert combined_loss(primary, zero_aux, 1.0).item() == pytest.approx(
            primary.item(), abs=1e-12
        )

    def test_linear_in_beta(self):
        rng = np.random.default_rng(12)
        y, z, _ = rand_instance(rng)
        primary, aux = bce(y, z), sad_loss(rng.standard_normal((2, 1, 4)), z)
        h = 0.125
        slope = (
            combined_loss(primary, aux, 1.0 + h).item()
            - combined_loss(primary, aux, 1.0 - h).item()
        ) / (2 * h)
        assert slope == pytest.approx(aux.item(), abs=1e-9)

    def test_negative_beta_rejected(self):
        rng = np.random.default_rng(13)
        y, z, _ = rand_instance(rng)
        with pytest.raises(ConfigError):
            combined_loss(bce(y, z), bce(y, z), -0.5)
