"""RMSProp update rule and gradient clipping."""

import math

import numpy as np
import pytest

from relvae.autodiff import Parameter
from relvae.optim import RMSProp, clip_global_norm


def param(name, data, frozen_rows=()):
    p = Parameter(name, np.array(data, dtype=np.float32), frozen_rows=frozen_rows)
    return p


class TestRmsProp:
    def test_first_step_hand_value(self):
        # grad 1, lr 0.1, rho 0.9: cache becomes 0.1 and the parameter
        # moves by -lr / sqrt(0.1) = -0.31623
        p = param("w", [1.0])
        opt = RMSProp([p], lr=0.1, rho=0.9, eps=1e-8)
        p.grad[...] = 1.0
        opt.step()
        assert p.data[0] == pytest.approx(1.0 - 0.31623, abs=1e-5)

    def test_cache_accumulates_across_steps(self):
        p = param("w", [0.0])
        opt = RMSProp([p], lr=0.1, rho=0.9, eps=1e-8)
        expected_cache = 0.0
        expected_value = 0.0
        for _ in range(3):
            p.grad[...] = 1.0
            opt.step()
            expected_cache = 0.9 * expected_cache + 0.1
            expected_value -= 0.1 / math.sqrt(expected_cache + 1e-8)
            assert p.data[0] == pytest.approx(expected_value, rel=1e-6)

    def test_parameters_have_independent_caches(self):
        a = param("a", [0.0])
        b = param("b", [0.0])
        opt = RMSProp([a, b], lr=0.1)
        a.grad[...] = 1.0
        b.grad[...] = 2.0
        opt.step()
        # identical normalized steps: |g| / sqrt(0.1 g^2) is scale-free
        assert a.data[0] == pytest.approx(b.data[0], rel=1e-4)

    def test_zero_gradient_leaves_parameter(self):
        p = param("w", [3.0])
        opt = RMSProp([p], lr=0.5)
        opt.step()
        assert p.data[0] == 3.0

    def test_frozen_rows_never_move(self):
        p = param("emb", [[1.0, 2.0], [3.0, 4.0]], frozen_rows=(0,))
        opt = RMSProp([p], lr=0.1)
        p.grad[...] = 1.0
        opt.step()
        assert np.array_equal(p.data[0], [1.0, 2.0])
        assert not np.array_equal(p.data[1], [3.0, 4.0])

    def test_frozen_rows_excluded_from_clip_norm(self):
        p = param("emb", [[0.0, 0.0], [0.0, 0.0]], frozen_rows=(0,))
        opt = RMSProp([p], lr=0.1, clip_norm=1.0)
        p.grad[0] = [100.0, 100.0]
        p.grad[1] = [3.0, 4.0]
        opt.step()
        # effective norm is 5, so row 1's gradient shrinks to (0.6, 0.8)
        assert np.allclose(p.grad[1], [0.6, 0.8], rtol=1e-6)

    def test_zero_grads_clears_accumulation(self):
        p = param("w", [0.0])
        opt = RMSProp([p])
        p.grad[...] = 7.0
        opt.zero_grads()
        assert not np.any(p.grad)


class TestClipGlobalNorm:
    def test_scales_to_max_norm(self):
        a = param("a", [0.0])
        b = param("b", [0.0])
        a.grad[...] = 3.0
        b.grad[...] = 4.0
        norm = clip_global_norm([a, b], 1.0)
        assert norm == pytest.approx(5.0)
        assert a.grad[0] == pytest.approx(0.6)
        assert b.grad[0] == pytest.approx(0.8)

    def test_small_gradients_untouched(self):
        a = param("a", [0.0])
        a.grad[...] = 0.25
        norm = clip_global_norm([a], 1.0)
        assert norm == pytest.approx(0.25)
        assert a.grad[0] == 0.25

    def test_zero_max_norm_disables_clipping(self):
        a = param("a", [0.0])
        a.grad[...] = 100.0
        clip_global_norm([a], 0.0)
        assert a.grad[0] == 100.0
