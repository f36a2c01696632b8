import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdap import numerics as nx
from recdap.diffusion import (
    NoisePredictor,
    build_condition,
    build_schedule,
    diffusion_loss,
    film,
    forward_sample,
    forward_step,
    padded_length,
    posterior_mean,
    reverse_step,
    sample,
    split_condition,
)
from recdap.errors import ConfigError, ContractError, DimensionError

SMALL = dict(channels=(4, 6, 8), time_width=8, embed_width=6)


def oracle_predictor(target, schedule):
    def predict(z_t, t, cond):
        ab = schedule.alpha_bar(t)
        return (z_t - np.sqrt(ab) * target) / np.sqrt(1 - ab)
    return predict


def zero_predictor(z_t, t, cond):
    return np.zeros_like(z_t)


class TestSchedule:
    def test_endpoints(self):
        s = build_schedule(100, 1e-4, 0.02)
        assert s.beta(1) == 1e-4 and s.beta(100) == 0.02
        assert s.alpha_bar(1) == 1 - 1e-4

    def test_product_oracle(self):
        s = build_schedule()
        prod = 1.0
        for t in range(1, 101):
            prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 99)
        assert abs(s.alpha_bar(100) - prod) < 1e-15

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 300), st.floats(1e-6, 0.5), st.floats(0.0, 0.49))
    def test_invariants(self, T, lo, span):
        s = build_schedule(T, lo, lo + span)
        b = s.betas
        assert 0 < b[0] and b[-1] < 1 and np.all(np.diff(b) >= 0)
        assert np.all((s.alpha_bars > 0) & (s.alpha_bars < 1))
        assert np.all(np.diff(s.alpha_bars) < 0)
        assert np.array_equal(s.alphas, 1.0 - b)
        assert np.array_equal(s.alpha_bars[1:], s.alpha_bars[:-1] * s.alphas[1:])

    @pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            build_schedule(*args)

    def test_out_of_range(self):
        s = build_schedule()
        for t in (0, 101):
            with pytest.raises(ContractError):
                s.alpha_bar(t)


class TestForward:
    def test_zero_noise(self):
        s = build_schedule()
        z0 = np.random.default_rng(0).normal(size=(3, 5))
        assert np.allclose(forward_sample(z0, 40, np.zeros_like(z0), s), np.sqrt(s.alpha_bar(40)) * z0, atol=0)

    def test_t1_tiny_beta(self):
        s = build_schedule(100, 1e-8, 1e-8)
        z0 = np.ones((2, 3))
        eps = np.random.default_rng(0).normal(size=(2, 3))
        assert np.allclose(forward_sample(z0, 1, eps, s), z0, atol=1e-3)

    @pytest.mark.parametrize("t", [1, 50, 100])
    def test_mc_variance(self, t):
        s = build_schedule()
        eps = np.random.default_rng(t).standard_normal((10_000, 4))
        var = forward_sample(np.zeros((10_000, 4)), t, eps, s).var(axis=0)
        assert np.all(np.abs(var / (1 - s.alpha_bar(t)) - 1) < 0.05)

    @pytest.mark.parametrize("t", [1, 50, 100])
    def test_iterated_matches_marginal(self, t):
        s = build_schedule()
        n = 10_000
        z0 = np.array([1.5, -0.7, 0.0, 3.0])
        rng = np.random.default_rng(0)
        z = np.tile(z0, (n, 1))
        for step in range(1, t + 1):
            z = forward_step(z, step, rng.standard_normal(z.shape), s)
        ab = s.alpha_bar(t)
        mean_th, var_th = np.sqrt(ab) * z0, 1 - ab
        assert np.all(np.abs(z.mean(0) - mean_th) < 3 * np.sqrt(var_th / n))
        assert np.all(np.abs(z.var(0, ddof=1) - var_th) < 3 * var_th * np.sqrt(2 / (n - 1)))

    def test_batched_t(self):
        s = build_schedule()
        z0, eps = np.ones((2, 3, 4)), np.ones((2, 3, 4))
        out = forward_sample(z0, np.array([1, 100]), eps, s)
        assert np.allclose(out[1], forward_sample(z0[1], 100, eps[1], s))


class TestCondition:
    def test_shape_k5_d100(self):
        r = nx.Tensor(np.ones((1, 100)))
        c = build_condition(r, nx.Tensor(np.ones((1, 10, 200))), [1] * 5 + [0] * 5)
        assert c.shape == (1, 10, 302)
        assert np.array_equal(c.data[0, :5, -2:], np.tile([1.0, 0.0], (5, 1)))
        assert np.array_equal(c.data[0, 5:, -2:], np.tile([0.0, 1.0], (5, 1)))

    def test_all_positive(self):
        c = build_condition(nx.Tensor(np.ones((2, 3))), nx.Tensor(np.ones((2, 4, 6))), [1, 1, 1, 1])
        assert np.array_equal(c.data[..., -2:], np.tile([1.0, 0.0], (2, 4, 1)))

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        r, z = rng.normal(size=(2, 3)), rng.normal(size=(2, 4, 6))
        c = build_condition(nx.Tensor(r), nx.Tensor(z), [1, 1, 0, 0])
        r2, z2, lab = split_condition(c, 3)
        assert np.array_equal(r2.data, np.repeat(r[:, None], 4, axis=1))
        assert np.array_equal(z2.data, z)
        assert np.array_equal(lab.data[0], [[1, 0], [1, 0], [0, 1], [0, 1]])

    def test_errors(self):
        r, z = nx.Tensor(np.ones((1, 3))), nx.Tensor(np.ones((1, 4, 6)))
        with pytest.raises(ContractError):
            build_condition(r, z, [1, 0, 0])
        with pytest.raises(ContractError):
            build_condition(r, z, [0, 1, 1, 0])

    def test_no_labels(self):
        c = build_condition(nx.Tensor(np.ones((1, 3))), nx.Tensor(np.ones((1, 4, 6))), None)
        assert np.array_equal(c.data[..., -2:], np.zeros((1, 4, 2)))


class TestPredictor:
    def make(self, width=6, cond=11, seed=0, **kw):
        reg = nx.ParamRegistry(seed)
        return reg, NoisePredictor(reg, width, cond, **{**SMALL, **kw})

    @pytest.mark.parametrize("n,want", [(2, 8), (8, 8), (10, 12), (12, 12), (13, 16)])
    def test_padding(self, n, want):
        assert padded_length(n) == want

    def test_shape_12x200(self):
        _, p = self.make(200, 302)
        out = p(np.zeros((1, 12, 200)), 5, np.zeros((1, 12, 302)))
        assert out.shape == (1, 12, 200)

    def test_unpadded_rejected(self):
        _, p = self.make()
        with pytest.raises(DimensionError):
            p.predict_noise(np.zeros((1, 10, 6)), 1, np.zeros((1, 10, 11)))

    def test_zero_params(self):
        reg, p = self.make()
        for _, t in reg.items():
            t.data[:] = 0
        rng = np.random.default_rng(0)
        out = p(rng.normal(size=(2, 8, 6)), 17, rng.normal(size=(2, 8, 11)))
        assert np.array_equal(out, np.zeros((2, 8, 6)))

    def test_film_identity(self):
        _, p = self.make(seed=2)
        blk = p.inp
        blk.film_W.data[:] = 0
        blk.film_b.data[:] = 0
        rng = np.random.default_rng(1)
        x, emb = nx.Tensor(rng.normal(size=(1, 8, 6))), nx.Tensor(rng.normal(size=(1, 8, 6)))
        plain = nx.silu(nx.conv1d(x, blk.W, blk.b, 1)).data
        assert np.array_equal(blk(x, emb).data, plain)
        h = nx.Tensor(rng.normal(size=(3, 4)))
        z = nx.Tensor(np.zeros((3, 4)))
        assert np.array_equal(film(h, z, z).data, h.data)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        z, c = rng.normal(size=(2, 8, 6)), rng.normal(size=(2, 8, 11))
        a = self.make(seed=9)[1](z, [3, 70], c)
        b = self.make(seed=9)[1](z, [3, 70], c)
        assert np.array_equal(a, b)

    def test_label_swap_changes_output(self):
        reg, p = self.make(seed=4)
        rng = np.random.default_rng(0)
        z0 = nx.Tensor(np.concatenate([np.ones((1, 4, 6)), -np.ones((1, 4, 6))], axis=1))
        cond = build_condition(nx.Tensor(np.zeros((1, 3))), z0, [1] * 4 + [0] * 4)
        loss = diffusion_loss(z0, cond, build_schedule(), rng, p).loss
        for name, g in nx.backward(loss, reg).items():
            reg[name].data = reg[name].data - 1e-2 * g
        swapped = cond.data.copy()
        swapped[0, 0, -2:] = [0.0, 1.0]
        z_t = rng.normal(size=(1, 8, 6))
        a, b = p(z_t, 30, cond.data), p(z_t, 30, swapped)
        assert not np.allclose(a[0, 0], b[0, 0])


class TestReverse:
    def test_zero_eps_mean(self):
        s = build_schedule()
        z = np.random.default_rng(0).normal(size=(1, 8, 3))
        mu = reverse_step(z, 1, None, s, np.random.default_rng(0), zero_predictor)
        assert np.allclose(mu, z / np.sqrt(s.alpha(1)), atol=0)

    def test_t1_deterministic(self):
        s = build_schedule()
        z = np.ones((1, 8, 3))
        a = reverse_step(z, 1, None, s, np.random.default_rng(1), zero_predictor)
        b = reverse_step(z, 1, None, s, np.random.default_rng(2), zero_predictor)
        assert np.array_equal(a, b)

    def test_posterior_mean_formula(self):
        s = build_schedule()
        rng = np.random.default_rng(5)
        for t in (2, 37, 100):
            z, e = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
            alpha = 1 - s.betas[t - 1]
            abar = np.prod(1 - s.betas[:t])
            want = (1 / np.sqrt(alpha)) * (z - (1 - alpha) / np.sqrt(1 - abar) * e)
            assert np.allclose(posterior_mean(z, t, e, s), want, atol=1e-12)

    def test_sample_t1_reduction(self):
        s = build_schedule(1, 1e-4, 1e-4)
        z_T = np.random.default_rng(8).standard_normal((1, 8, 3))
        out = sample((1, 8, 3), None, s, np.random.default_rng(8), zero_predictor)
        assert np.allclose(out, z_T / np.sqrt(s.alpha(1)), atol=1e-15)

    def test_unpadded_rows(self):
        s = build_schedule(5, 1e-4, 0.02)
        out = sample((2, 12, 3), None, s, np.random.default_rng(0), zero_predictor, n_rows=10)
        assert out.shape == (2, 10, 3)

    def test_analytic_inversion(self):
        s = build_schedule()
        target = np.random.default_rng(0).normal(size=(1, 8, 4))
        rng = np.random.default_rng(1)
        errs = [np.linalg.norm(sample((1, 8, 4), None, s, rng, oracle_predictor(target, s)) - target)
                for _ in range(100)]
        assert np.mean(errs) < 0.1


class TestLoss:
    def make(self, width, seed=0, **kw):
        reg = nx.ParamRegistry(seed)
        return reg, NoisePredictor(reg, width, width + 2, **{**SMALL, **kw})

    def test_exact_predictor_zero(self):
        s = build_schedule()
        rng = np.random.default_rng(0)
        eps = rng.standard_normal((1, 8, 4))

        class Exact:
            def predict_noise(self, z_t, t, cond):
                return nx.Tensor(eps)

        out = diffusion_loss(nx.Tensor(np.zeros((1, 8, 4))), nx.Tensor(np.zeros((1, 8, 6))), s, rng, Exact(), eps=eps)
        assert out.loss.item() == 0.0

    def test_zero_predictor_chi_square_mean(self):
        reg, p = self.make(200, channels=(2, 2, 2))
        for _, t in reg.items():
            t.data[:] = 0
        z0 = nx.Tensor(np.zeros((1000, 10, 200)))
        cond = nx.Tensor(np.zeros((1000, 10, 202)))
        loss = diffusion_loss(z0, cond, build_schedule(), np.random.default_rng(0), p).loss.item()
        assert abs(loss / 200 - 1) < 0.05

    def test_padding_excluded(self):
        reg, p = self.make(3)
        rng = np.random.default_rng(0)
        z0, cond = nx.Tensor(rng.normal(size=(2, 5, 3))), nx.Tensor(rng.normal(size=(2, 5, 5)))
        out = diffusion_loss(z0, cond, build_schedule(), rng, p)
        assert out.eps.shape == (2, 8, 3) and np.all(out.eps[:, 5:] == 0)
        diff = (out.eps_hat.data - out.eps)[:, :5]
        assert np.isclose(out.loss.item(), (diff**2).sum() / 10)
        assert out.z0_hat.shape == (2, 5, 3)

    def test_gradcheck_frozen(self):
        reg, p = self.make(3, seed=3, channels=(2, 3, 4), time_width=4, embed_width=3)
        rng = np.random.default_rng(0)
        z0, cond = nx.Tensor(rng.normal(size=(2, 6, 3))), nx.Tensor(rng.normal(size=(2, 6, 5)))
        t = np.array([4, 80])
        eps = rng.standard_normal((2, 8, 3))
        s = build_schedule()

        def fwd():
            return diffusion_loss(z0, cond, s, None, p, t=t, eps=eps).loss

        rep = nx.check_gradients(fwd, reg, tolerance=1e-3, max_entries=8)
        assert rep.passed, "\n".join(rep.lines())
