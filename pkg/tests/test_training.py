import math

import numpy as np
import pytest

from refgame.errors import EmptySelection, MassOverflow, NonFiniteLoss, UnknownEnvironment
from refgame.features import RawFeatures
from refgame.lexicon import Description, default_lexicon, parse_description
from refgame.model import ModelParams, posterior
from refgame.training import (
    FitConfig,
    IdentificationTask,
    compile_tasks,
    fit,
    gradient_check,
    kl_loss,
    loss_hessian,
    loss_jacobian,
    target_distribution,
    task_feature_matrix,
)

from conftest import make_env, make_task, random_env, random_instance, raw


class TestTargetDistribution:
    def test_single_selected_of_four(self):
        env = random_env(np.random.default_rng(0), 4)
        p = target_distribution({"o1"}, env)
        assert np.allclose(p, [0.985, 0.005, 0.005, 0.005], atol=1e-15)

    def test_all_selected_is_uniform(self):
        env = random_env(np.random.default_rng(1), 5)
        p = target_distribution(set(env.object_ids()), env)
        assert np.allclose(p, 0.2, atol=1e-15)

    def test_sums_to_one_across_sizes(self):
        rng = np.random.default_rng(2)
        for n in range(2, 31):
            env = random_env(rng, n, env_id=f"n{n}")
            for k in range(1, n + 1):
                sel = set(env.object_ids()[:k])
                p = target_distribution(sel, env)
                assert abs(p.sum() - 1.0) < 1e-12
                unselected = [p[i] for i, oid in enumerate(env.object_ids()) if oid not in sel]
                assert all(v == 0.005 for v in unselected)

    def test_empty_selection(self):
        env = random_env(np.random.default_rng(3), 3)
        with pytest.raises(EmptySelection):
            target_distribution(set(), env)

    def test_unknown_selected_id(self):
        env = random_env(np.random.default_rng(4), 3)
        with pytest.raises(KeyError):
            target_distribution({"nope"}, env)

    def test_mass_overflow(self):
        env = random_env(np.random.default_rng(5), 210)
        with pytest.raises(MassOverflow):
            target_distribution({env.object_ids()[0]}, env)


class TestKlLoss:
    def test_zero_when_posterior_matches_target(self, lex):
        env = random_env(np.random.default_rng(6), 4)
        task = make_task(env, [], set(env.object_ids()), lex)
        loss = kl_loss(ModelParams.zeros(lex), [task], {env.id: env})
        assert abs(loss) < 1e-12

    def test_uniform_targets_at_zero_params(self, lex):
        env = random_env(np.random.default_rng(7), 6)
        tasks = [make_task(env, ["left"], set(env.object_ids()), lex)]
        assert abs(kl_loss(ModelParams.zeros(lex), tasks, {env.id: env})) < 1e-12

    def test_concentrated_target_against_uniform(self, lex):
        # direct arithmetic: KL((.985,.005,.005,.005) || uniform(4))
        env = random_env(np.random.default_rng(8), 4)
        task = make_task(env, ["red"], {env.object_ids()[0]}, lex)
        expected = 0.985 * math.log(0.985 / 0.25) + 3 * 0.005 * math.log(0.005 / 0.25)
        loss = kl_loss(ModelParams.zeros(lex), [task], {env.id: env})
        assert abs(loss - expected) < 1e-12
        assert abs(expected - 1.2919326673787728) < 1e-12

    def test_ridge_term(self, lex):
        env = random_env(np.random.default_rng(9), 4)
        task = make_task(env, [], set(env.object_ids()), lex)
        flat = np.zeros(lex.total_dim)
        flat[0] = 2.0
        params = ModelParams(lex, flat)
        base = kl_loss(params, [task], {env.id: env}, ridge=0.0)
        with_ridge = kl_loss(params, [task], {env.id: env}, ridge=0.5)
        assert abs(with_ridge - base - 0.5 * 4.0) < 1e-12

    def test_unknown_environment(self, lex):
        env = random_env(np.random.default_rng(10), 3)
        task = make_task(env, [], {env.object_ids()[0]}, lex)
        with pytest.raises(UnknownEnvironment):
            kl_loss(ModelParams.zeros(lex), [task], {})

    def test_nonnegative_on_random_instances(self, lex):
        rng = np.random.default_rng(11)
        for _ in range(10):
            envs, tasks = random_instance(rng, lex)
            params = ModelParams(lex, rng.normal(0, 0.3, lex.total_dim))
            assert kl_loss(params, tasks, envs) >= -1e-12


class TestJacobian:
    def test_zero_where_posterior_equals_target(self, lex):
        env = random_env(np.random.default_rng(12), 4)
        tasks = [make_task(env, ["left", "red"], set(env.object_ids()), lex)]
        grad = loss_jacobian(ModelParams.zeros(lex), tasks, {env.id: env})
        assert np.max(np.abs(grad)) < 1e-12

    def test_matches_direct_phi_times_residual(self, lex):
        # independent contraction of the same quantities on one small task
        env = make_env([raw(x_pos=0.2, hue=0.1), raw(x_pos=0.7, hue=0.6)])
        task = make_task(env, ["left"], {"o1"}, lex)
        rng = np.random.default_rng(13)
        params = ModelParams(lex, rng.normal(0, 0.2, lex.total_dim))
        phi = task_feature_matrix(task.desc, env, lex)
        q = posterior(task.desc, env, params).probs
        expected = phi @ (q - task.target)
        grad = loss_jacobian(params, [task], {env.id: env})
        assert np.allclose(grad, expected, atol=1e-12)

    def test_finite_difference_agreement(self, lex):
        rng = np.random.default_rng(14)
        envs, tasks = random_instance(rng, lex)
        params = ModelParams(lex, rng.normal(0, 0.1, lex.total_dim))
        assert gradient_check(params, tasks, envs, h=1e-5) < 1e-4

    def test_check_detects_corruption(self, lex):
        rng = np.random.default_rng(15)
        envs, tasks = random_instance(rng, lex)
        params = ModelParams(lex, rng.normal(0, 0.1, lex.total_dim))
        compiled = compile_tasks(tasks, envs, lex)
        analytic = compiled.loss_grad(params.flat, 0.0)[1].copy()
        analytic[0] += 1.0  # corrupt one coordinate
        flat = params.flat.copy()
        h = 1e-5
        flat[0] += h
        up = compiled.loss(flat, 0.0)
        flat[0] -= 2 * h
        down = compiled.loss(flat, 0.0)
        numeric = (up - down) / (2 * h)
        err = abs(numeric - analytic[0]) / max(1e-8, abs(analytic[0]))
        assert err >= 0.5

    def test_includes_ridge_gradient(self, lex):
        env = random_env(np.random.default_rng(16), 4)
        task = make_task(env, [], set(env.object_ids()), lex)
        flat = np.zeros(lex.total_dim)
        flat[5] = 3.0
        params = ModelParams(lex, flat)
        grad = loss_jacobian(params, [task], {env.id: env}, ridge=0.25)
        expected = np.zeros(lex.total_dim)
        expected[5] = 2 * 0.25 * 3.0
        assert np.allclose(grad, expected, atol=1e-12)


class TestHessian:
    def test_exactly_symmetric(self, lex):
        rng = np.random.default_rng(17)
        envs, tasks = random_instance(rng, lex)
        params = ModelParams(lex, rng.normal(0, 0.1, lex.total_dim))
        h = loss_hessian(params, tasks, envs)
        assert np.array_equal(h, h.T)

    def test_positive_semidefinite(self, lex):
        rng = np.random.default_rng(18)
        for _ in range(5):
            envs, tasks = random_instance(rng, lex)
            params = ModelParams(lex, rng.normal(0, 0.1, lex.total_dim))
            h = loss_hessian(params, tasks, envs, ridge=0.0)
            assert np.linalg.eigvalsh(h).min() >= -1e-8

    def test_finite_difference_of_jacobian(self, lex):
        rng = np.random.default_rng(19)
        envs, tasks = random_instance(rng, lex)
        params = ModelParams(lex, rng.normal(0, 0.1, lex.total_dim))
        compiled = compile_tasks(tasks, envs, lex)
        analytic = compiled.hessian(params.flat, 0.0)
        h = 1e-5
        numeric = np.zeros_like(analytic)
        flat = params.flat.copy()
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            up = compiled.loss_grad(flat, 0.0)[1]
            flat[i] = orig - h
            down = compiled.loss_grad(flat, 0.0)[1]
            flat[i] = orig
            numeric[:, i] = (up - down) / (2 * h)
        scale = max(1e-8, np.abs(analytic).max())
        assert np.abs(numeric - analytic).max() / scale < 1e-4

    def test_single_object_envs_leave_only_ridge(self, lex):
        env = random_env(np.random.default_rng(20), 1)
        task = make_task(env, ["red"], {env.object_ids()[0]}, lex)
        h = loss_hessian(ModelParams.zeros(lex), [task], {env.id: env}, ridge=0.3)
        assert np.allclose(h, 2 * 0.3 * np.eye(lex.total_dim), atol=1e-12)

    def test_convexity_along_random_segments(self, lex):
        rng = np.random.default_rng(21)
        envs, tasks = random_instance(rng, lex)
        compiled = compile_tasks(tasks, envs, lex)
        for _ in range(20):
            a = rng.normal(0, 0.5, lex.total_dim)
            b = rng.normal(0, 0.5, lex.total_dim)
            mid = compiled.loss((a + b) / 2, 0.0)
            assert mid <= (compiled.loss(a, 0.0) + compiled.loss(b, 0.0)) / 2 + 1e-9


class TestGradientCheck:
    def test_positive_h_required(self, lex):
        env = random_env(np.random.default_rng(22), 3)
        task = make_task(env, [], {env.object_ids()[0]}, lex)
        with pytest.raises(ValueError):
            gradient_check(ModelParams.zeros(lex), [task], {env.id: env}, h=0.0)

    def test_matched_posterior_stays_below_threshold(self, lex):
        env = random_env(np.random.default_rng(23), 4)
        task = make_task(env, ["left"], set(env.object_ids()), lex)
        err = gradient_check(ModelParams.zeros(lex), [task], {env.id: env}, h=1e-5)
        assert err < 1e-4


class TestFit:
    def test_zero_gradient_converges_immediately(self, lex):
        env = random_env(np.random.default_rng(24), 4)
        tasks = [make_task(env, ["left"], set(env.object_ids()), lex)]
        params, report = fit(tasks, {env.id: env}, FitConfig(ridge=0.0))
        assert report.iterations == 0
        assert report.converged
        assert np.array_equal(params.flat, np.zeros(lex.total_dim))

    def test_methods_agree_on_convex_objective(self, lex):
        rng = np.random.default_rng(25)
        envs, tasks = random_instance(rng, lex, n_envs=4, n_objects=4, tasks_per_env=3)
        cfg = dict(grad_tol=1e-8, ridge=1e-6, max_iters=2000)
        _, rb = fit(tasks, envs, FitConfig(method="bfgs", **cfg))
        _, rn = fit(tasks, envs, FitConfig(method="newton", **cfg))
        assert rb.converged and rn.converged
        assert abs(rb.loss - rn.loss) < 1e-6
        assert rb.grad_norm <= 1e-6 and rn.grad_norm <= 1e-6

    def test_loss_decreases_across_bfgs_iterations(self, lex):
        # iteration-capped reruns reveal the loss after each accepted step
        rng = np.random.default_rng(26)
        envs, tasks = random_instance(rng, lex, n_envs=3, n_objects=5, tasks_per_env=3)
        compiled = compile_tasks(tasks, envs, lex)

        from refgame.training import _bfgs

        def fg(x):
            return compiled.loss_grad(x, 1e-6)

        losses = [fg(np.zeros(lex.total_dim))[0]]
        for cap in range(1, 25):
            _, f, _, iters = _bfgs(fg, np.zeros(lex.total_dim), grad_tol=1e-10, max_iters=cap)
            losses.append(f)
            if iters < cap:
                break
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_gaussian_init_is_seeded(self, lex):
        rng = np.random.default_rng(27)
        envs, tasks = random_instance(rng, lex, n_envs=2, n_objects=3, tasks_per_env=2)
        cfg = FitConfig(method="newton", init="gaussian", init_seed=42, grad_tol=1e-8)
        p1, _ = fit(tasks, envs, cfg)
        p2, _ = fit(tasks, envs, cfg)
        assert np.array_equal(p1.flat, p2.flat)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_features_raise(self, lex):
        bad = RawFeatures(np.inf, 0.5, 0.2, 0.2, 0.04, 0.0, 0.5)
        env = make_env([bad, raw()])
        tasks = [make_task(env, ["left"], {"o1"}, lex)]
        with pytest.raises(NonFiniteLoss):
            fit(tasks, {env.id: env}, FitConfig())

    def test_requires_tasks(self, lex):
        with pytest.raises(ValueError):
            fit([], {}, FitConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(method="sgd")
        with pytest.raises(ValueError):
            FitConfig(grad_tol=0)
        with pytest.raises(ValueError):
            FitConfig(max_iters=0)
        with pytest.raises(ValueError):
            FitConfig(ridge=-1)


class TestCompiledEquivalence:
    def test_grouped_loss_equals_per_task_sum(self, lex):
        # replicas sharing (env, desc) must contribute exactly like singles
        rng = np.random.default_rng(28)
        env = random_env(rng, 5)
        desc_tokens = ["left", "red"]
        tasks = []
        for k in (1, 2, 3):
            sel = set(env.object_ids()[:k])
            tasks.append(make_task(env, desc_tokens, sel, lex))
        params = ModelParams(lex, rng.normal(0, 0.3, lex.total_dim))
        envs = {env.id: env}
        total = kl_loss(params, tasks, envs)
        singles = sum(kl_loss(params, [t], envs) for t in tasks)
        assert abs(total - singles) < 1e-10
        grad_total = loss_jacobian(params, tasks, envs)
        grad_singles = sum(loss_jacobian(params, [t], envs) for t in tasks)
        assert np.allclose(grad_total, grad_singles, atol=1e-10)
