import numpy as np
import pytest
from scipy import stats

from egpo.expert import (
    ActionDistribution,
    ExpertConfig,
    ExpertPolicy,
    estimate_failure_rate,
    expert_action,
    expert_density,
    wilson_interval,
)
from egpo.guardian import midpoint_grid
from egpo.sim import DrivingEnv, EgoState, Obstacle, SceneConfig, SceneSpec, generate_scene


def straight_scene(obstacles=()):
    xs = np.arange(0.0, 101.0, 1.0)
    line = np.stack([xs, np.zeros_like(xs)], axis=1)
    return SceneSpec(0, line, 4.0, tuple(obstacles), (), (0.0, 0.0, 0.0), 80.0)


CENTERED = EgoState((10.0, 0.0), 0.0, 6.0, 10.0, 0.0)


def squashed_mean(dist: ActionDistribution) -> np.ndarray:
    """E[tanh(m + s xi)] by 80-point Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    return np.array([np.sum(w * np.tanh(m + s * x)) for m, s in zip(dist.mean, dist.std)])


def test_straight_road_centered_steers_straight():
    mean = ExpertPolicy().distribution(CENTERED, straight_scene()).center
    assert abs(mean[0]) < 1e-9


def test_obstacle_ahead_produces_steering():
    sc = straight_scene([Obstacle((20.0, 0.0), 0.8, "triangle")])
    mean = ExpertPolicy().distribution(CENTERED, sc).center
    assert abs(mean[0]) > 0.05


def test_sample_mean_within_three_standard_errors():
    dist = ExpertPolicy().distribution(CENTERED, straight_scene([Obstacle((20.0, 1.0), 0.8, "triangle")]))
    a = dist.sample(np.random.default_rng(0), 10_000)
    se = a.std(axis=0, ddof=1) / np.sqrt(len(a))
    assert np.all(np.abs(a.mean(axis=0) - squashed_mean(dist)) < 3 * se)


def test_expert_action_is_inside_open_box():
    expert = ExpertPolicy(ExpertConfig(quality=0.3))
    rng = np.random.default_rng(1)
    env = DrivingEnv()
    env.reset(generate_scene(3))
    for _ in range(200):
        a = expert_action(expert, env.state, env.scene, rng, env.time)
        assert np.all(np.abs(a) < 1)
        if env.step(a).done:
            break


def test_mode_maximizes_density_on_dense_grid():
    dist = ActionDistribution(np.array([0.4, -0.2]), np.array([0.3, 0.5]))
    pts, _ = midpoint_grid(400)
    dens = dist.density(pts)
    assert dist.density(dist.mode()) >= dens.max()


def test_density_integrates_to_one():
    # at target speed the throttle command is unsaturated
    state = EgoState((10.0, 0.0), 0.0, 8.0, 10.0, 0.0)
    dist = ExpertPolicy().distribution(state, straight_scene([Obstacle((25.0, 1.0), 0.4, "cone")]))
    pts, area = midpoint_grid(200)
    assert abs(dist.density(pts).sum() * area - 1.0) < 1e-3


def test_three_sigma_action_is_a_hundred_times_less_likely():
    dist = ActionDistribution(np.array([0.1, 0.3]), np.array([0.15, 0.15]))
    far = np.tanh(dist.mean + 3 * dist.std)
    assert dist.density(far) < dist.density(dist.mode()) / 100


def test_density_zero_outside_open_box_and_finite_inside():
    dist = ActionDistribution(np.zeros(2), np.full(2, 0.2))
    assert dist.density([1.0, 0.0]) == 0.0
    assert dist.density([0.3, -1.5]) == 0.0
    assert np.isfinite(dist.log_density([0.999999, -0.999999]))
    assert expert_density(ExpertPolicy(), CENTERED, straight_scene(), [1.0, 1.0]) == 0.0


def test_sampler_marginals_pass_ks_against_density():
    dist = ExpertPolicy().distribution(CENTERED, straight_scene([Obstacle((18.0, -0.5), 0.8, "triangle")]))
    a = dist.sample(np.random.default_rng(7), 10_000)
    for i in range(2):
        cdf = lambda x, i=i: stats.norm.cdf((np.arctanh(x) - dist.mean[i]) / dist.std[i])
        assert stats.kstest(a[:, i], cdf).pvalue > 0.01


def test_quality_knob_never_increases_gains():
    qs = [1.0, 0.8, 0.6, 0.3, 0.0]
    experts = [ExpertPolicy(ExpertConfig(quality=q)) for q in qs]
    for hi, lo in zip(experts, experts[1:]):
        assert lo.steer_gain <= hi.steer_gain
        assert lo.avoid_gain <= hi.avoid_gain
        assert np.all(lo.noise >= hi.noise)
    assert experts[0].steer_gain == ExpertConfig().steer_gain
    with pytest.raises(ValueError):
        ExpertConfig(quality=1.5)
    with pytest.raises(ValueError):
        ExpertConfig(noise_scale=(0.0, 0.1))


def test_no_avoidance_on_empty_scenes_never_fails():
    cfg = SceneConfig(n_obstacles=(0, 0), n_traffic=(0, 0))
    scenes = [generate_scene(s, cfg) for s in range(5)]
    est = estimate_failure_rate(ExpertPolicy(ExpertConfig(avoidance=False)), scenes, 5,
                                np.random.default_rng(0))
    assert est.rate == 0.0 and est.cost_steps == 0


def test_lower_quality_fails_more_often():
    scenes = [generate_scene(s) for s in range(1000, 1010)]
    hi = estimate_failure_rate(ExpertPolicy(ExpertConfig(quality=1.0)), scenes, 10, np.random.default_rng(0))
    lo = estimate_failure_rate(ExpertPolicy(ExpertConfig(quality=0.3)), scenes, 10, np.random.default_rng(0))
    assert hi.rate < lo.rate
    assert hi.low <= hi.rate <= hi.high


def test_failure_rate_rejects_zero_episodes():
    with pytest.raises(ValueError):
        estimate_failure_rate(ExpertPolicy(), [generate_scene(0)], 0, np.random.default_rng(0))


def test_wilson_interval_matches_closed_form():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and hi == pytest.approx(1.96 ** 2 / (100 + 1.96 ** 2))
    lo, hi = wilson_interval(50, 100)
    assert (lo + hi) / 2 == pytest.approx(0.5)
