import math

import numpy as np
import pytest

from pvgen.diffusion import ConditionBundle, GmmDenoiser, GmmPrior, ShapeError, ancestral_sample, make_schedule
from pvgen.geometry import RenderOutput
from pvgen.sampler import (
    EXACT_VJP,
    STOP_GRADIENT,
    GuidanceConfig,
    NonFiniteLatentError,
    PriorVideo,
    build_prior,
    guidance_grad,
    guidance_loss,
    guided_sample,
    inpaint_image,
    pad_views,
    unpad_views,
)


@pytest.fixture(scope="module")
def short():
    return make_schedule(60)


def _two_videos(seed=0, shape=(3, 4, 4, 1)):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, shape), rng.uniform(0, 1, shape)


def test_config_defaults_and_cutoff():
    cfg = GuidanceConfig()
    assert (cfg.early_stop_fraction, cfg.renoise_rounds, cfg.pad_count) == (0.2, 15, 4)
    assert cfg.cutoff(1000) == 200
    assert cfg.cutoff(7) == 2


@pytest.mark.parametrize(
    "kw", [{"guidance_weight": -1}, {"early_stop_fraction": 1.0}, {"renoise_rounds": -1}, {"grad_mode": "adjoint"}]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GuidanceConfig(**kw)


def test_prior_video_masks_values():
    v = np.ones((2, 3, 3, 2))
    m = np.zeros((2, 3, 3))
    m[:, 0] = 1
    p = PriorVideo(v, m)
    assert p.mask.shape == v.shape
    assert p.video[:, 1:].sum() == 0 and p.video[:, 0].sum() == 12
    with pytest.raises(ValueError):
        PriorVideo(v, np.full(v.shape, 0.5))
    with pytest.raises(ShapeError):
        PriorVideo(v, np.ones((2, 3)))


def test_build_prior_stacks_ends_fully_observed():
    first, last = np.zeros((4, 4, 3)), np.ones((4, 4, 3))
    mask = np.zeros((4, 4), np.uint8)
    mask[0] = 1
    mid = RenderOutput(np.full((4, 4, 3), 0.5), mask)
    p = build_prior(first, [mid, mid], last)
    assert len(p) == 4
    assert p.mask[0].all() and p.mask[-1].all()
    assert p.mask[1].sum() == 12
    with pytest.raises(ShapeError):
        build_prior(first, [RenderOutput(np.zeros((3, 4, 3)), mask[:3])], last)


def test_pad_then_unpad_roundtrip():
    v, _ = _two_videos()
    p = PriorVideo(v, np.ones(v.shape))
    padded = pad_views(p, 4)
    assert len(padded) == len(p) + 8
    np.testing.assert_array_equal(padded.video[:4], np.repeat(v[:1], 4, axis=0))
    np.testing.assert_array_equal(padded.video[-4:], np.repeat(v[-1:], 4, axis=0))
    back = unpad_views(padded, 4)
    np.testing.assert_array_equal(back.video, v)
    np.testing.assert_array_equal(unpad_views(padded.video, 4), v)
    assert pad_views(p, 0) is p


def test_zero_guidance_no_renoise_equals_plain_sampling(short):
    a, b = _two_videos()
    prior = GmmPrior.from_components([(0.5, a, 0.05), (0.5, b, 0.05)])
    den = GmmDenoiser(prior, short)
    cfg = GuidanceConfig(guidance_weight=0.0, renoise_rounds=0)
    pv = PriorVideo(a, np.ones(a.shape))
    g = guided_sample(den, pv, None, cfg, short, seed=9)
    u = ancestral_sample(den, a.shape, short, seed=9)
    np.testing.assert_array_equal(g, u)


def test_guidance_schedule_instrumented(short):
    a, b = _two_videos()
    prior = GmmPrior.from_components([(0.5, a, 0.0), (0.5, b, 0.0)])
    events = []
    cfg = GuidanceConfig(guidance_weight=0.05, renoise_rounds=3)
    guided_sample(GmmDenoiser(prior, short), PriorVideo(a, np.ones(a.shape)), None, cfg, short, 0, events.append)
    t_c = cfg.cutoff(short.T)
    guided_ts = {e.t for e in events if e.guided}
    assert guided_ts == set(range(t_c + 1, short.T + 1))
    assert all(not e.guided and not e.renoised for e in events if e.t <= t_c)
    per_t = {}
    for e in events:
        per_t[e.t] = per_t.get(e.t, 0) + 1
    assert all(per_t[t] == 4 for t in guided_ts)
    assert all(per_t[t] == 1 for t in range(1, t_c + 1))


def test_stop_gradient_formula(short):
    a, b = _two_videos(shape=(2, 3))
    prior = GmmPrior.from_components([(0.5, a, 0.2), (0.5, b, 0.2)])
    den = GmmDenoiser(prior, short)
    m = np.zeros(a.shape)
    m[:, 0] = 1
    pv = PriorVideo(a, m)
    x, t = np.random.default_rng(0).standard_normal(a.shape), 30
    eps = den.predict_eps(x, t)
    ab = short.alpha_bar[t]
    x0 = (x - math.sqrt(1 - ab) * eps) / math.sqrt(ab)
    expect = 2 / math.sqrt(ab) * m * (x0 - pv.video)
    np.testing.assert_allclose(guidance_grad(x, t, pv, den, short, STOP_GRADIENT), expect, rtol=1e-13)


def test_exact_gradient_matches_finite_differences(short):
    a, b = _two_videos(shape=(2, 3))
    prior = GmmPrior.from_components([(0.4, a, 0.3), (0.6, b, 0.3)])
    den = GmmDenoiser(prior, short)
    m = np.ones(a.shape)
    m[1] = 0
    pv = PriorVideo(a, m)
    x, t = np.random.default_rng(1).standard_normal(a.shape), 20
    g = guidance_grad(x, t, pv, den, short, EXACT_VJP)
    h = 1e-6
    fd = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        fd[idx] = (guidance_loss(x + e, t, pv, den, short) - guidance_loss(x - e, t, pv, den, short)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_exact_mode_needs_vjp(short):
    class NoVjp:
        def predict_eps(self, x, t, cond=None):
            return np.zeros_like(x)

    pv = PriorVideo(np.zeros((1, 2)), np.ones((1, 2)))
    with pytest.raises(TypeError):
        guidance_grad(np.zeros((1, 2)), 5, pv, NoVjp(), short, EXACT_VJP)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_nonfinite_latent_raises(short):
    class Exploding:
        def predict_eps(self, x, t, cond=None):
            return np.full_like(x, np.inf)

    pv = PriorVideo(np.zeros((1, 2)), np.ones((1, 2)))
    with pytest.raises(NonFiniteLatentError) as ei:
        guided_sample(Exploding(), pv, None, GuidanceConfig(), short, seed=0)
    assert ei.value.t == short.T


def test_guided_sampling_selects_observed_component():
    sched = make_schedule(200)
    a, b = _two_videos(3, shape=(2, 6, 6, 1))
    prior = GmmPrior.from_components([(0.5, a, 0.0), (0.5, b, 0.0)])
    m = np.zeros(a.shape)
    m[:, :, :3] = 1
    hits = 0
    for seed in range(5):
        out = guided_sample(GmmDenoiser(prior, sched), PriorVideo(a, m), None, GuidanceConfig(renoise_rounds=5), sched, seed)
        hits += np.mean((out - a) ** 2) < np.mean((out - b) ** 2)
    assert hits == 5


def test_inpaint_image_fills_from_matching_component():
    sched = make_schedule(200)
    rng = np.random.default_rng(5)
    imgs = [rng.uniform(0, 1, (5, 5, 2)) for _ in range(3)]
    prior = GmmPrior.from_components([(1 / 3, im[None], 0.0) for im in imgs])
    mask = np.zeros((5, 5))
    mask[:2] = 1
    out = inpaint_image(imgs[2] * mask[..., None], mask, GmmDenoiser(prior, sched), None, GuidanceConfig(renoise_rounds=5), sched, seed=0)
    np.testing.assert_allclose(out, imgs[2], atol=1e-6)


def test_text_condition_passes_through(short):
    a, b = _two_videos()
    prior = GmmPrior.from_components([(0.5, a, 0.0, "flap"), (0.5, b, 0.0, "flow")])
    den = GmmDenoiser(prior, short, text_boost=1e6)
    out = guided_sample(den, PriorVideo(a, np.zeros(a.shape)), ConditionBundle(text="it will flow"), GuidanceConfig(renoise_rounds=0), short, 0)
    np.testing.assert_allclose(out, b, atol=1e-6)
