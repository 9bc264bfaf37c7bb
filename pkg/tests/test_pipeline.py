import numpy as np
import pytest

from pvgen import agent as agents
from pvgen.config import AgentConfig, DiffusionConfig, JourneyConfig
from pvgen.diffusion import GmmPrior
from pvgen.geometry import CameraPose
from pvgen.persist import load_journey
from pvgen.pipeline import (
    DYNAMICS,
    SPATIAL,
    EmptyRenderError,
    JourneyError,
    endpoint_prior,
    initial_state,
    make_context,
    run_journey,
    run_stage1,
    run_stage2,
    transition_prior,
)
from pvgen.agent.templates import COT_MARKER
from pvgen.sampler import FLYOVER_PROMPT
from pvgen.synth import Layer, SceneSpec, render_world_video
from pvgen.trajectory import TrajectorySpec, make_path

FAST = DiffusionConfig(steps=100)


def _cfg(**kw):
    kw.setdefault("diffusion", FAST)
    return JourneyConfig(**kw)


@pytest.fixture(scope="module")
def short_journey(tmp_path_factory):
    out = tmp_path_factory.mktemp("journey")
    cfg = _cfg(seed=5, cycles=2, output_dir=str(out))
    ctx_log = []
    record = run_journey(cfg, observer=None)
    return cfg, record, out, ctx_log


def test_segments_alternate(short_journey):
    _, record, _, _ = short_journey
    assert [s.kind for s in record.segments] == [SPATIAL, DYNAMICS, SPATIAL, DYNAMICS]
    assert record.complete
    for s in record.segments:
        assert s.frames.shape == (48, 16, 16, 3) and s.frames.dtype == np.float32


def test_boundaries_bit_equal(short_journey):
    _, record, _, _ = short_journey
    for a, b in zip(record.segments, record.segments[1:]):
        assert np.array_equal(a.frames[-1], b.frames[0])


def test_point_count_never_drops(short_journey):
    _, record, _, _ = short_journey
    stats = record.point_cloud_stats
    assert len(stats) == 2 and stats[0] <= stats[1]


def test_spatial_segment_tracks_true_world(short_journey):
    cfg, record, _, _ = short_journey
    seg = record.segments[0]
    truth = render_world_video(cfg.scene, seg.camera_path.poses)
    assert np.mean((seg.frames - truth) ** 2) < 1e-2


def test_dynamics_segment_moves(short_journey):
    _, record, _, _ = short_journey
    seg = record.segments[1]
    assert seg.transcript is not None
    assert seg.prompts["dynamics"] == seg.transcript.dynamic_prompt
    assert np.mean((seg.frames[1:] - seg.frames[0]) ** 2) > 1e-3


def test_second_cycle_starts_at_previous_end(short_journey):
    _, record, _, _ = short_journey
    first, second = record.segments[0].camera_path, record.segments[2].camera_path
    assert second.poses[0] == first.poses[-1]


def test_record_reloads_equal(short_journey):
    _, record, out, _ = short_journey
    assert load_journey(out) == record


def test_prompt_log_uses_flyover_prompt():
    cfg = _cfg(frames_per_segment=8, agent=AgentConfig(kind="disabled"))
    ctx = make_context(cfg)
    state = initial_state(cfg, ctx.depth)
    seg, cloud, end, scene_prompt = run_stage1(state, cfg, ctx)
    assert ("transition", FLYOVER_PROMPT) in ctx.prompt_log
    assert scene_prompt is None and seg.prompts["scene"] is None
    assert len(cloud) >= len(state.cloud)
    assert end == seg.camera_path.poses[-1]


def test_stage1_single_layer_matches_truth():
    scene = SceneSpec(layers=(Layer(0.004, "gradient", None, cell=5e-3),))
    cfg = _cfg(frames_per_segment=12, scene=scene, world_sigma=0.0, agent=AgentConfig(kind="disabled"))
    ctx = make_context(cfg)
    state = initial_state(cfg, ctx.depth)
    seg, *_ = run_stage1(state, cfg, ctx)
    truth = render_world_video(scene, seg.camera_path.poses)
    assert np.mean((seg.frames - truth) ** 2) < 1e-2


def test_zero_motion_stays_on_start_view():
    traj = TrajectorySpec(translation_total=0.0, sine_amplitude=0.0)
    cfg = _cfg(frames_per_segment=8, trajectory=traj, world_sigma=0.0, agent=AgentConfig(kind="disabled"))
    ctx = make_context(cfg)
    state = initial_state(cfg, ctx.depth)
    seg, *_ = run_stage1(state, cfg, ctx)
    assert np.max(np.abs(seg.frames - state.view)) < 1e-3


def test_stage2_without_agent_uses_default_prompt():
    cfg = _cfg(frames_per_segment=8, agent=AgentConfig(kind="disabled"))
    ctx = make_context(cfg)
    state = initial_state(cfg, ctx.depth)
    seg = run_stage2(state, cfg, ctx)
    assert seg.prompts == {"dynamics": agents.DEFAULT_DYNAMICS_PROMPT}
    assert seg.transcript is None
    assert np.array_equal(seg.frames[0], state.view.astype(np.float32))
    assert ctx.prompt_log == [("dynamics", agents.DEFAULT_DYNAMICS_PROMPT)]


def test_rotational_journey_runs():
    cfg = _cfg(frames_per_segment=8, trajectory=TrajectorySpec.rotational(), agent=AgentConfig(kind="disabled"))
    record = run_journey(cfg, save=False)
    assert [s.kind for s in record.segments] == [SPATIAL, DYNAMICS]


def test_priors_have_three_candidate_moves():
    cfg = _cfg(frames_per_segment=8)
    path = make_path(CameraPose.identity(), cfg.trajectory, seed=0)
    tp = transition_prior(cfg.scene, path, 0.01, 4)
    ep = endpoint_prior(cfg.scene, path, 0.01)
    assert isinstance(tp, GmmPrior) and tp.n_components == 3 and tp.shape == (16, 16, 16, 3)
    assert ep.n_components == 3 and ep.shape == (1, 16, 16, 3)


def test_empty_render_raises(monkeypatch):
    import pvgen.pipeline as pl

    real = pl.render
    calls = []

    def fake(cloud, pose, K):
        calls.append(1)
        r = real(cloud, pose, K)
        if len(calls) > 2:
            r.mask[:] = 0
        return r

    monkeypatch.setattr(pl, "render", fake)
    cfg = _cfg(frames_per_segment=8, agent=AgentConfig(kind="disabled"))
    ctx = make_context(cfg)
    with pytest.raises(EmptyRenderError) as ei:
        run_stage1(initial_state(cfg, ctx.depth), cfg, ctx)
    assert ei.value.index == 2


class _FailingCot(agents.MockAgent):
    def complete(self, messages, image_ref=None):
        if COT_MARKER in messages[-1]["content"]:
            return "no fields here"
        return super().complete(messages, image_ref)


def test_failed_stage_saves_partial_record(tmp_path):
    cfg = _cfg(frames_per_segment=8, output_dir=str(tmp_path))
    with pytest.raises(JourneyError) as ei:
        run_journey(cfg, agent=_FailingCot())
    assert isinstance(ei.value.__cause__, agents.AgentParseError)
    partial = ei.value.record
    assert not partial.complete and [s.kind for s in partial.segments] == [SPATIAL]
    assert load_journey(tmp_path) == partial


def test_same_seed_same_record():
    cfg = _cfg(frames_per_segment=8, seed=11)
    assert run_journey(cfg, save=False) == run_journey(cfg, save=False)


def test_different_seed_changes_frames():
    a = run_journey(_cfg(frames_per_segment=8, seed=1), save=False)
    b = run_journey(_cfg(frames_per_segment=8, seed=2), save=False)
    assert not np.array_equal(a.segments[1].frames, b.segments[1].frames)


# ---------------------------------------------------------------- config


def test_config_json_roundtrip(tmp_path):
    cfg = _cfg(seed=3, cycles=2, trajectory=TrajectorySpec.rotational(), agent=AgentConfig(kind="disabled"))
    path = tmp_path / "cfg.json"
    cfg.dump(path)
    assert JourneyConfig.load(path) == cfg


def test_config_shares_frame_count():
    cfg = JourneyConfig(frames_per_segment=10)
    assert cfg.trajectory.frames == 10 and cfg.prior.frames == 10


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        JourneyConfig.from_dict({"sede": 1})


def test_config_agent_shorthand():
    assert JourneyConfig.from_dict({"agent": "disabled"}).agent.kind == "disabled"
    with pytest.raises(ValueError):
        AgentConfig(kind="oracle")


def test_snapshot_excludes_output_dir():
    a = JourneyConfig(output_dir="/a").snapshot()
    assert a == JourneyConfig(output_dir="/b").snapshot() and "output_dir" not in a
