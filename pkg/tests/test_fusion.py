import math

import numpy as np
import pytest

from dualpose.errors import DomainError, FrameMismatchError, ScorerContractError
from dualpose.fusion import (
    FusionStrategy,
    MlpIntegrator,
    PlausibilityScorers,
    corrupt_pair,
    discriminator_loss,
    discriminator_score,
    fuse_frame,
    fuse_pair,
    reference_scorers,
)
from dualpose.matching import MatchConfig, MatchResult, match_sets
from dualpose.skeleton import pose3d_camera, pose3d_person, rest_pose

from conftest import random_camera_pose

STRATEGIES = [
    FusionStrategy.hard(),
    FusionStrategy.linear(),
    FusionStrategy.weighted(0.3),
]


@pytest.mark.parametrize("strategy", STRATEGIES, ids=lambda s: s.variant)
def test_fuse_pair_idempotent_on_equal_inputs(strategy, skel):
    rng = np.random.default_rng(41)
    pose = random_camera_pose(rng, skel, conf=rng.random(skel.num_joints))
    out = fuse_pair(pose, pose, strategy, skel)
    assert np.allclose(out.joints, pose.joints)
    assert np.allclose(out.conf, pose.conf)


def test_fuse_pair_hard_reroots_at_bu_depth(skel):
    rng = np.random.default_rng(42)
    rel = rest_pose()
    td = pose3d_camera(rel + (0.0, 0.0, 2000.0))
    bu = random_camera_pose(rng, skel, center=(50.0, 50.0, 3000.0))
    bu_joints = bu.joints.copy()
    bu_joints[skel.root_index] = (50.0, 50.0, 3000.0)
    bu = pose3d_camera(bu_joints)
    out = fuse_pair(td, bu, FusionStrategy.hard(), skel)
    assert np.allclose(out.joints[skel.root_index], (0.0, 0.0, 3000.0))
    # relative structure comes entirely from TD
    assert np.allclose(out.joints - out.joints[skel.root_index],
                       td.joints - td.joints[skel.root_index])


def test_fuse_pair_linear_degenerate_weights(skel):
    rng = np.random.default_rng(43)
    td = random_camera_pose(rng, skel, conf=np.ones(skel.num_joints))
    bu = random_camera_pose(rng, skel, conf=np.zeros(skel.num_joints))
    out = fuse_pair(td, bu, FusionStrategy.linear(), skel)
    assert np.allclose(out.joints, td.joints)


def test_fuse_pair_linear_convexity(skel):
    rng = np.random.default_rng(44)
    td = random_camera_pose(rng, skel, conf=rng.random(skel.num_joints))
    bu = random_camera_pose(rng, skel, conf=rng.random(skel.num_joints))
    out = fuse_pair(td, bu, FusionStrategy.linear(), skel)
    lo = np.minimum(td.joints, bu.joints) - 1e-9
    hi = np.maximum(td.joints, bu.joints) + 1e-9
    assert np.all(out.joints >= lo) and np.all(out.joints <= hi)


def test_fuse_pair_weighted_blend(skel):
    rng = np.random.default_rng(45)
    td = random_camera_pose(rng, skel)
    bu = random_camera_pose(rng, skel)
    out = fuse_pair(td, bu, FusionStrategy.weighted(0.25), skel)
    assert np.allclose(out.joints, 0.25 * td.joints + 0.75 * bu.joints)


def test_fuse_pair_rejects_person_centric(skel):
    pc = pose3d_person(np.zeros((skel.num_joints, 3)))
    cc = pose3d_camera(rest_pose() + (0, 0, 3000.0))
    with pytest.raises(FrameMismatchError):
        fuse_pair(pc, cc, FusionStrategy.linear(), skel)


def test_fuse_frame_counts(skel):
    rng = np.random.default_rng(46)
    centers = [(-3000, 0, 3000), (0, 0, 4000), (3000, 0, 5000), (-3000, 0, 8000)]
    td = [random_camera_pose(rng, skel, center=c, spread_mm=25) for c in centers[:3]]
    bu = [random_camera_pose(rng, skel, center=c, spread_mm=25) for c in centers[:2]]
    bu.append(random_camera_pose(rng, skel, center=centers[3], spread_mm=25))
    cfg = MatchConfig(tau_match=1.5)
    match = match_sets(td, bu, cfg)
    fused = fuse_frame(match, td, bu, FusionStrategy.linear(), skel)
    # 2 matched pairs, 1 unmatched TD, 1 unmatched BU
    assert len(match.pairs) == 2
    assert len(fused) == len(match.pairs) + len(match.unmatched_td) + len(match.unmatched_bu)
    assert len(fused) == 4


def test_fuse_frame_all_matched_and_disjoint(skel):
    rng = np.random.default_rng(47)
    td = [random_camera_pose(rng, skel, center=(0, 0, 3000), spread_mm=20)]
    bu = [random_camera_pose(rng, skel, center=(0, 0, 3000), spread_mm=20)]
    match = match_sets(td, bu, MatchConfig(tau_match=1.5))
    assert len(fuse_frame(match, td, bu, FusionStrategy.linear(), skel)) == 1
    empty = MatchResult(pairs=(), unmatched_td=(0,), unmatched_bu=(0,))
    assert len(fuse_frame(empty, td, bu, FusionStrategy.linear(), skel)) == 2


def test_fuse_frame_index_errors(skel):
    rng = np.random.default_rng(48)
    td = [random_camera_pose(rng, skel)]
    bad = MatchResult(pairs=((0, 3, 1.0),), unmatched_td=(), unmatched_bu=())
    with pytest.raises(IndexError):
        fuse_frame(bad, td, td, FusionStrategy.linear(), skel)


def constant_scorers(v1a, v1b=None, v2=0.5, skel=None):
    values = iter([v1a, v1b if v1b is not None else v1a])
    d1_values = {}

    def d1(pose):
        key = pose.joints.tobytes()
        if key not in d1_values:
            d1_values[key] = next(values)
        return d1_values[key]

    return PlausibilityScorers(d1=d1, d2=lambda a, b: v2)


def test_discriminator_score_constant_half(skel):
    rng = np.random.default_rng(49)
    pa = random_camera_pose(rng, skel)
    pb = random_camera_pose(rng, skel, center=(1500, 0, 4000))
    scorers = PlausibilityScorers(d1=lambda p: 0.5, d2=lambda a, b: 0.5)
    assert discriminator_score(pa, pb, scorers, skel) == pytest.approx(0.5, abs=1e-15)


def test_discriminator_score_arithmetic(skel):
    rng = np.random.default_rng(50)
    pa = random_camera_pose(rng, skel)
    pb = random_camera_pose(rng, skel, center=(1500, 0, 4000))
    scorers = constant_scorers(0.8, 0.4, 0.6)
    assert discriminator_score(pa, pb, scorers, skel) == pytest.approx(0.6, abs=1e-12)


def test_discriminator_score_upper_bound(skel):
    rng = np.random.default_rng(51)
    pa = random_camera_pose(rng, skel)
    pb = random_camera_pose(rng, skel, center=(1500, 0, 4000))
    eps = 1e-9
    scorers = PlausibilityScorers(d1=lambda p: 1.0 - eps, d2=lambda a, b: 1.0 - eps)
    score = discriminator_score(pa, pb, scorers, skel)
    assert 1.0 - 1e-8 < score < 1.0


def test_discriminator_score_convex_combination_bound(skel):
    rng = np.random.default_rng(52)
    pa = random_camera_pose(rng, skel)
    pb = random_camera_pose(rng, skel, center=(1500, 0, 4000))
    scorers = constant_scorers(0.9, 0.2, 0.55)
    score = discriminator_score(pa, pb, scorers, skel)
    assert min(0.9, 0.2, 0.55) <= score <= max(0.9, 0.2, 0.55)


def test_discriminator_score_contract_violation(skel):
    rng = np.random.default_rng(53)
    pa = random_camera_pose(rng, skel)
    pb = random_camera_pose(rng, skel, center=(1500, 0, 4000))
    scorers = PlausibilityScorers(d1=lambda p: 1.0, d2=lambda a, b: 0.5)
    with pytest.raises(ScorerContractError):
        discriminator_score(pa, pb, scorers, skel)


def test_discriminator_loss_values():
    assert discriminator_loss(0.5, 0.5) == pytest.approx(2.0 * math.log(0.5), abs=1e-12)
    assert discriminator_loss(0.5, 0.5) == pytest.approx(-1.3863, abs=1e-4)
    # approaches the supremum 0 from below
    assert -1e-6 < discriminator_loss(1.0 - 1e-9, 1e-9) < 0.0
    assert discriminator_loss(0.9, 0.1) > discriminator_loss(0.5, 0.5)


def test_discriminator_loss_domain():
    with pytest.raises(DomainError):
        discriminator_loss(0.0, 0.5)
    with pytest.raises(DomainError):
        discriminator_loss(0.5, 1.0)


def test_corrupt_pair_no_rates_is_identity(skel):
    rng = np.random.default_rng(54)
    pair = (random_camera_pose(rng, skel), random_camera_pose(rng, skel))
    out = corrupt_pair(pair, seed=99, mask_rate=0.0, shift_sigma_mm=0.0, drop_rate=0.0)
    for before, after in zip(pair, out):
        assert np.array_equal(before.joints, after.joints)
        assert np.array_equal(before.conf, after.conf)


def test_corrupt_pair_full_mask(skel):
    rng = np.random.default_rng(55)
    pair = (random_camera_pose(rng, skel), random_camera_pose(rng, skel))
    out = corrupt_pair(pair, seed=1, mask_rate=1.0, shift_sigma_mm=0.0, drop_rate=0.0)
    assert np.all(out[0].conf == 0.0)
    assert np.all(out[1].conf == 0.0)


def test_corrupt_pair_deterministic(skel):
    rng = np.random.default_rng(56)
    pair = (random_camera_pose(rng, skel), random_camera_pose(rng, skel))
    a = corrupt_pair(pair, seed=7, mask_rate=0.3, shift_sigma_mm=25.0, drop_rate=0.5)
    b = corrupt_pair(pair, seed=7, mask_rate=0.3, shift_sigma_mm=25.0, drop_rate=0.5)
    for x, y in zip(a, b):
        assert np.array_equal(x.joints, y.joints)
        assert np.array_equal(x.conf, y.conf)


def test_corrupt_pair_drop_zeroes_one_side(skel):
    rng = np.random.default_rng(57)
    pair = (random_camera_pose(rng, skel), random_camera_pose(rng, skel))
    out = corrupt_pair(pair, seed=3, mask_rate=0.0, shift_sigma_mm=0.0, drop_rate=1.0)
    zeroed = [np.all(p.joints == 0.0) and np.all(p.conf == 0.0) for p in out]
    assert sum(zeroed) == 1


def test_reference_scorers_rest_pose_plausible(skel):
    scorers = reference_scorers(skel)
    plausible = pose3d_person(rest_pose())
    score = scorers.d1(plausible)
    assert 0.0 < score < 1.0
    # grossly stretched bones score lower
    stretched = pose3d_person(rest_pose() * 3.0)
    assert scorers.d1(stretched) < score


def test_reference_d2_prefers_separation(skel):
    scorers = reference_scorers(skel)
    apart_a = pose3d_camera(rest_pose() + (-1500.0, 0.0, 4000.0))
    apart_b = pose3d_camera(rest_pose() + (1500.0, 0.0, 4000.0))
    overlap_b = pose3d_camera(rest_pose() + (-1490.0, 0.0, 4000.0))
    separated = scorers.d2(apart_a, apart_b)
    penetrating = scorers.d2(apart_a, overlap_b)
    assert separated >= penetrating
    assert penetrating < 0.5  # interpenetration drops below the midpoint
    assert 0.0 < separated < 1.0


def test_discriminator_with_reference_scorers_end_to_end(skel):
    scorers = reference_scorers(skel)
    real_a = pose3d_camera(rest_pose() + (-800.0, 0.0, 4000.0))
    real_b = pose3d_camera(rest_pose() + (800.0, 0.0, 4000.0))
    fake_b = pose3d_camera(rest_pose() * 2.5 + (-790.0, 0.0, 4000.0))
    c_real = discriminator_score(real_a, real_b, scorers, skel)
    c_fake = discriminator_score(real_a, fake_b, scorers, skel)
    assert c_real > c_fake
    loss = discriminator_loss(c_real, c_fake)
    assert loss <= 0.0


def test_mlp_integrator_shapes_and_pluggable(skel):
    rng = np.random.default_rng(58)
    td = random_camera_pose(rng, skel)
    bu = random_camera_pose(rng, skel)
    integrator = MlpIntegrator(num_joints=skel.num_joints, hidden=32, seed=0)
    out = fuse_pair(td, bu, FusionStrategy.pluggable(integrator), skel)
    assert out.joints.shape == (skel.num_joints, 3)
    assert np.allclose(out.conf, np.maximum(td.conf, bu.conf))


def test_strategy_validation():
    with pytest.raises(ValueError):
        FusionStrategy(variant="nope")
    with pytest.raises(ValueError):
        FusionStrategy.weighted(1.5)
    with pytest.raises(ValueError):
        FusionStrategy(variant="pluggable")
