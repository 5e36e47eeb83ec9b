import io
import json

import numpy as np
import pytest

from fbl.data import SynthSpec, lambda_vector, synth_dataset
from fbl.losses import LossConfig, LossKind, ScheduleKind
from fbl.metrics import write_metrics_csv
from fbl.model import init_model
from fbl.train import (
    NonFiniteLossError,
    TrainConfig,
    epoch_lr_schedule,
    evaluate,
    train,
)


def small_dataset(seed=0, spread=1.0, n_max=120, imbalance=10, classes=4, dim=6):
    spec = SynthSpec(num_classes=classes, n_max=n_max, imbalance_factor=imbalance,
                     feature_dim=dim, cluster_spread=spread, class_center_scale=1.0,
                     seed=seed, test_per_class=25)
    return synth_dataset(spec)


def config(**kw):
    defaults = dict(epochs=3, batch_size=32, lr=0.05, momentum=0.9,
                    lr_milestones=(), seed=0, hidden_dim=16, feat_dim=8,
                    loss=LossConfig(kind=LossKind.CE))
    defaults.update(kw)
    return TrainConfig(**defaults)


def fresh_model(ds, cfg):
    return init_model(ds.input_dim, cfg.hidden_dim, cfg.feat_dim, ds.num_classes,
                      seed=cfg.seed)


class TestLrSchedule:
    def test_milestone_divides_exactly(self):
        lrs = epoch_lr_schedule(0.1, ((3, 4.0), (5, 2.0)), 6)
        assert lrs == [0.1, 0.1, 0.1 / 4.0, 0.1 / 4.0, 0.1 / 4.0 / 2.0, 0.1 / 4.0 / 2.0]
        assert lrs[2] == lrs[1] / 4.0

    def test_no_milestones_constant(self):
        assert epoch_lr_schedule(0.05, (), 4) == [0.05] * 4

    def test_milestone_beyond_horizon_ignored(self):
        assert epoch_lr_schedule(0.05, ((10, 2.0),), 3) == [0.05] * 3


class TestTrainBasics:
    def test_zero_lr_single_full_batch_is_identity(self):
        ds = small_dataset()
        cfg = config(epochs=1, batch_size=ds.train_x.shape[0], lr=0.0, momentum=0.0)
        model = fresh_model(ds, cfg)
        before = [p.copy() for p in model.params()]
        result = train(ds, model, cfg)
        assert len(result.metrics) == 1
        for b, p in zip(before, result.model.params()):
            assert np.array_equal(b, p)

    def test_metrics_length_and_epochs(self):
        ds = small_dataset()
        cfg = config(epochs=4)
        result = train(ds, fresh_model(ds, cfg), cfg)
        assert [m.epoch for m in result.metrics] == [1, 2, 3, 4]
        assert result.wall_time_s > 0

    def test_alpha_recorded_follows_schedule(self):
        ds = small_dataset()
        cfg = config(epochs=4, loss=LossConfig(kind=LossKind.CE, alpha_max=2.0,
                                               schedule=ScheduleKind.LINEAR_INCREASE))
        result = train(ds, fresh_model(ds, cfg), cfg)
        assert [m.alpha for m in result.metrics] == [0.5, 1.0, 1.5, 2.0]

    def test_determinism(self):
        ds = small_dataset()
        cfg = config(epochs=3, loss=LossConfig(kind=LossKind.FBL, alpha_max=2.0))
        r1 = train(ds, fresh_model(ds, cfg), cfg)
        r2 = train(ds, fresh_model(ds, cfg), cfg)
        for m1, m2 in zip(r1.metrics, r2.metrics):
            assert m1.mean_loss == m2.mean_loss
            assert np.array_equal(m1.per_class_acc, m2.per_class_acc)
            assert np.array_equal(m1.per_class_feat_norm_mean, m2.per_class_feat_norm_mean)
        for p1, p2 in zip(r1.model.params(), r2.model.params()):
            assert np.array_equal(p1, p2)

    def test_seed_changes_trajectory(self):
        ds = small_dataset()
        cfg_a = config(epochs=2, seed=0)
        cfg_b = config(epochs=2, seed=1)
        ra = train(ds, fresh_model(ds, cfg_a), cfg_a)
        rb = train(ds, fresh_model(ds, cfg_b), cfg_b)
        assert not np.array_equal(ra.model.w1, rb.model.w1)

    def test_separable_two_class_reaches_full_accuracy(self):
        # sanity oracle: an easy balanced 2-class task must hit 100% fast
        ds = small_dataset(spread=1e-3, n_max=60, imbalance=1, classes=2, dim=4)
        cfg = config(epochs=20, batch_size=16, lr=0.1)
        result = train(ds, fresh_model(ds, cfg), cfg)
        _, overall = evaluate(result.model, ds.test_x, ds.test_y)
        assert overall == 1.0

    def test_non_finite_loss_aborts_with_location(self):
        ds = small_dataset()
        cfg = config(epochs=2)
        model = fresh_model(ds, cfg)
        model.wc[0, 0] = np.nan
        with pytest.raises(NonFiniteLossError, match=r"epoch 1, batch 0"):
            train(ds, model, cfg)

    def test_dimension_mismatch_rejected(self):
        ds = small_dataset()
        cfg = config()
        bad = init_model(ds.input_dim + 1, cfg.hidden_dim, cfg.feat_dim,
                         ds.num_classes, seed=0)
        with pytest.raises(ValueError, match="input_dim"):
            train(ds, bad, cfg)

    def test_lambda_loop_invariant(self):
        ds = small_dataset()
        lams = [lambda_vector(ds.counts) for _ in range(5)]
        for l in lams[1:]:
            assert np.array_equal(lams[0], l)


class TestFblReduction:
    def test_balanced_fbl_run_equals_ce_run(self):
        # identical schedule config, balanced counts: the whole trajectory
        # and every recorded metric must match bit for bit
        ds = small_dataset(imbalance=1, n_max=50)
        ce_cfg = config(epochs=3, loss=LossConfig(kind=LossKind.CE, alpha_max=2.0))
        fbl_cfg = config(epochs=3, loss=LossConfig(kind=LossKind.FBL, alpha_max=2.0))
        r_ce = train(ds, fresh_model(ds, ce_cfg), ce_cfg)
        r_fbl = train(ds, fresh_model(ds, fbl_cfg), fbl_cfg)
        for p1, p2 in zip(r_ce.model.params(), r_fbl.model.params()):
            assert np.array_equal(p1, p2)
        buf_a, buf_b = io.StringIO(), io.StringIO()
        write_metrics_csv(r_ce.metrics, buf_a)
        write_metrics_csv(r_fbl.metrics, buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()

    def test_alpha_zero_fbl_run_equals_ce_run(self):
        ds = small_dataset(imbalance=10)
        ce_cfg = config(epochs=3, loss=LossConfig(kind=LossKind.CE, alpha_max=0.0))
        fbl_cfg = config(epochs=3, loss=LossConfig(kind=LossKind.FBL, alpha_max=0.0))
        r_ce = train(ds, fresh_model(ds, ce_cfg), ce_cfg)
        r_fbl = train(ds, fresh_model(ds, fbl_cfg), fbl_cfg)
        for p1, p2 in zip(r_ce.model.params(), r_fbl.model.params()):
            assert np.array_equal(p1, p2)


class TestEvaluate:
    def test_constant_predictor_hits_one_over_c(self):
        ds = small_dataset()
        model = init_model(ds.input_dim, 8, 4, ds.num_classes, seed=0)
        model.wc[:] = 0.0  # all logits zero: argmax always class 0
        per_class, overall = evaluate(model, ds.test_x, ds.test_y)
        assert overall == pytest.approx(1.0 / ds.num_classes)
        assert per_class[0] == 1.0
        assert (per_class[1:] == 0.0).all()

    def test_per_class_average_recovers_overall(self):
        ds = small_dataset()
        cfg = config(epochs=2)
        result = train(ds, fresh_model(ds, cfg), cfg)
        per_class, overall = evaluate(result.model, ds.test_x, ds.test_y)
        weights = np.bincount(ds.test_y, minlength=ds.num_classes)
        assert overall == pytest.approx((per_class * weights).sum() / weights.sum())

    def test_adjusted_scoring_changes_predictions(self):
        ds = small_dataset(imbalance=10)
        cfg = config(epochs=3)
        result = train(ds, fresh_model(ds, cfg), cfg)
        lams = lambda_vector(ds.counts)
        raw_pc, _ = evaluate(result.model, ds.test_x, ds.test_y)
        adj_pc, _ = evaluate(result.model, ds.test_x, ds.test_y, lambdas=lams, alpha=-5.0)
        assert not np.array_equal(raw_pc, adj_pc)


class TestTrainConfig:
    def test_dict_round_trip(self):
        cfg = config(epochs=7, lr_milestones=((5, 10.0),),
                     loss=LossConfig(kind=LossKind.FBL, alpha_max=3.0))
        restored = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert restored == cfg

    def test_unsorted_milestones_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            config(lr_milestones=((5, 2.0), (3, 2.0)))

    def test_invalid_scalars_rejected(self):
        with pytest.raises(ValueError):
            config(epochs=0)
        with pytest.raises(ValueError):
            config(batch_size=0)
        with pytest.raises(ValueError):
            config(momentum=1.0)
