import math

import numpy as np
import pytest
import torch

from actiontrace.postprocess import ClusterConfig
from actiontrace.synthetic import render_transition_dataset
from actiontrace.tapmodel import (
    AnchorConfig,
    EncoderConfig,
    EncoderPreset,
    TapLocationNet,
    TrainConfig,
    TrainingDiverged,
    build_anchors,
    letterbox_image,
    predict_clustered,
    predict_locations,
    propose_regions,
    tailored_loss,
    train,
)
from actiontrace.tapmodel.net import DeskEncoder, image_to_tensor
from actiontrace.tapmodel.train import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
    split_by_app,
)
from actiontrace.types import BoundingBox, ValidationError

SMALL_ENC = EncoderConfig(input_size=(64, 64))


class TestLetterbox:
    def test_round_trip_coordinates(self):
        img = np.zeros((320, 180, 3), np.uint8)
        boxed, lb = letterbox_image(img, (256, 160))
        assert boxed.shape == (256, 160, 3)
        x, y = lb.to_input_px(0.5, 0.5)
        assert lb.to_norm(x, y) == pytest.approx((0.5, 0.5))

    def test_padding_is_centered(self):
        img = np.zeros((320, 180, 3), np.uint8)
        _, lb = letterbox_image(img, (256, 160))
        assert lb.scale == pytest.approx(0.8)
        assert lb.pad_x == 8 and lb.pad_y == 0


class TestEncoder:
    def test_output_shape(self):
        enc = DeskEncoder()
        out = enc(torch.zeros(1, 3, 256, 160))
        assert out.shape == (1, 64, 16, 10)

    def test_determinism(self):
        torch.manual_seed(0)
        enc = DeskEncoder().eval()
        x = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a, b = enc(x), enc(x.clone())
        assert torch.equal(a, b)

    def test_input_size_must_match_stride(self):
        with pytest.raises(ValidationError):
            EncoderConfig(input_size=(250, 160))

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(1)
        enc = DeskEncoder().double().eval()
        x = torch.rand(1, 3, 32, 32, dtype=torch.float64, requires_grad=True)
        readout = torch.randn(64, dtype=torch.float64)

        def scalar(t):
            return (enc(t).mean(dim=(2, 3))[0] * readout).sum()

        y = scalar(x)
        y.backward()
        grad = x.grad.detach().clone()
        rng = np.random.default_rng(2)
        h = 1e-6
        sampled, fd = [], []
        with torch.no_grad():
            for _ in range(40):
                c = int(rng.integers(3))
                i = int(rng.integers(32))
                j = int(rng.integers(32))
                xp = x.detach().clone()
                xm = x.detach().clone()
                xp[0, c, i, j] += h
                xm[0, c, i, j] -= h
                fd.append(float((scalar(xp) - scalar(xm)) / (2 * h)))
                sampled.append(float(grad[0, c, i, j]))
        sampled = np.array(sampled)
        fd = np.array(fd)
        rel_err = np.linalg.norm(sampled - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel_err < 1e-3

    def test_resnet_preset_constructs(self):
        cfg = EncoderConfig(input_size=(64, 64), preset=EncoderPreset.PAPER_RESNET101)
        net = TapLocationNet(cfg, AnchorConfig(proposals_kept=8))
        out = net.encode(torch.zeros(1, 3, 64, 64))
        assert out.shape[1] == 1024

    def test_frozen_stages(self):
        cfg = EncoderConfig(input_size=(64, 64), frozen_stages=2)
        net = TapLocationNet(cfg, AnchorConfig())
        assert all(not p.requires_grad for p in net.encoder.stem.parameters())
        assert all(not p.requires_grad for p in net.encoder.stages[0].parameters())
        assert any(p.requires_grad for p in net.encoder.stages[2].parameters())


class TestAnchors:
    def test_anchor_count(self):
        cfg = AnchorConfig()
        anchors = build_anchors(16, 16, cfg, (256, 256))
        assert anchors.shape == (16 * 16 * 20, 4)

    def test_boxes_clipped_to_image(self):
        anchors = build_anchors(4, 4, AnchorConfig(), (64, 64))
        assert (anchors[:, 0] >= 0).all() and (anchors[:, 1] >= 0).all()
        assert (anchors[:, 2] <= 64).all() and (anchors[:, 3] <= 64).all()

    def test_uniform_scores_fall_back_to_index_order(self):
        cfg = AnchorConfig(proposals_kept=8)
        anchors = build_anchors(4, 4, cfg, (64, 64))
        scores = np.full(len(anchors), 0.5)
        boxes, kept_scores = propose_regions(scores, anchors, cfg)
        # greedy pass over index order: first anchor always kept
        assert np.allclose(boxes[0], anchors[0])
        assert (kept_scores == 0.5).all()
        again, _ = propose_regions(scores, anchors, cfg)
        assert np.array_equal(boxes, again)

    def test_suppression_removes_duplicates(self):
        cfg = AnchorConfig(proposals_kept=10, nms_iou=0.7)
        anchors = np.array([[0, 0, 10, 10]] * 5 + [[50, 50, 60, 60]], dtype=np.float64)
        scores = np.linspace(1.0, 0.5, 6)
        boxes, _ = propose_regions(scores, anchors, cfg)
        assert len(boxes) == 2

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            AnchorConfig(scales=(64, 32))
        with pytest.raises(ValidationError):
            AnchorConfig(ratios=(1.0, -2.0))
        with pytest.raises(ValidationError):
            AnchorConfig(proposals_kept=0)


class TestTailoredLoss:
    GT = BoundingBox(0.20, 0.20, 0.40, 0.40)

    def test_inside_bound_zero_regression(self):
        lb = tailored_loss((0.30, 0.30), (0.0, 0.0), self.GT, 1)
        assert lb.loss_reg_x == 0.0 and lb.loss_reg_y == 0.0

    def test_outside_quadratic_zone_value(self):
        lb = tailored_loss((0.10, 0.30), (0.0, 0.0), self.GT, 1)
        assert lb.loss_reg_x == pytest.approx(0.5 * 0.20**2, abs=1e-9)
        assert lb.loss_reg_y == 0.0

    def test_cross_entropy_at_half(self):
        lb = tailored_loss((0.30, 0.30), (0.0, 0.0), self.GT, 1)
        assert lb.loss_cls == pytest.approx(math.log(2), abs=1e-9)

    def test_total_is_sum(self):
        lb = tailored_loss((0.10, 0.55), (0.3, -0.2), self.GT, 1)
        assert lb.total == pytest.approx(lb.loss_cls + lb.loss_reg_x + lb.loss_reg_y)

    def test_negative_label_skips_regression(self):
        lb = tailored_loss((0.90, 0.90), (0.0, 0.0), self.GT, 0)
        assert lb.loss_reg_x == 0.0 and lb.loss_reg_y == 0.0
        assert lb.loss_cls > 0

    def test_boundary_step_documented_shape(self):
        # the indicator makes the loss step at the bound edge: just outside
        # costs smooth_l1(half width), not ~0
        eps = 1e-9
        just_out = tailored_loss((0.40 + 1e-6, 0.30), (0.0, 0.0), self.GT, 1)
        assert just_out.loss_reg_x == pytest.approx(0.5 * 0.10**2, rel=1e-3)
        inside_edge = tailored_loss((0.40 - eps, 0.30), (0.0, 0.0), self.GT, 1)
        assert inside_edge.loss_reg_x == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            tailored_loss((float("nan"), 0.3), (0.0, 0.0), self.GT, 1)

    def test_bad_label_rejected(self):
        with pytest.raises(ValidationError):
            tailored_loss((0.3, 0.3), (0.0, 0.0), self.GT, 2)

    def test_gradient_matches_finite_differences_outside_bound(self):
        rng = np.random.default_rng(3)
        h = 1e-7
        for _ in range(10):
            # random coordinate outside the bound on both dimensions
            x = float(rng.choice([rng.uniform(0.0, 0.19), rng.uniform(0.41, 1.0)]))
            y = float(rng.choice([rng.uniform(0.0, 0.19), rng.uniform(0.41, 1.0)]))
            coords = torch.tensor([[x, y]], dtype=torch.float64, requires_grad=True)
            logits = torch.zeros((1, 2), dtype=torch.float64)
            bounds = torch.tensor([[0.20, 0.20, 0.40, 0.40]], dtype=torch.float64)
            labels = torch.ones(1, dtype=torch.int64)
            from actiontrace.tapmodel import tailored_loss_batch

            cls, rx, ry = tailored_loss_batch(coords, logits, bounds, labels)
            total = (cls + rx + ry).sum()
            total.backward()
            grad = coords.grad.detach().numpy()[0]
            fd = []
            for d in range(2):
                for sign, out in ((1, []),):
                    pass
                plus = [x, y]
                minus = [x, y]
                plus[d] += h
                minus[d] -= h
                lp = tailored_loss((plus[0], plus[1]), (0.0, 0.0), self.GT, 1).total
                lm = tailored_loss((minus[0], minus[1]), (0.0, 0.0), self.GT, 1).total
                fd.append((lp - lm) / (2 * h))
            fd = np.array(fd)
            rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
            assert rel < 1e-4


class TestModelContracts:
    @pytest.fixture(scope="class")
    def model_and_sample(self):
        torch.manual_seed(0)
        model = TapLocationNet()
        sample = render_transition_dataset(1, seed=5)[0]
        return model, sample

    def test_output_lengths_equal_k(self, model_and_sample):
        model, sample = model_and_sample
        out = predict_locations(model, sample.ui1_image, sample.ui2_image)
        assert len(out.coords_norm) == model.anchor_cfg.proposals_kept
        assert len(out.probs) == len(out.roi_boxes) == len(out.coords_input_px)

    def test_probabilities_sorted_non_increasing(self, model_and_sample):
        model, sample = model_and_sample
        out = predict_locations(model, sample.ui1_image, sample.ui2_image)
        assert np.all(np.diff(out.probs) <= 0)

    def test_inference_deterministic(self, model_and_sample):
        model, sample = model_and_sample
        a = predict_locations(model, sample.ui1_image, sample.ui2_image)
        b = predict_locations(model, sample.ui1_image, sample.ui2_image)
        assert np.array_equal(a.coords_norm, b.coords_norm)
        assert np.array_equal(a.probs, b.probs)

    def test_clustered_predictions_contract(self, model_and_sample):
        model, sample = model_and_sample
        preds = predict_clustered(
            model, sample.ui1_image, sample.ui2_image, ClusterConfig(eps=12.0)
        )
        assert [p.rank for p in preds] == list(range(1, len(preds) + 1))
        assert all(a.confidence >= b.confidence for a, b in zip(preds, preds[1:]))
        assert all(0 <= p.x <= 1 and 0 <= p.y <= 1 for p in preds)

    def test_mismatched_pair_rejected(self, model_and_sample):
        model, sample = model_and_sample
        with pytest.raises(ValidationError):
            predict_locations(
                model, sample.ui1_image, sample.ui1_image[:100]
            )


def _tiny_cfg(**kw):
    return TrainConfig(
        epochs=kw.pop("epochs", 2),
        lr=1e-3,
        seed=kw.pop("seed", 0),
        split_fractions=(0.5, 0.25, 0.25),
        encoder=EncoderConfig(input_size=(96, 64)),
        anchors=AnchorConfig(proposals_kept=16),
        **kw,
    )


class TestTraining:
    @pytest.fixture(scope="class")
    def small_dataset(self):
        return render_transition_dataset(24, seed=6, width=80, height=120)

    def test_deterministic_history(self, small_dataset):
        r1 = train(small_dataset, _tiny_cfg())
        r2 = train(small_dataset, _tiny_cfg())
        assert r1.history == r2.history

    def test_dataset_order_does_not_matter(self, small_dataset):
        r1 = train(small_dataset, _tiny_cfg())
        shuffled = [small_dataset[i] for i in np.random.default_rng(9).permutation(len(small_dataset))]
        r2 = train(shuffled, _tiny_cfg())
        assert r1.history == r2.history

    def test_history_logs_val_precision_per_epoch(self, small_dataset):
        res = train(small_dataset, _tiny_cfg())
        assert len(res.history) == 2
        for row in res.history:
            assert set(row["val_precision"]) == {"1", "3", "5"}

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValidationError):
            train([], _tiny_cfg())

    def test_too_few_apps_rejected(self, small_dataset):
        with pytest.raises(ValidationError):
            split_by_app(small_dataset[:7], (0.85, 0.08, 0.07))

    def test_nan_loss_aborts(self, small_dataset):
        cfg = _tiny_cfg(lr=1e10, epochs=3)
        with pytest.raises(TrainingDiverged):
            train(small_dataset, cfg)

    def test_overfit_single_sample(self):
        # one training sample, enough epochs: the loss must collapse
        from actiontrace.tapmodel.train import _sample_loss

        sample = render_transition_dataset(1, seed=7, width=80, height=120)[0]
        cfg = _tiny_cfg()
        torch.manual_seed(0)
        model = TapLocationNet(cfg.encoder, cfg.anchors)
        opt = torch.optim.Adam(model.parameters(), lr=3e-3)
        final = None
        for _ in range(150):
            opt.zero_grad()
            loss = _sample_loss(model, sample, cfg)
            loss.backward()
            opt.step()
            final = float(loss.detach())
        assert final < 0.01


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        torch.manual_seed(0)
        cfg_enc = EncoderConfig(input_size=(96, 64))
        model = TapLocationNet(cfg_enc, AnchorConfig(proposals_kept=16))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, str(path), history=[{"epoch": 0}])
        loaded = load_checkpoint(str(path))
        assert loaded.enc_cfg == cfg_enc
        sample = render_transition_dataset(1, seed=8, width=80, height=120)[0]
        a = predict_locations(model, sample.ui1_image, sample.ui2_image)
        b = predict_locations(loaded, sample.ui1_image, sample.ui2_image)
        assert np.array_equal(a.probs, b.probs)

    def test_version_mismatch_names_both(self, tmp_path):
        torch.manual_seed(0)
        model = TapLocationNet(EncoderConfig(input_size=(96, 64)), AnchorConfig())
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, str(path))
        payload = torch.load(str(path), weights_only=False)
        payload["schema_version"] = 99
        torch.save(payload, str(path))
        with pytest.raises(CheckpointError, match="99.*1|1.*99"):
            load_checkpoint(str(path))

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))
