import numpy as np
import pytest

from structact import predictor
from structact import structured_net as net
from structact.latent_segmentation import enumerate_assignments
from structact.predictor import assignment_features, evaluate, metrics_from_labels, predict
from structact.video_io import VideoSample


class TestPredict:
    def test_single_class(self, mini_samples):
        params = net.init_params(net.MINI, 1, 0)
        p = predict(mini_samples[0], params)
        hs = enumerate_assignments(net.MINI.segmentation)
        feats = np.array([net.forward_full(mini_samples[0], h, params) for h in hs])
        assert p.label == 0
        assert p.assignment == hs[int(np.argmax(feats @ params.cls_w[0]))]

    def test_constant_scores(self, mini_params, mini_samples):
        params = mini_params.copy()
        params.cls_w[...] = 0.0
        params.cls_b[...] = [0.2, 0.7]
        p = predict(mini_samples[0], params)
        assert p.label == 1
        assert p.assignment == enumerate_assignments(net.MINI.segmentation)[0]
        assert p.score == pytest.approx(0.7)

    def test_equal_constants_pick_lowest_class(self, mini_params, mini_samples):
        params = mini_params.copy()
        params.cls_w[...] = 0.0
        params.cls_b[...] = 0.5
        assert predict(mini_samples[0], params).label == 0

    def test_joint_argmax_oracle(self, mini_params, mini_samples):
        hs = enumerate_assignments(net.MINI.segmentation)
        for s in mini_samples:
            best = max((float(mini_params.cls_w[c] @ net.forward_full(s, h, mini_params)
                              + mini_params.cls_b[c]), -c, -k)
                       for c in range(2) for k, h in enumerate(hs))
            p = predict(s, mini_params)
            assert p.label == -best[1]
            assert p.assignment == hs[-best[2]]
            assert p.score == pytest.approx(best[0], abs=1e-12)

    def test_one_feature_pass_per_assignment(self, mini_params, mini_samples):
        hs = enumerate_assignments(net.MINI.segmentation)
        params = net.init_params(net.MINI, 5, 0)
        before = net.forward_count
        predict(mini_samples[0], params, hs)
        assert net.forward_count - before == len(hs)

    @pytest.mark.parametrize("profile,n", [(net.MINI, None), (net.PAPER, 8)])
    def test_serial_equals_parallel(self, monkeypatch, profile, n):
        monkeypatch.setattr(predictor, "CHUNK", 3)
        params = net.init_params(profile, 3, 0)
        px = np.random.default_rng(0).random((40, 2, profile.height, profile.width))
        s = VideoSample(px, 0, "p")
        hs = enumerate_assignments(profile.segmentation)[:n]
        a = assignment_features(s, params, hs, workers=1)
        b = assignment_features(s, params, hs, workers=3)
        np.testing.assert_array_equal(a, b)
        pa, pb = predict(s, params, hs, 1), predict(s, params, hs, 4)
        assert pa.label == pb.label and pa.assignment == pb.assignment and pa.score == pb.score


class TestMetrics:
    def test_perfect(self):
        m = metrics_from_labels([0, 1, 2, 2], [0, 1, 2, 2], 3)
        np.testing.assert_array_equal(m.confusion_normalized, np.eye(3))
        assert m.average_accuracy == 1.0 and m.overall_accuracy == 1.0

    def test_single_class(self):
        m = metrics_from_labels([1, 1, 1], [1, 1, 1], 3)
        assert m.average_accuracy == 1.0
        assert np.isnan(m.per_class_accuracy[0])

    def test_random_predictions(self):
        r = np.random.default_rng(0)
        true = np.repeat([0, 1], 500)
        m = metrics_from_labels(true, r.integers(0, 2, 1000), 2)
        assert abs(m.average_accuracy - 0.5) < 0.05

    def test_average_vs_overall(self):
        m = metrics_from_labels([0, 0, 0, 1], [0, 0, 0, 0], 2)
        assert m.overall_accuracy == 0.75 and m.average_accuracy == 0.5
        np.testing.assert_array_equal(m.confusion, [[3, 0], [1, 0]])

    def test_evaluate_workers_agree(self, mini_params, mini_samples):
        a, pa = evaluate(mini_samples, mini_params, 1)
        b, pb = evaluate(mini_samples, mini_params, 3)
        np.testing.assert_array_equal(a.confusion, b.confusion)
        assert [p.score for p in pa] == [p.score for p in pb]
