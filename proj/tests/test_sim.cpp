#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "cat/sim.hpp"
#include "oracle_helpers.hpp"

using namespace cat;

namespace {

PseudoLabel pred_at(BBox box, int cls, double score, int num_classes = 2) {
    PseudoLabel p;
    p.instance.bbox = box;
    p.instance.label = onehot(cls, num_classes);
    p.instance.score = score;
    p.score = score;
    return p;
}

AnnotatedInstance gt_at(BBox box, int cls, int num_classes = 2) {
    AnnotatedInstance inst;
    inst.bbox = box;
    inst.label = onehot(cls, num_classes);
    return inst;
}

}  // namespace

TEST_CASE("a perfect oracle mirrors the ground truth") {
    const OracleDetector det = make_oracle(2, {1.0, 0.0, 0.0, 1.0});
    const LabeledImage image = make_grid_image({0, 1, 0, 1, 1}, 2, "mirror");
    Rng rng = make_rng(40);
    const std::vector<PseudoLabel> preds = oracle_predict(det, image, rng);
    REQUIRE(preds.size() == image.instances.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].instance.bbox == image.instances[i].bbox);
        CHECK(preds[i].instance.label == image.instances[i].label);
        CHECK(preds[i].score == Catch::Approx(1.0));
    }
}

TEST_CASE("zero recall yields no predictions") {
    OracleDetector det = make_oracle(2, {1.0, 0.0, 0.0, 1.0});
    det.recall = {0.0, 0.0};
    const LabeledImage image = make_grid_image({0, 1, 0}, 2, "silent");
    Rng rng = make_rng(41);
    CHECK(oracle_predict(det, image, rng).empty());
}

TEST_CASE("oracle misclassification frequencies track Q") {
    const OracleDetector det = make_oracle(2, {0.8, 0.2, 0.0, 1.0});
    Rng rng = make_rng(42);
    const int n = 10000;
    int class1 = 0;
    const LabeledImage image = make_grid_image(std::vector<int>(100, 0), 2, "batch");
    for (int rep = 0; rep < n / 100; ++rep) {
        for (const PseudoLabel& p : oracle_predict(det, image, rng))
            if (argmax_class(p.instance.label) == 1) ++class1;
    }
    const double freq = static_cast<double>(class1) / n;
    const double sigma = std::sqrt(0.2 * 0.8 / n);
    CHECK(std::abs(freq - 0.2) < 3.0 * sigma);
}

TEST_CASE("oracle empirical confusion matches Q row-wise") {
    const OracleDetector det = make_oracle(2, {0.7, 0.3, 0.4, 0.6});
    Rng rng = make_rng(43);
    const int per_class = 10000;
    std::vector<std::vector<int>> counts(2, std::vector<int>(2, 0));
    for (int cls = 0; cls < 2; ++cls) {
        const LabeledImage image = make_grid_image(std::vector<int>(100, cls), 2, "row");
        for (int rep = 0; rep < per_class / 100; ++rep)
            for (const PseudoLabel& p : oracle_predict(det, image, rng))
                ++counts[static_cast<std::size_t>(cls)]
                        [static_cast<std::size_t>(argmax_class(p.instance.label))];
    }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double q = det.q(i, j);
            const double freq = static_cast<double>(counts[i][j]) / per_class;
            const double sigma = std::sqrt(std::max(q * (1.0 - q), 1e-12) / per_class);
            REQUIRE(std::abs(freq - q) <= 3.0 * sigma + 1e-9);
        }
}

TEST_CASE("validate_oracle rejects malformed detectors") {
    OracleDetector det = make_oracle(2, {0.9, 0.2, 0.0, 1.0});
    CHECK_THROWS_AS(validate_oracle(det), std::invalid_argument);
    det = make_oracle(2, {1.0, 0.0, 0.0, 1.0});
    det.recall[0] = 1.5;
    CHECK_THROWS_AS(validate_oracle(det), std::invalid_argument);
    det = make_oracle(2, {1.0, 0.0, 0.0, 1.0});
    det.bbox_jitter = -1.0;
    CHECK_THROWS_AS(validate_oracle(det), std::invalid_argument);
}

TEST_CASE("match_predictions pairs by descending IoU, one pred per gt") {
    const std::vector<AnnotatedInstance> one_gt{gt_at({0, 0, 10, 10}, 0)};
    const std::vector<PseudoLabel> same{pred_at({0, 0, 10, 10}, 1, 0.9)};
    const std::vector<MatchedPair> matched = match_predictions(one_gt, same, 0.5);
    REQUIRE(matched.size() == 1);
    CHECK(matched[0].gt_class == 0);
    CHECK(matched[0].pred_class == 1);

    const std::vector<PseudoLabel> far{pred_at({50, 50, 10, 10}, 0, 0.9)};
    const std::vector<MatchedPair> unmatched = match_predictions(one_gt, far, 0.5);
    REQUIRE(unmatched.size() == 1);
    CHECK(unmatched[0].pred_class == kBackgroundClass);

    const std::vector<AnnotatedInstance> two_gt{gt_at({0, 0, 10, 10}, 0), gt_at({4, 0, 10, 10}, 1)};
    const std::vector<PseudoLabel> between{pred_at({1, 0, 10, 10}, 0, 0.9)};
    const std::vector<MatchedPair> pairs = match_predictions(two_gt, between, 0.5);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].pred_class == 0);
    CHECK(pairs[1].pred_class == kBackgroundClass);

    CHECK_THROWS_AS(match_predictions(one_gt, same, 0.0), std::invalid_argument);
}

TEST_CASE("match_predictions is deterministic") {
    Rng rng = make_rng(44);
    std::vector<AnnotatedInstance> gt;
    std::vector<PseudoLabel> preds;
    for (int i = 0; i < 12; ++i) {
        const double x = uniform01(rng) * 50;
        const double y = uniform01(rng) * 50;
        gt.push_back(gt_at({x, y, 10, 10}, i % 2));
        preds.push_back(pred_at({x + uniform01(rng) * 4, y, 10, 10}, i % 2, uniform01(rng)));
    }
    const std::vector<MatchedPair> first = match_predictions(gt, preds, 0.5);
    for (int rep = 0; rep < 5; ++rep) {
        const std::vector<MatchedPair> again = match_predictions(gt, preds, 0.5);
        REQUIRE(again.size() == first.size());
        for (std::size_t i = 0; i < first.size(); ++i) {
            REQUIRE(again[i].gt_class == first[i].gt_class);
            REQUIRE(again[i].pred_class == first[i].pred_class);
        }
    }
}

TEST_CASE("compute_metrics scores perfect predictions at one") {
    const std::vector<std::vector<AnnotatedInstance>> gt{
        {gt_at({0, 0, 10, 10}, 0), gt_at({20, 0, 10, 10}, 1)},
        {gt_at({0, 20, 10, 10}, 0)},
    };
    const std::vector<std::vector<PseudoLabel>> preds{
        {pred_at({0, 0, 10, 10}, 0, 1.0), pred_at({20, 0, 10, 10}, 1, 1.0)},
        {pred_at({0, 20, 10, 10}, 0, 1.0)},
    };
    const MetricsReport rep = compute_metrics(gt, preds, 2, 0.5);
    CHECK(rep.per_class_ap[0] == Catch::Approx(1.0));
    CHECK(rep.per_class_ap[1] == Catch::Approx(1.0));
    CHECK(rep.map == Catch::Approx(1.0));
    CHECK(rep.sigma == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("compute_metrics splits detected and missed classes") {
    const std::vector<std::vector<AnnotatedInstance>> gt{
        {gt_at({0, 0, 10, 10}, 0), gt_at({20, 0, 10, 10}, 1)},
    };
    const std::vector<std::vector<PseudoLabel>> preds{
        {pred_at({0, 0, 10, 10}, 0, 1.0)},
    };
    const MetricsReport rep = compute_metrics(gt, preds, 2, 0.5);
    CHECK(rep.per_class_ap[0] == Catch::Approx(1.0));
    CHECK(rep.per_class_ap[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(rep.map == Catch::Approx(0.5));
    CHECK(rep.sigma == Catch::Approx(0.5));
}

TEST_CASE("compute_metrics ignores classes that never appear") {
    const std::vector<std::vector<AnnotatedInstance>> gt{{gt_at({0, 0, 10, 10}, 0)}};
    const std::vector<std::vector<PseudoLabel>> preds{{pred_at({0, 0, 10, 10}, 0, 1.0)}};
    const MetricsReport rep = compute_metrics(gt, preds, 2, 0.5);
    CHECK(rep.class_has_gt[0]);
    CHECK_FALSE(rep.class_has_gt[1]);
    CHECK(rep.map == Catch::Approx(1.0));
    CHECK(rep.sigma == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(compute_metrics({}, {}, 2, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics({{}}, {{}}, 2, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics(gt, {}, 2, 0.5), std::invalid_argument);
}

TEST_CASE("removing a true positive never raises that class's AP") {
    Rng rng = make_rng(45);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<AnnotatedInstance> gt;
        std::vector<PseudoLabel> preds;
        std::vector<std::size_t> tp_indices;
        const int n_gt = 3 + static_cast<int>(uniform01(rng) * 4);
        for (int i = 0; i < n_gt; ++i) {
            const BBox box{static_cast<double>(i) * 30.0, 0.0, 10.0, 10.0};
            gt.push_back(gt_at(box, 0));
            if (uniform01(rng) < 0.7) {
                tp_indices.push_back(preds.size());
                preds.push_back(pred_at(box, 0, uniform01(rng)));
            }
        }
        const int n_fp = static_cast<int>(uniform01(rng) * 4);
        for (int i = 0; i < n_fp; ++i)
            preds.push_back(pred_at({1000.0 + i * 30.0, 0.0, 10.0, 10.0}, 0, uniform01(rng)));
        if (tp_indices.empty()) continue;

        const double base_ap = compute_metrics({gt}, {preds}, 2, 0.5).per_class_ap[0];
        REQUIRE(base_ap >= 0.0);
        REQUIRE(base_ap <= 1.0 + 1e-12);
        for (std::size_t drop : tp_indices) {
            std::vector<PseudoLabel> fewer;
            for (std::size_t j = 0; j < preds.size(); ++j)
                if (j != drop) fewer.push_back(preds[j]);
            const double ap = compute_metrics({gt}, {fewer}, 2, 0.5).per_class_ap[0];
            REQUIRE(ap <= base_ap + 1e-12);
        }
    }
}

TEST_CASE("effective_confusion zeroes rows the oracle never emits") {
    OracleDetector det = make_oracle(3, {0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.0, 0.0, 1.0});
    det.recall = {1.0, 0.0, 0.5};
    const ClassRelationMatrix m = effective_confusion(det);
    CHECK(m.row_initialized(0));
    CHECK_FALSE(m.row_initialized(1));
    CHECK(m.row_initialized(2));
    CHECK(m.at(0, 1) == Catch::Approx(0.1));
    CHECK(m.at(1, 1) == Catch::Approx(0.0).margin(1e-12));
    CHECK(m.at(2, 2) == Catch::Approx(1.0));
}

TEST_CASE("make_grid_image lays out disjoint in-bounds boxes") {
    const LabeledImage image = make_grid_image({0, 1, 0, 1, 0, 1, 0}, 2, "grid");
    REQUIRE(image.instances.size() == 7);
    for (std::size_t i = 0; i < image.instances.size(); ++i) {
        const PixelRect r = pixel_rect(image.instances[i].bbox);
        REQUIRE(rect_in_bounds(r, image.pixels));
        for (std::size_t j = i + 1; j < image.instances.size(); ++j)
            REQUIRE(iou(image.instances[i].bbox, image.instances[j].bbox) == 0.0);
    }
}

TEST_CASE("the relation estimate locks onto a deterministic oracle immediately") {
    const OracleDetector det = make_oracle(2, {1.0, 0.0, 0.0, 1.0});
    Rng rng = make_rng(46);
    const auto [m, err] = run_convergence_experiment(det, 1, 64, 0.99, rng);
    CHECK(err < 1e-6);
    CHECK(m.at(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("one huge memoryless batch concentrates near Q") {
    const OracleDetector det = make_oracle(2, {0.8, 0.2, 0.3, 0.7});
    Rng rng = make_rng(47);
    const auto [m, err] = run_convergence_experiment(det, 1, 10000, 0.0, rng);
    (void)m;
    CHECK(err < 0.03);
}

TEST_CASE("the smoothed estimate converges across many noisy batches") {
    const OracleDetector det = make_oracle(2, {0.8, 0.2, 0.3, 0.7});
    Rng rng = make_rng(48);
    const auto [m, err] = run_convergence_experiment(det, 500, 64, 0.99, rng);
    (void)m;
    CHECK(err < 0.05);
}

TEST_CASE("metrics CSV writes its header exactly once across appends") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "cat_test_metrics_csv.csv";
    fs::remove(path);
    {
        MetricsCsv csv(path.string());
        csv.row(7, "converge", 0, 0.5, 0.0, 0.25);
    }
    {
        MetricsCsv csv(path.string());
        csv.row(7, "converge", 50, 0.75, 0.0, 0.125);
    }
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    fs::remove(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "seed,stage,iteration,map,sigma,icrm_error");
    CHECK(lines[1] == "7,converge,0,0.5,0,0.25");
    CHECK(lines[2] == "7,converge,50,0.75,0,0.125");
}

TEST_CASE("the linear model starts neutral and learns a separable batch") {
    LinearSoftmaxModel model(2, 2);
    CHECK(model.logits({1.0, -1.0}) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(model.logits({1.0}), std::invalid_argument);

    const std::vector<std::vector<double>> features{{-2.0, 0.0}, {2.0, 0.0}};
    const std::vector<int> classes{0, 1};
    double prev = 0.0;
    for (int step = 0; step < 200; ++step) {
        std::vector<ClassifiedSample> samples(2);
        for (std::size_t i = 0; i < 2; ++i) {
            samples[i].gt_label = onehot(classes[i], 2);
            samples[i].pred_logits = model.logits(features[i]);
            samples[i].is_foreground = true;
        }
        const double loss = weighted_cls_loss(samples, {1.0, 1.0});
        if (step > 0) REQUIRE(loss <= prev + 1e-9);
        prev = loss;
        sgd_step(model, features, samples, {1.0, 1.0}, 0.5);
    }
    CHECK(model.predict(features[0]) == 0);
    CHECK(model.predict(features[1]) == 1);
    CHECK(prev < 0.3);
}

TEST_CASE("beta draws stay inside the unit interval") {
    Rng rng = make_rng(49);
    for (int i = 0; i < 2000; ++i) {
        const double b = sample_beta(rng, 0.5, 0.5);
        REQUIRE(b >= 0.0);
        REQUIRE(b <= 1.0);
    }
    CHECK_THROWS_AS(sample_beta(rng, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("the Gaussian stream respects its class prior") {
    const GaussianStream stream{2.0, 1.0 / 11.0, 0.0};
    Rng rng = make_rng(50);
    const int n = 20000;
    int minority = 0;
    for (int i = 0; i < n; ++i) {
        const auto [x, cls] = sample_point(stream, rng);
        REQUIRE(x.size() == 2);
        if (cls == 1) ++minority;
    }
    const double freq = static_cast<double>(minority) / n;
    CHECK(std::abs(freq - 1.0 / 11.0) < 0.01);
}

TEST_CASE("the training sim runs end to end and is seed-deterministic") {
    TrainSimConfig cfg;
    cfg.burn_in_steps = 30;
    cfg.total_steps = 90;
    cfg.batch_size = 16;
    cfg.eval_per_class = 50;
    cfg.csv_every = 50;
    cfg.seed = 11;

    const TrainSimResult a = run_train_sim(cfg);
    REQUIRE(a.per_class_accuracy.size() == 2);
    CHECK(a.map >= 0.0);
    CHECK(a.map <= 1.0 + 1e-12);
    CHECK_FALSE(a.teacher.empty());
    CHECK(a.icrm_source.row_initialized(0));

    const TrainSimResult b = run_train_sim(cfg);
    CHECK(a.student.params == b.student.params);
    CHECK(a.teacher == b.teacher);
    CHECK(a.minority_accuracy == b.minority_accuracy);

    TrainSimConfig plain = cfg;
    plain.use_icl = false;
    const TrainSimResult c = run_train_sim(plain);
    CHECK(a.student.params != c.student.params);

    TrainSimConfig bad = cfg;
    bad.num_classes = 3;
    CHECK_THROWS_AS(run_train_sim(bad), std::invalid_argument);
}
