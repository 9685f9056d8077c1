#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cat/instances.hpp"
#include "cat/loss.hpp"
#include "cat/relation.hpp"
#include "cat/rng.hpp"
#include "cat/teacher.hpp"

namespace cat {

/// Synthetic detector with a known misclassification process: per-class
/// detection recall, a row-stochastic confusion matrix Q driving the
/// predicted class, Gaussian box jitter, and per-class score draws.
struct OracleDetector {
    int num_classes = 2;
    std::vector<double> confusion;   // C*C row-major, rows sum to 1
    std::vector<double> recall;      // per class, in [0,1]
    std::vector<double> score_mean;  // per class
    std::vector<double> score_std;   // per class, >= 0
    double bbox_jitter = 0.0;        // gaussian stddev in pixels

    double q(int gt, int pred) const {
        return confusion[static_cast<std::size_t>(gt) * num_classes + static_cast<std::size_t>(pred)];
    }
};

/// Detector that finds every instance, classifies along Q, and scores
/// everything 1.
inline OracleDetector make_oracle(int num_classes, std::vector<double> confusion) {
    OracleDetector det;
    det.num_classes = num_classes;
    det.confusion = std::move(confusion);
    det.recall.assign(static_cast<std::size_t>(num_classes), 1.0);
    det.score_mean.assign(static_cast<std::size_t>(num_classes), 1.0);
    det.score_std.assign(static_cast<std::size_t>(num_classes), 0.0);
    return det;
}

inline void validate_oracle(const OracleDetector& det) {
    const int c = det.num_classes;
    if (c < 2) throw std::invalid_argument("OracleDetector: need at least 2 classes");
    if (det.confusion.size() != static_cast<std::size_t>(c) * c ||
        det.recall.size() != static_cast<std::size_t>(c) ||
        det.score_mean.size() != static_cast<std::size_t>(c) ||
        det.score_std.size() != static_cast<std::size_t>(c))
        throw std::invalid_argument("OracleDetector: field sizes do not match num_classes");
    for (int i = 0; i < c; ++i) {
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            const double v = det.q(i, j);
            if (v < 0.0) throw std::invalid_argument("OracleDetector: negative confusion entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("OracleDetector: confusion row does not sum to 1");
        if (det.recall[static_cast<std::size_t>(i)] < 0.0 || det.recall[static_cast<std::size_t>(i)] > 1.0)
            throw std::invalid_argument("OracleDetector: recall outside [0,1]");
        if (det.score_std[static_cast<std::size_t>(i)] < 0.0)
            throw std::invalid_argument("OracleDetector: negative score stddev");
    }
    if (det.bbox_jitter < 0.0) throw std::invalid_argument("OracleDetector: negative jitter");
}

/// Runs the oracle over one image: each ground truth is detected with its
/// class's recall, classified along Q, its box jittered, its confidence
/// drawn from the predicted class's score distribution.
inline std::vector<PseudoLabel> oracle_predict(const OracleDetector& det, const LabeledImage& image,
                                               Rng& rng) {
    validate_oracle(det);
    std::vector<PseudoLabel> preds;
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    for (const AnnotatedInstance& inst : image.instances) {
        const int gt = argmax_class(inst.label);
        if (gt < 0 || gt >= det.num_classes)
            throw std::out_of_range("oracle_predict: gt class outside detector's range");
        if (uniform01(rng) >= det.recall[static_cast<std::size_t>(gt)]) continue;
        const double u = uniform01(rng);
        int pred = det.num_classes - 1;
        double acc = 0.0;
        for (int k = 0; k < det.num_classes; ++k) {
            acc += det.q(gt, k);
            if (u < acc) {
                pred = k;
                break;
            }
        }
        BBox box = inst.bbox;
        if (det.bbox_jitter > 0.0) {
            box.x += det.bbox_jitter * unit_normal(rng);
            box.y += det.bbox_jitter * unit_normal(rng);
            box.w = std::max(1.0, box.w + det.bbox_jitter * unit_normal(rng));
            box.h = std::max(1.0, box.h + det.bbox_jitter * unit_normal(rng));
        }
        double score = det.score_mean[static_cast<std::size_t>(pred)];
        if (det.score_std[static_cast<std::size_t>(pred)] > 0.0)
            score += det.score_std[static_cast<std::size_t>(pred)] * unit_normal(rng);
        score = std::clamp(score, 0.0, 1.0);
        PseudoLabel p;
        p.instance.bbox = box;
        p.instance.label = onehot(pred, det.num_classes);
        p.instance.score = score;
        p.score = score;
        preds.push_back(std::move(p));
    }
    return preds;
}

/// Greedy one-to-one matching by descending IoU. Every ground truth gets
/// exactly one pair: the class of its matched prediction, or background
/// when nothing reaches the threshold.
inline std::vector<MatchedPair> match_predictions(const std::vector<AnnotatedInstance>& gt,
                                                  const std::vector<PseudoLabel>& preds,
                                                  double iou_threshold = 0.5) {
    if (iou_threshold <= 0.0 || iou_threshold > 1.0)
        throw std::invalid_argument("match_predictions: threshold outside (0,1]");
    struct Cand {
        double iou;
        std::size_t gt_i;
        std::size_t pred_j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = 0; j < preds.size(); ++j) {
            const double v = iou(gt[i].bbox, preds[j].instance.bbox);
            if (v >= iou_threshold) cands.push_back({v, i, j});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt_i != b.gt_i) return a.gt_i < b.gt_i;
        return a.pred_j < b.pred_j;
    });
    std::vector<int> gt_match(gt.size(), -1);
    std::vector<bool> pred_used(preds.size(), false);
    for (const Cand& c : cands) {
        if (gt_match[c.gt_i] != -1 || pred_used[c.pred_j]) continue;
        gt_match[c.gt_i] = static_cast<int>(c.pred_j);
        pred_used[c.pred_j] = true;
    }
    std::vector<MatchedPair> pairs(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        pairs[i].gt_class = argmax_class(gt[i].label);
        pairs[i].pred_class = gt_match[i] == -1
                                  ? kBackgroundClass
                                  : argmax_class(preds[static_cast<std::size_t>(gt_match[i])].instance.label);
    }
    return pairs;
}

struct MetricsReport {
    std::vector<double> per_class_ap;  // zero for classes with no ground truth
    std::vector<bool> class_has_gt;
    double map = 0.0;
    double sigma = 0.0;
};

/// Per-class average precision at the IoU threshold using the area under
/// the exact precision-recall staircase; map averages the classes that
/// appear in the ground truth, sigma is their population spread.
inline MetricsReport compute_metrics(const std::vector<std::vector<AnnotatedInstance>>& gt_stream,
                                     const std::vector<std::vector<PseudoLabel>>& pred_stream,
                                     int num_classes, double iou_threshold = 0.5) {
    if (gt_stream.size() != pred_stream.size())
        throw std::invalid_argument("compute_metrics: stream length mismatch");
    if (gt_stream.empty()) throw std::invalid_argument("compute_metrics: empty streams");
    std::size_t total_gt = 0;
    for (const auto& g : gt_stream) total_gt += g.size();
    if (total_gt == 0) throw std::invalid_argument("compute_metrics: no ground truth");

    MetricsReport report;
    report.per_class_ap.assign(static_cast<std::size_t>(num_classes), 0.0);
    report.class_has_gt.assign(static_cast<std::size_t>(num_classes), false);

    for (int cls = 0; cls < num_classes; ++cls) {
        std::vector<std::vector<std::size_t>> gt_of_class(gt_stream.size());
        std::size_t n_gt = 0;
        for (std::size_t img = 0; img < gt_stream.size(); ++img)
            for (std::size_t i = 0; i < gt_stream[img].size(); ++i)
                if (argmax_class(gt_stream[img][i].label) == cls) {
                    gt_of_class[img].push_back(i);
                    ++n_gt;
                }
        if (n_gt == 0) continue;
        report.class_has_gt[static_cast<std::size_t>(cls)] = true;

        struct Pred {
            double score;
            std::size_t img;
            std::size_t idx;
        };
        std::vector<Pred> preds;
        for (std::size_t img = 0; img < pred_stream.size(); ++img)
            for (std::size_t j = 0; j < pred_stream[img].size(); ++j)
                if (argmax_class(pred_stream[img][j].instance.label) == cls)
                    preds.push_back({pred_stream[img][j].score, img, j});
        std::sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.img != b.img) return a.img < b.img;
            return a.idx < b.idx;
        });

        std::vector<std::vector<bool>> taken(gt_stream.size());
        for (std::size_t img = 0; img < gt_stream.size(); ++img)
            taken[img].assign(gt_of_class[img].size(), false);

        std::vector<double> precision, recall;
        std::size_t tp = 0, fp = 0;
        for (const Pred& p : preds) {
            const BBox& pb = pred_stream[p.img][p.idx].instance.bbox;
            double best = 0.0;
            std::size_t best_k = 0;
            bool found = false;
            for (std::size_t k = 0; k < gt_of_class[p.img].size(); ++k) {
                if (taken[p.img][k]) continue;
                const double v = iou(gt_stream[p.img][gt_of_class[p.img][k]].bbox, pb);
                if (v >= iou_threshold && v > best) {
                    best = v;
                    best_k = k;
                    found = true;
                }
            }
            if (found) {
                taken[p.img][best_k] = true;
                ++tp;
            } else {
                ++fp;
            }
            precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
            recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        }

        double ap = 0.0;
        double envelope = 0.0;
        for (std::size_t i = precision.size(); i-- > 0;) {
            envelope = std::max(envelope, precision[i]);
            const double r_lo = i == 0 ? 0.0 : recall[i - 1];
            ap += (recall[i] - r_lo) * envelope;
        }
        report.per_class_ap[static_cast<std::size_t>(cls)] = ap;
    }

    double sum = 0.0;
    int counted = 0;
    for (int cls = 0; cls < num_classes; ++cls)
        if (report.class_has_gt[static_cast<std::size_t>(cls)]) {
            sum += report.per_class_ap[static_cast<std::size_t>(cls)];
            ++counted;
        }
    report.map = counted > 0 ? sum / counted : 0.0;
    double var = 0.0;
    for (int cls = 0; cls < num_classes; ++cls)
        if (report.class_has_gt[static_cast<std::size_t>(cls)]) {
            const double d = report.per_class_ap[static_cast<std::size_t>(cls)] - report.map;
            var += d * d;
        }
    report.sigma = counted > 0 ? std::sqrt(var / counted) : 0.0;
    return report;
}

/// Appends experiment rows to a CSV, writing the fixed header only when
/// the file starts empty. Numbers use %.12g so identical runs produce
/// identical bytes.
class MetricsCsv {
public:
    explicit MetricsCsv(const std::string& path) : out_(path, std::ios::app) {
        if (!out_) throw std::runtime_error("MetricsCsv: cannot open " + path);
        out_.seekp(0, std::ios::end);
        if (out_.tellp() == 0) out_ << "seed,stage,iteration,map,sigma,icrm_error\n";
    }

    void row(std::uint64_t seed, const std::string& stage, long long iteration, double map,
             double sigma, double icrm_error) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%llu,%s,%lld,%.12g,%.12g,%.12g\n",
                      static_cast<unsigned long long>(seed), stage.c_str(), iteration, map, sigma,
                      icrm_error);
        out_ << buf;
        out_.flush();
    }

private:
    std::ofstream out_;
};

inline double linf(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("linf: size mismatch");
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
    return best;
}

/// What the relation estimator should converge to: detected instances
/// keep Q's row (the foreground renormalization cancels recall), while
/// never-detected classes keep an untouched zero row.
inline ClassRelationMatrix effective_confusion(const OracleDetector& det) {
    const int c = det.num_classes;
    std::vector<double> values(static_cast<std::size_t>(c) * c, 0.0);
    std::vector<bool> init(static_cast<std::size_t>(c), false);
    for (int i = 0; i < c; ++i) {
        if (det.recall[static_cast<std::size_t>(i)] <= 0.0) continue;
        init[static_cast<std::size_t>(i)] = true;
        for (int j = 0; j < c; ++j) values[static_cast<std::size_t>(i) * c + j] = det.q(i, j);
    }
    return ClassRelationMatrix::from_values(c, values, init);
}

/// Disjoint unit-spaced grid of 10x10 boxes, one per class entry.
inline LabeledImage make_grid_image(const std::vector<int>& classes, int num_classes,
                                    const std::string& id) {
    const int n = static_cast<int>(classes.size());
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
    const int rows = (n + cols - 1) / cols;
    LabeledImage image;
    image.id = id;
    image.pixels = ImageBuffer(rows * 20, cols * 20);
    for (int i = 0; i < n; ++i) {
        AnnotatedInstance inst;
        inst.bbox = {static_cast<double>(i % cols) * 20.0 + 2.0,
                     static_cast<double>(i / cols) * 20.0 + 2.0, 10.0, 10.0};
        inst.label = onehot(classes[static_cast<std::size_t>(i)], num_classes);
        image.instances.push_back(std::move(inst));
    }
    return image;
}

/// Streams uniformly-classed synthetic batches through the oracle, the
/// matcher, and the relation estimator; returns the final matrix and its
/// distance from the closed-form target.
inline std::pair<ClassRelationMatrix, double> run_convergence_experiment(
    const OracleDetector& det, int batches, int batch_size, double momentum, Rng& rng,
    MetricsCsv* csv = nullptr, std::uint64_t seed_label = 0, int csv_every = 50) {
    validate_oracle(det);
    if (batches < 1) throw std::invalid_argument("run_convergence_experiment: need at least 1 batch");
    if (batch_size < 1)
        throw std::invalid_argument("run_convergence_experiment: batch size must be positive");
    const int c = det.num_classes;
    const ClassRelationMatrix target = effective_confusion(det);
    ClassRelationMatrix icrm(c);
    std::uniform_int_distribution<int> pick_class(0, c - 1);
    for (int b = 0; b < batches; ++b) {
        std::vector<int> classes(static_cast<std::size_t>(batch_size));
        for (int& cls : classes) cls = pick_class(rng);
        const LabeledImage image = make_grid_image(classes, c, "batch-" + std::to_string(b));
        const std::vector<PseudoLabel> preds = oracle_predict(det, image, rng);
        const std::vector<MatchedPair> pairs = match_predictions(image.instances, preds, 0.5);
        const BatchRelation rel = normalize_batch(accumulate(BatchConfusion(c), pairs));
        icrm = ema_update(std::move(icrm), rel, momentum);
        if (csv && (b % csv_every == 0 || b + 1 == batches)) {
            const MetricsReport rep = compute_metrics({image.instances}, {preds}, c, 0.5);
            csv->row(seed_label, "converge", b, rep.map, rep.sigma,
                     linf(icrm.values(), target.values()));
        }
    }
    return {icrm, linf(icrm.values(), target.values())};
}

/// Minimal trainable model: one linear map from input features (plus
/// bias) to logits over the foreground classes and background.
struct LinearSoftmaxModel {
    int num_classes = 2;
    int input_dim = 2;
    ParameterVector params;  // (C+1) rows by (D+1) columns, bias last

    LinearSoftmaxModel() : LinearSoftmaxModel(2, 2) {}
    LinearSoftmaxModel(int num_classes_, int input_dim_)
        : num_classes(num_classes_),
          input_dim(input_dim_),
          params(static_cast<std::size_t>(num_classes_ + 1) * (input_dim_ + 1), 0.0) {
        if (num_classes_ < 2 || input_dim_ < 1)
            throw std::invalid_argument("LinearSoftmaxModel: bad dimensions");
    }

    std::vector<double> logits(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != input_dim)
            throw std::invalid_argument("LinearSoftmaxModel: feature size mismatch");
        std::vector<double> out(static_cast<std::size_t>(num_classes) + 1, 0.0);
        for (int k = 0; k <= num_classes; ++k) {
            const double* row = &params[static_cast<std::size_t>(k) * (input_dim + 1)];
            double v = row[input_dim];
            for (int j = 0; j < input_dim; ++j) v += row[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(k)] = v;
        }
        return out;
    }

    int predict(const std::vector<double>& x) const { return argmax_class(logits(x)); }
};

/// One weighted gradient step of the batch-mean cross-entropy.
inline void sgd_step(LinearSoftmaxModel& model, const std::vector<std::vector<double>>& features,
                     const std::vector<ClassifiedSample>& samples,
                     const std::vector<double>& weights, double lr) {
    if (features.size() != samples.size() || weights.size() != samples.size())
        throw std::invalid_argument("sgd_step: batch size mismatch");
    if (samples.empty()) return;
    const int d = model.input_dim;
    ParameterVector grad(model.params.size(), 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::vector<double> g = loss_logit_gradient(samples[i], weights[i], samples.size());
        for (int k = 0; k <= model.num_classes; ++k) {
            double* row = &grad[static_cast<std::size_t>(k) * (d + 1)];
            for (int j = 0; j < d; ++j)
                row[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(k)] * features[i][static_cast<std::size_t>(j)];
            row[d] += g[static_cast<std::size_t>(k)];
        }
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) model.params[i] -= lr * grad[i];
}

/// Two Gaussian clusters on the plane with a class prior and an optional
/// vertical domain shift; class 1 is the rare one.
struct GaussianStream {
    double separation = 2.0;
    double minority_fraction = 1.0 / 11.0;
    double shift_y = 0.0;
};

inline std::pair<std::vector<double>, int> sample_point(const GaussianStream& s, Rng& rng) {
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    const int cls = uniform01(rng) < s.minority_fraction ? 1 : 0;
    const double cx = cls == 1 ? s.separation : 0.0;
    std::vector<double> x{cx + unit_normal(rng), s.shift_y + unit_normal(rng)};
    return {std::move(x), cls};
}

struct TrainSimConfig {
    int num_classes = 2;
    long long burn_in_steps = 20000;
    long long total_steps = 80000;
    int batch_size = 64;
    double learning_rate = 0.05;
    double alpha = 0.9996;
    double tau = 0.8;
    double icrm_momentum = 0.99;
    double lambda_u = 1.0;
    double lambda_l = 1.0;
    bool use_icl = true;
    double minority_fraction = 1.0 / 11.0;
    double cluster_separation = 2.0;
    double target_shift = 0.5;
    int eval_per_class = 500;
    long long csv_every = 1000;
    std::uint64_t seed = 0;
};

struct TrainSimResult {
    std::vector<double> per_class_accuracy;  // balanced target-domain eval
    double minority_accuracy = 0.0;
    double map = 0.0;
    double sigma = 0.0;
    ClassRelationMatrix icrm_source{2};
    ClassRelationMatrix icrm_target{2};
    LinearSoftmaxModel student;
    ParameterVector teacher;
};

namespace detail {

struct EvalSet {
    std::vector<std::vector<double>> features;
    std::vector<int> classes;
    std::vector<AnnotatedInstance> gt;  // synthetic unit grid boxes
};

inline EvalSet make_eval_set(const GaussianStream& stream, int num_classes, int per_class,
                             Rng& rng) {
    EvalSet set;
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    for (int cls = 0; cls < num_classes; ++cls)
        for (int i = 0; i < per_class; ++i) {
            const double cx = cls == 1 ? stream.separation : 0.0;
            set.features.push_back({cx + unit_normal(rng), stream.shift_y + unit_normal(rng)});
            set.classes.push_back(cls);
        }
    for (std::size_t i = 0; i < set.classes.size(); ++i) {
        AnnotatedInstance inst;
        inst.bbox = {static_cast<double>(i) * 2.0, 0.0, 1.0, 1.0};
        inst.label = onehot(set.classes[i], num_classes);
        set.gt.push_back(std::move(inst));
    }
    return set;
}

struct EvalOutcome {
    std::vector<double> per_class_accuracy;
    MetricsReport metrics;
    BatchRelation empirical;
};

inline EvalOutcome evaluate_model(const LinearSoftmaxModel& model, const EvalSet& set,
                                  int num_classes) {
    EvalOutcome out;
    std::vector<std::size_t> correct(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::size_t> total(static_cast<std::size_t>(num_classes), 0);
    std::vector<PseudoLabel> preds;
    BatchConfusion confusion(num_classes);
    for (std::size_t i = 0; i < set.features.size(); ++i) {
        const std::vector<double> lg = model.logits(set.features[i]);
        const std::vector<double> p = softmax(lg);
        const int pred = argmax_class(lg);
        const int cls = set.classes[i];
        ++total[static_cast<std::size_t>(cls)];
        if (pred == cls) ++correct[static_cast<std::size_t>(cls)];
        confusion.add(cls, pred);
        if (pred < num_classes) {
            PseudoLabel pl;
            pl.instance.bbox = set.gt[i].bbox;
            pl.instance.label = onehot(pred, num_classes);
            pl.instance.score = p[static_cast<std::size_t>(pred)];
            pl.score = pl.instance.score;
            preds.push_back(std::move(pl));
        }
    }
    out.per_class_accuracy.assign(static_cast<std::size_t>(num_classes), 0.0);
    for (int cls = 0; cls < num_classes; ++cls)
        if (total[static_cast<std::size_t>(cls)] > 0)
            out.per_class_accuracy[static_cast<std::size_t>(cls)] =
                static_cast<double>(correct[static_cast<std::size_t>(cls)]) /
                static_cast<double>(total[static_cast<std::size_t>(cls)]);
    out.metrics = compute_metrics({set.gt}, {preds}, num_classes, 0.5);
    out.empirical = normalize_batch(confusion);
    return out;
}

inline std::vector<MatchedPair> prediction_pairs(const LinearSoftmaxModel& model,
                                                 const std::vector<std::vector<double>>& features,
                                                 const std::vector<int>& gt_classes) {
    std::vector<MatchedPair> pairs(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const int pred = model.predict(features[i]);
        pairs[i].gt_class = gt_classes[i];
        pairs[i].pred_class = pred >= model.num_classes ? kBackgroundClass : pred;
    }
    return pairs;
}

}  // namespace detail

/// Burn-in plus mutual-learning loop on the Gaussian stand-in stream.
/// The student trains on labeled source batches throughout; after burn-in
/// a teacher copy produces thresholded pseudo-labels on shifted target
/// batches and trails the student by parameter EMA. Both domain relation
/// matrices update from (label, student prediction) pairs, and when
/// enabled the relation-derived weights scale every gradient.
inline TrainSimResult run_train_sim(const TrainSimConfig& cfg, MetricsCsv* csv = nullptr) {
    if (cfg.num_classes != 2)
        throw std::invalid_argument("run_train_sim: the Gaussian stream models 2 classes");
    if (cfg.burn_in_steps < 0 || cfg.total_steps < cfg.burn_in_steps)
        throw std::invalid_argument("run_train_sim: inconsistent step counts");
    if (cfg.batch_size < 1) throw std::invalid_argument("run_train_sim: bad batch size");

    const int c = cfg.num_classes;
    const GaussianStream source_stream{cfg.cluster_separation, cfg.minority_fraction, 0.0};
    const GaussianStream target_stream{cfg.cluster_separation, cfg.minority_fraction,
                                       cfg.target_shift};

    Rng train_rng = make_rng(derive_seed(cfg.seed, 0));
    Rng eval_rng = make_rng(derive_seed(cfg.seed, 1));
    const detail::EvalSet target_eval =
        detail::make_eval_set(target_stream, c, cfg.eval_per_class, eval_rng);
    const detail::EvalSet source_eval =
        detail::make_eval_set(source_stream, c, cfg.eval_per_class, eval_rng);

    LinearSoftmaxModel student(c, 2);
    ParameterVector teacher;
    ClassRelationMatrix icrm_source(c);
    ClassRelationMatrix icrm_target(c);

    const auto emit = [&](long long it) {
        if (!csv) return;
        const detail::EvalOutcome target_out = detail::evaluate_model(student, target_eval, c);
        const detail::EvalOutcome source_out = detail::evaluate_model(student, source_eval, c);
        csv->row(cfg.seed, stage_name(training_schedule(it, cfg.burn_in_steps, cfg.total_steps)),
                 it, target_out.metrics.map, target_out.metrics.sigma,
                 linf(icrm_source.values(), source_out.empirical.values));
    };

    for (long long it = 0; it < cfg.total_steps; ++it) {
        const TrainingStage stage = training_schedule(it, cfg.burn_in_steps, cfg.total_steps);
        if (stage == TrainingStage::Mutual && teacher.empty())
            teacher = burn_in_copy(student.params);

        std::vector<std::vector<double>> src_x(static_cast<std::size_t>(cfg.batch_size));
        std::vector<int> src_y(static_cast<std::size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            auto [x, y] = sample_point(source_stream, train_rng);
            src_x[static_cast<std::size_t>(i)] = std::move(x);
            src_y[static_cast<std::size_t>(i)] = y;
        }
        icrm_source = ema_update(
            std::move(icrm_source),
            normalize_batch(accumulate(BatchConfusion(c),
                                       detail::prediction_pairs(student, src_x, src_y))),
            cfg.icrm_momentum);
        std::vector<ClassifiedSample> src_samples(src_x.size());
        for (std::size_t i = 0; i < src_x.size(); ++i) {
            src_samples[i].gt_label = onehot(src_y[i], c);
            src_samples[i].pred_logits = student.logits(src_x[i]);
            src_samples[i].is_foreground = true;
        }
        const std::vector<double> src_w =
            cfg.use_icl ? compute_sample_weights(icrm_source, src_samples, cfg.lambda_l)
                        : std::vector<double>(src_samples.size(), 1.0);
        sgd_step(student, src_x, src_samples, src_w, cfg.learning_rate);

        if (stage == TrainingStage::Mutual) {
            LinearSoftmaxModel teacher_model(c, 2);
            teacher_model.params = teacher;
            std::vector<std::vector<double>> tgt_x;
            std::vector<ClassifiedSample> tgt_samples;
            std::vector<MatchedPair> tgt_pairs;
            for (int i = 0; i < cfg.batch_size; ++i) {
                auto [x, y] = sample_point(target_stream, train_rng);
                (void)y;
                const std::vector<double> t_logits = teacher_model.logits(x);
                const std::vector<double> t_prob = softmax(t_logits);
                const int t_pred = argmax_class(t_logits);
                if (t_pred >= c) continue;
                PseudoLabel candidate;
                candidate.instance.label = onehot(t_pred, c);
                candidate.score = t_prob[static_cast<std::size_t>(t_pred)];
                if (filter_pseudo_labels({candidate}, cfg.tau).empty()) continue;
                const int s_pred = student.predict(x);
                tgt_pairs.push_back(
                    {t_pred, s_pred >= c ? kBackgroundClass : s_pred});
                ClassifiedSample sample;
                sample.gt_label = onehot(t_pred, c);
                sample.pred_logits = student.logits(x);
                sample.is_foreground = true;
                tgt_samples.push_back(std::move(sample));
                tgt_x.push_back(std::move(x));
            }
            if (!tgt_samples.empty()) {
                icrm_target = ema_update(std::move(icrm_target),
                                         normalize_batch(accumulate(BatchConfusion(c), tgt_pairs)),
                                         cfg.icrm_momentum);
                const std::vector<double> tgt_w =
                    cfg.use_icl ? compute_sample_weights(icrm_target, tgt_samples, cfg.lambda_l)
                                : std::vector<double>(tgt_samples.size(), 1.0);
                sgd_step(student, tgt_x, tgt_samples, tgt_w, cfg.learning_rate * cfg.lambda_u);
            }
            teacher = ema_params(teacher, student.params, cfg.alpha);
        }

        if (csv && (it % cfg.csv_every == 0 || it + 1 == cfg.total_steps)) emit(it);
    }

    TrainSimResult result;
    const detail::EvalOutcome final_out = detail::evaluate_model(student, target_eval, c);
    result.per_class_accuracy = final_out.per_class_accuracy;
    result.minority_accuracy = final_out.per_class_accuracy[1];
    result.map = final_out.metrics.map;
    result.sigma = final_out.metrics.sigma;
    result.icrm_source = icrm_source;
    result.icrm_target = icrm_target;
    result.student = student;
    result.teacher = teacher;
    return result;
}

}  // namespace cat
