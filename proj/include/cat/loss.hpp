#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cat/instances.hpp"
#include "cat/log.hpp"
#include "cat/relation.hpp"

namespace cat {

/// One proposal routed through classification: soft ground-truth label
/// over C foreground classes, logits over C+1 (background last).
struct ClassifiedSample {
    std::vector<double> gt_label;
    std::vector<double> pred_logits;
    bool is_foreground = true;
};

inline int pred_class_of(const ClassifiedSample& s) { return argmax_class(s.pred_logits); }

inline constexpr double kRelationEps = 1e-6;

/// Confidence-derived emphasis for one (gt, predicted) class pair. A
/// correct prediction is weighted by how unlearned the class still is; a
/// miss is weighted by how common that confusion is relative to the
/// class's own accuracy, floored to keep the ratio finite.
inline double raw_weight(const ClassRelationMatrix& m, int gt_class, int pred_class) {
    if (gt_class == pred_class) return std::sqrt(std::max(0.0, 1.0 - m.at(gt_class, gt_class)));
    const double denom = std::max(m.at(gt_class, gt_class), kRelationEps);
    return std::sqrt(m.at(gt_class, pred_class) / denom);
}

/// Divides foreground weights by their mean so it matches the implicit
/// background weight of 1. A zero mean degenerates to all-ones.
inline std::vector<double> normalize_foreground(const std::vector<double>& weights,
                                                const std::vector<bool>& foreground_mask) {
    if (weights.size() != foreground_mask.size())
        throw std::invalid_argument("normalize_foreground: mask size mismatch");
    double sum = 0.0;
    std::size_t n_fg = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!foreground_mask[i]) continue;
        sum += weights[i];
        ++n_fg;
    }
    std::vector<double> out = weights;
    if (n_fg == 0) return out;
    const double mean = sum / static_cast<double>(n_fg);
    if (mean <= 0.0) {
        log_warn("normalize_foreground: zero foreground mean, weights degenerate to 1");
        for (std::size_t i = 0; i < out.size(); ++i)
            if (foreground_mask[i]) out[i] = 1.0;
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        if (foreground_mask[i]) out[i] /= mean;
    return out;
}

/// Shrinks every weight toward 1: w -> (w + lambda)/(1 + lambda).
inline std::vector<double> regularize(const std::vector<double>& weights, double lambda_l) {
    if (lambda_l < 0.0) throw std::invalid_argument("regularize: lambda_l must be non-negative");
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        out[i] = (weights[i] + lambda_l) / (1.0 + lambda_l);
    return out;
}

/// Full weight pipeline for a batch of samples. Foreground samples get
/// the relation-derived raw weight for (gt argmax, pred argmax), with a
/// background prediction weighted like an unlearned correct class;
/// background samples start at exactly 1. Then foreground-mean
/// normalization and regularization.
inline std::vector<double> compute_sample_weights(const ClassRelationMatrix& m,
                                                  const std::vector<ClassifiedSample>& samples,
                                                  double lambda_l) {
    std::vector<double> raw(samples.size(), 1.0);
    std::vector<bool> fg(samples.size(), false);
    const int c = m.num_classes();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ClassifiedSample& s = samples[i];
        fg[i] = s.is_foreground;
        if (!s.is_foreground) continue;
        const int gt = argmax_class(s.gt_label);
        int pred = pred_class_of(s);
        if (pred >= c) pred = gt;
        raw[i] = raw_weight(m, gt, pred);
    }
    return regularize(normalize_foreground(raw, fg), lambda_l);
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline constexpr double kLogClamp = 1e-12;

/// Cross-entropy of a softmax distribution against a soft target over the
/// C foreground classes plus background. Foreground samples spread their
/// gt mass over the first C outputs; background samples target the last.
inline double cross_entropy(const ClassifiedSample& s) {
    const std::vector<double> p = softmax(s.pred_logits);
    const std::size_t background = p.size() - 1;
    if (s.gt_label.size() + 1 != p.size())
        throw std::invalid_argument("cross_entropy: logits must cover classes plus background");
    double ce = 0.0;
    if (s.is_foreground) {
        for (std::size_t c = 0; c < s.gt_label.size(); ++c) {
            if (s.gt_label[c] == 0.0) continue;
            ce -= s.gt_label[c] * std::log(std::max(p[c], kLogClamp));
        }
    } else {
        ce -= std::log(std::max(p[background], kLogClamp));
    }
    return ce;
}

/// Soft target over C+1 outputs implied by a sample: foreground mass over
/// the first C entries, or all mass on the background slot.
inline std::vector<double> target_distribution(const ClassifiedSample& s) {
    std::vector<double> t(s.pred_logits.size(), 0.0);
    if (s.gt_label.size() + 1 != s.pred_logits.size())
        throw std::invalid_argument("target_distribution: logits must cover classes plus background");
    if (s.is_foreground) {
        for (std::size_t c = 0; c < s.gt_label.size(); ++c) t[c] = s.gt_label[c];
    } else {
        t.back() = 1.0;
    }
    return t;
}

/// Derivative of the batch-mean weighted cross-entropy with respect to
/// this sample's logits: (w/N) * (softmax - target).
inline std::vector<double> loss_logit_gradient(const ClassifiedSample& s, double weight,
                                               std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("loss_logit_gradient: empty batch");
    const std::vector<double> p = softmax(s.pred_logits);
    const std::vector<double> t = target_distribution(s);
    std::vector<double> g(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
        g[k] = weight / static_cast<double>(batch_size) * (p[k] - t[k]);
    return g;
}

/// Mean of per-sample weight times cross-entropy.
inline double weighted_cls_loss(const std::vector<ClassifiedSample>& samples,
                                const std::vector<double>& weights) {
    if (samples.empty()) throw std::invalid_argument("weighted_cls_loss: empty batch");
    if (samples.size() != weights.size())
        throw std::invalid_argument("weighted_cls_loss: weight count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (double l : samples[i].pred_logits)
            if (!std::isfinite(l)) throw std::invalid_argument("weighted_cls_loss: non-finite logit");
        total += weights[i] * cross_entropy(samples[i]);
    }
    return total / static_cast<double>(samples.size());
}

/// Unsupervised objective over thresholded pseudo-labels: an objectness
/// term plus the weighted classification term, no box regression. Empty
/// batches contribute nothing.
inline double unsup_loss(const std::vector<ClassifiedSample>& pseudo_samples,
                         const std::vector<double>& weights, double objectness = 0.0) {
    if (pseudo_samples.empty()) return objectness;
    return objectness + weighted_cls_loss(pseudo_samples, weights);
}

/// sup + lambda_u*unsup + lambda_d*dis.
inline double total_loss(double sup, double unsup, double dis, double lambda_u, double lambda_d) {
    if (lambda_u < 0.0 || lambda_d < 0.0)
        throw std::invalid_argument("total_loss: loss weights must be non-negative");
    return sup + lambda_u * unsup + lambda_d * dis;
}

}  // namespace cat
