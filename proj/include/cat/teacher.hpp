#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cat/instances.hpp"

namespace cat {

/// Flat view of a model's parameters; teacher updates operate on it
/// without caring about the model's shape.
using ParameterVector = std::vector<double>;

/// Element-wise alpha*teacher + (1-alpha)*student.
inline ParameterVector ema_params(const ParameterVector& teacher, const ParameterVector& student,
                                  double alpha) {
    if (teacher.size() != student.size())
        throw std::invalid_argument("ema_params: parameter length mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("ema_params: alpha outside [0,1]");
    ParameterVector out(teacher.size());
    for (std::size_t i = 0; i < teacher.size(); ++i)
        out[i] = alpha * teacher[i] + (1.0 - alpha) * student[i];
    return out;
}

/// Hands the student's parameters to the teacher verbatim at the end of
/// burn-in.
inline ParameterVector burn_in_copy(const ParameterVector& student) {
    if (student.empty()) throw std::invalid_argument("burn_in_copy: empty parameter vector");
    return student;
}

/// A detection the teacher proposes as training signal, with confidence.
struct PseudoLabel {
    AnnotatedInstance instance;
    double score = 0.0;
};

/// Keeps candidates whose confidence reaches tau, inclusive, preserving
/// order.
inline std::vector<PseudoLabel> filter_pseudo_labels(const std::vector<PseudoLabel>& candidates,
                                                     double tau) {
    if (tau < 0.0 || tau > 1.0)
        throw std::invalid_argument("filter_pseudo_labels: tau outside [0,1]");
    std::vector<PseudoLabel> kept;
    for (const PseudoLabel& p : candidates)
        if (p.score >= tau) kept.push_back(p);
    return kept;
}

enum class TrainingStage { BurnIn, Mutual, Done };

inline const char* stage_name(TrainingStage s) {
    switch (s) {
        case TrainingStage::BurnIn: return "burn_in";
        case TrainingStage::Mutual: return "mutual";
        case TrainingStage::Done: return "done";
    }
    return "unknown";
}

/// Burn-in on labeled data first, mutual teacher-student learning after,
/// done once the budget is spent.
inline TrainingStage training_schedule(long long iteration, long long burn_in_steps = 20000,
                                       long long total_steps = 80000) {
    if (iteration < 0) throw std::invalid_argument("training_schedule: negative iteration");
    if (burn_in_steps < 0 || total_steps < burn_in_steps)
        throw std::invalid_argument("training_schedule: inconsistent step counts");
    if (iteration < burn_in_steps) return TrainingStage::BurnIn;
    if (iteration < total_steps) return TrainingStage::Mutual;
    return TrainingStage::Done;
}

}  // namespace cat
