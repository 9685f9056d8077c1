#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cat {

/// Everything an experiment run needs, with the published defaults.
struct ExperimentConfig {
    int num_classes = 2;
    double alpha = 0.9996;
    double icrm_momentum = 0.99;
    std::array<double, 2> beta_params{0.5, 0.5};
    double lambda_u = 1.0;
    double lambda_d = 0.1;
    double lambda_l = 1.0;
    double tau = 0.8;
    double source_aug_ratio = 0.5;
    double target_aug_ratio = 0.5;
    long long burn_in_steps = 20000;
    long long total_steps = 80000;
    int bank_capacity = 64;
    std::uint64_t seed = 0;

    bool operator==(const ExperimentConfig&) const = default;
};

inline void validate_config(const ExperimentConfig& cfg) {
    const auto fail = [](const std::string& key) {
        throw std::invalid_argument("config: " + key + " out of range");
    };
    if (cfg.num_classes < 2) fail("num_classes");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) fail("alpha");
    if (cfg.icrm_momentum < 0.0 || cfg.icrm_momentum > 1.0) fail("icrm_momentum");
    if (cfg.beta_params[0] <= 0.0 || cfg.beta_params[1] <= 0.0) fail("beta_params");
    if (cfg.lambda_u < 0.0) fail("lambda_u");
    if (cfg.lambda_d < 0.0) fail("lambda_d");
    if (cfg.lambda_l < 0.0) fail("lambda_l");
    if (cfg.tau < 0.0 || cfg.tau > 1.0) fail("tau");
    if (cfg.source_aug_ratio < 0.0 || cfg.source_aug_ratio > 1.0) fail("source_aug_ratio");
    if (cfg.target_aug_ratio < 0.0 || cfg.target_aug_ratio > 1.0) fail("target_aug_ratio");
    if (cfg.burn_in_steps <= 0) fail("burn_in_steps");
    if (cfg.total_steps <= 0 || cfg.total_steps < cfg.burn_in_steps) fail("total_steps");
    if (cfg.bank_capacity < 1) fail("bank_capacity");
}

}  // namespace cat
