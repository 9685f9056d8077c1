#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cat/cat.hpp"

namespace fs = std::filesystem;

namespace {

cat::ExperimentConfig load_or_default(const std::string& config_path) {
    if (config_path.empty()) return cat::ExperimentConfig{};
    return cat::load_config(config_path);
}

cat::OracleDetector default_oracle(int num_classes, double diag) {
    std::vector<double> q(static_cast<std::size_t>(num_classes) * num_classes,
                          num_classes > 1 ? (1.0 - diag) / (num_classes - 1) : 1.0);
    for (int i = 0; i < num_classes; ++i)
        q[static_cast<std::size_t>(i) * num_classes + static_cast<std::size_t>(i)] = diag;
    return cat::make_oracle(num_classes, std::move(q));
}

int run_icrm_converge(const std::string& config_path, const std::string& out_path,
                      std::optional<std::uint64_t> seed_flag, int batches, int batch_size,
                      double q_diag) {
    const cat::ExperimentConfig cfg = load_or_default(config_path);
    const std::uint64_t seed = seed_flag.value_or(cfg.seed);
    const cat::OracleDetector det = default_oracle(cfg.num_classes, q_diag);
    cat::MetricsCsv csv(out_path);
    cat::Rng rng = cat::make_rng(cat::derive_seed(seed, 0));
    const auto [icrm, error] =
        cat::run_convergence_experiment(det, batches, batch_size, cfg.icrm_momentum, rng, &csv, seed);
    (void)icrm;
    std::printf("converged: batches=%d linf_error=%.12g csv=%s\n", batches, error,
                out_path.c_str());
    return 0;
}

void write_augmented_split(const std::vector<cat::DatasetEntry>& entries,
                           const std::string& in_dir, const std::string& out_dir,
                           const cat::ClassRelationMatrix& icrm, const cat::CropBank& source_bank,
                           const cat::CropBank& target_bank, const cat::ExperimentConfig& cfg,
                           cat::Rng& rng) {
    std::vector<cat::DatasetEntry> out_entries;
    fs::create_directories(out_dir);
    for (const cat::DatasetEntry& entry : entries) {
        const double ratio = entry.image.domain == cat::Domain::Source ? cfg.source_aug_ratio
                                                                       : cfg.target_aug_ratio;
        const std::vector<cat::MixPlan> plans =
            cat::plan_augmentation(entry.image, icrm, source_bank, target_bank, ratio, rng,
                                   cfg.beta_params[0], cfg.beta_params[1]);
        cat::DatasetEntry out_entry;
        out_entry.image = cat::apply_augmentation(entry.image, plans);
        out_entry.file = entry.file;
        const fs::path dst = fs::path(out_dir) / entry.file;
        if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
        if (plans.empty()) {
            fs::copy_file(fs::path(in_dir) / entry.file, dst, fs::copy_options::overwrite_existing);
        } else {
            cat::write_png(dst.string(), out_entry.image.pixels);
        }
        out_entries.push_back(std::move(out_entry));
    }
    cat::save_manifest(out_dir, out_entries);
}

int run_augment_preview(const std::string& config_path, const std::string& source_dir,
                        const std::string& target_dir, const std::string& out_dir,
                        std::optional<std::uint64_t> seed_flag, bool lenient,
                        const std::string& icrm_path) {
    const cat::ExperimentConfig cfg = load_or_default(config_path);
    const std::uint64_t seed = seed_flag.value_or(cfg.seed);
    const cat::ClassRelationMatrix icrm = icrm_path.empty()
                                              ? cat::ClassRelationMatrix::uniform(cfg.num_classes)
                                              : cat::load_relation(icrm_path);
    if (icrm.num_classes() != cfg.num_classes)
        throw std::runtime_error("relation matrix class count does not match config");

    const std::vector<cat::DatasetEntry> source_entries =
        cat::load_dataset(source_dir, cfg.num_classes, lenient);
    std::vector<cat::DatasetEntry> target_entries;
    if (!target_dir.empty()) target_entries = cat::load_dataset(target_dir, cfg.num_classes, lenient);

    cat::CropBank source_bank(cfg.num_classes, static_cast<std::size_t>(cfg.bank_capacity),
                              cat::Domain::Source);
    cat::CropBank target_bank(cfg.num_classes, static_cast<std::size_t>(cfg.bank_capacity),
                              cat::Domain::Target);
    for (const cat::DatasetEntry& entry : source_entries) {
        if (entry.image.domain != cat::Domain::Source)
            throw std::runtime_error("image " + entry.image.id + " in the source dir is not source-domain");
        cat::bank_image(source_bank, entry.image);
    }
    for (const cat::DatasetEntry& entry : target_entries) {
        if (entry.image.domain != cat::Domain::Target)
            throw std::runtime_error("image " + entry.image.id + " in the target dir is not target-domain");
        cat::bank_image(target_bank, entry.image);
    }

    cat::Rng rng = cat::make_rng(cat::derive_seed(seed, 1));
    write_augmented_split(source_entries, source_dir, (fs::path(out_dir) / "source").string(),
                          icrm, source_bank, target_bank, cfg, rng);
    if (!target_entries.empty())
        write_augmented_split(target_entries, target_dir, (fs::path(out_dir) / "target").string(),
                              icrm, source_bank, target_bank, cfg, rng);
    std::printf("augmented: source_images=%zu target_images=%zu out=%s\n", source_entries.size(),
                target_entries.size(), out_dir.c_str());
    return 0;
}

int run_train_sim(const std::string& config_path, const std::string& out_path,
                  std::optional<std::uint64_t> seed_flag, bool no_icl, int batch_size,
                  double learning_rate, long long csv_every, const std::string& icrm_out,
                  const std::string& checkpoint_out) {
    const cat::ExperimentConfig cfg = load_or_default(config_path);
    if (cfg.num_classes != 2)
        throw std::runtime_error("train-sim models exactly 2 classes; set num_classes to 2");
    cat::TrainSimConfig sim;
    sim.num_classes = cfg.num_classes;
    sim.burn_in_steps = cfg.burn_in_steps;
    sim.total_steps = cfg.total_steps;
    sim.batch_size = batch_size;
    sim.learning_rate = learning_rate;
    sim.alpha = cfg.alpha;
    sim.tau = cfg.tau;
    sim.icrm_momentum = cfg.icrm_momentum;
    sim.lambda_u = cfg.lambda_u;
    sim.lambda_l = cfg.lambda_l;
    sim.use_icl = !no_icl;
    sim.csv_every = csv_every;
    sim.seed = seed_flag.value_or(cfg.seed);
    cat::MetricsCsv csv(out_path);
    const cat::TrainSimResult result = cat::run_train_sim(sim, &csv);
    if (!icrm_out.empty()) {
        cat::save_relation(icrm_out + "_source.json", result.icrm_source);
        cat::save_relation(icrm_out + "_target.json", result.icrm_target);
    }
    if (!checkpoint_out.empty())
        cat::save_checkpoint(checkpoint_out, result.teacher, sim.total_steps, sim.alpha, sim.tau);
    std::printf("trained: map=%.12g sigma=%.12g minority_accuracy=%.12g csv=%s\n", result.map,
                result.sigma, result.minority_accuracy, out_path.c_str());
    return 0;
}

int run_weights_dump(const std::string& config_path, const std::string& icrm_path,
                     const std::string& out_path) {
    const cat::ExperimentConfig cfg = load_or_default(config_path);
    const cat::ClassRelationMatrix icrm = cat::load_relation(icrm_path);
    const int c = icrm.num_classes();
    std::vector<double> raw;
    std::vector<bool> fg;
    raw.reserve(static_cast<std::size_t>(c) * c);
    for (int gt = 0; gt < c; ++gt)
        for (int pred = 0; pred < c; ++pred) {
            raw.push_back(cat::raw_weight(icrm, gt, pred));
            fg.push_back(true);
        }
    const std::vector<double> weights =
        cat::regularize(cat::normalize_foreground(raw, fg), cfg.lambda_l);
    std::string table = "gt,pred,weight\n";
    for (int gt = 0; gt < c; ++gt)
        for (int pred = 0; pred < c; ++pred) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%d,%d,%.12g\n", gt, pred,
                          weights[static_cast<std::size_t>(gt) * c + static_cast<std::size_t>(pred)]);
            table += buf;
        }
    if (out_path.empty()) {
        std::fputs(table.c_str(), stdout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
        out << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"harness for class-relation estimation, augmentation, and teacher-student training"};
    app.require_subcommand(1);

    std::string config_path, source_dir, target_dir, out_path, icrm_path, icrm_out, checkpoint_out;
    std::optional<std::uint64_t> seed_flag;
    bool lenient = false;
    bool no_icl = false;
    int batches = 500;
    int batch_size = 64;
    double q_diag = 0.8;
    double learning_rate = 0.05;
    long long csv_every = 1000;

    CLI::App* converge = app.add_subcommand("icrm-converge",
                                            "stream a biased oracle through the relation estimator");
    converge->add_option("--config", config_path, "JSON config path");
    converge->add_option("--out", out_path, "CSV output path")->required();
    converge->add_option("--seed", seed_flag, "RNG seed (overrides config)");
    converge->add_option("--batches", batches, "number of batches");
    converge->add_option("--batch-size", batch_size, "instances per batch");
    converge->add_option("--q-diag", q_diag, "oracle confusion diagonal");

    CLI::App* preview = app.add_subcommand("augment-preview",
                                           "apply class-relation augmentation to a dataset");
    preview->add_option("--config", config_path, "JSON config path");
    preview->add_option("--source-dir", source_dir, "source-domain dataset dir")->required();
    preview->add_option("--target-dir", target_dir, "target-domain dataset dir");
    preview->add_option("--out", out_path, "output dir")->required();
    preview->add_option("--seed", seed_flag, "RNG seed (overrides config)");
    preview->add_option("--icrm", icrm_path, "relation matrix JSON (default: uniform)");
    preview->add_flag("--lenient", lenient, "skip invalid instances instead of failing");

    CLI::App* train = app.add_subcommand("train-sim",
                                         "burn-in plus mutual learning on the synthetic stream");
    train->add_option("--config", config_path, "JSON config path");
    train->add_option("--out", out_path, "CSV output path")->required();
    train->add_option("--seed", seed_flag, "RNG seed (overrides config)");
    train->add_option("--batch-size", batch_size, "instances per batch");
    train->add_option("--learning-rate", learning_rate, "SGD step size");
    train->add_option("--csv-every", csv_every, "iterations between CSV rows");
    train->add_option("--icrm-out", icrm_out, "prefix for the final relation matrix JSONs");
    train->add_option("--checkpoint-out", checkpoint_out, "teacher parameter checkpoint path");
    train->add_flag("--no-icl", no_icl, "disable inter-class loss weighting");

    CLI::App* dump = app.add_subcommand("weights-dump",
                                        "print the weight pipeline output for a relation matrix");
    dump->add_option("--config", config_path, "JSON config path");
    dump->add_option("--icrm", icrm_path, "relation matrix JSON")->required();
    dump->add_option("--out", out_path, "write the table here instead of stdout");

    try {
        app.parse(argc, argv);
        if (converge->parsed())
            return run_icrm_converge(config_path, out_path, seed_flag, batches, batch_size, q_diag);
        if (preview->parsed())
            return run_augment_preview(config_path, source_dir, target_dir, out_path, seed_flag,
                                       lenient, icrm_path);
        if (train->parsed())
            return run_train_sim(config_path, out_path, seed_flag, no_icl, batch_size,
                                 learning_rate, csv_every, icrm_out, checkpoint_out);
        if (dump->parsed()) return run_weights_dump(config_path, icrm_path, out_path);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
