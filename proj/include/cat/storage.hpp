#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cat/bank.hpp"
#include "cat/config.hpp"
#include "cat/image_io.hpp"
#include "cat/instances.hpp"
#include "cat/log.hpp"
#include "cat/relation.hpp"
#include "cat/teacher.hpp"

namespace cat {

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

}  // namespace detail

// ---- relation matrices ----

inline nlohmann::json relation_to_json(const ClassRelationMatrix& m) {
    const int c = m.num_classes();
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < c; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < c; ++j) row.push_back(m.at(i, j));
        rows.push_back(std::move(row));
    }
    nlohmann::json init = nlohmann::json::array();
    for (int i = 0; i < c; ++i) init.push_back(m.row_initialized(i));
    return nlohmann::json{{"num_classes", c}, {"values", rows}, {"row_initialized", init}};
}

inline ClassRelationMatrix relation_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("num_classes") || !j.contains("values"))
        throw std::runtime_error("relation matrix JSON: missing num_classes or values");
    const int c = j.at("num_classes").get<int>();
    if (c < 2) throw std::runtime_error("relation matrix JSON: bad num_classes");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(c) * c);
    const auto& rows = j.at("values");
    if (!rows.is_array() || static_cast<int>(rows.size()) != c)
        throw std::runtime_error("relation matrix JSON: values must be C rows");
    for (const auto& row : rows) {
        if (!row.is_array() || static_cast<int>(row.size()) != c)
            throw std::runtime_error("relation matrix JSON: each row needs C entries");
        for (const auto& v : row) values.push_back(v.get<double>());
    }
    std::vector<bool> init(static_cast<std::size_t>(c), true);
    if (j.contains("row_initialized")) {
        const auto& flags = j.at("row_initialized");
        if (!flags.is_array() || static_cast<int>(flags.size()) != c)
            throw std::runtime_error("relation matrix JSON: row_initialized needs C entries");
        for (int i = 0; i < c; ++i) init[static_cast<std::size_t>(i)] = flags[static_cast<std::size_t>(i)].get<bool>();
    }
    try {
        return ClassRelationMatrix::from_values(c, values, init);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("relation matrix JSON: ") + e.what());
    }
}

inline void save_relation(const std::string& path, const ClassRelationMatrix& m) {
    detail::write_json_file(path, relation_to_json(m));
}

inline ClassRelationMatrix load_relation(const std::string& path) {
    return relation_from_json(detail::parse_json_file(path));
}

// ---- experiment config ----

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    return nlohmann::json{{"num_classes", cfg.num_classes},
                          {"alpha", cfg.alpha},
                          {"icrm_momentum", cfg.icrm_momentum},
                          {"beta_params", {cfg.beta_params[0], cfg.beta_params[1]}},
                          {"lambda_u", cfg.lambda_u},
                          {"lambda_d", cfg.lambda_d},
                          {"lambda_l", cfg.lambda_l},
                          {"tau", cfg.tau},
                          {"source_aug_ratio", cfg.source_aug_ratio},
                          {"target_aug_ratio", cfg.target_aug_ratio},
                          {"burn_in_steps", cfg.burn_in_steps},
                          {"total_steps", cfg.total_steps},
                          {"bank_capacity", cfg.bank_capacity},
                          {"seed", cfg.seed}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "num_classes") cfg.num_classes = value.get<int>();
            else if (key == "alpha") cfg.alpha = value.get<double>();
            else if (key == "icrm_momentum") cfg.icrm_momentum = value.get<double>();
            else if (key == "beta_params") {
                if (!value.is_array() || value.size() != 2)
                    throw std::runtime_error("config: beta_params must hold two numbers");
                cfg.beta_params = {value[0].get<double>(), value[1].get<double>()};
            } else if (key == "lambda_u") cfg.lambda_u = value.get<double>();
            else if (key == "lambda_d") cfg.lambda_d = value.get<double>();
            else if (key == "lambda_l") cfg.lambda_l = value.get<double>();
            else if (key == "tau") cfg.tau = value.get<double>();
            else if (key == "source_aug_ratio") cfg.source_aug_ratio = value.get<double>();
            else if (key == "target_aug_ratio") cfg.target_aug_ratio = value.get<double>();
            else if (key == "burn_in_steps") cfg.burn_in_steps = value.get<long long>();
            else if (key == "total_steps") cfg.total_steps = value.get<long long>();
            else if (key == "bank_capacity") cfg.bank_capacity = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else throw std::runtime_error("config: unknown key " + key);
        } catch (const nlohmann::json::exception&) {
            throw std::runtime_error("config: bad value for key " + key);
        }
    }
    try {
        validate_config(cfg);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    return config_from_json(detail::parse_json_file(path));
}

inline void save_config(const std::string& path, const ExperimentConfig& cfg) {
    detail::write_json_file(path, config_to_json(cfg));
}

// ---- datasets ----

/// A loaded image plus the manifest-relative PNG path it came from (or
/// should be written to).
struct DatasetEntry {
    LabeledImage image;
    std::string file;
};

inline Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::Source;
    if (s == "target") return Domain::Target;
    throw std::runtime_error("unknown domain \"" + s + "\"");
}

/// Reads dir/images.json and the PNGs it references. Instances with
/// out-of-bounds boxes or bad class ids are fatal unless lenient, where
/// they are skipped with a warning.
inline std::vector<DatasetEntry> load_dataset(const std::string& dir, int num_classes,
                                              bool lenient = false) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "images.json").string();
    const nlohmann::json manifest = detail::parse_json_file(manifest_path);
    if (!manifest.is_array()) throw std::runtime_error(manifest_path + ": expected an array");
    std::vector<DatasetEntry> entries;
    for (const auto& item : manifest) {
        DatasetEntry entry;
        try {
            entry.image.id = item.at("id").get<std::string>();
            entry.file = item.at("file").get<std::string>();
            entry.image.domain = domain_from_string(item.at("domain").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(manifest_path + ": bad image entry: " + e.what());
        }
        entry.image.pixels = read_png((fs::path(dir) / entry.file).string());
        const auto instances = item.value("instances", nlohmann::json::array());
        for (std::size_t k = 0; k < instances.size(); ++k) {
            const auto& inst_json = instances[k];
            AnnotatedInstance inst;
            try {
                const auto& bbox = inst_json.at("bbox");
                if (!bbox.is_array() || bbox.size() != 4)
                    throw std::runtime_error("bbox must be [x,y,w,h]");
                inst.bbox = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                             bbox[3].get<double>()};
                if (inst_json.contains("label")) {
                    inst.label = inst_json.at("label").get<std::vector<double>>();
                    if (static_cast<int>(inst.label.size()) != num_classes ||
                        !is_probability_vector(inst.label))
                        throw std::runtime_error("label is not a probability vector over C classes");
                } else {
                    const int cls = inst_json.at("class").get<int>();
                    if (cls < 0 || cls >= num_classes) throw std::runtime_error("class id out of range");
                    inst.label = onehot(cls, num_classes);
                }
                inst.score = inst_json.value("score", 1.0);
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error("image " + entry.image.id + ": bad instance: " + e.what());
            }
            const bool in_bounds = inst.bbox.x >= 0.0 && inst.bbox.y >= 0.0 && inst.bbox.w >= 1.0 &&
                                   inst.bbox.h >= 1.0 &&
                                   inst.bbox.x + inst.bbox.w <= entry.image.pixels.width() &&
                                   inst.bbox.y + inst.bbox.h <= entry.image.pixels.height();
            if (!in_bounds) {
                const std::string msg = "image " + entry.image.id + ": instance " +
                                        std::to_string(k) + " has an out-of-bounds bbox";
                if (!lenient) throw std::runtime_error(msg);
                log_warn(msg + " (skipped)");
                continue;
            }
            entry.image.instances.push_back(std::move(inst));
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

inline nlohmann::json dataset_manifest_json(const std::vector<DatasetEntry>& entries) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const DatasetEntry& entry : entries) {
        nlohmann::json instances = nlohmann::json::array();
        for (const AnnotatedInstance& inst : entry.image.instances) {
            nlohmann::json item{{"bbox", {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h}},
                                {"class", argmax_class(inst.label)}};
            if (!is_hard_label(inst.label)) item["label"] = inst.label;
            instances.push_back(std::move(item));
        }
        manifest.push_back(nlohmann::json{{"id", entry.image.id},
                                          {"file", entry.file},
                                          {"domain", domain_name(entry.image.domain)},
                                          {"instances", std::move(instances)}});
    }
    return manifest;
}

/// Writes dir/images.json for the entries; pixel files are the caller's
/// business (copied or re-encoded as it sees fit).
inline void save_manifest(const std::string& dir, const std::vector<DatasetEntry>& entries) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    detail::write_json_file((fs::path(dir) / "images.json").string(),
                            dataset_manifest_json(entries));
}

// ---- crop banks ----

/// Lays the bank out as one PNG per crop, named by insertion order inside
/// its class directory, plus a manifest that pins the FIFO order.
inline void save_bank(const std::string& dir, const CropBank& bank) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json crops = nlohmann::json::array();
    for (int cls = 0; cls < bank.num_classes(); ++cls) {
        const fs::path class_dir = fs::path(dir) / ("class_" + std::to_string(cls));
        fs::create_directories(class_dir);
        for (std::size_t i = 0; i < bank.size(cls); ++i) {
            const std::string rel =
                "class_" + std::to_string(cls) + "/" + std::to_string(i) + ".png";
            write_png((fs::path(dir) / rel).string(), bank.at(cls, i).pixels);
            crops.push_back(nlohmann::json{{"class", cls}, {"file", rel}});
        }
    }
    detail::write_json_file((fs::path(dir) / "manifest.json").string(),
                            nlohmann::json{{"domain", domain_name(bank.domain())},
                                           {"num_classes", bank.num_classes()},
                                           {"capacity_per_class", bank.capacity_per_class()},
                                           {"crops", std::move(crops)}});
}

inline CropBank load_bank(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    const nlohmann::json manifest = detail::parse_json_file(manifest_path);
    CropBank bank(manifest.at("num_classes").get<int>(),
                  manifest.at("capacity_per_class").get<std::size_t>(),
                  domain_from_string(manifest.at("domain").get<std::string>()));
    for (const auto& item : manifest.at("crops")) {
        InstanceCrop crop;
        crop.cls = item.at("class").get<int>();
        crop.domain = bank.domain();
        crop.pixels = read_png((fs::path(dir) / item.at("file").get<std::string>()).string());
        bank.insert(crop);
    }
    return bank;
}

// ---- parameter checkpoints ----

struct Checkpoint {
    ParameterVector params;
    long long iteration = 0;
    double alpha = 0.0;
    double tau = 0.0;
};

inline void save_checkpoint(const std::string& path, const ParameterVector& params,
                            long long iteration, double alpha, double tau) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing " + path);
    detail::write_json_file(path + ".json",
                            nlohmann::json{{"iteration", iteration}, {"alpha", alpha}, {"tau", tau}});
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path);
    const std::streamsize bytes = in.tellg();
    if (bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
        throw std::runtime_error(path + ": not a flat vector of doubles");
    Checkpoint ck;
    ck.params.resize(static_cast<std::size_t>(bytes) / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(ck.params.data()), bytes);
    if (!in) throw std::runtime_error("failed reading " + path);
    const nlohmann::json sidecar = detail::parse_json_file(path + ".json");
    ck.iteration = sidecar.at("iteration").get<long long>();
    ck.alpha = sidecar.at("alpha").get<double>();
    ck.tau = sidecar.at("tau").get<double>();
    return ck;
}

}  // namespace cat
