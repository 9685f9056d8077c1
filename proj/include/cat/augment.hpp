#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "cat/bank.hpp"
#include "cat/image.hpp"
#include "cat/instances.hpp"
#include "cat/log.hpp"
#include "cat/relation.hpp"
#include "cat/rng.hpp"

namespace cat {

/// One planned blend: which instance to overwrite, what to blend in, and
/// the mixing ratio. A plan without a crop is a no-op when applied.
struct MixPlan {
    int base_index = 0;
    std::optional<InstanceCrop> mix_crop;
    double beta = 1.0;
};

/// Weighted draw of the class to blend into a base instance. Majority
/// bases use the matrix column for the base class with the self entry
/// zeroed; minority bases use the matrix row as-is, self entry included.
/// Returns nothing when every weight is zero.
inline std::optional<int> select_mix_class(const ClassRelationMatrix& m, int base_class,
                                           bool is_majority, Rng& rng) {
    const int c = m.num_classes();
    if (base_class < 0 || base_class >= c)
        throw std::out_of_range("select_mix_class: base class out of range");
    std::vector<double> weights(static_cast<std::size_t>(c), 0.0);
    for (int k = 0; k < c; ++k)
        weights[static_cast<std::size_t>(k)] = is_majority ? m.at(k, base_class) : m.at(base_class, k);
    if (is_majority) weights[static_cast<std::size_t>(base_class)] = 0.0;
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) return std::nullopt;
    double u = uniform01(rng) * total;
    int last_positive = -1;
    for (int k = 0; k < c; ++k) {
        const double w = weights[static_cast<std::size_t>(k)];
        if (w <= 0.0) continue;
        last_positive = k;
        if (u < w) return k;
        u -= w;
    }
    return last_positive;
}

/// Stretches the crop to exactly the base dimensions; aspect ratio is not
/// preserved.
inline ImageBuffer resize_to_base(const InstanceCrop& crop, int target_w, int target_h) {
    return resize_bilinear(crop.pixels, target_w, target_h);
}

/// Per-pixel convex blend beta*base + (1-beta)*mix, rounded to 8 bits.
inline ImageBuffer mixup_pixels(const ImageBuffer& base, const ImageBuffer& mix, double beta) {
    if (base.width() != mix.width() || base.height() != mix.height())
        throw std::invalid_argument("mixup_pixels: shape mismatch");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("mixup_pixels: beta outside [0,1]");
    ImageBuffer out(base.height(), base.width());
    const std::uint8_t* pb = base.data();
    const std::uint8_t* pm = mix.data();
    std::uint8_t* po = out.data();
    const std::size_t n = base.size_bytes();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = beta * pb[i] + (1.0 - beta) * pm[i];
        po[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
    return out;
}

/// beta*base_label + (1-beta)*onehot(mix_class).
inline std::vector<double> mixup_labels(const std::vector<double>& base_label, int mix_class,
                                        double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("mixup_labels: beta outside [0,1]");
    if (mix_class < 0 || mix_class >= static_cast<int>(base_label.size()))
        throw std::out_of_range("mixup_labels: mix class out of range");
    std::vector<double> out(base_label.size(), 0.0);
    for (std::size_t i = 0; i < base_label.size(); ++i) out[i] = beta * base_label[i];
    out[static_cast<std::size_t>(mix_class)] += 1.0 - beta;
    return out;
}

namespace detail {

inline void collect_qualifying(const CropBank& bank, int cls, double min_area,
                               std::vector<const InstanceCrop*>& out) {
    for (std::size_t i = 0; i < bank.size(cls); ++i) {
        const InstanceCrop& crop = bank.at(cls, i);
        if (static_cast<double>(crop.pixels.area()) >= min_area) out.push_back(&crop);
    }
}

inline void log_cra_skip(const LabeledImage& image, std::size_t idx, const char* reason) {
    log_debug("CRA-SKIP image=" + image.id + " instance=" + std::to_string(idx) +
              " reason=" + reason);
}

}  // namespace detail

/// Decides, per instance, whether and how to blend a banked crop over it.
/// Each instance independently passes a Bernoulli(ratio) gate; minority
/// bases in target images are never augmented; source images may borrow
/// crops from either bank while target images fall back to the source
/// bank only when the target bank has nothing qualifying. Crops must
/// cover at least a quarter of the base box area.
inline std::vector<MixPlan> plan_augmentation(const LabeledImage& image,
                                              const ClassRelationMatrix& m,
                                              const CropBank& source_bank,
                                              const CropBank& target_bank, double ratio, Rng& rng,
                                              double beta_a = 0.5, double beta_b = 0.5) {
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("plan_augmentation: ratio outside [0,1]");
    if (source_bank.domain() != Domain::Source || target_bank.domain() != Domain::Target)
        throw std::invalid_argument("plan_augmentation: banks passed in wrong order");
    const ClassPartition partition = partition_classes(m);
    std::vector<MixPlan> plans;
    for (std::size_t i = 0; i < image.instances.size(); ++i) {
        const AnnotatedInstance& inst = image.instances[i];
        if (uniform01(rng) >= ratio) continue;
        const int base_class = argmax_class(inst.label);
        const bool majority = partition.is_majority(base_class);
        if (image.domain == Domain::Target && !majority) {
            detail::log_cra_skip(image, i, "target_minority");
            continue;
        }
        const std::optional<int> mix_class = select_mix_class(m, base_class, majority, rng);
        if (!mix_class) {
            detail::log_cra_skip(image, i, "no_mix_class");
            continue;
        }
        const double min_area = 0.25 * inst.bbox.area();
        std::vector<const InstanceCrop*> candidates;
        if (image.domain == Domain::Source) {
            detail::collect_qualifying(source_bank, *mix_class, min_area, candidates);
            detail::collect_qualifying(target_bank, *mix_class, min_area, candidates);
        } else {
            detail::collect_qualifying(target_bank, *mix_class, min_area, candidates);
            if (candidates.empty())
                detail::collect_qualifying(source_bank, *mix_class, min_area, candidates);
        }
        if (candidates.empty()) {
            detail::log_cra_skip(image, i, "no_crop");
            continue;
        }
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        MixPlan plan;
        plan.base_index = static_cast<int>(i);
        plan.mix_crop = *candidates[pick(rng)];
        plan.beta = sample_beta(rng, beta_a, beta_b);
        plans.push_back(std::move(plan));
    }
    return plans;
}

/// Blends each planned crop over its base instance in place: the boxed
/// pixel region becomes the mixup of base and resized crop, the label
/// becomes the mixup of label and crop class. Boxes and instance count
/// never change.
inline LabeledImage apply_augmentation(const LabeledImage& image,
                                       const std::vector<MixPlan>& plans) {
    LabeledImage out = image;
    std::unordered_set<int> touched;
    for (const MixPlan& plan : plans) {
        if (plan.base_index < 0 || plan.base_index >= static_cast<int>(out.instances.size()))
            throw std::out_of_range("apply_augmentation: base index out of range");
        if (!touched.insert(plan.base_index).second)
            throw std::invalid_argument("apply_augmentation: two plans for one instance");
        if (!plan.mix_crop) continue;
        if (plan.beta < 0.0 || plan.beta > 1.0)
            throw std::invalid_argument("apply_augmentation: beta outside [0,1]");
        AnnotatedInstance& inst = out.instances[static_cast<std::size_t>(plan.base_index)];
        const PixelRect r = pixel_rect(inst.bbox);
        if (!rect_in_bounds(r, out.pixels))
            throw std::out_of_range("apply_augmentation: base box out of image bounds");
        const ImageBuffer base_region = crop_region(out.pixels, r.x, r.y, r.w, r.h);
        const ImageBuffer resized = resize_to_base(*plan.mix_crop, r.w, r.h);
        const ImageBuffer blended = mixup_pixels(base_region, resized, plan.beta);
        paste_region(out.pixels, blended, r.x, r.y);
        inst.label = mixup_labels(inst.label, plan.mix_crop->cls, plan.beta);
    }
    return out;
}

}  // namespace cat
