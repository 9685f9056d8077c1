#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cat/image.hpp"
#include "cat/instances.hpp"
#include "cat/log.hpp"
#include "cat/rng.hpp"

namespace cat {

/// Minimum side length for a crop to be worth banking.
inline constexpr int kMinCropDim = 8;

struct InstanceCrop {
    ImageBuffer pixels{1, 1};
    int cls = 0;
    Domain domain = Domain::Source;

    std::size_t area() const { return pixels.area(); }
};

/// Per-class FIFO store of instance crops for one domain. When a class
/// queue is full the oldest crop is evicted.
class CropBank {
public:
    CropBank(int num_classes, std::size_t capacity_per_class, Domain domain)
        : domain_(domain), capacity_(capacity_per_class), queues_(static_cast<std::size_t>(num_classes)) {
        if (num_classes < 1) throw std::invalid_argument("CropBank: need at least 1 class");
        if (capacity_per_class < 1) throw std::invalid_argument("CropBank: capacity must be positive");
    }

    int num_classes() const { return static_cast<int>(queues_.size()); }
    std::size_t capacity_per_class() const { return capacity_; }
    Domain domain() const { return domain_; }

    std::size_t size(int cls) const { return queue(cls).size(); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& q : queues_) n += q.size();
        return n;
    }

    bool has_class(int cls) const { return !queue(cls).empty(); }

    /// Rejects crops smaller than kMinCropDim on either side; returns
    /// whether the crop was banked.
    bool insert(const InstanceCrop& crop) {
        if (crop.domain != domain_) throw std::invalid_argument("CropBank: domain mismatch");
        auto& q = queue(crop.cls);
        if (crop.pixels.width() < kMinCropDim || crop.pixels.height() < kMinCropDim) return false;
        if (q.size() == capacity_) q.pop_front();
        q.push_back(crop);
        return true;
    }

    /// Oldest first.
    const InstanceCrop& at(int cls, std::size_t i) const {
        const auto& q = queue(cls);
        if (i >= q.size()) throw std::out_of_range("CropBank: crop index out of range");
        return q[i];
    }

    /// Uniform pick among the class's crops that meet the area floor;
    /// empty-handed when none qualify.
    std::optional<InstanceCrop> sample(int cls, double min_area, Rng& rng) const {
        const auto& q = queue(cls);
        std::vector<const InstanceCrop*> qualifying;
        for (const InstanceCrop& crop : q)
            if (static_cast<double>(crop.area()) >= min_area) qualifying.push_back(&crop);
        if (qualifying.empty()) return std::nullopt;
        std::uniform_int_distribution<std::size_t> pick(0, qualifying.size() - 1);
        return *qualifying[pick(rng)];
    }

private:
    std::deque<InstanceCrop>& queue(int cls) {
        if (cls < 0 || cls >= num_classes()) throw std::out_of_range("CropBank: class out of range");
        return queues_[static_cast<std::size_t>(cls)];
    }
    const std::deque<InstanceCrop>& queue(int cls) const {
        if (cls < 0 || cls >= num_classes()) throw std::out_of_range("CropBank: class out of range");
        return queues_[static_cast<std::size_t>(cls)];
    }

    Domain domain_;
    std::size_t capacity_;
    std::vector<std::deque<InstanceCrop>> queues_;
};

/// Cuts every hard-labeled, fully in-bounds instance out of the image.
/// Soft labels are skipped silently; out-of-bounds boxes are skipped with
/// a warning. Crops below the banking minimum are still returned; insert
/// makes the final call.
inline std::vector<InstanceCrop> extract_crops(const LabeledImage& image, int num_classes) {
    std::vector<InstanceCrop> crops;
    for (std::size_t i = 0; i < image.instances.size(); ++i) {
        const AnnotatedInstance& inst = image.instances[i];
        if (static_cast<int>(inst.label.size()) != num_classes)
            throw std::invalid_argument("extract_crops: label size mismatch");
        if (!is_hard_label(inst.label)) continue;
        const PixelRect r = pixel_rect(inst.bbox);
        if (!rect_in_bounds(r, image.pixels)) {
            log_warn("extract_crops: skipping out-of-bounds box in image " + image.id +
                     " instance " + std::to_string(i));
            continue;
        }
        InstanceCrop crop;
        crop.pixels = crop_region(image.pixels, r.x, r.y, r.w, r.h);
        crop.cls = argmax_class(inst.label);
        crop.domain = image.domain;
        crops.push_back(std::move(crop));
    }
    return crops;
}

/// Extracts and banks every eligible crop from the image into the bank of
/// the image's domain. Returns how many were banked.
inline std::size_t bank_image(CropBank& bank, const LabeledImage& image) {
    if (image.domain != bank.domain())
        throw std::invalid_argument("bank_image: image domain does not match bank");
    std::size_t banked = 0;
    for (const InstanceCrop& crop : extract_crops(image, bank.num_classes()))
        if (bank.insert(crop)) ++banked;
    return banked;
}

}  // namespace cat
