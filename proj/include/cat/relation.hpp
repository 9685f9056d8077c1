#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cat {

inline constexpr int kBackgroundClass = -1;

/// One ground truth paired with its matched prediction. Ground truths with
/// no foreground match at the IoU threshold carry kBackgroundClass.
struct MatchedPair {
    int gt_class = 0;
    int pred_class = kBackgroundClass;
};

/// Per-batch confusion counts, C rows by C+1 columns. Column C counts
/// ground truths whose matched prediction fell to background.
class BatchConfusion {
public:
    explicit BatchConfusion(int num_classes)
        : num_classes_(num_classes),
          counts_(static_cast<std::size_t>(num_classes) * (num_classes + 1), 0) {
        if (num_classes < 2) throw std::invalid_argument("BatchConfusion: need at least 2 classes");
    }

    int num_classes() const { return num_classes_; }

    /// col in [0, C]; col == C is the background column.
    std::int64_t at(int gt, int col) const { return counts_[index(gt, col)]; }

    void add(int gt, int col, std::int64_t n = 1) { counts_[index(gt, col)] += n; }

    std::int64_t row_total(int gt) const {
        std::int64_t t = 0;
        for (int col = 0; col <= num_classes_; ++col) t += at(gt, col);
        return t;
    }

    bool operator==(const BatchConfusion&) const = default;

private:
    std::size_t index(int gt, int col) const {
        if (gt < 0 || gt >= num_classes_ || col < 0 || col > num_classes_)
            throw std::out_of_range("BatchConfusion: index out of range");
        return static_cast<std::size_t>(gt) * (num_classes_ + 1) + static_cast<std::size_t>(col);
    }

    int num_classes_;
    std::vector<std::int64_t> counts_;
};

/// Tallies matched pairs into a batch confusion. Background-matched ground
/// truths land in the last column.
inline BatchConfusion accumulate(BatchConfusion batch, const std::vector<MatchedPair>& pairs) {
    const int c = batch.num_classes();
    for (const MatchedPair& p : pairs) {
        if (p.gt_class < 0 || p.gt_class >= c)
            throw std::out_of_range("accumulate: gt_class out of range");
        if (p.pred_class != kBackgroundClass && (p.pred_class < 0 || p.pred_class >= c))
            throw std::out_of_range("accumulate: pred_class out of range");
        batch.add(p.gt_class, p.pred_class == kBackgroundClass ? c : p.pred_class);
    }
    return batch;
}

/// Row-normalized batch confusion restricted to the foreground columns.
/// A row is present only when it has foreground mass to normalize over.
struct BatchRelation {
    int num_classes = 0;
    std::vector<double> values;      // C*C row-major
    std::vector<bool> row_present;   // size C
};

/// Divides each row by its full (foreground + background) total, then
/// truncates to the C foreground columns and re-divides by the remaining
/// foreground mass. Rows with no foreground observations come back zero
/// and absent.
inline BatchRelation normalize_batch(const BatchConfusion& batch) {
    const int c = batch.num_classes();
    BatchRelation out;
    out.num_classes = c;
    out.values.assign(static_cast<std::size_t>(c) * c, 0.0);
    out.row_present.assign(static_cast<std::size_t>(c), false);
    for (int row = 0; row < c; ++row) {
        const std::int64_t total = batch.row_total(row);
        if (total <= 0) continue;
        double fg_mass = 0.0;
        for (int col = 0; col < c; ++col) {
            const double v = static_cast<double>(batch.at(row, col)) / static_cast<double>(total);
            out.values[static_cast<std::size_t>(row) * c + col] = v;
            fg_mass += v;
        }
        if (fg_mass <= 0.0) {
            for (int col = 0; col < c; ++col) out.values[static_cast<std::size_t>(row) * c + col] = 0.0;
            continue;
        }
        for (int col = 0; col < c; ++col) out.values[static_cast<std::size_t>(row) * c + col] /= fg_mass;
        out.row_present[static_cast<std::size_t>(row)] = true;
    }
    return out;
}

/// EMA-smoothed estimate of P(predicted j | ground-truth i). Rows start
/// uninitialized (all zeros) and are first filled by copying a batch row.
class ClassRelationMatrix {
public:
    explicit ClassRelationMatrix(int num_classes)
        : num_classes_(num_classes),
          values_(static_cast<std::size_t>(num_classes) * num_classes, 0.0),
          row_initialized_(static_cast<std::size_t>(num_classes), false) {
        if (num_classes < 2)
            throw std::invalid_argument("ClassRelationMatrix: need at least 2 classes");
    }

    static ClassRelationMatrix from_values(int num_classes, const std::vector<double>& values,
                                           const std::vector<bool>& row_initialized) {
        ClassRelationMatrix m(num_classes);
        if (values.size() != m.values_.size() ||
            row_initialized.size() != m.row_initialized_.size())
            throw std::invalid_argument("ClassRelationMatrix: shape mismatch");
        for (int row = 0; row < num_classes; ++row) {
            double sum = 0.0;
            for (int col = 0; col < num_classes; ++col) {
                const double v = values[static_cast<std::size_t>(row) * num_classes + col];
                if (v < 0.0 || v > 1.0)
                    throw std::invalid_argument("ClassRelationMatrix: entry outside [0,1]");
                sum += v;
            }
            if (row_initialized[static_cast<std::size_t>(row)]) {
                if (std::abs(sum - 1.0) > 1e-9)
                    throw std::invalid_argument("ClassRelationMatrix: initialized row not stochastic");
            } else if (sum != 0.0) {
                throw std::invalid_argument("ClassRelationMatrix: uninitialized row not zero");
            }
        }
        m.values_ = values;
        m.row_initialized_ = row_initialized;
        return m;
    }

    /// All rows initialized to the uniform distribution.
    static ClassRelationMatrix uniform(int num_classes) {
        ClassRelationMatrix m(num_classes);
        const double v = 1.0 / num_classes;
        for (double& e : m.values_) e = v;
        m.row_initialized_.assign(static_cast<std::size_t>(num_classes), true);
        return m;
    }

    int num_classes() const { return num_classes_; }

    double at(int gt, int pred) const { return values_[index(gt, pred)]; }

    bool row_initialized(int row) const {
        if (row < 0 || row >= num_classes_)
            throw std::out_of_range("ClassRelationMatrix: row out of range");
        return row_initialized_[static_cast<std::size_t>(row)];
    }

    const std::vector<double>& values() const { return values_; }
    const std::vector<bool>& row_flags() const { return row_initialized_; }

    bool operator==(const ClassRelationMatrix&) const = default;

    friend ClassRelationMatrix ema_update(ClassRelationMatrix global, const BatchRelation& batch,
                                          double momentum);

private:
    std::size_t index(int gt, int pred) const {
        if (gt < 0 || gt >= num_classes_ || pred < 0 || pred >= num_classes_)
            throw std::out_of_range("ClassRelationMatrix: index out of range");
        return static_cast<std::size_t>(gt) * num_classes_ + static_cast<std::size_t>(pred);
    }

    int num_classes_;
    std::vector<double> values_;
    std::vector<bool> row_initialized_;
};

/// Per-row EMA. Present batch rows are copied into uninitialized global
/// rows and blended as momentum*global + (1-momentum)*batch otherwise;
/// absent rows leave the global row untouched.
inline ClassRelationMatrix ema_update(ClassRelationMatrix global, const BatchRelation& batch,
                                      double momentum) {
    if (momentum < 0.0 || momentum > 1.0)
        throw std::invalid_argument("ema_update: momentum must be in [0,1]");
    if (batch.num_classes != global.num_classes())
        throw std::invalid_argument("ema_update: class count mismatch");
    const int c = global.num_classes();
    for (int row = 0; row < c; ++row) {
        if (!batch.row_present[static_cast<std::size_t>(row)]) continue;
        double* grow = &global.values_[static_cast<std::size_t>(row) * c];
        const double* brow = &batch.values[static_cast<std::size_t>(row) * c];
        if (!global.row_initialized_[static_cast<std::size_t>(row)]) {
            for (int col = 0; col < c; ++col) grow[col] = brow[col];
            global.row_initialized_[static_cast<std::size_t>(row)] = true;
        } else {
            for (int col = 0; col < c; ++col)
                grow[col] = momentum * grow[col] + (1.0 - momentum) * brow[col];
        }
    }
    return global;
}

inline double mean_diagonal(const ClassRelationMatrix& m) {
    double sum = 0.0;
    for (int c = 0; c < m.num_classes(); ++c) sum += m.at(c, c);
    return sum / m.num_classes();
}

/// Majority classes sit strictly above the mean diagonal; ties and
/// cold-start zeros fall to minority.
struct ClassPartition {
    std::vector<int> majority;
    std::vector<int> minority;
    std::vector<bool> majority_mask;

    bool is_majority(int cls) const { return majority_mask[static_cast<std::size_t>(cls)]; }
};

inline ClassPartition partition_classes(const ClassRelationMatrix& m) {
    const double avg = mean_diagonal(m);
    ClassPartition p;
    p.majority_mask.assign(static_cast<std::size_t>(m.num_classes()), false);
    for (int c = 0; c < m.num_classes(); ++c) {
        if (m.at(c, c) > avg) {
            p.majority.push_back(c);
            p.majority_mask[static_cast<std::size_t>(c)] = true;
        } else {
            p.minority.push_back(c);
        }
    }
    return p;
}

}  // namespace cat
