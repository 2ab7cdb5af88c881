#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evfuse {

// K x K confusion counts, counts(g, p) = pixels of ground-truth class g
// predicted as p. Ground-truth pixels equal to ignore_id are skipped.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int k, int ignore_id = 255);

    void accumulate(const std::vector<int>& pred, const std::vector<int>& gt);
    void merge(const ConfusionMatrix& other);

    int k() const { return k_; }
    int ignore_id() const { return ignore_id_; }
    std::uint64_t count(int gt, int pred) const {
        return counts_[static_cast<std::size_t>(gt) * k_ + pred];
    }
    std::uint64_t total() const;

    double acc() const;
    double miou() const;
    double fwiou() const;
    // NaN for classes absent from both gt and pred.
    std::vector<double> per_class_iou() const;

    // {acc, miou, fwiou, per_class: [{class, iou|null}], pixel_count}
    std::string report_json() const;

private:
    int k_;
    int ignore_id_;
    std::vector<std::uint64_t> counts_;
};

}  // namespace evfuse
