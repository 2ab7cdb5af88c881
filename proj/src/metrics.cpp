#include "evfuse/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "evfuse/common.hpp"

namespace evfuse {

ConfusionMatrix::ConfusionMatrix(int k, int ignore_id) : k_(k), ignore_id_(ignore_id) {
    require(k >= 1, "ConfusionMatrix: need at least one class");
    counts_.assign(static_cast<std::size_t>(k) * k, 0);
}

void ConfusionMatrix::accumulate(const std::vector<int>& pred, const std::vector<int>& gt) {
    require(pred.size() == gt.size(), "accumulate: pred/gt size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i] >= 0 && pred[i] < k_, "accumulate: prediction id out of range");
        if (gt[i] == ignore_id_) continue;
        require(gt[i] >= 0 && gt[i] < k_, "accumulate: ground-truth id out of range");
        counts_[static_cast<std::size_t>(gt[i]) * k_ + pred[i]] += 1;
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    require(other.k_ == k_, "merge: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts_) t += c;
    return t;
}

double ConfusionMatrix::acc() const {
    const std::uint64_t t = total();
    if (t == 0) throw std::domain_error("acc: undefined on an empty confusion matrix");
    std::uint64_t diag = 0;
    for (int i = 0; i < k_; ++i) diag += count(i, i);
    return static_cast<double>(diag) / static_cast<double>(t);
}

std::vector<double> ConfusionMatrix::per_class_iou() const {
    std::vector<double> iou(static_cast<std::size_t>(k_),
                            std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < k_; ++i) {
        std::uint64_t gt_total = 0, pred_total = 0;
        for (int j = 0; j < k_; ++j) {
            gt_total += count(i, j);
            pred_total += count(j, i);
        }
        const std::uint64_t denom = gt_total + pred_total - count(i, i);
        if (denom > 0)
            iou[static_cast<std::size_t>(i)] =
                static_cast<double>(count(i, i)) / static_cast<double>(denom);
    }
    return iou;
}

double ConfusionMatrix::miou() const {
    if (total() == 0) throw std::domain_error("miou: undefined on an empty confusion matrix");
    const std::vector<double> iou = per_class_iou();
    double acc = 0.0;
    int defined = 0;
    for (double v : iou) {
        if (!std::isnan(v)) {
            acc += v;
            ++defined;
        }
    }
    if (defined == 0) throw std::domain_error("miou: no class is defined");
    return acc / defined;
}

double ConfusionMatrix::fwiou() const {
    const std::uint64_t t = total();
    if (t == 0) throw std::domain_error("fwiou: undefined on an empty confusion matrix");
    const std::vector<double> iou = per_class_iou();
    double acc = 0.0;
    for (int i = 0; i < k_; ++i) {
        if (std::isnan(iou[static_cast<std::size_t>(i)])) continue;
        std::uint64_t gt_total = 0;
        for (int j = 0; j < k_; ++j) gt_total += count(i, j);
        acc += (static_cast<double>(gt_total) / static_cast<double>(t)) *
               iou[static_cast<std::size_t>(i)];
    }
    return acc;
}

std::string ConfusionMatrix::report_json() const {
    nlohmann::json j;
    j["acc"] = acc();
    j["miou"] = miou();
    j["fwiou"] = fwiou();
    j["pixel_count"] = total();
    const std::vector<double> iou = per_class_iou();
    nlohmann::json per = nlohmann::json::array();
    for (int i = 0; i < k_; ++i) {
        nlohmann::json c;
        c["class"] = i;
        if (std::isnan(iou[static_cast<std::size_t>(i)]))
            c["iou"] = nullptr;
        else
            c["iou"] = iou[static_cast<std::size_t>(i)];
        per.push_back(c);
    }
    j["per_class"] = per;
    return j.dump(2) + "\n";
}

}  // namespace evfuse
