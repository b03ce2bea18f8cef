#include "fedrc/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedrc {

ImageTally tally(const LabelGrid& prediction, const LabelGrid& truth, std::size_t classes) {
  if (prediction.width != truth.width || prediction.height != truth.height ||
      prediction.labels.size() != truth.labels.size())
    throw std::invalid_argument("prediction and truth dimensions differ");
  ImageTally t(classes);
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const std::size_t p = prediction.labels[i];
    const std::size_t g = truth.labels[i];
    if (p >= classes || g >= classes) throw std::invalid_argument("label out of range");
    if (p == g) {
      ++t[g].tp;
    } else {
      ++t[p].fp;
      ++t[g].fn;
    }
  }
  const std::uint64_t pixels = truth.labels.size();
  for (auto& c : t) c.tn = pixels - c.tp - c.fp - c.fn;
  return t;
}

ConfusionAccumulator::ConfusionAccumulator(std::size_t classes) : classes_(classes) {
  if (classes == 0) throw std::invalid_argument("need at least one class");
}

const ImageTally& ConfusionAccumulator::accumulate(const LabelGrid& prediction, const LabelGrid& truth) {
  images_.push_back(tally(prediction, truth, classes_));
  return images_.back();
}

void ConfusionAccumulator::add(ImageTally t) {
  if (t.size() != classes_) throw std::invalid_argument("tally class count mismatch");
  images_.push_back(std::move(t));
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("cannot merge accumulators with different class counts");
  images_.insert(images_.end(), other.images_.begin(), other.images_.end());
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Sorting first makes the sum independent of image order.
double sorted_mean(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

SegmentationScores ConfusionAccumulator::finalize() const {
  if (images_.empty()) throw std::logic_error("no images accumulated");

  double iou_sum = 0.0;
  double pre_sum = 0.0;
  double rec_sum = 0.0;
  double f1_sum = 0.0;
  std::size_t present = 0;
  std::vector<double> iou, pre, rec;
  for (std::size_t c = 0; c < classes_; ++c) {
    iou.clear();
    pre.clear();
    rec.clear();
    for (const auto& image : images_) {
      const ClassTally& t = image[c];
      if (t.absent()) continue;
      iou.push_back(ratio(t.tp, t.tp + t.fp + t.fn));
      pre.push_back(ratio(t.tp, t.tp + t.fp));
      rec.push_back(ratio(t.tp, t.tp + t.fn));
    }
    if (iou.empty()) continue;
    ++present;
    const double pre_c = sorted_mean(pre);
    const double rec_c = sorted_mean(rec);
    iou_sum += sorted_mean(iou);
    pre_sum += pre_c;
    rec_sum += rec_c;
    f1_sum += (pre_c + rec_c) > 0.0 ? 2.0 * pre_c * rec_c / (pre_c + rec_c) : 0.0;
  }
  if (present == 0) throw std::logic_error("no class occurs in any accumulated image");
  const double n = static_cast<double>(present);
  return {iou_sum / n, pre_sum / n, rec_sum / n, f1_sum / n};
}

}  // namespace fedrc
