#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedrc/image.hpp"

namespace fedrc {

struct ClassTally {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  /// Class neither predicted nor present in this image.
  bool absent() const { return tp + fp + fn == 0; }

  friend bool operator==(const ClassTally&, const ClassTally&) = default;
};

/// Per-class pixel tallies of one image.
using ImageTally = std::vector<ClassTally>;

ImageTally tally(const LabelGrid& prediction, const LabelGrid& truth, std::size_t classes);

struct SegmentationScores {
  double miou = 0.0;
  double mpre = 0.0;
  double mrec = 0.0;
  double mf1 = 0.0;
};

/// Per-image, per-class TP/FP/FN tallies over a test set.
///
/// Scores average each per-image ratio over images first, then over classes.
/// An (image, class) cell where the class is absent from both prediction and
/// truth is skipped for that class; any other zero-denominator ratio counts
/// as 0. A class absent from every image is left out of the class average.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(std::size_t classes);

  const ImageTally& accumulate(const LabelGrid& prediction, const LabelGrid& truth);
  void add(ImageTally tally);
  void merge(const ConfusionAccumulator& other);

  std::size_t classes() const { return classes_; }
  std::size_t images() const { return images_.size(); }
  const std::vector<ImageTally>& tallies() const { return images_; }

  SegmentationScores finalize() const;

 private:
  std::size_t classes_;
  std::vector<ImageTally> images_;
};

}  // namespace fedrc
