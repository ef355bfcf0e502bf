#pragma once

// Grid types and segmentation metrics shared by the perception pipeline,
// the attacks and the consensus defense.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpguard {

// All contract violations surface as this type so callers (the CLI in
// particular) can tell configuration/input errors from internal bugs.
class Error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridDims {
  std::size_t width{0};
  std::size_t height{0};
  std::size_t classes{0};

  constexpr std::size_t cells() const noexcept { return width * height; }
  constexpr std::size_t entries() const noexcept { return cells() * classes; }

  friend constexpr bool operator==(const GridDims&, const GridDims&) = default;
};

inline void validate(const GridDims& d) {
  if (d.width < 1 || d.height < 1) throw Error("grid must be at least 1x1");
  if (d.classes < 2) throw Error("grid needs at least 2 classes");
}

inline void require_same_dims(const GridDims& a, const GridDims& b) {
  if (!(a == b)) throw Error("dims mismatch");
}

// Per-cell class distribution, row-major cells with classes innermost.
class ProbMap {
 public:
  static constexpr double kSumTolerance = 1e-9;
  static constexpr double kRenormTolerance = 1e-6;

  // Validates and, when a cell is off by no more than kRenormTolerance,
  // renormalizes it. Anything further off is rejected.
  ProbMap(GridDims dims, std::vector<double> values) : dims_(dims), values_(std::move(values)) {
    validate(dims_);
    if (values_.size() != dims_.entries()) throw Error("probability map has wrong size");
    for (std::size_t cell = 0; cell < dims_.cells(); ++cell) {
      double* p = values_.data() + cell * dims_.classes;
      double sum = 0.0;
      for (std::size_t j = 0; j < dims_.classes; ++j) {
        if (!(p[j] >= 0.0 && p[j] <= 1.0)) throw Error("probability outside [0, 1]");
        sum += p[j];
      }
      if (std::abs(sum - 1.0) > kRenormTolerance) throw Error("cell probabilities do not sum to 1");
      if (std::abs(sum - 1.0) > kSumTolerance) {
        for (std::size_t j = 0; j < dims_.classes; ++j) p[j] /= sum;
      }
    }
  }

  const GridDims& dims() const noexcept { return dims_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> cell(std::size_t index) const noexcept {
    return std::span<const double>(values_).subspan(index * dims_.classes, dims_.classes);
  }
  double at(std::size_t cell_index, std::size_t cls) const noexcept {
    return values_[cell_index * dims_.classes + cls];
  }

  friend bool operator==(const ProbMap&, const ProbMap&) = default;

 private:
  GridDims dims_;
  std::vector<double> values_;
};

class LabelMap {
 public:
  using Label = std::uint16_t;

  LabelMap(GridDims dims, std::vector<Label> labels) : dims_(dims), labels_(std::move(labels)) {
    validate(dims_);
    if (labels_.size() != dims_.cells()) throw Error("label map has wrong size");
    for (Label l : labels_) {
      if (l >= dims_.classes) throw Error("label out of range");
    }
  }

  // Uniform map of a single class.
  static LabelMap filled(GridDims dims, Label label) {
    return LabelMap(dims, std::vector<Label>(dims.cells(), label));
  }

  const GridDims& dims() const noexcept { return dims_; }
  std::span<const Label> labels() const noexcept { return labels_; }
  Label operator[](std::size_t cell) const noexcept { return labels_[cell]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  GridDims dims_;
  std::vector<Label> labels_;
};

struct ClassIoUReport {
  // nullopt marks a class whose union is empty in both maps.
  std::vector<std::optional<double>> per_class_iou;
  double miou{0.0};
  // Mean with undefined classes counted as 0, for the all-classes convention.
  double miou_all_classes{0.0};
  std::size_t defined_classes{0};
};

// Ties go to the lowest class index.
inline LabelMap argmax_decode(const ProbMap& p) {
  const auto& d = p.dims();
  std::vector<LabelMap::Label> labels(d.cells());
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    auto probs = p.cell(cell);
    std::size_t best = 0;
    for (std::size_t j = 1; j < d.classes; ++j) {
      if (probs[j] > probs[best]) best = j;
    }
    labels[cell] = static_cast<LabelMap::Label>(best);
  }
  return LabelMap(d, std::move(labels));
}

inline ProbMap one_hot(const LabelMap& l) {
  const auto& d = l.dims();
  std::vector<double> values(d.entries(), 0.0);
  for (std::size_t cell = 0; cell < d.cells(); ++cell) values[cell * d.classes + l[cell]] = 1.0;
  return ProbMap(d, std::move(values));
}

inline ClassIoUReport miou(const LabelMap& pred, const LabelMap& truth) {
  require_same_dims(pred.dims(), truth.dims());
  const std::size_t classes = pred.dims().classes;
  std::vector<std::size_t> intersection(classes, 0);
  std::vector<std::size_t> pred_count(classes, 0);
  std::vector<std::size_t> truth_count(classes, 0);
  for (std::size_t cell = 0; cell < pred.dims().cells(); ++cell) {
    ++pred_count[pred[cell]];
    ++truth_count[truth[cell]];
    if (pred[cell] == truth[cell]) ++intersection[pred[cell]];
  }

  ClassIoUReport report;
  report.per_class_iou.resize(classes);
  double sum = 0.0;
  for (std::size_t j = 0; j < classes; ++j) {
    const std::size_t uni = pred_count[j] + truth_count[j] - intersection[j];
    if (uni == 0) continue;
    const double iou = static_cast<double>(intersection[j]) / static_cast<double>(uni);
    report.per_class_iou[j] = iou;
    sum += iou;
    ++report.defined_classes;
  }
  report.miou = report.defined_classes ? sum / static_cast<double>(report.defined_classes) : 0.0;
  report.miou_all_classes = sum / static_cast<double>(classes);
  return report;
}

}  // namespace cpguard
