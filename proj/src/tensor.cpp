#include "fdnet/tensor.hpp"

#include "fdnet/error.hpp"

#include <cstring>
#include <sstream>

namespace fdnet {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_shape: return "invalid-shape";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::sequence_too_short: return "sequence-too-short";
    case Errc::numeric_failure: return "numeric-failure";
    case Errc::numeric_input: return "numeric-input";
    case Errc::degenerate_weight: return "degenerate-weight";
    case Errc::invalid_plan: return "invalid-plan";
    case Errc::schema: return "schema";
    case Errc::parse: return "parse";
    case Errc::invalid_split: return "invalid-split";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::training_diverged: return "training-diverged";
    case Errc::incompatible_checkpoint: return "incompatible-checkpoint";
    case Errc::corrupt_checkpoint: return "corrupt-checkpoint";
    case Errc::undefined_scale: return "undefined-scale";
    case Errc::undefined_owa: return "undefined-owa";
    case Errc::invalid_sample: return "invalid-sample";
    case Errc::incompatible_data: return "incompatible-data";
    case Errc::invalid_window: return "invalid-window";
    case Errc::io: return "io";
  }
  return "unknown";
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::vector<Index> strides(const Shape& shape) {
  std::vector<Index> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

static void check_dims(const Shape& shape) {
  for (Index d : shape)
    if (d <= 0) fail(Errc::invalid_shape, "non-positive dimension in shape " + to_string(shape));
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_ = Array::Constant(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != numel(shape_))
    fail(Errc::invalid_shape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                  to_string(shape_));
}

Tensor::Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
  check_dims(shape_);
  if (static_cast<Index>(values.size()) != numel(shape_))
    fail(Errc::invalid_shape, "initializer length does not match shape " + to_string(shape_));
  data_.resize(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) data_[i++] = v;
}

Index Tensor::offset(std::initializer_list<Index> index) const {
  if (index.size() != shape_.size()) fail(Errc::invalid_shape, "index rank mismatch for " + to_string(shape_));
  Index off = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= shape_[axis]) fail(Errc::invalid_shape, "index out of range for " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

Scalar& Tensor::at(std::initializer_list<Index> index) { return data_[offset(index)]; }
Scalar Tensor::at(std::initializer_list<Index> index) const { return data_[offset(index)]; }

Scalar Tensor::item() const {
  if (data_.size() != 1) fail(Errc::invalid_shape, "item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size())
    fail(Errc::invalid_shape, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const { return data_.isFinite().all(); }

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
         std::memcmp(a.data_.data(), b.data_.data(), sizeof(Scalar) * static_cast<std::size_t>(a.data_.size())) == 0;
}

}  // namespace fdnet
