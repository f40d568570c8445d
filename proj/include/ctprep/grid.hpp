#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace ctprep {

/// Dense 3-D array indexed (slice, row, col); col varies fastest.
template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  Grid3(std::size_t slices, std::size_t rows, std::size_t cols, T fill = T{})
      : slices_(slices), rows_(rows), cols_(cols), data_(slices * rows * cols, fill) {}

  std::size_t slices() const noexcept { return slices_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::array<std::size_t, 3> shape() const noexcept { return {slices_, rows_, cols_}; }

  std::size_t index(std::size_t s, std::size_t r, std::size_t c) const noexcept {
    assert(s < slices_ && r < rows_ && c < cols_);
    return (s * rows_ + r) * cols_ + c;
  }

  T& operator()(std::size_t s, std::size_t r, std::size_t c) noexcept { return data_[index(s, r, c)]; }
  const T& operator()(std::size_t s, std::size_t r, std::size_t c) const noexcept {
    return data_[index(s, r, c)];
  }

  std::span<T> slice(std::size_t s) noexcept { return {data_.data() + s * rows_ * cols_, rows_ * cols_}; }
  std::span<const T> slice(std::size_t s) const noexcept {
    return {data_.data() + s * rows_ * cols_, rows_ * cols_};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Grid3&) const = default;

 private:
  std::size_t slices_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace ctprep
