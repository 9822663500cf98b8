#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxsyn {

using Index = Eigen::Index;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};

// Dense row-major N-d array (rank 1..5) backed by Eigen storage.
// Feature maps use the (batch, channels, depth, height, width) layout.
template <typename Scalar>
class TensorT {
  public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using ArrayMap = Eigen::Map<Storage>;
    using ConstArrayMap = Eigen::Map<const Storage>;
    using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<MatrixRM>;
    using ConstMatrixMap = Eigen::Map<const MatrixRM>;

    TensorT() = default;

    explicit TensorT(std::vector<Index> dims) { resize(std::move(dims)); }
    TensorT(std::initializer_list<Index> dims) { resize(std::vector<Index>(dims)); }

    static TensorT zeros(std::vector<Index> dims) {
        TensorT t(std::move(dims));
        t.set_zero();
        return t;
    }

    static TensorT full(std::vector<Index> dims, Scalar v) {
        TensorT t(std::move(dims));
        t.fill(v);
        return t;
    }

    void resize(std::vector<Index> dims) {
        if (dims.empty() || dims.size() > 5)
            throw ShapeError("tensor rank must be in [1,5], got " + std::to_string(dims.size()));
        Index n = 1;
        for (Index d : dims) {
            if (d <= 0) throw ShapeError("tensor dims must be positive: " + dims_to_string(dims));
            n *= d;
        }
        dims_ = std::move(dims);
        data_.resize(n);
        recompute_strides();
    }

    bool empty() const { return data_.size() == 0; }
    Index size() const { return data_.size(); }
    int rank() const { return static_cast<int>(dims_.size()); }
    Index dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    const std::vector<Index>& dims() const { return dims_; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    ArrayMap array() { return ArrayMap(data_.data(), data_.size()); }
    ConstArrayMap array() const { return ConstArrayMap(data_.data(), data_.size()); }

    // View the contiguous buffer as a (rows, cols) row-major matrix.
    MatrixMap matrix(Index rows, Index cols) {
        check_view(rows, cols);
        return MatrixMap(data_.data(), rows, cols);
    }
    ConstMatrixMap matrix(Index rows, Index cols) const {
        check_view(rows, cols);
        return ConstMatrixMap(data_.data(), rows, cols);
    }

    void fill(Scalar v) { data_.setConstant(v); }
    void set_zero() { data_.setZero(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& operator()(Index a) { return data_[a]; }
    Scalar operator()(Index a) const { return data_[a]; }
    Scalar& operator()(Index a, Index b) { return data_[a * strides_[0] + b]; }
    Scalar operator()(Index a, Index b) const { return data_[a * strides_[0] + b]; }
    Scalar& operator()(Index a, Index b, Index c) {
        return data_[a * strides_[0] + b * strides_[1] + c];
    }
    Scalar operator()(Index a, Index b, Index c) const {
        return data_[a * strides_[0] + b * strides_[1] + c];
    }
    Scalar& operator()(Index a, Index b, Index c, Index d) {
        return data_[a * strides_[0] + b * strides_[1] + c * strides_[2] + d];
    }
    Scalar operator()(Index a, Index b, Index c, Index d) const {
        return data_[a * strides_[0] + b * strides_[1] + c * strides_[2] + d];
    }
    Scalar& operator()(Index a, Index b, Index c, Index d, Index e) {
        return data_[a * strides_[0] + b * strides_[1] + c * strides_[2] + d * strides_[3] + e];
    }
    Scalar operator()(Index a, Index b, Index c, Index d, Index e) const {
        return data_[a * strides_[0] + b * strides_[1] + c * strides_[2] + d * strides_[3] + e];
    }

    TensorT reshaped(std::vector<Index> dims) const {
        TensorT t = *this;
        Index n = 1;
        for (Index d : dims) n *= d;
        if (n != size())
            throw ShapeError("reshape size mismatch: " + dims_to_string(dims) + " vs " +
                             std::to_string(size()) + " elements");
        t.dims_ = std::move(dims);
        t.recompute_strides();
        return t;
    }

    bool same_shape(const TensorT& o) const { return dims_ == o.dims_; }

    bool all_finite() const { return data_.isFinite().all(); }

    std::string shape_str() const { return dims_to_string(dims_); }

    static std::string dims_to_string(const std::vector<Index>& dims) {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
        os << ")";
        return os.str();
    }

  private:
    void recompute_strides() {
        strides_.assign(dims_.size(), 1);
        for (int i = static_cast<int>(dims_.size()) - 2; i >= 0; --i)
            strides_[static_cast<size_t>(i)] =
                strides_[static_cast<size_t>(i) + 1] * dims_[static_cast<size_t>(i) + 1];
    }

    void check_view(Index rows, Index cols) const {
        if (rows * cols != size())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not cover " + std::to_string(size()) + " elements");
    }

    std::vector<Index> dims_;
    std::vector<Index> strides_;
    Storage data_;
};

using Real = double;
using Tensor = TensorT<Real>;

template <typename Scalar>
void check_same_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace voxsyn
