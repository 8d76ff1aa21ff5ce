#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pdvf {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using VecF = Vec<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    throw Error(os.str());
}

template <typename... Args>
void require(bool cond, Args&&... args) {
    if (!cond) fail(std::forward<Args>(args)...);
}

// Named parameter tensor with a gradient slot of identical shape. Rank can be
// 1 (vectors, stored as 1 x n) or 2; the declared dims are preserved through
// checkpoint round trips.
template <typename S>
struct Tensor {
    std::string name;
    std::vector<uint32_t> dims;  // rank 1 or 2
    Mat<S> value;
    Mat<S> grad;

    Tensor() = default;
    Tensor(std::string n, uint32_t rows, uint32_t cols)
        : name(std::move(n)), dims{rows, cols} {
        value = Mat<S>::Zero(rows, cols);
        grad = Mat<S>::Zero(rows, cols);
    }
    Tensor(std::string n, uint32_t len) : name(std::move(n)), dims{len} {
        value = Mat<S>::Zero(1, len);
        grad = Mat<S>::Zero(1, len);
    }

    void zero_grad() { grad.setZero(); }
    int64_t size() const { return value.size(); }
};

// Ordered collection of uniquely named tensors. Insertion order is the
// serialization order, so checkpoints are reproducible.
template <typename S>
class ParamSet {
public:
    int add(Tensor<S> t) {
        require(!index_.count(t.name), "ParamSet: duplicate tensor name '", t.name, "'");
        index_[t.name] = static_cast<int>(tensors_.size());
        tensors_.push_back(std::move(t));
        return static_cast<int>(tensors_.size()) - 1;
    }
    int add_matrix(const std::string& name, uint32_t rows, uint32_t cols) {
        return add(Tensor<S>(name, rows, cols));
    }
    int add_vector(const std::string& name, uint32_t len) {
        return add(Tensor<S>(name, len));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor<S>& at(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamSet: no tensor named '", name, "'");
        return tensors_[it->second];
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamSet: no tensor named '", name, "'");
        return tensors_[it->second];
    }

    std::vector<Tensor<S>>& tensors() { return tensors_; }
    const std::vector<Tensor<S>>& tensors() const { return tensors_; }
    size_t size() const { return tensors_.size(); }

    void zero_grads() {
        for (auto& t : tensors_) t.zero_grad();
    }

    bool values_finite() const {
        for (const auto& t : tensors_)
            if (!t.value.allFinite()) return false;
        return true;
    }

    template <typename T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        for (const auto& t : tensors_) {
            Tensor<T> c;
            c.name = t.name;
            c.dims = t.dims;
            c.value = t.value.template cast<T>();
            c.grad = Mat<T>::Zero(t.value.rows(), t.value.cols());
            out.add(std::move(c));
        }
        return out;
    }

private:
    std::vector<Tensor<S>> tensors_;
    std::unordered_map<std::string, int> index_;
};

using ParamSetF = ParamSet<float>;
using ParamSetD = ParamSet<double>;

}  // namespace pdvf
