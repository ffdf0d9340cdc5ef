#pragma once

#include "cyclemae/common.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cyclemae {

struct Parameter {
    std::string name;
    Mat value;
    bool decay = false;  // subject to decoupled weight decay
};

/// Ordered collection of named parameter arrays. Order is part of the
/// checkpoint contract: it is fixed by the code that builds the set.
class ParamSet {
public:
    std::size_t add(std::string name, Mat value, bool decay);

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }

    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// True when both sets have the same names, shapes and bitwise values.
    bool identical(const ParamSet& other) const;

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// Gradient buffers aligned index-for-index with a ParamSet.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParamSet& params);
    explicit Gradients(std::vector<Mat> grads) : grads_(std::move(grads)) {}

    std::size_t size() const { return grads_.size(); }
    Mat& operator[](std::size_t i) { return grads_[i]; }
    const Mat& operator[](std::size_t i) const { return grads_[i]; }

    void zero();
    void add(const Gradients& other);
    void scale(double factor);

private:
    std::vector<Mat> grads_;
};

}  // namespace cyclemae
