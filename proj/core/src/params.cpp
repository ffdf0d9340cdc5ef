#include "cyclemae/params.hpp"

#include <cstring>

namespace cyclemae {

std::size_t ParamSet::add(std::string name, Mat value, bool decay) {
    if (lookup_.contains(name)) {
        throw std::invalid_argument("duplicate parameter name: " + name);
    }
    const std::size_t index = params_.size();
    lookup_.emplace(name, index);
    params_.push_back(Parameter{std::move(name), std::move(value), decay});
    return index;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) {
        total += static_cast<std::size_t>(p.value.size());
    }
    return total;
}

std::size_t ParamSet::index_of(std::string_view name) const {
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        throw std::out_of_range("unknown parameter: " + std::string(name));
    }
    return it->second;
}

bool ParamSet::contains(std::string_view name) const {
    return lookup_.contains(std::string(name));
}

bool ParamSet::identical(const ParamSet& other) const {
    if (size() != other.size()) {
        return false;
    }
    for (std::size_t i = 0; i < size(); ++i) {
        const Parameter& a = params_[i];
        const Parameter& b = other.params_[i];
        if (a.name != b.name || a.value.rows() != b.value.rows() ||
            a.value.cols() != b.value.cols()) {
            return false;
        }
        if (a.value.size() > 0 &&
            std::memcmp(a.value.data(), b.value.data(),
                        sizeof(double) * static_cast<std::size_t>(a.value.size())) != 0) {
            return false;
        }
    }
    return true;
}

Gradients::Gradients(const ParamSet& params) {
    grads_.reserve(params.size());
    for (const auto& p : params) {
        grads_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    }
}

void Gradients::zero() {
    for (auto& g : grads_) {
        g.setZero();
    }
}

void Gradients::add(const Gradients& other) {
    if (other.size() != size()) {
        throw std::invalid_argument("Gradients::add: size mismatch");
    }
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        grads_[i] += other.grads_[i];
    }
}

void Gradients::scale(double factor) {
    for (auto& g : grads_) {
        g *= factor;
    }
}

}  // namespace cyclemae
