#include "gsmforge/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gsmforge {

std::size_t numel_of(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dim must be positive, got " + shape_str(dims));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& dims) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << "x";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)), data(numel_of(dims), 0.0) {}

Tensor Tensor::zeros(std::vector<int> d) { return Tensor(std::move(d)); }

Tensor Tensor::full(std::vector<int> d, double value) {
    Tensor t(std::move(d));
    for (double& x : t.data) x = value;
    return t;
}

Tensor Tensor::from(std::vector<int> d, std::vector<double> values) {
    Tensor t;
    t.dims = std::move(d);
    if (values.size() != numel_of(t.dims))
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match dims " + gsmforge::shape_str(t.dims));
    t.data = std::move(values);
    return t;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0);
}

std::string Tensor::shape_str() const { return gsmforge::shape_str(dims); }

void Tensor::check_finite(const char* what) const {
    for (double x : data) {
        if (!std::isfinite(x))
            throw std::runtime_error(std::string(what) + " produced a non-finite value");
    }
}

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
    if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    entries.emplace_back(name, std::move(t));
    return entries.back().second;
}

Tensor& ParameterSet::at(const std::string& name) {
    for (auto& [n, t] : entries)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParameterSet::at(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

bool ParameterSet::has(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return true;
    return false;
}

}  // namespace gsmforge
