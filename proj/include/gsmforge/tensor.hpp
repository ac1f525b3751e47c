#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace gsmforge {

/// Dense row-major tensor of 64-bit reals with an optional gradient buffer.
/// An empty `grad` means "no gradient tracked"; when present it always has
/// the same length as `data`. Gradient accumulation is additive: callers
/// zero grads explicitly between steps.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> d);

    static Tensor zeros(std::vector<int> d);
    static Tensor full(std::vector<int> d, double value);
    static Tensor from(std::vector<int> d, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(dims.size()); }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    void ensure_grad();
    void zero_grad();

    std::string shape_str() const;

    /// Throws if any element of data is non-finite. `what` names the
    /// operation that produced the tensor.
    void check_finite(const char* what) const;
};

std::size_t numel_of(const std::vector<int>& dims);
std::string shape_str(const std::vector<int>& dims);

/// Ordered name -> Tensor map. Iteration order is insertion order and
/// names are unique; both matter for deterministic serialization.
struct ParameterSet {
    std::vector<std::pair<std::string, Tensor>> entries;

    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::size_t size() const { return entries.size(); }
};

}  // namespace gsmforge
