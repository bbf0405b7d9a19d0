#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hsdnet {

// Dense row-major tensor of 64-bit floats, up to 4 extents.
// Conventions: activations are (N, C, H, W), conv filters (O, I, KH, KW),
// dense weights (O, I), vectors (O).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> extents);

    static Tensor zeros(std::vector<int> extents);
    static Tensor filled(std::vector<int> extents, double value);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::int64_t shape_product(const std::vector<int>& extents);
std::string shape_string(const std::vector<int>& extents);

bool all_finite(const Tensor& t);

// Throws std::runtime_error naming `what` if any element is NaN or Inf.
void require_finite(const Tensor& t, const std::string& what);

// Named parameter tensors of one network. std::map keeps iteration order
// stable for serialization and tests.
struct ParamStore {
    std::map<std::string, Tensor> entries;

    bool has(const std::string& name) const { return entries.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void put(const std::string& name, Tensor t) { entries[name] = std::move(t); }

    std::uint64_t element_count() const;
};

}  // namespace hsdnet
