#include "hsdnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hsdnet {

std::int64_t shape_product(const std::vector<int>& extents) {
    std::int64_t n = 1;
    for (int e : extents) {
        n *= static_cast<std::int64_t>(e);
    }
    return n;
}

std::string shape_string(const std::vector<int>& extents) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < extents.size(); ++i) {
        if (i) os << ",";
        os << extents[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> extents) : shape(std::move(extents)) {
    if (shape.size() > 4) {
        throw std::invalid_argument("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
    }
    for (int e : shape) {
        if (e <= 0) {
            throw std::invalid_argument("non-positive tensor extent in " + shape_string(shape));
        }
    }
    data.assign(static_cast<std::size_t>(shape_product(shape)), 0.0);
}

Tensor Tensor::zeros(std::vector<int> extents) { return Tensor(std::move(extents)); }

Tensor Tensor::filled(std::vector<int> extents, double value) {
    Tensor t(std::move(extents));
    for (double& v : t.data) v = value;
    return t;
}

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(const Tensor& t, const std::string& what) {
    if (!all_finite(t)) {
        throw std::runtime_error("non-finite values in " + what);
    }
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw std::runtime_error("missing parameter entry: " + name);
    }
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw std::runtime_error("missing parameter entry: " + name);
    }
    return it->second;
}

std::uint64_t ParamStore::element_count() const {
    std::uint64_t n = 0;
    for (const auto& [name, t] : entries) {
        (void)name;
        n += static_cast<std::uint64_t>(t.size());
    }
    return n;
}

}  // namespace hsdnet
