#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pen/tensor.hpp"

namespace pen {

/// Ordered collection of named parameters with stable addresses.
/// Registration order is the checkpoint order.
template <typename T>
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;

    Parameter<T>& add(std::string name, Tensor<T> value);
    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;

    std::deque<Parameter<T>>& items() { return params_; }
    const std::deque<Parameter<T>>& items() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

private:
    std::deque<Parameter<T>> params_;
};

/// Uniform(-bound, bound) fill with bound = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
template <typename T>
Tensor<T> uniform_tensor(Shape shape, T bound, std::mt19937_64& rng);

// Binary checkpoint, little-endian:
//   "PENW" | version u32 | tensor count u32
//   per tensor: name length u16 | name | rank u8 | dims u32 x rank | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Values of every parameter, narrowed to f32.
template <typename T>
std::vector<NamedTensor> snapshot(const ParameterSet<T>& params);
/// Copies values into same-named parameters. Missing names or shape
/// differences raise DataError.
template <typename T>
void restore(ParameterSet<T>& params, const std::vector<NamedTensor>& tensors);

}  // namespace pen
